#include "releval/backend.hpp"

#include "releval/cache.hpp"
#include "releval/errors.hpp"
#include "releval/http_backend.hpp"
#include "releval/util.hpp"

#include <algorithm>
#include <cmath>

namespace releval {

namespace {

void check_finite(const std::vector<TokenLogprob>& tokens) {
    for (const auto& t : tokens) {
        if (!std::isfinite(t.logprob)) {
            throw ProtocolError("non-finite logprob for token '" + t.token_text + "'");
        }
    }
}

void validate_sampling(const SamplingParams& sampling) {
    if (sampling.top_p <= 0.0 || sampling.top_p > 1.0) {
        throw InvalidRequest("sampling: top_p must be in (0, 1]");
    }
    if (sampling.temperature < 0.0) {
        throw InvalidRequest("sampling: temperature must be >= 0");
    }
    if (sampling.max_tokens < 1) {
        throw InvalidRequest("sampling: max_tokens must be >= 1");
    }
}

} // namespace

std::string finish_reason_name(FinishReason r) {
    switch (r) {
        case FinishReason::length: return "length";
        case FinishReason::stop: return "stop";
        case FinishReason::other: return "other";
    }
    return "other";
}

FinishReason finish_reason_from(const std::string& name) {
    if (name == "length") {
        return FinishReason::length;
    }
    if (name == "stop") {
        return FinishReason::stop;
    }
    return FinishReason::other;
}

std::string ScoredContinuation::text() const {
    std::string out;
    for (const auto& t : tokens) {
        out += t.token_text;
    }
    return out;
}

void BackendConfig::validate() const {
    if (max_in_flight < 1) {
        throw InvalidRequest("backend: max_in_flight must be >= 1");
    }
    if (max_retries < 0) {
        throw InvalidRequest("backend: max_retries must be >= 0");
    }
    if (timeout_s <= 0.0) {
        throw InvalidRequest("backend: timeout_s must be > 0");
    }
}

std::vector<TokenLogprob> ModelBackend::score_continuation(const std::string& context,
                                                           const std::string& continuation) {
    if (continuation.empty()) {
        throw InvalidRequest("score_continuation: continuation must be non-empty");
    }
    auto tokens = score_impl(context, continuation);
    check_finite(tokens);
    std::string rebuilt;
    for (auto& t : tokens) {
        t.byte_len = static_cast<int>(t.token_text.size());
        rebuilt += t.token_text;
    }
    if (rebuilt != continuation) {
        throw TokenizationMismatch("token concatenation does not reconstruct the continuation ('" +
                                   rebuilt + "' vs '" + continuation + "')");
    }
    return tokens;
}

std::vector<ScoredContinuation> ModelBackend::sample_continuations(const std::string& context,
                                                                   int count,
                                                                   const SamplingParams& sampling) {
    if (count < 1) {
        throw InvalidRequest("sample_continuations: count must be >= 1");
    }
    validate_sampling(sampling);
    auto continuations = sample_impl(context, count, sampling);
    for (auto& c : continuations) {
        check_finite(c.tokens);
        double sum = 0.0;
        for (auto& t : c.tokens) {
            t.byte_len = static_cast<int>(t.token_text.size());
            sum += t.logprob;
        }
        if (std::abs(sum - c.joint_logprob) > 1e-9) {
            throw ProtocolError("joint_logprob does not match token sum");
        }
    }
    std::sort(continuations.begin(), continuations.end(),
              [](const ScoredContinuation& a, const ScoredContinuation& b) {
                  if (a.joint_logprob != b.joint_logprob) {
                      return a.joint_logprob > b.joint_logprob;
                  }
                  return a.text() < b.text();
              });
    return continuations;
}

std::string ModelBackend::chat_generate(const std::string& system_prompt,
                                        const std::string& user_prompt,
                                        const SamplingParams& sampling) {
    if (user_prompt.empty()) {
        throw InvalidRequest("chat_generate: user_prompt must be non-empty");
    }
    validate_sampling(sampling);
    return chat_impl(system_prompt, user_prompt, sampling);
}

struct CachedBackend::Impl {
    std::shared_ptr<ModelBackend> inner;
    KvCache cache;

    Impl(std::shared_ptr<ModelBackend> b, std::filesystem::path dir)
        : inner(std::move(b)), cache(std::move(dir)) {}

    std::string key(const nlohmann::json& material) const {
        return sha256_hex(material.dump());
    }
};

namespace {

nlohmann::json sampling_json(const SamplingParams& s) {
    nlohmann::json j{{"top_p", s.top_p}, {"temperature", s.temperature},
                     {"max_tokens", s.max_tokens}};
    if (s.seed) {
        j["seed"] = *s.seed;
    }
    return j;
}

// BPE backends can split a multibyte character across tokens; such token
// texts are not valid UTF-8 and go through a lossless byte-array form.
nlohmann::json tokens_to_json(const std::vector<TokenLogprob>& tokens) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : tokens) {
        if (is_valid_utf8(t.token_text)) {
            arr.push_back({{"text", t.token_text}, {"logprob", t.logprob}});
        } else {
            nlohmann::json bytes = nlohmann::json::array();
            for (unsigned char c : t.token_text) {
                bytes.push_back(static_cast<int>(c));
            }
            arr.push_back({{"bytes", std::move(bytes)}, {"logprob", t.logprob}});
        }
    }
    return arr;
}

std::vector<TokenLogprob> tokens_from_json(const nlohmann::json& arr) {
    std::vector<TokenLogprob> tokens;
    for (const auto& j : arr) {
        TokenLogprob t;
        if (j.contains("text")) {
            t.token_text = j.at("text").get<std::string>();
        } else {
            for (const auto& b : j.at("bytes")) {
                t.token_text.push_back(static_cast<char>(b.get<int>()));
            }
        }
        t.logprob = j.at("logprob").get<double>();
        t.byte_len = static_cast<int>(t.token_text.size());
        tokens.push_back(std::move(t));
    }
    return tokens;
}

} // namespace

CachedBackend::CachedBackend(std::shared_ptr<ModelBackend> inner, std::filesystem::path cache_dir)
    : impl_(std::make_unique<Impl>(std::move(inner), std::move(cache_dir))) {}

CachedBackend::~CachedBackend() = default;

const std::string& CachedBackend::model_name() const {
    return impl_->inner->model_name();
}

std::vector<TokenLogprob> CachedBackend::score_impl(const std::string& context,
                                                    const std::string& continuation) {
    auto key = impl_->key({{"kind", "score"},
                           {"model", model_name()},
                           {"context", context},
                           {"continuation", continuation}});
    if (auto hit = impl_->cache.get(key)) {
        return tokens_from_json(hit->at("tokens"));
    }
    auto tokens = impl_->inner->score_continuation(context, continuation);
    impl_->cache.put(key, {{"tokens", tokens_to_json(tokens)}});
    return tokens;
}

std::vector<ScoredContinuation> CachedBackend::sample_impl(const std::string& context, int count,
                                                           const SamplingParams& sampling) {
    auto key = impl_->key({{"kind", "sample"},
                           {"model", model_name()},
                           {"context", context},
                           {"count", count},
                           {"sampling", sampling_json(sampling)}});
    if (auto hit = impl_->cache.get(key)) {
        std::vector<ScoredContinuation> out;
        for (const auto& j : hit->at("continuations")) {
            ScoredContinuation c;
            c.tokens = tokens_from_json(j.at("tokens"));
            c.joint_logprob = j.at("joint_logprob").get<double>();
            c.finish_reason = finish_reason_from(j.at("finish_reason").get<std::string>());
            out.push_back(std::move(c));
        }
        return out;
    }
    auto continuations = impl_->inner->sample_continuations(context, count, sampling);
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : continuations) {
        arr.push_back({{"tokens", tokens_to_json(c.tokens)},
                       {"joint_logprob", c.joint_logprob},
                       {"finish_reason", finish_reason_name(c.finish_reason)}});
    }
    impl_->cache.put(key, {{"continuations", std::move(arr)}});
    return continuations;
}

std::string CachedBackend::chat_impl(const std::string& system_prompt,
                                     const std::string& user_prompt,
                                     const SamplingParams& sampling) {
    auto key = impl_->key({{"kind", "chat"},
                           {"model", model_name()},
                           {"system", system_prompt},
                           {"user", user_prompt},
                           {"sampling", sampling_json(sampling)}});
    if (auto hit = impl_->cache.get(key)) {
        return hit->at("text").get<std::string>();
    }
    auto text = impl_->inner->chat_generate(system_prompt, user_prompt, sampling);
    impl_->cache.put(key, {{"text", text}});
    return text;
}

std::shared_ptr<ModelBackend> make_backend(const BackendConfig& config) {
    config.validate();
    std::shared_ptr<ModelBackend> backend = std::make_shared<HttpBackend>(config);
    if (config.cache_path) {
        backend = std::make_shared<CachedBackend>(std::move(backend), *config.cache_path);
    }
    return backend;
}

} // namespace releval
