#include "releval/http_backend.hpp"

#include "releval/errors.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

namespace releval {

using nlohmann::json;

namespace {

bool retryable_status(int status) {
    return status == 408 || status == 429 || status >= 500;
}

std::chrono::milliseconds backoff_delay(int attempt, double initial_s) {
    double base = initial_s * std::pow(2.0, attempt);
    base = std::min(base, 8.0);
    thread_local std::mt19937_64 rng{std::random_device{}()};
    std::uniform_real_distribution<double> jitter(0.5, 1.5);
    return std::chrono::milliseconds(static_cast<long>(base * jitter(rng) * 1000.0));
}

json parse_body(const std::string& body) {
    try {
        return json::parse(body);
    } catch (const json::exception& ex) {
        throw ProtocolError(std::string("invalid JSON from endpoint: ") + ex.what());
    }
}

const json& first_choice(const json& payload) {
    if (!payload.contains("choices") || !payload["choices"].is_array() ||
        payload["choices"].empty()) {
        throw ProtocolError("response has no choices");
    }
    return payload["choices"][0];
}

struct EchoLogprobs {
    std::vector<std::string> tokens;
    std::vector<std::optional<double>> logprobs;
    std::vector<std::size_t> offsets;
};

EchoLogprobs parse_echo_logprobs(const json& choice) {
    if (!choice.contains("logprobs") || choice["logprobs"].is_null()) {
        throw ProtocolError("endpoint returned no logprobs; needs logprobs+echo support");
    }
    const json& lp = choice["logprobs"];
    EchoLogprobs out;
    if (!lp.contains("tokens") || !lp.contains("token_logprobs")) {
        throw ProtocolError("logprobs object lacks tokens/token_logprobs");
    }
    for (const auto& t : lp["tokens"]) {
        out.tokens.push_back(t.get<std::string>());
    }
    for (const auto& v : lp["token_logprobs"]) {
        if (v.is_null()) {
            out.logprobs.push_back(std::nullopt);
        } else {
            out.logprobs.push_back(v.get<double>());
        }
    }
    if (out.logprobs.size() != out.tokens.size()) {
        throw ProtocolError("tokens and token_logprobs length mismatch");
    }
    if (lp.contains("text_offset") && lp["text_offset"].is_array() &&
        lp["text_offset"].size() == out.tokens.size()) {
        for (const auto& v : lp["text_offset"]) {
            out.offsets.push_back(v.get<std::size_t>());
        }
    } else {
        // echoed prompts start at byte 0; rebuild offsets cumulatively
        std::size_t pos = 0;
        for (const auto& t : out.tokens) {
            out.offsets.push_back(pos);
            pos += t.size();
        }
    }
    return out;
}

} // namespace

HttpBackend::HttpBackend(BackendConfig config)
    : config_(std::move(config)), slots_(config_.max_in_flight) {
    config_.validate();
    if (!config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str())) {
            api_key_ = key;
        }
    }
    while (!config_.base_url.empty() && config_.base_url.back() == '/') {
        config_.base_url.pop_back();
    }
}

const std::string& HttpBackend::model_name() const {
    return config_.model_name;
}

HttpBackend::Response HttpBackend::post(const std::string& path, const std::string& body) {
    SlotGuard slot(slots_);
    std::string last_error;
    for (int attempt = 0;; ++attempt) {
        // a fresh client per request keeps this safe for concurrent callers
        httplib::Client client(config_.base_url);
        client.set_connection_timeout(std::chrono::milliseconds(
            static_cast<long>(config_.timeout_s * 1000)));
        client.set_read_timeout(std::chrono::milliseconds(
            static_cast<long>(config_.timeout_s * 1000)));
        httplib::Headers headers;
        if (!api_key_.empty()) {
            headers.emplace("Authorization", "Bearer " + api_key_);
        }
        requests_.fetch_add(1);
        auto result = client.Post(path, headers, body, "application/json");
        if (result) {
            if (!retryable_status(result->status)) {
                return {result->status, result->body};
            }
            last_error = "HTTP " + std::to_string(result->status);
        } else {
            last_error = httplib::to_string(result.error());
        }
        if (attempt >= config_.max_retries) {
            throw TransportError("POST " + path + " failed after " +
                                 std::to_string(attempt + 1) + " attempts: " + last_error);
        }
        std::this_thread::sleep_for(backoff_delay(attempt, config_.retry_initial_delay_s));
    }
}

std::vector<TokenLogprob> HttpBackend::score_impl(const std::string& context,
                                                  const std::string& continuation) {
    json body{{"model", config_.model_name},
              {"prompt", context + continuation},
              {"max_tokens", 0},
              {"logprobs", 0},
              {"echo", true}};
    Response resp = post("/v1/completions", body.dump());
    if (resp.status == 400) {
        // some stacks reject max_tokens=0; re-ask with one generated token,
        // which the offset filter below discards
        body["max_tokens"] = 1;
        resp = post("/v1/completions", body.dump());
    }
    if (resp.status < 200 || resp.status >= 300) {
        throw ProtocolError("scoring request rejected with HTTP " + std::to_string(resp.status) +
                            ": " + resp.body);
    }
    json payload = parse_body(resp.body);
    auto echo = parse_echo_logprobs(first_choice(payload));
    const std::size_t begin = context.size();
    const std::size_t end = begin + continuation.size();
    std::vector<TokenLogprob> tokens;
    for (std::size_t i = 0; i < echo.tokens.size(); ++i) {
        if (echo.offsets[i] < begin || echo.offsets[i] >= end) {
            continue;
        }
        if (!echo.logprobs[i]) {
            throw ProtocolError("null logprob inside the continuation region");
        }
        tokens.push_back({echo.tokens[i], *echo.logprobs[i],
                          static_cast<int>(echo.tokens[i].size())});
    }
    if (tokens.empty()) {
        throw ProtocolError("no echoed tokens cover the continuation region");
    }
    return tokens;
}

std::vector<ScoredContinuation> HttpBackend::sample_impl(const std::string& context, int count,
                                                         const SamplingParams& sampling) {
    json body{{"model", config_.model_name},
              {"prompt", context},
              {"max_tokens", sampling.max_tokens},
              {"temperature", sampling.temperature},
              {"top_p", sampling.top_p},
              {"logprobs", 0},
              {"n", count}};
    if (sampling.seed) {
        body["seed"] = *sampling.seed;
    }
    Response resp = post("/v1/completions", body.dump());
    if (resp.status < 200 || resp.status >= 300) {
        throw ProtocolError("sampling request rejected with HTTP " + std::to_string(resp.status) +
                            ": " + resp.body);
    }
    json payload = parse_body(resp.body);
    if (!payload.contains("choices") || !payload["choices"].is_array()) {
        throw ProtocolError("response has no choices");
    }
    std::vector<ScoredContinuation> out;
    for (const auto& choice : payload["choices"]) {
        if (!choice.contains("logprobs") || choice["logprobs"].is_null()) {
            throw ProtocolError("sampled choice is missing logprobs");
        }
        const json& lp = choice["logprobs"];
        ScoredContinuation c;
        const auto& toks = lp.at("tokens");
        const auto& lps = lp.at("token_logprobs");
        if (toks.size() != lps.size()) {
            throw ProtocolError("tokens and token_logprobs length mismatch");
        }
        for (std::size_t i = 0; i < toks.size(); ++i) {
            if (lps[i].is_null()) {
                throw ProtocolError("null logprob on a sampled token");
            }
            std::string text = toks[i].get<std::string>();
            c.tokens.push_back({text, lps[i].get<double>(), static_cast<int>(text.size())});
            c.joint_logprob += c.tokens.back().logprob;
        }
        c.finish_reason = finish_reason_from(choice.value("finish_reason", "other"));
        out.push_back(std::move(c));
    }
    return out;
}

std::string HttpBackend::chat_impl(const std::string& system_prompt,
                                   const std::string& user_prompt,
                                   const SamplingParams& sampling) {
    json messages = json::array();
    if (!system_prompt.empty()) {
        messages.push_back({{"role", "system"}, {"content", system_prompt}});
    }
    messages.push_back({{"role", "user"}, {"content", user_prompt}});
    json body{{"model", config_.model_name},
              {"messages", std::move(messages)},
              {"max_tokens", sampling.max_tokens},
              {"temperature", sampling.temperature},
              {"top_p", sampling.top_p}};
    if (sampling.seed) {
        body["seed"] = *sampling.seed;
    }
    Response resp = post("/v1/chat/completions", body.dump());
    if (resp.status < 200 || resp.status >= 300) {
        throw ProtocolError("chat request rejected with HTTP " + std::to_string(resp.status) +
                            ": " + resp.body);
    }
    json payload = parse_body(resp.body);
    const json& choice = first_choice(payload);
    if (!choice.contains("message") || !choice["message"].contains("content")) {
        throw ProtocolError("chat response has no message content");
    }
    const json& content = choice["message"]["content"];
    return content.is_null() ? std::string() : content.get<std::string>();
}

} // namespace releval
