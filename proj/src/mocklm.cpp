#include "releval/mocklm.hpp"

#include "releval/errors.hpp"
#include "releval/util.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>

namespace releval {

namespace {

// nucleus truncation over (index, prob) pairs; returns sampled index
std::size_t sample_nucleus(std::vector<std::pair<std::size_t, double>> dist, double top_p,
                           double temperature, std::mt19937_64& rng) {
    if (temperature != 1.0 && temperature > 0.0) {
        double inv_t = 1.0 / temperature;
        double norm = 0.0;
        for (auto& [idx, p] : dist) {
            p = std::pow(p, inv_t);
            norm += p;
        }
        for (auto& [idx, p] : dist) {
            p /= norm;
        }
    }
    std::sort(dist.begin(), dist.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
    double cum = 0.0;
    std::size_t keep = dist.size();
    for (std::size_t i = 0; i < dist.size(); ++i) {
        cum += dist[i].second;
        if (cum >= top_p) {
            keep = i + 1;
            break;
        }
    }
    dist.resize(keep);
    double mass = 0.0;
    for (const auto& [idx, p] : dist) {
        mass += p;
    }
    std::uniform_real_distribution<double> uni(0.0, mass);
    double u = uni(rng);
    double acc = 0.0;
    for (const auto& [idx, p] : dist) {
        acc += p;
        if (u <= acc) {
            return idx;
        }
    }
    return dist.back().first;
}

} // namespace

BigramSpec BigramSpec::random(int n_symbols, std::uint64_t seed) {
    if (n_symbols < 1 || n_symbols > 26) {
        throw InvalidRequest("BigramSpec::random: n_symbols must be in [1, 26]");
    }
    BigramSpec spec;
    for (int i = 0; i < n_symbols; ++i) {
        spec.symbols.push_back(static_cast<char>('A' + i));
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.2, 1.0);
    for (int s = 0; s <= n_symbols; ++s) {
        std::vector<double> row(static_cast<std::size_t>(n_symbols) + 1);
        for (auto& p : row) {
            p = uni(rng);
        }
        // keep end-of-sequence mass moderate so long strings stay likely
        row.back() *= 0.5;
        double sum = std::accumulate(row.begin(), row.end(), 0.0);
        for (auto& p : row) {
            p /= sum;
        }
        spec.rows.push_back(std::move(row));
    }
    spec.validate();
    return spec;
}

void BigramSpec::validate() const {
    std::size_t n = symbols.size();
    if (rows.size() != n + 1) {
        throw InvalidRequest("BigramSpec: need one row per state (|symbols|+1)");
    }
    for (const auto& row : rows) {
        if (row.size() != n + 1) {
            throw InvalidRequest("BigramSpec: each row needs |symbols|+1 outcomes");
        }
        double sum = std::accumulate(row.begin(), row.end(), 0.0);
        if (std::abs(sum - 1.0) > 1e-9) {
            throw InvalidRequest("BigramSpec: row does not sum to 1");
        }
        for (double p : row) {
            if (p <= 0.0) {
                throw InvalidRequest("BigramSpec: probabilities must be strictly positive");
            }
        }
    }
}

BigramLm::BigramLm(BigramSpec spec, std::string model_name, std::uint64_t default_seed)
    : spec_(std::move(spec)), name_(std::move(model_name)), default_seed_(default_seed) {
    spec_.validate();
}

std::size_t BigramLm::state_of(const std::string& context) const {
    if (context.empty()) {
        return 0;
    }
    auto pos = spec_.symbols.find(context.back());
    return pos == std::string::npos ? 0 : pos + 1;
}

double BigramLm::continuation_logprob(const std::string& context,
                                      const std::string& continuation) const {
    std::size_t state = state_of(context);
    double lp = 0.0;
    for (char c : continuation) {
        auto pos = spec_.symbols.find(c);
        if (pos == std::string::npos) {
            throw InvalidRequest(std::string("BigramLm: symbol '") + c + "' not in vocabulary");
        }
        lp += std::log(spec_.rows[state][pos]);
        state = pos + 1;
    }
    return lp;
}

double BigramLm::eos_logprob(const std::string& context) const {
    return std::log(spec_.rows[state_of(context)].back());
}

std::vector<TokenLogprob> BigramLm::score_impl(const std::string& context,
                                               const std::string& continuation) {
    std::size_t state = state_of(context);
    std::vector<TokenLogprob> tokens;
    for (char c : continuation) {
        auto pos = spec_.symbols.find(c);
        if (pos == std::string::npos) {
            throw InvalidRequest(std::string("BigramLm: symbol '") + c + "' not in vocabulary");
        }
        tokens.push_back({std::string(1, c), std::log(spec_.rows[state][pos]), 1});
        state = pos + 1;
    }
    return tokens;
}

std::vector<ScoredContinuation> BigramLm::enumerate(const std::string& context,
                                                    int max_tokens) const {
    // Outcome space of the sampling loop: sequences that drew end-of-sequence
    // before max_tokens (finish stop, lengths 0..max_tokens-1) plus every
    // full-length sequence (finish length). joint_logprob is the token sum,
    // matching what sample_continuations reports; the eos factor is part of
    // the outcome probability but never of the token list.
    std::vector<ScoredContinuation> out;
    ScoredContinuation current;
    std::function<void(std::size_t, int)> walk = [&](std::size_t state, int depth) {
        ScoredContinuation stopped = current;
        stopped.finish_reason = FinishReason::stop;
        out.push_back(std::move(stopped));
        for (std::size_t i = 0; i < spec_.symbols.size(); ++i) {
            current.tokens.push_back(
                {std::string(1, spec_.symbols[i]), std::log(spec_.rows[state][i]), 1});
            current.joint_logprob += current.tokens.back().logprob;
            if (depth + 1 == max_tokens) {
                out.push_back(current);
                out.back().finish_reason = FinishReason::length;
            } else {
                walk(i + 1, depth + 1);
            }
            current.joint_logprob -= current.tokens.back().logprob;
            current.tokens.pop_back();
        }
    };
    if (max_tokens > 0) {
        walk(state_of(context), 0);
    }
    std::sort(out.begin(), out.end(), [](const ScoredContinuation& a, const ScoredContinuation& b) {
        if (a.joint_logprob != b.joint_logprob) {
            return a.joint_logprob > b.joint_logprob;
        }
        return a.text() < b.text();
    });
    return out;
}

std::size_t BigramLm::sequence_space_size(int max_tokens) const {
    // empty + all strings of length 1..max_tokens-1 (eos-terminated) + full length
    std::size_t n = spec_.symbols.size();
    std::size_t total = 1;
    std::size_t level = 1;
    for (int d = 1; d <= max_tokens; ++d) {
        level *= n;
        total += level;
    }
    return total;
}

std::vector<ScoredContinuation> BigramLm::sample_impl(const std::string& context, int count,
                                                      const SamplingParams& sampling) {
    if (exhaustive_) {
        return enumerate(context, sampling.max_tokens);
    }
    std::uint64_t base_seed = sampling.seed ? *sampling.seed : default_seed_;
    std::vector<ScoredContinuation> out;
    for (int s = 0; s < count; ++s) {
        std::mt19937_64 rng(mix64(base_seed ^ mix64(static_cast<std::uint64_t>(s) + 1)));
        ScoredContinuation c;
        std::size_t state = state_of(context);
        c.finish_reason = FinishReason::length;
        for (int t = 0; t < sampling.max_tokens; ++t) {
            std::vector<std::pair<std::size_t, double>> dist;
            for (std::size_t i = 0; i < spec_.rows[state].size(); ++i) {
                dist.emplace_back(i, spec_.rows[state][i]);
            }
            std::size_t pick = sample_nucleus(std::move(dist), sampling.top_p,
                                              sampling.temperature, rng);
            if (pick == spec_.symbols.size()) {
                c.finish_reason = FinishReason::stop;
                break;
            }
            c.tokens.push_back(
                {std::string(1, spec_.symbols[pick]), std::log(spec_.rows[state][pick]), 1});
            c.joint_logprob += c.tokens.back().logprob;
            state = pick + 1;
        }
        out.push_back(std::move(c));
    }
    return out;
}

std::string BigramLm::chat_impl(const std::string&, const std::string&, const SamplingParams&) {
    throw ProtocolError("BigramLm has no chat endpoint");
}

HashLm::HashLm(std::string model_name, std::uint64_t salt)
    : name_(std::move(model_name)), salt_(mix64(fnv1a(name_) ^ mix64(salt))) {}

namespace {
constexpr int kBoundary = 256; // BOS as prev, end-of-sequence as next
}

double HashLm::weight(int prev, int next) const {
    std::uint64_t h = mix64(salt_ ^ (static_cast<std::uint64_t>(prev) * 521 +
                                     static_cast<std::uint64_t>(next)));
    double u = static_cast<double>(h >> 11) * 0x1p-53; // [0, 1)
    if (next == kBoundary) {
        return std::exp(1.8 + 0.8 * u);
    }
    if (next == ' ') {
        return std::exp(3.0 + 0.5 * u);
    }
    if (next >= 33 && next <= 126) {
        return std::exp(1.5 * u);
    }
    return std::exp(1.5 * u - 14.0);
}

double HashLm::log_z(int prev) const {
    double z = 0.0;
    for (int b = 0; b <= kBoundary; ++b) {
        z += weight(prev, b);
    }
    return std::log(z);
}

int HashLm::last_byte_state(const std::string& context) const {
    if (context.empty()) {
        return kBoundary;
    }
    return static_cast<unsigned char>(context.back());
}

double HashLm::byte_logprob(int prev, int next) const {
    return std::log(weight(prev, next)) - log_z(prev);
}

std::vector<TokenLogprob> HashLm::score_impl(const std::string& context,
                                             const std::string& continuation) {
    int prev = last_byte_state(context);
    std::vector<TokenLogprob> tokens;
    for (const auto& cp : utf8_codepoints(continuation)) {
        double lp = 0.0;
        for (unsigned char b : cp) {
            lp += byte_logprob(prev, b);
            prev = b;
        }
        tokens.push_back({cp, lp, static_cast<int>(cp.size())});
    }
    return tokens;
}

std::vector<ScoredContinuation> HashLm::sample_impl(const std::string& context, int count,
                                                    const SamplingParams& sampling) {
    std::uint64_t base_seed =
        sampling.seed ? *sampling.seed : fnv1a(context, salt_ ^ 0x5eedULL);
    std::vector<ScoredContinuation> out;
    for (int s = 0; s < count; ++s) {
        std::mt19937_64 rng(mix64(base_seed ^ mix64(static_cast<std::uint64_t>(s) + 1)));
        ScoredContinuation c;
        c.finish_reason = FinishReason::length;
        int prev = last_byte_state(context);
        for (int t = 0; t < sampling.max_tokens; ++t) {
            // restricted to printable bytes + eos; reported logprobs stay the
            // full-alphabet model values so re-scoring samples is consistent
            std::vector<std::pair<std::size_t, double>> dist;
            double mass = 0.0;
            for (int b = 32; b <= 126; ++b) {
                double w = weight(prev, b);
                dist.emplace_back(static_cast<std::size_t>(b), w);
                mass += w;
            }
            double weos = weight(prev, kBoundary);
            dist.emplace_back(static_cast<std::size_t>(kBoundary), weos);
            mass += weos;
            for (auto& [idx, w] : dist) {
                w /= mass;
            }
            std::size_t pick = sample_nucleus(std::move(dist), sampling.top_p,
                                              sampling.temperature, rng);
            if (pick == kBoundary) {
                c.finish_reason = FinishReason::stop;
                break;
            }
            char ch = static_cast<char>(pick);
            c.tokens.push_back({std::string(1, ch), byte_logprob(prev, static_cast<int>(pick)), 1});
            c.joint_logprob += c.tokens.back().logprob;
            prev = static_cast<int>(pick);
        }
        out.push_back(std::move(c));
    }
    return out;
}

std::string HashLm::chat_impl(const std::string& system_prompt, const std::string& user_prompt,
                              const SamplingParams& sampling) {
    std::vector<std::string> words;
    std::istringstream in(user_prompt);
    std::string w;
    while (in >> w) {
        words.push_back(w);
    }
    if (words.size() < 2) {
        return user_prompt;
    }
    std::uint64_t seed = sampling.seed ? *sampling.seed
                                       : fnv1a(user_prompt, fnv1a(system_prompt, salt_));
    std::mt19937_64 rng(mix64(seed));
    std::shuffle(words.begin(), words.end(), rng);
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) {
            out.push_back(' ');
        }
        out += words[i];
    }
    return out;
}

} // namespace releval
