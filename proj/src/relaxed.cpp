#include "releval/relaxed.hpp"

#include "releval/errors.hpp"
#include "releval/util.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace releval {

void RelaxedParams::validate() const {
    if (ell < 1 || ell > search_space) {
        throw InvalidRequest("relaxed: need 1 <= ell <= search_space");
    }
    if (stride < 1) {
        throw InvalidRequest("relaxed: stride must be >= 1");
    }
    if (max_tokens < 0) {
        throw InvalidRequest("relaxed: max_tokens must be >= 0");
    }
    if (top_p <= 0.0 || top_p > 1.0) {
        throw InvalidRequest("relaxed: top_p must be in (0, 1]");
    }
}

nlohmann::json RelaxedParams::to_json() const {
    nlohmann::json j{{"ell", ell},
                     {"search_space", search_space},
                     {"stride", stride},
                     {"max_tokens", max_tokens},
                     {"top_p", top_p},
                     {"temperature", temperature},
                     {"use_sequence_weights", use_sequence_weights}};
    if (seed) {
        j["seed"] = *seed;
    }
    return j;
}

nlohmann::json RelaxedResult::to_json(const std::string& question_id,
                                      const std::string& target_id,
                                      const RelaxedParams& params) const {
    nlohmann::json offsets = nlohmann::json::array();
    for (const auto& t : terms) {
        offsets.push_back(t.offset);
    }
    return nlohmann::json{{"question_id", question_id},
                          {"target_id", target_id},
                          {"relaxed_cross_entropy", relaxed_cross_entropy},
                          {"relaxed_perplexity", relaxed_perplexity},
                          {"relaxed_logprob_sum", relaxed_logprob_sum},
                          {"offsets", std::move(offsets)},
                          {"params", params.to_json()}};
}

CandidateSet candidate_prefixes(ModelBackend& backend, const std::string& question,
                                const RelaxedParams& params) {
    params.validate();
    CandidateSet set;
    set.question = question;
    if (params.max_tokens == 0) {
        return set; // only the empty prefix exists; nothing to sample
    }
    SamplingParams sampling;
    sampling.top_p = params.top_p;
    sampling.temperature = params.temperature;
    sampling.max_tokens = params.max_tokens;
    sampling.seed = params.seed;
    auto sampled = backend.sample_continuations(question, params.search_space, sampling);
    std::set<std::string> seen;
    for (auto& c : sampled) {
        if (c.tokens.empty()) {
            continue;
        }
        if (!seen.insert(c.text()).second) {
            continue; // duplicate full continuation
        }
        set.continuations.push_back(std::move(c));
        if (static_cast<int>(set.continuations.size()) == params.ell) {
            break;
        }
    }
    if (set.continuations.empty()) {
        throw InsufficientCandidates("all sampled continuations were empty");
    }
    return set;
}

std::optional<RelaxedTerm> term_at_offset(ModelBackend& backend, const std::string& question,
                                          const std::string& target,
                                          const CandidateSet& candidates, int offset,
                                          bool use_sequence_weights) {
    if (target.empty()) {
        throw InvalidRequest("relaxed: empty target");
    }
    struct Prefix {
        std::string text;
        double logprob; // joint logprob of the prefix tokens
    };
    std::vector<Prefix> prefixes;
    if (offset == 0) {
        prefixes.push_back({"", 0.0});
    } else {
        std::set<std::string> seen;
        for (const auto& c : candidates.continuations) {
            if (static_cast<int>(c.tokens.size()) < offset) {
                continue; // ended before this offset
            }
            Prefix p{"", 0.0};
            for (int i = 0; i < offset; ++i) {
                p.text += c.tokens[static_cast<std::size_t>(i)].token_text;
                p.logprob += c.tokens[static_cast<std::size_t>(i)].logprob;
            }
            if (seen.insert(p.text).second) {
                prefixes.push_back(std::move(p));
            }
        }
        if (prefixes.empty()) {
            return std::nullopt;
        }
    }
    std::vector<double> combined;
    combined.reserve(prefixes.size());
    for (const auto& p : prefixes) {
        auto tokens = backend.score_continuation(question + p.text, target);
        double lp = 0.0;
        for (const auto& t : tokens) {
            lp += t.logprob;
        }
        combined.push_back(use_sequence_weights ? lp + p.logprob : lp);
    }
    RelaxedTerm term;
    term.offset = offset;
    term.log_p_a_given_b = log_sum_exp(combined);
    term.n_distinct_prefixes = static_cast<int>(prefixes.size());
    return term;
}

RelaxedResult relaxed_with_candidates(ModelBackend& backend, const std::string& question,
                                      const std::string& target, const CandidateSet& candidates,
                                      const RelaxedParams& params) {
    params.validate();
    if (target.empty()) {
        throw InvalidRequest("relaxed: empty target");
    }
    RelaxedResult result;
    result.target_token_len =
        static_cast<int>(backend.score_continuation(question, target).size());
    for (int offset = 0; offset <= params.max_tokens; offset += params.stride) {
        auto term = term_at_offset(backend, question, target, candidates, offset,
                                   params.use_sequence_weights);
        if (!term) {
            continue;
        }
        result.max_offset = offset;
        result.mass_exceeds_one = result.mass_exceeds_one || term->log_p_a_given_b > 0.0;
        result.terms.push_back(*term);
    }
    double sum = 0.0;
    for (const auto& t : result.terms) {
        sum += t.log_p_a_given_b;
    }
    result.relaxed_cross_entropy = -sum;
    result.relaxed_logprob_sum = sum;
    result.relaxed_perplexity = std::exp(
        result.relaxed_cross_entropy /
        static_cast<double>(result.max_offset + result.target_token_len));
    return result;
}

RelaxedResult relaxed_perplexity(ModelBackend& backend, const std::string& question,
                                 const std::string& target, const RelaxedParams& params) {
    auto candidates = candidate_prefixes(backend, question, params);
    return relaxed_with_candidates(backend, question, target, candidates, params);
}

std::vector<RelaxedResult> relaxed_for_targets(ModelBackend& backend, const std::string& question,
                                               const std::vector<std::string>& targets,
                                               const RelaxedParams& params) {
    if (targets.empty()) {
        throw InvalidRequest("relaxed: no targets");
    }
    auto candidates = candidate_prefixes(backend, question, params);
    std::vector<RelaxedResult> results;
    results.reserve(targets.size());
    for (const auto& target : targets) {
        results.push_back(relaxed_with_candidates(backend, question, target, candidates, params));
    }
    return results;
}

} // namespace releval
