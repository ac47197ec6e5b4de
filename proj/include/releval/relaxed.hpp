#pragma once

#include "releval/backend.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace releval {

struct RelaxedParams {
    int ell = 5;          // candidate sequences kept
    int search_space = 10; // candidate sequences sampled
    int stride = 8;        // spacing between evaluated prefix offsets
    int max_tokens = 128;  // largest prefix offset considered
    double top_p = 0.9;
    double temperature = 1.0;
    // keep the sampled-sequence probability weights instead of dropping them
    // (ablation path; the default skews the distribution by removing the
    // length-dependent weights)
    bool use_sequence_weights = false;
    std::optional<std::uint64_t> seed;

    void validate() const;
    nlohmann::json to_json() const;
};

// Sampled continuations of `question`, deduplicated and cut to the ell most
// likely; the source of prefixes at every offset.
struct CandidateSet {
    std::string question;
    std::vector<ScoredContinuation> continuations; // descending joint_logprob
};

// One summand of the estimator: the combined log-probability of the target
// appearing right after `offset` prefix tokens.
struct RelaxedTerm {
    int offset = 0;
    double log_p_a_given_b = 0.0;
    int n_distinct_prefixes = 0;
};

struct RelaxedResult {
    std::vector<RelaxedTerm> terms;
    double relaxed_cross_entropy = 0.0; // -sum of term logprobs
    double relaxed_perplexity = 0.0;    // exp(rce / (max_offset + target_token_len))
    double relaxed_logprob_sum = 0.0;   // -relaxed_cross_entropy
    int target_token_len = 0;           // backend tokens of the target
    int max_offset = 0;                 // largest offset that contributed a term
    // dropping the sequence weights can push a term's probability sum past 1;
    // such terms are kept as-is and only flagged here
    bool mass_exceeds_one = false;

    nlohmann::json to_json(const std::string& question_id, const std::string& target_id,
                           const RelaxedParams& params) const;
};

// Samples search_space continuations (length <= max_tokens), drops empty
// ones, collapses duplicates and keeps the ell with the highest joint
// logprob. With max_tokens == 0 no sampling happens and the set is empty.
CandidateSet candidate_prefixes(ModelBackend& backend, const std::string& question,
                                const RelaxedParams& params);

// Combines log P(target | question + prefix) over the distinct offset-token
// prefixes among the candidates with log-sum-exp (the prefix events are
// mutually exclusive). Candidates shorter than `offset` drop out; returns
// nullopt when none remain. Offset 0 is the single empty prefix.
std::optional<RelaxedTerm> term_at_offset(ModelBackend& backend, const std::string& question,
                                          const std::string& target,
                                          const CandidateSet& candidates, int offset,
                                          bool use_sequence_weights = false);

// Full estimator over offsets {0, stride, 2*stride, ...} up to max_tokens,
// reusing a previously sampled candidate set.
RelaxedResult relaxed_with_candidates(ModelBackend& backend, const std::string& question,
                                      const std::string& target, const CandidateSet& candidates,
                                      const RelaxedParams& params);

// Samples candidates, then evaluates the estimator.
RelaxedResult relaxed_perplexity(ModelBackend& backend, const std::string& question,
                                 const std::string& target, const RelaxedParams& params);

// One result per target, all conditioned on the same candidate set so the
// sampling cost is paid once.
std::vector<RelaxedResult> relaxed_for_targets(ModelBackend& backend, const std::string& question,
                                               const std::vector<std::string>& targets,
                                               const RelaxedParams& params);

} // namespace releval
