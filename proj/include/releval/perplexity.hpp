#pragma once

#include "releval/backend.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace releval {

struct PerplexityScores {
    double word_perplexity = 1.0; // exp(-logprob_sum / n_words)
    double byte_perplexity = 1.0; // exp(-logprob_sum / n_bytes)
    double bits_per_byte = 0.0;   // -logprob_sum / (n_bytes * ln 2)
    double logprob_sum = 0.0;
    std::int64_t n_words = 0; // whitespace-separated words of the raw reference
    std::int64_t n_bytes = 0; // UTF-8 bytes of the raw reference
};

// Classic perplexity family from teacher-forced logprobs of a reference
// continuation. The tokens must reconstruct reference_text byte-exactly.
PerplexityScores perplexity_family(std::span<const TokenLogprob> token_logprobs,
                                   const std::string& reference_text);

struct McqaOutcome {
    int chosen_index = 0; // argmax of option_logprobs, ties to the lowest index
    std::vector<double> option_logprobs;
    bool correct = false;
};

// Argmax over option logprobs as chosen_index, tie broken by lowest index.
McqaOutcome pick_option(std::vector<double> option_logprobs, int gold_index);

// Scores each option as a continuation of "Question:\n{q}\nAnswer:" followed
// by a single space. No chat template is applied. With byte_normalize the
// summed logprob is divided by the option's UTF-8 byte count.
McqaOutcome score_mcqa_item(ModelBackend& backend, const std::string& question,
                            const std::vector<std::string>& options, int gold_index,
                            bool byte_normalize = false);

std::string mcqa_prompt(const std::string& question);

struct AccuracySummary {
    double accuracy = 0.0;
    double std_error = 0.0; // sqrt(acc * (1 - acc) / N)
    std::size_t n = 0;
};

AccuracySummary mcqa_accuracy(std::span<const McqaOutcome> outcomes);

} // namespace releval
