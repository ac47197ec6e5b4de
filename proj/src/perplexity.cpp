#include "releval/perplexity.hpp"

#include "releval/errors.hpp"
#include "releval/util.hpp"

#include <cmath>

namespace releval {

PerplexityScores perplexity_family(std::span<const TokenLogprob> token_logprobs,
                                   const std::string& reference_text) {
    if (reference_text.empty()) {
        throw InvalidRequest("perplexity_family: empty reference");
    }
    std::string rebuilt;
    double logprob_sum = 0.0;
    for (const auto& t : token_logprobs) {
        rebuilt += t.token_text;
        logprob_sum += t.logprob;
    }
    if (rebuilt != reference_text) {
        throw TokenizationMismatch("perplexity_family: tokens do not reconstruct the reference");
    }
    PerplexityScores s;
    s.logprob_sum = logprob_sum;
    s.n_words = static_cast<std::int64_t>(count_words(reference_text));
    s.n_bytes = static_cast<std::int64_t>(reference_text.size());
    if (s.n_words == 0) {
        throw InvalidRequest("perplexity_family: reference has no words");
    }
    s.word_perplexity = std::exp(-logprob_sum / static_cast<double>(s.n_words));
    s.byte_perplexity = std::exp(-logprob_sum / static_cast<double>(s.n_bytes));
    s.bits_per_byte = -logprob_sum / (static_cast<double>(s.n_bytes) * std::log(2.0));
    return s;
}

McqaOutcome pick_option(std::vector<double> option_logprobs, int gold_index) {
    if (option_logprobs.size() < 2) {
        throw InvalidRequest("mcqa: need at least 2 options");
    }
    if (gold_index < 0 || gold_index >= static_cast<int>(option_logprobs.size())) {
        throw InvalidRequest("mcqa: gold_index out of range");
    }
    McqaOutcome out;
    out.option_logprobs = std::move(option_logprobs);
    out.chosen_index = 0;
    for (std::size_t i = 1; i < out.option_logprobs.size(); ++i) {
        if (out.option_logprobs[i] > out.option_logprobs[out.chosen_index]) {
            out.chosen_index = static_cast<int>(i);
        }
    }
    out.correct = out.chosen_index == gold_index;
    return out;
}

std::string mcqa_prompt(const std::string& question) {
    return "Question:\n" + question + "\nAnswer:";
}

McqaOutcome score_mcqa_item(ModelBackend& backend, const std::string& question,
                            const std::vector<std::string>& options, int gold_index,
                            bool byte_normalize) {
    if (options.size() < 2) {
        throw InvalidRequest("mcqa: need at least 2 options");
    }
    if (gold_index < 0 || gold_index >= static_cast<int>(options.size())) {
        throw InvalidRequest("mcqa: gold_index out of range");
    }
    std::string context = mcqa_prompt(question);
    std::vector<double> logprobs;
    logprobs.reserve(options.size());
    for (const auto& option : options) {
        std::string continuation = " " + option;
        auto tokens = backend.score_continuation(context, continuation);
        double sum = 0.0;
        for (const auto& t : tokens) {
            sum += t.logprob;
        }
        if (byte_normalize) {
            sum /= static_cast<double>(continuation.size());
        }
        logprobs.push_back(sum);
    }
    return pick_option(std::move(logprobs), gold_index);
}

AccuracySummary mcqa_accuracy(std::span<const McqaOutcome> outcomes) {
    if (outcomes.empty()) {
        throw InvalidRequest("mcqa_accuracy: empty input");
    }
    AccuracySummary s;
    s.n = outcomes.size();
    std::size_t correct = 0;
    for (const auto& o : outcomes) {
        correct += o.correct ? 1 : 0;
    }
    s.accuracy = static_cast<double>(correct) / static_cast<double>(s.n);
    s.std_error = std::sqrt(s.accuracy * (1.0 - s.accuracy) / static_cast<double>(s.n));
    return s;
}

} // namespace releval
