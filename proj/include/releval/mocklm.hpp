#pragma once

#include "releval/backend.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace releval {

// Exact character-token bigram model over a tiny alphabet. Every sequence
// probability is computable in closed form, so it doubles as the ground
// truth for estimator tests. State is the last alphabet character of the
// context (anything else, including an empty context, maps to the start
// state).
struct BigramSpec {
    std::string symbols;                          // single-byte tokens
    std::vector<std::vector<double>> rows;        // [state][outcome]; state 0 = start,
                                                  // state 1+i = after symbols[i];
                                                  // outcome |symbols| = end-of-sequence

    // Strictly positive rows drawn from a seeded RNG, each summing to 1.
    static BigramSpec random(int n_symbols, std::uint64_t seed);
    void validate() const;
};

class BigramLm : public ModelBackend {
public:
    explicit BigramLm(BigramSpec spec, std::string model_name = "bigram",
                      std::uint64_t default_seed = 1);

    const std::string& model_name() const override { return name_; }

    // When set, sample_continuations returns the entire sequence space up to
    // max_tokens (sorted by probability) instead of drawing `count` samples.
    void set_exhaustive(bool on) { exhaustive_ = on; }

    // log P(continuation | context), exact.
    double continuation_logprob(const std::string& context, const std::string& continuation) const;
    double eos_logprob(const std::string& context) const;

    // Every sequence of length <= max_tokens: shorter ones carry their
    // end-of-sequence factor, full-length ones are cut without it. Sorted by
    // descending joint logprob.
    std::vector<ScoredContinuation> enumerate(const std::string& context, int max_tokens) const;
    std::size_t sequence_space_size(int max_tokens) const;

protected:
    std::vector<TokenLogprob> score_impl(const std::string& context,
                                         const std::string& continuation) override;
    std::vector<ScoredContinuation> sample_impl(const std::string& context, int count,
                                                const SamplingParams& sampling) override;
    std::string chat_impl(const std::string& system_prompt, const std::string& user_prompt,
                          const SamplingParams& sampling) override;

private:
    std::size_t state_of(const std::string& context) const;

    BigramSpec spec_;
    std::string name_;
    bool exhaustive_ = false;
    std::uint64_t default_seed_;
};

// Deterministic pseudo-random byte-level language model. Assigns a finite,
// proper log-probability to any UTF-8 string (tokens are code points),
// samples printable ASCII, and answers chat requests with a seeded word
// shuffle of the user prompt. Behaviour depends on (model_name, salt), so
// one server can expose several distinct "models".
class HashLm : public ModelBackend {
public:
    explicit HashLm(std::string model_name = "hash-lm", std::uint64_t salt = 0);

    const std::string& model_name() const override { return name_; }

    double byte_logprob(int prev, int next) const; // prev/next in 0..256, 256 = BOS/eos

protected:
    std::vector<TokenLogprob> score_impl(const std::string& context,
                                         const std::string& continuation) override;
    std::vector<ScoredContinuation> sample_impl(const std::string& context, int count,
                                                const SamplingParams& sampling) override;
    std::string chat_impl(const std::string& system_prompt, const std::string& user_prompt,
                          const SamplingParams& sampling) override;

private:
    double weight(int prev, int next) const;
    double log_z(int prev) const;
    int last_byte_state(const std::string& context) const;

    std::string name_;
    std::uint64_t salt_;
};

} // namespace releval
