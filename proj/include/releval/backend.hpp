#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace releval {

struct TokenLogprob {
    std::string token_text;
    double logprob = 0.0;   // natural log
    int byte_len = 0;       // UTF-8 bytes of token_text

    bool operator==(const TokenLogprob&) const = default;
};

enum class FinishReason { length, stop, other };

std::string finish_reason_name(FinishReason r);
FinishReason finish_reason_from(const std::string& name);

struct ScoredContinuation {
    std::vector<TokenLogprob> tokens;
    double joint_logprob = 0.0; // sum of token logprobs
    FinishReason finish_reason = FinishReason::other;

    std::string text() const;
};

struct SamplingParams {
    double top_p = 0.9;
    double temperature = 1.0;
    int max_tokens = 256;
    std::optional<std::uint64_t> seed;
};

struct BackendConfig {
    std::string base_url;
    std::string model_name;
    std::string api_key_env = "RELEVAL_API_KEY";
    double timeout_s = 120.0;
    int max_retries = 3;
    int max_in_flight = 4;
    double retry_initial_delay_s = 0.5;
    std::optional<std::filesystem::path> cache_path;

    void validate() const;
};

// Uniform access to a language model. The public entry points validate
// arguments and enforce the result invariants (finite logprobs, byte-exact
// reconstruction, descending sort, joint == sum of tokens), so every
// implementation — remote or mock — behaves identically at the seams.
// Implementations must be safe for concurrent callers.
class ModelBackend {
public:
    virtual ~ModelBackend() = default;

    // Teacher-forced token logprobs of `continuation` appended to `context`.
    std::vector<TokenLogprob> score_continuation(const std::string& context,
                                                 const std::string& continuation);

    // `count` independently sampled continuations, sorted by descending
    // joint logprob.
    std::vector<ScoredContinuation> sample_continuations(const std::string& context, int count,
                                                         const SamplingParams& sampling);

    // Assistant text for a system/user chat exchange.
    std::string chat_generate(const std::string& system_prompt, const std::string& user_prompt,
                              const SamplingParams& sampling);

    virtual const std::string& model_name() const = 0;

protected:
    virtual std::vector<TokenLogprob> score_impl(const std::string& context,
                                                 const std::string& continuation) = 0;
    virtual std::vector<ScoredContinuation> sample_impl(const std::string& context, int count,
                                                        const SamplingParams& sampling) = 0;
    virtual std::string chat_impl(const std::string& system_prompt,
                                  const std::string& user_prompt,
                                  const SamplingParams& sampling) = 0;
};

// Decorator that serves repeated requests from a content-addressed on-disk
// store. Values are deterministic for a fixed backend, so concurrent writers
// colliding on a key are benign.
class CachedBackend : public ModelBackend {
public:
    CachedBackend(std::shared_ptr<ModelBackend> inner, std::filesystem::path cache_dir);
    ~CachedBackend() override;

    const std::string& model_name() const override;

protected:
    std::vector<TokenLogprob> score_impl(const std::string& context,
                                         const std::string& continuation) override;
    std::vector<ScoredContinuation> sample_impl(const std::string& context, int count,
                                                const SamplingParams& sampling) override;
    std::string chat_impl(const std::string& system_prompt, const std::string& user_prompt,
                          const SamplingParams& sampling) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// HTTP backend per `config`, wrapped in a CachedBackend when a cache path
// is configured.
std::shared_ptr<ModelBackend> make_backend(const BackendConfig& config);

} // namespace releval
