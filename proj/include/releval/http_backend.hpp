#pragma once

#include "releval/backend.hpp"
#include "releval/util.hpp"

#include <atomic>
#include <cstdint>
#include <string>

namespace releval {

// Client for completions-style serving endpoints. Teacher-forced scoring
// sends one request with the continuation appended to the context and the
// prompt logprobs echoed back; continuation tokens are recovered by byte
// offset. Transport failures and retryable statuses (408/429/5xx) back off
// exponentially with jitter; a malformed success is a ProtocolError and is
// never retried. At most max_in_flight requests are outstanding at once.
class HttpBackend : public ModelBackend {
public:
    explicit HttpBackend(BackendConfig config);

    const std::string& model_name() const override;

    // Requests actually sent over the wire, retries included.
    std::uint64_t requests_sent() const { return requests_.load(); }

protected:
    std::vector<TokenLogprob> score_impl(const std::string& context,
                                         const std::string& continuation) override;
    std::vector<ScoredContinuation> sample_impl(const std::string& context, int count,
                                                const SamplingParams& sampling) override;
    std::string chat_impl(const std::string& system_prompt, const std::string& user_prompt,
                          const SamplingParams& sampling) override;

private:
    struct Response {
        int status = 0;
        std::string body;
    };

    // POST with retry/backoff; returns the first non-retryable response.
    Response post(const std::string& path, const std::string& body);

    BackendConfig config_;
    std::string api_key_;
    Semaphore slots_;
    std::atomic<std::uint64_t> requests_{0};
};

} // namespace releval
