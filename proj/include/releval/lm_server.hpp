#pragma once

#include "releval/backend.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>

namespace releval {

// Serves any ModelBackend over the completions wire protocol:
// POST /v1/completions (echo+logprobs scoring and n-way sampling) and
// POST /v1/chat/completions. Runs on a background thread; used by the mock
// server tool and by tests that need a real endpoint on localhost.
class LmServer {
public:
    using BackendFactory = std::function<std::shared_ptr<ModelBackend>(const std::string& model)>;

    explicit LmServer(BackendFactory factory);
    ~LmServer();

    LmServer(const LmServer&) = delete;
    LmServer& operator=(const LmServer&) = delete;

    // Binds 127.0.0.1 (port 0 picks a free one) and returns the bound port.
    int start(int port = 0);
    void stop();
    std::string base_url() const;

    std::uint64_t request_count() const { return requests_.load(); }
    int max_concurrency_seen() const { return max_in_flight_seen_.load(); }
    std::string last_system_prompt() const;
    std::string last_auth_header() const;

    // Test knobs: fail the next n requests with `status`, hold each handler
    // for `ms` to force overlap, or mimic stacks that reject max_tokens=0
    // echo requests.
    void fail_next(int n, int status);
    void set_handler_delay_ms(int ms) { handler_delay_ms_.store(ms); }
    void set_reject_zero_max_tokens(bool on) { reject_zero_max_tokens_.store(on); }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;

    BackendFactory factory_;
    std::atomic<std::uint64_t> requests_{0};
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_in_flight_seen_{0};
    std::atomic<int> fail_count_{0};
    std::atomic<int> fail_status_{500};
    std::atomic<int> handler_delay_ms_{0};
    std::atomic<bool> reject_zero_max_tokens_{false};
    mutable std::mutex capture_mutex_;
    std::string last_system_prompt_;
    std::string last_auth_header_;
    int port_ = 0;
};

} // namespace releval
