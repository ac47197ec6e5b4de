#include "releval/lm_server.hpp"

#include "releval/errors.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <thread>

namespace releval {

using nlohmann::json;

struct LmServer::Impl {
    httplib::Server server;
    std::thread thread;
};

namespace {

void write_error(httplib::Response& res, int status, const std::string& message) {
    res.status = status;
    res.set_content(json{{"error", {{"message", message}}}}.dump(), "application/json");
}

SamplingParams sampling_from(const json& body) {
    SamplingParams s;
    s.top_p = body.value("top_p", 1.0);
    s.temperature = body.value("temperature", 1.0);
    s.max_tokens = body.value("max_tokens", 16);
    if (body.contains("seed") && !body["seed"].is_null()) {
        s.seed = body["seed"].get<std::uint64_t>();
    }
    return s;
}

json logprobs_json(const std::vector<TokenLogprob>& tokens, std::size_t start_offset) {
    json tokens_j = json::array();
    json lps_j = json::array();
    json offsets_j = json::array();
    std::size_t pos = start_offset;
    for (const auto& t : tokens) {
        tokens_j.push_back(t.token_text);
        lps_j.push_back(t.logprob);
        offsets_j.push_back(pos);
        pos += t.token_text.size();
    }
    return json{{"tokens", std::move(tokens_j)},
                {"token_logprobs", std::move(lps_j)},
                {"text_offset", std::move(offsets_j)},
                {"top_logprobs", nullptr}};
}

} // namespace

LmServer::LmServer(BackendFactory factory)
    : impl_(std::make_unique<Impl>()), factory_(std::move(factory)) {}

LmServer::~LmServer() {
    stop();
}

std::string LmServer::base_url() const {
    return "http://127.0.0.1:" + std::to_string(port_);
}

std::string LmServer::last_system_prompt() const {
    std::lock_guard lock(capture_mutex_);
    return last_system_prompt_;
}

std::string LmServer::last_auth_header() const {
    std::lock_guard lock(capture_mutex_);
    return last_auth_header_;
}

void LmServer::fail_next(int n, int status) {
    fail_status_.store(status);
    fail_count_.store(n);
}

int LmServer::start(int port) {
    auto wrap = [this](const httplib::Request& req, httplib::Response& res,
                       const std::function<void(const json&, httplib::Response&)>& handler) {
        requests_.fetch_add(1);
        int now = in_flight_.fetch_add(1) + 1;
        int seen = max_in_flight_seen_.load();
        while (now > seen && !max_in_flight_seen_.compare_exchange_weak(seen, now)) {
        }
        if (int delay = handler_delay_ms_.load(); delay > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        }
        {
            std::lock_guard lock(capture_mutex_);
            last_auth_header_ = req.get_header_value("Authorization");
        }
        if (fail_count_.load() > 0 && fail_count_.fetch_sub(1) > 0) {
            write_error(res, fail_status_.load(), "injected failure");
            in_flight_.fetch_sub(1);
            return;
        }
        try {
            handler(json::parse(req.body), res);
        } catch (const json::exception& ex) {
            write_error(res, 400, std::string("bad request body: ") + ex.what());
        } catch (const InvalidRequest& ex) {
            write_error(res, 400, ex.what());
        } catch (const std::exception& ex) {
            write_error(res, 500, ex.what());
        }
        in_flight_.fetch_sub(1);
    };

    impl_->server.Post("/v1/completions", [this, wrap](const httplib::Request& req,
                                                       httplib::Response& res) {
        wrap(req, res, [this](const json& body, httplib::Response& out) {
            std::string model = body.value("model", "");
            std::string prompt = body.value("prompt", "");
            auto backend = factory_(model);
            SamplingParams sampling = sampling_from(body);
            bool echo = body.value("echo", false);
            bool want_logprobs = body.contains("logprobs") && !body["logprobs"].is_null();
            int n = body.value("n", 1);
            json choices = json::array();
            if (echo) {
                if (prompt.empty()) {
                    throw InvalidRequest("echo scoring needs a non-empty prompt");
                }
                if (sampling.max_tokens == 0 && reject_zero_max_tokens_.load()) {
                    throw InvalidRequest("max_tokens must be at least 1");
                }
                auto tokens = backend->score_continuation("", prompt);
                std::string generated;
                if (sampling.max_tokens > 0) {
                    auto sampled = backend->sample_continuations(prompt, 1, sampling);
                    for (const auto& t : sampled[0].tokens) {
                        tokens.push_back(t);
                        generated += t.token_text;
                    }
                }
                json choice{{"index", 0}, {"text", generated}, {"finish_reason", "stop"}};
                choice["logprobs"] = want_logprobs ? logprobs_json(tokens, 0) : json(nullptr);
                choices.push_back(std::move(choice));
            } else {
                auto sampled = backend->sample_continuations(prompt, n, sampling);
                int index = 0;
                for (const auto& c : sampled) {
                    json choice{{"index", index++},
                                {"text", c.text()},
                                {"finish_reason", finish_reason_name(c.finish_reason)}};
                    choice["logprobs"] =
                        want_logprobs ? logprobs_json(c.tokens, prompt.size()) : json(nullptr);
                    choices.push_back(std::move(choice));
                }
            }
            json payload{{"object", "text_completion"},
                         {"model", model},
                         {"choices", std::move(choices)}};
            out.set_content(payload.dump(), "application/json");
        });
    });

    impl_->server.Post("/v1/chat/completions", [this, wrap](const httplib::Request& req,
                                                            httplib::Response& res) {
        wrap(req, res, [this](const json& body, httplib::Response& out) {
            std::string model = body.value("model", "");
            std::string system, user;
            for (const auto& m : body.value("messages", json::array())) {
                std::string role = m.value("role", "");
                if (role == "system") {
                    system = m.value("content", "");
                } else if (role == "user") {
                    user = m.value("content", "");
                }
            }
            {
                std::lock_guard lock(capture_mutex_);
                last_system_prompt_ = system;
            }
            auto backend = factory_(model);
            std::string reply = backend->chat_generate(system, user, sampling_from(body));
            json payload{
                {"object", "chat.completion"},
                {"model", model},
                {"choices",
                 json::array({json{{"index", 0},
                                   {"finish_reason", "stop"},
                                   {"message", {{"role", "assistant"}, {"content", reply}}}}})}};
            out.set_content(payload.dump(), "application/json");
        });
    });

    if (port == 0) {
        port_ = impl_->server.bind_to_any_port("127.0.0.1");
    } else {
        if (!impl_->server.bind_to_port("127.0.0.1", port)) {
            throw IoError("cannot bind 127.0.0.1:" + std::to_string(port));
        }
        port_ = port;
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port_;
}

void LmServer::stop() {
    if (impl_ && impl_->thread.joinable()) {
        impl_->server.stop();
        impl_->thread.join();
    }
}

} // namespace releval
