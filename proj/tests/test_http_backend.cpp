#include "releval/http_backend.hpp"

#include "mock_backends.hpp"
#include "releval/backend.hpp"
#include "releval/errors.hpp"
#include "releval/harness.hpp"
#include "releval/lm_server.hpp"
#include "releval/mocklm.hpp"
#include "releval/util.hpp"

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <cstdlib>
#include <thread>

using namespace releval;
using namespace releval::testing;

namespace {

LmServer::BackendFactory hash_factory() {
    return [](const std::string& model) {
        return std::make_shared<HashLm>(model.empty() ? "default" : model);
    };
}

BackendConfig config_for(const LmServer& server, const std::string& model = "m1") {
    BackendConfig cfg;
    cfg.base_url = server.base_url();
    cfg.model_name = model;
    cfg.api_key_env = "RELEVAL_TEST_KEY";
    cfg.max_retries = 3;
    cfg.retry_initial_delay_s = 0.02;
    cfg.timeout_s = 10.0;
    return cfg;
}

// rigged endpoint that always answers with a fixed JSON body
class CannedServer {
public:
    explicit CannedServer(std::string body, int status = 200)
        : body_(std::move(body)), status_(status) {
        server_.Post("/v1/completions", [this](const httplib::Request&, httplib::Response& res) {
            res.status = status_;
            res.set_content(body_, "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~CannedServer() {
        server_.stop();
        thread_.join();
    }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    std::thread thread_;
    std::string body_;
    int status_;
    int port_;
};

} // namespace

TEST_CASE("http scoring matches the served model exactly") {
    LmServer server(hash_factory());
    server.start();
    HttpBackend remote(config_for(server));
    HashLm local("m1");

    const std::string context = "Question:\nWhat helps a cold?\nAnswer:";
    const std::string continuation = " rest and fluids";
    auto over_http = remote.score_continuation(context, continuation);
    auto in_process = local.score_continuation(context, continuation);
    REQUIRE(over_http.size() == in_process.size());
    for (std::size_t i = 0; i < over_http.size(); ++i) {
        CHECK(over_http[i].token_text == in_process[i].token_text);
        CHECK(over_http[i].logprob == doctest::Approx(in_process[i].logprob).epsilon(1e-12));
    }
    server.stop();
}

TEST_CASE("http sampling carries logprobs, count and order") {
    LmServer server(hash_factory());
    server.start();
    HttpBackend remote(config_for(server));
    SamplingParams s;
    s.max_tokens = 10;
    s.seed = 21;
    auto out = remote.sample_continuations("Tell me something.", 10, s);
    REQUIRE(out.size() == 10);
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i].tokens.size() <= 10);
        if (i) {
            CHECK(out[i - 1].joint_logprob >= out[i].joint_logprob);
        }
    }
    // same request later is identical (seeded server-side sampling)
    auto again = remote.sample_continuations("Tell me something.", 10, s);
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i].text() == again[i].text());
    }
    server.stop();
}

TEST_CASE("http chat returns the served reply and forwards the system prompt verbatim") {
    LmServer server(hash_factory());
    server.start();
    HttpBackend remote(config_for(server));
    SamplingParams s;
    s.seed = 4;
    auto reply = remote.chat_generate(kRephraseSystemPrompt, "please reword this sentence now", s);
    CHECK(!reply.empty());
    CHECK(server.last_system_prompt() == kRephraseSystemPrompt);
    CHECK(server.last_system_prompt().find("You are a helpful rephrasing assistant") == 0);
    server.stop();
}

TEST_CASE("bearer token from the configured environment variable") {
    ::setenv("RELEVAL_TEST_KEY", "sekrit", 1);
    LmServer server(hash_factory());
    server.start();
    HttpBackend remote(config_for(server));
    remote.score_continuation("ctx", "x");
    CHECK(server.last_auth_header() == "Bearer sekrit");
    ::unsetenv("RELEVAL_TEST_KEY");
    server.stop();
}

TEST_CASE("transient 5xx responses are retried, budget exhausted raises TransportError") {
    LmServer server(hash_factory());
    server.start();

    SUBCASE("retries succeed") {
        server.fail_next(2, 500);
        HttpBackend remote(config_for(server));
        auto tokens = remote.score_continuation("ctx", "ok");
        CHECK(!tokens.empty());
        CHECK(server.request_count() == 3); // 2 failures + 1 success
    }

    SUBCASE("no budget") {
        server.fail_next(1, 503);
        auto cfg = config_for(server);
        cfg.max_retries = 0;
        HttpBackend remote(cfg);
        CHECK_THROWS_AS(remote.score_continuation("ctx", "ok"), TransportError);
        CHECK(server.request_count() == 1);
    }
    server.stop();
}

TEST_CASE("non-retryable statuses raise ProtocolError after a single request") {
    LmServer server(hash_factory());
    server.start();
    server.fail_next(1, 422);
    HttpBackend remote(config_for(server));
    CHECK_THROWS_AS(remote.score_continuation("ctx", "ok"), ProtocolError);
    CHECK(server.request_count() == 1); // malformed success is never retried
    server.stop();
}

TEST_CASE("missing logprobs in a 200 response is a ProtocolError") {
    CannedServer canned(R"({"choices":[{"index":0,"text":"x","logprobs":null}]})");
    BackendConfig cfg;
    cfg.base_url = canned.base_url();
    cfg.model_name = "m";
    cfg.max_retries = 0;
    HttpBackend remote(cfg);
    CHECK_THROWS_AS(remote.score_continuation("ctx", "x"), ProtocolError);
    SamplingParams s;
    s.max_tokens = 4;
    CHECK_THROWS_AS(remote.sample_continuations("ctx", 1, s), ProtocolError);
}

TEST_CASE("garbage JSON is a ProtocolError") {
    CannedServer canned("this is not json");
    BackendConfig cfg;
    cfg.base_url = canned.base_url();
    cfg.model_name = "m";
    cfg.max_retries = 0;
    HttpBackend remote(cfg);
    CHECK_THROWS_AS(remote.score_continuation("ctx", "x"), ProtocolError);
}

TEST_CASE("tokens that do not reconstruct the continuation raise TokenizationMismatch") {
    CannedServer canned(
        R"({"choices":[{"index":0,"text":"","logprobs":)"
        R"({"tokens":["ct","x","WRONG"],"token_logprobs":[-0.1,-0.2,-0.3],)"
        R"("text_offset":[0,2,3]}}]})");
    BackendConfig cfg;
    cfg.base_url = canned.base_url();
    cfg.model_name = "m";
    cfg.max_retries = 0;
    HttpBackend remote(cfg);
    CHECK_THROWS_AS(remote.score_continuation("ct", "xz"), TokenizationMismatch);
}

TEST_CASE("stacks rejecting max_tokens=0 are handled by the echo fallback") {
    LmServer server(hash_factory());
    server.start();
    server.set_reject_zero_max_tokens(true);
    HttpBackend remote(config_for(server));
    HashLm local("m1");
    auto tokens = remote.score_continuation("some context", " and more");
    auto expected = local.score_continuation("some context", " and more");
    REQUIRE(tokens.size() == expected.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        CHECK(tokens[i].logprob == doctest::Approx(expected[i].logprob).epsilon(1e-12));
    }
    server.stop();
}

TEST_CASE("at most max_in_flight requests are outstanding") {
    LmServer server(hash_factory());
    server.start();
    server.set_handler_delay_ms(15);
    auto cfg = config_for(server);
    cfg.max_in_flight = 2;
    HttpBackend remote(cfg);
    parallel_for(8, 8, [&](std::size_t i) {
        remote.score_continuation("ctx", "call " + std::to_string(i));
    });
    CHECK(server.request_count() == 8);
    CHECK(server.max_concurrency_seen() <= 2);
    server.stop();
}

TEST_CASE("cache transparency over HTTP: bit-identical and zero extra requests") {
    TempDir dir("httpcache");
    LmServer server(hash_factory());
    server.start();
    auto cfg = config_for(server);
    cfg.cache_path = dir.path();
    auto backend = make_backend(cfg);
    auto first = backend->score_continuation("ctx", "cached text");
    auto requests_after_first = server.request_count();
    auto second = backend->score_continuation("ctx", "cached text");
    CHECK(server.request_count() == requests_after_first);
    CHECK(first == second);
    server.stop();
}
