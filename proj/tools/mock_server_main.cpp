#include "releval/lm_server.hpp"
#include "releval/mocklm.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <thread>

namespace {
volatile std::sig_atomic_t stop_requested = 0;
void handle_signal(int) {
    stop_requested = 1;
}
} // namespace

// Deterministic local endpoint for trying the engine without a real model.
// Each model name maps to a distinct hash-seeded language model, so runs
// against several "models" produce genuinely different score tables.
int main(int argc, char** argv) {
    CLI::App app{"deterministic mock completions server"};
    int port = 8080;
    std::uint64_t salt = 0;
    app.add_option("--port", port, "listen port (default 8080)");
    app.add_option("--salt", salt, "extra salt mixed into every model");
    CLI11_PARSE(app, argc, argv);

    releval::LmServer server([salt](const std::string& model) {
        return std::make_shared<releval::HashLm>(model.empty() ? "default" : model, salt);
    });
    int bound = server.start(port);
    std::cout << "mock completions server listening on http://127.0.0.1:" << bound << "\n"
              << "endpoints: POST /v1/completions, POST /v1/chat/completions\n";

    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    while (!stop_requested) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    server.stop();
    return 0;
}
