#include "releval/backend.hpp"
#include "releval/errors.hpp"
#include "releval/harness.hpp"
#include "releval/report.hpp"
#include "releval/util.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>

namespace {

using namespace releval;

struct CommonArgs {
    std::string dataset;
    std::string format = "auto";
    std::string backend_url;
    std::string model;
    std::string api_key_env = "RELEVAL_API_KEY";
    std::string cache_dir;
    std::string out_dir = "run";
    std::string benchmark;
    std::vector<std::string> metrics{"all"};
    int repetitions = 1;
    int rephrasings = 0;
    double top_p = 0.9;
    double temperature = 1.0;
    int max_tokens = 256;
    int ell = 5;
    int search_space = 10;
    int stride = 8;
    std::int64_t seed = -1;
    int workers = 4;
    int max_in_flight = 4;
    int max_retries = 3;
    double timeout_s = 120.0;
    bool relaxed = false;
    bool weighted_relaxed = false;
    bool mcqa_byte_normalize = false;
};

void add_backend_options(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--backend-url", args.backend_url, "completions endpoint base URL")
        ->required();
    cmd->add_option("--model", args.model, "model name sent to the endpoint")->required();
    cmd->add_option("--api-key-env", args.api_key_env,
                    "environment variable holding the bearer token");
    cmd->add_option("--cache-dir", args.cache_dir, "directory for the request cache");
    cmd->add_option("--max-in-flight", args.max_in_flight, "max concurrent requests");
    cmd->add_option("--max-retries", args.max_retries, "transport retry budget");
    cmd->add_option("--timeout", args.timeout_s, "request timeout in seconds");
}

void add_run_options(CLI::App* cmd, CommonArgs& args, bool with_dataset = true) {
    if (with_dataset) {
        cmd->add_option("--dataset", args.dataset, "dataset file (jsonl or csv)")->required();
        cmd->add_option("--format", args.format, "dataset format: auto|jsonl|csv");
        cmd->add_option("--benchmark", args.benchmark, "benchmark name (default: dataset stem)");
    }
    cmd->add_option("--out-dir", args.out_dir, "run directory");
    cmd->add_option("--seed", args.seed, "base seed for reproducible sampling");
    cmd->add_option("--workers", args.workers, "parallel items");
    cmd->add_option("--top-p", args.top_p, "nucleus sampling mass");
    cmd->add_option("--temperature", args.temperature, "sampling temperature");
    cmd->add_option("--max-tokens", args.max_tokens, "generation length / relaxed offset cap");
}

RunConfig build_config(const CommonArgs& args, bool force_relaxed = false) {
    RunConfig cfg;
    cfg.dataset_path = args.dataset;
    cfg.dataset_format = dataset_format_from(args.format);
    cfg.backend.base_url = args.backend_url;
    cfg.backend.model_name = args.model;
    cfg.backend.api_key_env = args.api_key_env;
    cfg.backend.timeout_s = args.timeout_s;
    cfg.backend.max_retries = args.max_retries;
    cfg.backend.max_in_flight = args.max_in_flight;
    if (!args.cache_dir.empty()) {
        cfg.backend.cache_path = args.cache_dir;
    }
    cfg.repetitions = args.repetitions;
    cfg.rephrasings = args.rephrasings;
    cfg.out_dir = args.out_dir;
    cfg.benchmark = args.benchmark;
    cfg.sampling.top_p = args.top_p;
    cfg.sampling.temperature = args.temperature;
    cfg.sampling.max_tokens = args.max_tokens;
    cfg.mcqa_byte_normalize = args.mcqa_byte_normalize;
    cfg.workers = args.workers;
    if (args.seed >= 0) {
        cfg.seed = static_cast<std::uint64_t>(args.seed);
    }
    std::vector<std::string> requested = args.metrics;
    if (force_relaxed) {
        requested = {"relaxed"};
    }
    cfg.metrics = resolve_metric_names(requested);
    bool wants_relaxed = cfg.metrics.count("relaxed_perplexity") ||
                         cfg.metrics.count("relaxed_cross_entropy") ||
                         cfg.metrics.count("relaxed_logprob_sum");
    if (args.relaxed && !wants_relaxed) {
        auto extra = resolve_metric_names({"relaxed"});
        cfg.metrics.insert(extra.begin(), extra.end());
        wants_relaxed = true;
    }
    if (wants_relaxed) {
        RelaxedParams params;
        params.ell = args.ell;
        params.search_space = args.search_space;
        params.stride = args.stride;
        params.max_tokens = args.max_tokens;
        params.top_p = args.top_p;
        params.temperature = args.temperature;
        params.use_sequence_weights = args.weighted_relaxed;
        cfg.relaxed = params;
    }
    return cfg;
}

int exit_code(const RunSummary& summary) {
    return summary.failed > 0 ? 1 : 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"evaluation engine for log-prob-serving language model endpoints"};
    app.require_subcommand(1);

    CommonArgs args;

    auto* gen = app.add_subcommand("gen", "sample continuations for every item");
    add_backend_options(gen, args);
    add_run_options(gen, args);
    gen->add_option("--repetitions", args.repetitions, "samples per item");

    auto* rephrase = app.add_subcommand("rephrase", "append rephrased variants of each output");
    add_backend_options(rephrase, args);
    add_run_options(rephrase, args);
    rephrase->add_option("--rephrasings", args.rephrasings, "variants per output")->required();

    auto* score = app.add_subcommand("score", "compute metrics over generations");
    add_backend_options(score, args);
    add_run_options(score, args);
    score->add_option("--metrics", args.metrics,
                      "metric names or groups (ngram, perplexity, accuracy, relaxed, all)")
        ->delimiter(',');
    score->add_flag("--relaxed", args.relaxed, "also compute relaxed metrics");
    score->add_flag("--weighted-relaxed", args.weighted_relaxed,
                    "keep sequence-probability weights (ablation)");
    score->add_flag("--mcqa-byte-norm", args.mcqa_byte_normalize,
                    "normalize option logprobs by byte length");
    score->add_option("--ell", args.ell, "candidate sequences kept");
    score->add_option("--search-space", args.search_space, "candidate sequences sampled");
    score->add_option("--stride", args.stride, "offset spacing");

    auto* relaxed_cmd = app.add_subcommand("relaxed", "compute only the relaxed metrics");
    add_backend_options(relaxed_cmd, args);
    add_run_options(relaxed_cmd, args);
    relaxed_cmd->add_flag("--weighted-relaxed", args.weighted_relaxed,
                          "keep sequence-probability weights (ablation)");
    relaxed_cmd->add_option("--ell", args.ell, "candidate sequences kept");
    relaxed_cmd->add_option("--search-space", args.search_space, "candidate sequences sampled");
    relaxed_cmd->add_option("--stride", args.stride, "offset spacing");

    auto* analyze_cmd = app.add_subcommand("analyze", "run an analysis protocol over score files");
    std::string mode;
    std::vector<std::string> score_files;
    std::vector<std::string> external_files;
    std::string analyze_out = "run";
    std::string analyze_benchmark, analyze_metric, direction = "auto";
    analyze_cmd->add_option("--mode", mode,
                            "correlate_metrics|correlate_benchmarks|resilience|self_consistency|rank")
        ->required();
    analyze_cmd->add_option("--scores", score_files, "scores.jsonl files")
        ->required()
        ->delimiter(',');
    analyze_cmd->add_option("--external-scores", external_files,
                            "CSV score tables (model,benchmark[,item_id],metric...)")
        ->delimiter(',');
    analyze_cmd->add_option("--out-dir", analyze_out, "output directory");
    analyze_cmd->add_option("--benchmark", analyze_benchmark, "restrict to one benchmark");
    analyze_cmd->add_option("--metric", analyze_metric, "metric for correlate_benchmarks/rank");
    analyze_cmd->add_option("--direction", direction, "rank direction: auto|higher_better|lower_better");

    auto* report_cmd = app.add_subcommand("report", "summary tables from score files");
    std::vector<std::string> report_scores;
    std::string report_format = "markdown";
    std::string report_out = "run";
    std::string relaxed_detail_file;
    report_cmd->add_option("--scores", report_scores, "scores.jsonl files")
        ->required()
        ->delimiter(',');
    report_cmd->add_option("--report-format", report_format, "csv|json|markdown");
    report_cmd->add_option("--out-dir", report_out, "output directory");
    report_cmd->add_option("--relaxed-file", relaxed_detail_file,
                           "relaxed.jsonl for the per-item detail table (markdown only)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            RunConfig cfg = build_config(args);
            auto backend = make_backend(cfg.backend);
            auto summary = run_generation(cfg, *backend);
            std::cout << "gen: " << summary.ok << " records, " << summary.failed << " failed\n";
            return exit_code(summary);
        }
        if (rephrase->parsed()) {
            RunConfig cfg = build_config(args);
            auto backend = make_backend(cfg.backend);
            auto summary = rephrase_outputs(cfg, *backend, args.rephrasings);
            std::cout << "rephrase: " << summary.ok << " variants, " << summary.failed
                      << " failed\n";
            return exit_code(summary);
        }
        if (score->parsed() || relaxed_cmd->parsed()) {
            RunConfig cfg = build_config(args, relaxed_cmd->parsed());
            auto backend = make_backend(cfg.backend);
            auto summary = run_metrics(cfg, *backend);
            std::cout << "score: " << summary.ok << " rows, " << summary.failed << " failed\n";
            return exit_code(summary);
        }
        if (analyze_cmd->parsed()) {
            AnalyzeConfig cfg;
            for (const auto& f : score_files) {
                cfg.score_files.emplace_back(f);
            }
            for (const auto& f : external_files) {
                cfg.external_score_files.emplace_back(f);
            }
            cfg.out_dir = analyze_out;
            cfg.benchmark = analyze_benchmark;
            cfg.metric = analyze_metric;
            cfg.rank_direction = direction;
            analyze(analysis_mode_from(mode), cfg);
            std::cout << "analyze: wrote " << (cfg.out_dir / "analysis").string() << "\n";
            return 0;
        }
        if (report_cmd->parsed()) {
            std::vector<ScoreRecord> records;
            for (const auto& f : report_scores) {
                for (auto& r : read_scores(f)) {
                    records.push_back(std::move(r));
                }
            }
            auto path = emit_report(summarize_scores(records), report_format_from(report_format),
                                    report_out);
            if (!relaxed_detail_file.empty() && report_format_from(report_format) ==
                                                    ReportFormat::markdown) {
                std::vector<nlohmann::json> rows;
                std::istringstream in(read_file(relaxed_detail_file));
                std::string line;
                while (std::getline(in, line)) {
                    if (!line.empty()) {
                        rows.push_back(nlohmann::json::parse(line));
                    }
                }
                auto content = read_file(path);
                content += "\n" + relaxed_detail_markdown(rows);
                write_file_atomic(path, content);
            }
            std::cout << "report: wrote " << path.string() << "\n";
            return 0;
        }
    } catch (const InvalidRequest& ex) {
        std::cerr << "configuration error: " << ex.what() << "\n";
        return 2;
    } catch (const ValidationError& ex) {
        std::cerr << "configuration error: " << ex.what() << "\n";
        return 2;
    } catch (const ParseError& ex) {
        std::cerr << "configuration error: " << ex.what() << "\n";
        return 2;
    } catch (const IoError& ex) {
        std::cerr << "configuration error: " << ex.what() << "\n";
        return 2;
    } catch (const Error& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 2;
}
