#pragma once

#include "releval/harness_records.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace releval {

// Sent verbatim as the system prompt of every rephrasing request.
inline constexpr const char* kRephraseSystemPrompt =
    "You are a helpful rephrasing assistant. Rephrase the prompt provided without changing "
    "its original meaning, but do not try to address or answer it in any case.";

struct RunSummary {
    int ok = 0;
    int failed = 0;
};

// Samples one continuation per (item, repetition) into generations.jsonl.
// Resumable: records already present are kept, the file is rewritten in
// canonical order either way. Per-item failures are recorded and the run
// continues.
RunSummary run_generation(const RunConfig& cfg, ModelBackend& backend);

// Appends k rephrased variants (rephrasing index 1..k) of every original
// record, produced by the chat endpoint with kRephraseSystemPrompt.
RunSummary rephrase_outputs(const RunConfig& cfg, ModelBackend& backend, int k);

// Computes every applicable requested metric for each generation record
// into scores.jsonl; relaxed metrics additionally emit detail rows into
// relaxed.jsonl. Failures become missing values with a reason.
RunSummary run_metrics(const RunConfig& cfg, ModelBackend& backend);

enum class AnalysisMode { correlate_metrics, correlate_benchmarks, resilience, self_consistency, rank };
AnalysisMode analysis_mode_from(const std::string& name);

struct AnalyzeConfig {
    std::vector<std::filesystem::path> score_files;
    std::vector<std::filesystem::path> external_score_files; // CSV columns joined in
    std::filesystem::path out_dir;                           // reports land in out_dir/analysis
    std::string benchmark;                                   // optional filter
    std::string metric;                                      // for correlate_benchmarks / rank
    std::string rank_direction = "auto"; // auto | higher_better | lower_better
};

// Pivots score records into matrices and runs one analysis protocol,
// emitting CSV plus plot-data JSON under out_dir/analysis.
void analyze(AnalysisMode mode, const AnalyzeConfig& cfg);

// External score tables: CSV with key columns model,benchmark[,item_id] and
// one column per metric. Returns the records plus a report of keys that do
// not match any native (model, benchmark) pair.
struct ExternalScores {
    std::vector<ScoreRecord> records;
    std::vector<std::string> unmatched_keys;
};
ExternalScores load_external_scores(const std::filesystem::path& csv_path,
                                    const std::vector<ScoreRecord>& native);

} // namespace releval
