#pragma once

#include "releval/backend.hpp"
#include "releval/dataset.hpp"
#include "releval/relaxed.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace releval {

struct GenSampling {
    double top_p = 0.9;
    double temperature = 1.0;
    int max_tokens = 256;
};

// Frozen description of a run; serialized to config.json in the run
// directory so artifacts stay auditable.
struct RunConfig {
    std::filesystem::path dataset_path;
    DatasetFormat dataset_format = DatasetFormat::auto_detect;
    BackendConfig backend;
    std::set<std::string> metrics; // canonical metric names
    int repetitions = 1;
    int rephrasings = 0;
    std::optional<RelaxedParams> relaxed;
    std::optional<std::uint64_t> seed;
    std::filesystem::path out_dir;
    GenSampling sampling;
    std::string benchmark; // defaults to the dataset filename stem
    bool mcqa_byte_normalize = false;
    int workers = 4;

    void validate() const;
    std::string benchmark_name() const;
    nlohmann::json to_json() const;

    std::filesystem::path generations_path() const { return out_dir / "generations.jsonl"; }
    std::filesystem::path scores_path() const { return out_dir / "scores.jsonl"; }
    std::filesystem::path relaxed_path() const { return out_dir / "relaxed.jsonl"; }
    std::filesystem::path config_path() const { return out_dir / "config.json"; }
};

// Metric names the engine computes natively.
const std::set<std::string>& implemented_metrics();

// Expands group aliases (ngram, perplexity, relaxed, all) into canonical
// names and validates them against implemented_metrics() plus
// `external_names`.
std::set<std::string> resolve_metric_names(const std::vector<std::string>& requested,
                                           const std::set<std::string>& external_names = {});

struct GenerationRecord {
    std::string item_id;
    int repetition = 0;
    int rephrasing = 0; // 0 = original sample, 1..k = rephrased variants
    std::string text;
    GenSampling sampling;
    std::optional<std::uint64_t> seed;
    std::string finish_reason = "stop";
    std::string error; // non-empty when generation failed

    nlohmann::json to_json() const;
    static GenerationRecord from_json(const nlohmann::json& j);
};

struct ScoreRecord {
    std::string model;
    std::string benchmark;
    std::string item_id;
    int repetition = 0;
    int rephrasing = 0;
    std::string metric;
    std::optional<double> value; // missing when the metric failed
    std::string target_id;       // set for reference-scored metrics
    std::string error;

    nlohmann::json to_json() const;
    static ScoreRecord from_json(const nlohmann::json& j);
};

std::vector<GenerationRecord> read_generations(const std::filesystem::path& path);
void write_generations(const std::filesystem::path& path,
                       const std::vector<GenerationRecord>& records);

std::vector<ScoreRecord> read_scores(const std::filesystem::path& path);
void write_scores(const std::filesystem::path& path, const std::vector<ScoreRecord>& records);

} // namespace releval
