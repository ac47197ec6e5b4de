#include "releval/harness.hpp"

#include "releval/analytics.hpp"
#include "releval/errors.hpp"
#include "releval/perplexity.hpp"
#include "releval/text_metrics.hpp"
#include "releval/util.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

namespace releval {

using nlohmann::json;

namespace {

std::uint64_t derive_seed(std::uint64_t base, const std::string& item_id, int repetition,
                          int rephrasing, const char* tag) {
    std::uint64_t h = fnv1a(item_id, base ^ fnv1a(tag));
    h ^= mix64(static_cast<std::uint64_t>(repetition) * 0x9e3779b9ull +
               static_cast<std::uint64_t>(rephrasing) + 1);
    return mix64(h);
}

std::optional<std::uint64_t> record_seed(const RunConfig& cfg, const std::string& item_id,
                                         int repetition, int rephrasing, const char* tag) {
    if (!cfg.seed) {
        return std::nullopt;
    }
    return derive_seed(*cfg.seed, item_id, repetition, rephrasing, tag);
}

SamplingParams to_sampling(const GenSampling& g, std::optional<std::uint64_t> seed) {
    SamplingParams s;
    s.top_p = g.top_p;
    s.temperature = g.temperature;
    s.max_tokens = g.max_tokens;
    s.seed = seed;
    return s;
}

std::vector<std::string> read_jsonl_lines(const std::filesystem::path& path) {
    std::vector<std::string> lines;
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") != std::string::npos) {
            lines.push_back(line);
        }
    }
    return lines;
}

const std::vector<std::string> kGenerationMetricOrder = {"rouge1", "rouge2", "rougeL", "bleu"};
const std::vector<std::string> kPerplexityMetricOrder = {"word_perplexity", "byte_perplexity",
                                                         "bits_per_byte"};
const std::vector<std::string> kRelaxedMetricOrder = {"relaxed_cross_entropy",
                                                      "relaxed_perplexity",
                                                      "relaxed_logprob_sum"};

std::string sanitize_filename(const std::string& name) {
    std::string out;
    for (char c : name) {
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    }
    return out.empty() ? std::string("_") : out;
}

} // namespace

const std::set<std::string>& implemented_metrics() {
    static const std::set<std::string> metrics = {
        "rouge1",          "rouge2",          "rougeL",
        "bleu",            "word_perplexity", "byte_perplexity",
        "bits_per_byte",   "accuracy",        "relaxed_cross_entropy",
        "relaxed_perplexity", "relaxed_logprob_sum"};
    return metrics;
}

std::set<std::string> resolve_metric_names(const std::vector<std::string>& requested,
                                           const std::set<std::string>& external_names) {
    std::set<std::string> out;
    for (const auto& name : requested) {
        if (name == "ngram") {
            out.insert(kGenerationMetricOrder.begin(), kGenerationMetricOrder.end());
        } else if (name == "perplexity") {
            out.insert(kPerplexityMetricOrder.begin(), kPerplexityMetricOrder.end());
        } else if (name == "relaxed") {
            out.insert(kRelaxedMetricOrder.begin(), kRelaxedMetricOrder.end());
        } else if (name == "all") {
            out.insert(kGenerationMetricOrder.begin(), kGenerationMetricOrder.end());
            out.insert(kPerplexityMetricOrder.begin(), kPerplexityMetricOrder.end());
            out.insert("accuracy");
        } else if (implemented_metrics().count(name) || external_names.count(name)) {
            out.insert(name);
        } else {
            throw InvalidRequest("unknown metric '" + name + "'");
        }
    }
    return out;
}

void RunConfig::validate() const {
    if (repetitions < 1) {
        throw InvalidRequest("config: repetitions must be >= 1");
    }
    if (rephrasings < 0) {
        throw InvalidRequest("config: rephrasings must be >= 0");
    }
    if (workers < 1) {
        throw InvalidRequest("config: workers must be >= 1");
    }
    backend.validate();
    if (relaxed) {
        relaxed->validate();
    }
    for (const auto& m : metrics) {
        if (!implemented_metrics().count(m)) {
            throw InvalidRequest("config: metric '" + m + "' is not implemented");
        }
        bool is_relaxed = std::find(kRelaxedMetricOrder.begin(), kRelaxedMetricOrder.end(), m) !=
                          kRelaxedMetricOrder.end();
        if (is_relaxed && !relaxed) {
            throw InvalidRequest("config: metric '" + m + "' needs relaxed parameters");
        }
    }
}

std::string RunConfig::benchmark_name() const {
    return benchmark.empty() ? dataset_path.stem().string() : benchmark;
}

json RunConfig::to_json() const {
    json backend_j{{"base_url", backend.base_url},
                   {"model_name", backend.model_name},
                   {"api_key_env", backend.api_key_env},
                   {"timeout_s", backend.timeout_s},
                   {"max_retries", backend.max_retries},
                   {"max_in_flight", backend.max_in_flight}};
    if (backend.cache_path) {
        backend_j["cache_path"] = backend.cache_path->string();
    }
    json j{{"dataset_path", dataset_path.string()},
           {"dataset_format", dataset_format_name(dataset_format)},
           {"backend", std::move(backend_j)},
           {"metrics", std::vector<std::string>(metrics.begin(), metrics.end())},
           {"repetitions", repetitions},
           {"rephrasings", rephrasings},
           {"out_dir", out_dir.string()},
           {"benchmark", benchmark_name()},
           {"mcqa_byte_normalize", mcqa_byte_normalize},
           {"workers", workers},
           {"sampling", {{"top_p", sampling.top_p},
                         {"temperature", sampling.temperature},
                         {"max_tokens", sampling.max_tokens}}}};
    if (relaxed) {
        j["relaxed"] = relaxed->to_json();
    }
    if (seed) {
        j["seed"] = *seed;
    }
    return j;
}

json GenerationRecord::to_json() const {
    json j{{"item_id", item_id},
           {"repetition", repetition},
           {"rephrasing", rephrasing},
           {"text", text},
           {"finish_reason", finish_reason},
           {"sampling", {{"top_p", sampling.top_p},
                         {"temperature", sampling.temperature},
                         {"max_tokens", sampling.max_tokens}}}};
    if (seed) {
        j["seed"] = *seed;
    }
    if (!error.empty()) {
        j["error"] = sanitize_utf8(error); // backend messages may quote raw bytes
    }
    return j;
}

GenerationRecord GenerationRecord::from_json(const json& j) {
    GenerationRecord r;
    r.item_id = j.at("item_id").get<std::string>();
    r.repetition = j.value("repetition", 0);
    r.rephrasing = j.value("rephrasing", 0);
    r.text = j.value("text", "");
    r.finish_reason = j.value("finish_reason", "stop");
    if (j.contains("sampling")) {
        const json& s = j["sampling"];
        r.sampling.top_p = s.value("top_p", 0.9);
        r.sampling.temperature = s.value("temperature", 1.0);
        r.sampling.max_tokens = s.value("max_tokens", 256);
    }
    if (j.contains("seed") && !j["seed"].is_null()) {
        r.seed = j["seed"].get<std::uint64_t>();
    }
    r.error = j.value("error", "");
    return r;
}

json ScoreRecord::to_json() const {
    json j{{"model", model},
           {"benchmark", benchmark},
           {"item_id", item_id},
           {"repetition", repetition},
           {"rephrasing", rephrasing},
           {"metric", metric}};
    j["value"] = value ? json(*value) : json(nullptr);
    if (!target_id.empty()) {
        j["target_id"] = target_id;
    }
    if (!error.empty()) {
        j["error"] = sanitize_utf8(error);
    }
    return j;
}

ScoreRecord ScoreRecord::from_json(const json& j) {
    ScoreRecord r;
    r.model = j.at("model").get<std::string>();
    r.benchmark = j.value("benchmark", "");
    r.item_id = j.at("item_id").get<std::string>();
    r.repetition = j.value("repetition", 0);
    r.rephrasing = j.value("rephrasing", 0);
    r.metric = j.at("metric").get<std::string>();
    if (j.contains("value") && !j["value"].is_null()) {
        r.value = j["value"].get<double>();
    }
    r.target_id = j.value("target_id", "");
    r.error = j.value("error", "");
    return r;
}

std::vector<GenerationRecord> read_generations(const std::filesystem::path& path) {
    std::vector<GenerationRecord> out;
    for (const auto& line : read_jsonl_lines(path)) {
        out.push_back(GenerationRecord::from_json(json::parse(line)));
    }
    return out;
}

void write_generations(const std::filesystem::path& path,
                       const std::vector<GenerationRecord>& records) {
    std::string content;
    for (const auto& r : records) {
        content += r.to_json().dump();
        content.push_back('\n');
    }
    write_file_atomic(path, content);
}

std::vector<ScoreRecord> read_scores(const std::filesystem::path& path) {
    std::vector<ScoreRecord> out;
    for (const auto& line : read_jsonl_lines(path)) {
        out.push_back(ScoreRecord::from_json(json::parse(line)));
    }
    return out;
}

void write_scores(const std::filesystem::path& path, const std::vector<ScoreRecord>& records) {
    std::string content;
    for (const auto& r : records) {
        content += r.to_json().dump();
        content.push_back('\n');
    }
    write_file_atomic(path, content);
}

namespace {

using GenKey = std::tuple<std::string, int, int>; // item, repetition, rephrasing

std::map<GenKey, GenerationRecord> index_generations(const std::filesystem::path& path) {
    std::map<GenKey, GenerationRecord> index;
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) {
        return index;
    }
    for (auto& r : read_generations(path)) {
        index[{r.item_id, r.repetition, r.rephrasing}] = std::move(r);
    }
    return index;
}

void freeze_config(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    write_file_atomic(cfg.config_path(), cfg.to_json().dump(2) + "\n");
}

} // namespace

RunSummary run_generation(const RunConfig& cfg, ModelBackend& backend) {
    cfg.validate();
    auto items = load_dataset(cfg.dataset_path, cfg.dataset_format);
    freeze_config(cfg);
    auto existing = index_generations(cfg.generations_path());

    struct Slot {
        const QaItem* item;
        int repetition;
    };
    std::vector<Slot> todo;
    std::vector<GenerationRecord> fresh(items.size() * static_cast<std::size_t>(cfg.repetitions));
    std::vector<bool> needs_work(fresh.size(), false);
    std::size_t slot_index = 0;
    for (const auto& item : items) {
        for (int rep = 0; rep < cfg.repetitions; ++rep, ++slot_index) {
            auto it = existing.find({item.id, rep, 0});
            if (it != existing.end() && it->second.error.empty()) {
                fresh[slot_index] = it->second;
            } else {
                needs_work[slot_index] = true;
                todo.push_back({&item, rep});
            }
        }
    }

    RunSummary summary;
    std::vector<GenerationRecord> produced(todo.size());
    parallel_for(todo.size(), cfg.workers, [&](std::size_t i) {
        const Slot& slot = todo[i];
        GenerationRecord r;
        r.item_id = slot.item->id;
        r.repetition = slot.repetition;
        r.sampling = cfg.sampling;
        r.seed = record_seed(cfg, slot.item->id, slot.repetition, 0, "gen");
        try {
            auto sampled =
                backend.sample_continuations(slot.item->question, 1, to_sampling(cfg.sampling, r.seed));
            // a generation cut mid-codepoint at max_tokens must still serialize
            r.text = sanitize_utf8(sampled.at(0).text());
            r.finish_reason = finish_reason_name(sampled.at(0).finish_reason);
        } catch (const Error& ex) {
            r.error = ex.what();
        }
        produced[i] = std::move(r);
    });

    std::size_t produced_index = 0;
    for (std::size_t i = 0; i < fresh.size(); ++i) {
        if (needs_work[i]) {
            fresh[i] = std::move(produced[produced_index++]);
        }
        if (fresh[i].error.empty()) {
            ++summary.ok;
        } else {
            ++summary.failed;
        }
    }

    // keep any rephrased variants already on disk, in canonical order
    std::vector<GenerationRecord> out;
    std::size_t base = 0;
    for (const auto& item : items) {
        for (int rep = 0; rep < cfg.repetitions; ++rep) {
            out.push_back(fresh[base++]);
            for (int k = 1;; ++k) {
                auto it = existing.find({item.id, rep, k});
                if (it == existing.end()) {
                    break;
                }
                out.push_back(it->second);
            }
        }
    }
    write_generations(cfg.generations_path(), out);
    return summary;
}

RunSummary rephrase_outputs(const RunConfig& cfg, ModelBackend& backend, int k) {
    cfg.validate();
    if (k < 1) {
        throw InvalidRequest("rephrase: k must be >= 1");
    }
    std::error_code ec;
    if (!std::filesystem::exists(cfg.generations_path(), ec)) {
        throw InvalidRequest("rephrase: no generations file at " +
                             cfg.generations_path().string() + "; run gen first");
    }
    auto records = read_generations(cfg.generations_path());
    std::map<GenKey, GenerationRecord> index;
    std::vector<GenerationRecord> originals;
    for (auto& r : records) {
        if (r.rephrasing == 0) {
            originals.push_back(r);
        }
        index[{r.item_id, r.repetition, r.rephrasing}] = std::move(r);
    }

    struct Task {
        const GenerationRecord* original;
        int variant;
    };
    std::vector<Task> todo;
    for (const auto& original : originals) {
        if (!original.error.empty()) {
            continue;
        }
        for (int j = 1; j <= k; ++j) {
            auto it = index.find({original.item_id, original.repetition, j});
            if (it == index.end() || !it->second.error.empty()) {
                todo.push_back({&original, j});
            }
        }
    }

    std::vector<GenerationRecord> produced(todo.size());
    parallel_for(todo.size(), cfg.workers, [&](std::size_t i) {
        const Task& task = todo[i];
        GenerationRecord r;
        r.item_id = task.original->item_id;
        r.repetition = task.original->repetition;
        r.rephrasing = task.variant;
        r.sampling = cfg.sampling;
        r.seed = record_seed(cfg, r.item_id, r.repetition, task.variant, "rephrase");
        try {
            // an empty output has nothing to reword; keep it as-is
            r.text = task.original->text.empty()
                         ? std::string()
                         : sanitize_utf8(backend.chat_generate(kRephraseSystemPrompt,
                                                               task.original->text,
                                                               to_sampling(cfg.sampling, r.seed)));
            r.finish_reason = "stop";
        } catch (const Error& ex) {
            r.error = ex.what();
        }
        produced[i] = std::move(r);
    });
    for (auto& r : produced) {
        index[{r.item_id, r.repetition, r.rephrasing}] = std::move(r);
    }

    RunSummary summary;
    std::vector<GenerationRecord> out;
    for (const auto& original : originals) {
        out.push_back(original);
        for (int j = 1; j <= k; ++j) {
            auto it = index.find({original.item_id, original.repetition, j});
            if (it == index.end()) {
                continue; // original itself failed, no variants were requested
            }
            out.push_back(it->second);
            if (it->second.error.empty()) {
                ++summary.ok;
            } else {
                ++summary.failed;
                std::cerr << "rephrase failed for (" << original.item_id << ", rep "
                          << original.repetition << ", variant " << j
                          << "): " << it->second.error << "\n";
            }
        }
    }
    write_generations(cfg.generations_path(), out);
    if (summary.failed > 0) {
        std::cerr << "rephrase: partial output, " << summary.failed << " variants failed\n";
    }
    return summary;
}

namespace {

struct ScoreKey {
    std::string item_id;
    int repetition;
    int rephrasing;
    std::string metric;
    std::string target_id;

    auto tied() const { return std::tie(item_id, repetition, rephrasing, metric, target_id); }
    bool operator<(const ScoreKey& o) const { return tied() < o.tied(); }
};

} // namespace

RunSummary run_metrics(const RunConfig& cfg, ModelBackend& backend) {
    cfg.validate();
    if (cfg.metrics.empty()) {
        throw InvalidRequest("score: no metrics requested");
    }
    auto items = load_dataset(cfg.dataset_path, cfg.dataset_format);
    freeze_config(cfg);

    bool wants_ngram = false;
    for (const auto& m : kGenerationMetricOrder) {
        wants_ngram = wants_ngram || cfg.metrics.count(m) > 0;
    }
    bool wants_ppl = false;
    for (const auto& m : kPerplexityMetricOrder) {
        wants_ppl = wants_ppl || cfg.metrics.count(m) > 0;
    }
    bool wants_accuracy = cfg.metrics.count("accuracy") > 0;
    bool wants_relaxed = cfg.relaxed.has_value() &&
                         std::any_of(kRelaxedMetricOrder.begin(), kRelaxedMetricOrder.end(),
                                     [&](const std::string& m) { return cfg.metrics.count(m) > 0; });

    std::error_code ec;
    bool have_generations = std::filesystem::exists(cfg.generations_path(), ec);
    bool any_open_ended = std::any_of(items.begin(), items.end(),
                                      [](const QaItem& item) { return !item.is_mcqa(); });
    if (wants_ngram && any_open_ended && !have_generations) {
        throw InvalidRequest("score: n-gram metrics need generations.jsonl; run gen first");
    }
    std::map<std::string, std::vector<GenerationRecord>> gens_by_item;
    if (have_generations) {
        for (auto& r : read_generations(cfg.generations_path())) {
            gens_by_item[r.item_id].push_back(std::move(r));
        }
        for (auto& [id, rs] : gens_by_item) {
            std::sort(rs.begin(), rs.end(), [](const GenerationRecord& a, const GenerationRecord& b) {
                return std::tie(a.repetition, a.rephrasing) < std::tie(b.repetition, b.rephrasing);
            });
        }
    }

    // existing rows survive a resumed run; failed ones are recomputed
    std::map<ScoreKey, ScoreRecord> existing;
    if (std::filesystem::exists(cfg.scores_path(), ec)) {
        for (auto& r : read_scores(cfg.scores_path())) {
            existing[{r.item_id, r.repetition, r.rephrasing, r.metric, r.target_id}] = std::move(r);
        }
    }
    std::map<std::string, json> existing_relaxed; // "<item>|<target>" -> row
    if (std::filesystem::exists(cfg.relaxed_path(), ec)) {
        for (const auto& line : read_jsonl_lines(cfg.relaxed_path())) {
            json row = json::parse(line);
            existing_relaxed[row.at("question_id").get<std::string>() + "|" +
                             row.value("target_id", "")] = row;
        }
    }

    const std::string model = backend.model_name().empty() ? cfg.backend.model_name
                                                           : backend.model_name();
    const std::string bench = cfg.benchmark_name();

    struct ItemOutput {
        std::vector<ScoreRecord> scores;
        std::vector<json> relaxed_rows;
    };
    std::vector<ItemOutput> outputs(items.size());

    parallel_for(items.size(), cfg.workers, [&](std::size_t idx) {
        const QaItem& item = items[idx];
        ItemOutput& out = outputs[idx];
        auto base_record = [&](int rep, int reph, const std::string& metric,
                               const std::string& target_id) {
            ScoreRecord r;
            r.model = model;
            r.benchmark = bench;
            r.item_id = item.id;
            r.repetition = rep;
            r.rephrasing = reph;
            r.metric = metric;
            r.target_id = target_id;
            return r;
        };
        auto emit = [&](ScoreRecord r) {
            ScoreKey key{r.item_id, r.repetition, r.rephrasing, r.metric, r.target_id};
            auto it = existing.find(key);
            if (it != existing.end() && it->second.error.empty() && it->second.value) {
                out.scores.push_back(it->second);
            } else {
                out.scores.push_back(std::move(r));
            }
        };

        std::vector<GenerationRecord> records;
        if (auto it = gens_by_item.find(item.id); it != gens_by_item.end()) {
            records = it->second;
        } else {
            GenerationRecord virtual_record;
            virtual_record.item_id = item.id;
            records.push_back(std::move(virtual_record)); // reference-only scoring
        }

        for (const auto& record : records) {
            if (wants_ngram && !item.is_mcqa()) {
                auto refs = item.references();
                for (const auto& name : kGenerationMetricOrder) {
                    if (!cfg.metrics.count(name)) {
                        continue;
                    }
                    ScoreRecord r = base_record(record.repetition, record.rephrasing, name, "");
                    if (!record.error.empty()) {
                        r.error = "generation failed: " + record.error;
                    } else {
                        r.value = ngram_metric(name, record.text, refs);
                    }
                    emit(std::move(r));
                }
            }
            if (wants_ppl && !item.is_mcqa()) {
                for (const auto& [target_id, target] : item.targets()) {
                    std::optional<PerplexityScores> scores;
                    std::string error;
                    try {
                        auto tokens = backend.score_continuation(item.question, target);
                        scores = perplexity_family(tokens, target);
                    } catch (const Error& ex) {
                        error = ex.what();
                    }
                    for (const auto& name : kPerplexityMetricOrder) {
                        if (!cfg.metrics.count(name)) {
                            continue;
                        }
                        ScoreRecord r =
                            base_record(record.repetition, record.rephrasing, name, target_id);
                        if (scores) {
                            if (name == "word_perplexity") {
                                r.value = scores->word_perplexity;
                            } else if (name == "byte_perplexity") {
                                r.value = scores->byte_perplexity;
                            } else {
                                r.value = scores->bits_per_byte;
                            }
                        } else {
                            r.error = error;
                        }
                        emit(std::move(r));
                    }
                }
            }
            if (wants_accuracy && item.is_mcqa()) {
                const auto& mcqa = std::get<Mcqa>(item.payload);
                ScoreRecord r = base_record(record.repetition, record.rephrasing, "accuracy", "");
                try {
                    auto outcome = score_mcqa_item(backend, item.question, mcqa.options,
                                                   mcqa.gold_index, cfg.mcqa_byte_normalize);
                    r.value = outcome.correct ? 1.0 : 0.0;
                } catch (const Error& ex) {
                    r.error = ex.what();
                }
                emit(std::move(r));
            }
        }

        if (wants_relaxed && !item.is_mcqa()) {
            RelaxedParams params = *cfg.relaxed;
            params.seed = record_seed(cfg, item.id, 0, 0, "relaxed");
            auto targets = item.targets();
            std::vector<std::string> target_texts;
            for (const auto& [tid, text] : targets) {
                target_texts.push_back(text);
            }
            try {
                auto results = relaxed_for_targets(backend, item.question, target_texts, params);
                for (std::size_t t = 0; t < targets.size(); ++t) {
                    const auto& [target_id, text] = targets[t];
                    const RelaxedResult& res = results[t];
                    for (const auto& name : kRelaxedMetricOrder) {
                        if (!cfg.metrics.count(name)) {
                            continue;
                        }
                        ScoreRecord r = base_record(0, 0, name, target_id);
                        if (name == "relaxed_cross_entropy") {
                            r.value = res.relaxed_cross_entropy;
                        } else if (name == "relaxed_perplexity") {
                            r.value = res.relaxed_perplexity;
                        } else {
                            r.value = res.relaxed_logprob_sum;
                        }
                        emit(std::move(r));
                    }
                    out.relaxed_rows.push_back(res.to_json(item.id, target_id, params));
                }
            } catch (const Error& ex) {
                for (const auto& [target_id, text] : targets) {
                    for (const auto& name : kRelaxedMetricOrder) {
                        if (!cfg.metrics.count(name)) {
                            continue;
                        }
                        ScoreRecord r = base_record(0, 0, name, target_id);
                        r.error = ex.what();
                        emit(std::move(r));
                    }
                }
            }
        }
    });

    RunSummary summary;
    std::vector<ScoreRecord> all_scores;
    std::vector<json> all_relaxed;
    for (auto& out : outputs) {
        for (auto& r : out.scores) {
            if (r.error.empty()) {
                ++summary.ok;
            } else {
                ++summary.failed;
            }
            all_scores.push_back(std::move(r));
        }
        for (auto& row : out.relaxed_rows) {
            all_relaxed.push_back(std::move(row));
        }
    }
    write_scores(cfg.scores_path(), all_scores);
    if (wants_relaxed) {
        std::string content;
        for (const auto& row : all_relaxed) {
            content += row.dump();
            content.push_back('\n');
        }
        write_file_atomic(cfg.relaxed_path(), content);
    }
    return summary;
}

AnalysisMode analysis_mode_from(const std::string& name) {
    if (name == "correlate_metrics") {
        return AnalysisMode::correlate_metrics;
    }
    if (name == "correlate_benchmarks") {
        return AnalysisMode::correlate_benchmarks;
    }
    if (name == "resilience") {
        return AnalysisMode::resilience;
    }
    if (name == "self_consistency") {
        return AnalysisMode::self_consistency;
    }
    if (name == "rank") {
        return AnalysisMode::rank;
    }
    throw InvalidRequest("unknown analysis mode: " + name);
}

ExternalScores load_external_scores(const std::filesystem::path& csv_path,
                                    const std::vector<ScoreRecord>& native) {
    ExternalScores out;
    auto rows = parse_csv(read_file(csv_path));
    if (rows.empty()) {
        throw ParseError(csv_path.string() + ": empty CSV");
    }
    const auto& header = rows[0];
    if (header.empty() || header[0] != "model") {
        throw ParseError(csv_path.string() + ": first column must be 'model'");
    }
    std::size_t col = 1;
    bool has_benchmark = col < header.size() && header[col] == "benchmark";
    if (has_benchmark) {
        ++col;
    }
    bool has_item = col < header.size() && header[col] == "item_id";
    if (has_item) {
        ++col;
    }
    const std::size_t first_metric = col;
    if (first_metric >= header.size()) {
        throw ParseError(csv_path.string() + ": no metric columns after the key columns");
    }
    std::set<std::pair<std::string, std::string>> native_keys;
    for (const auto& r : native) {
        native_keys.insert({r.model, r.benchmark});
    }
    std::set<std::string> unmatched;
    for (std::size_t ri = 1; ri < rows.size(); ++ri) {
        const auto& row = rows[ri];
        if (row.empty() || (row.size() == 1 && row[0].empty())) {
            continue;
        }
        std::string model = row[0];
        std::string benchmark = has_benchmark && row.size() > 1 ? row[1] : "";
        std::string item_id = has_item && row.size() > (has_benchmark ? 2u : 1u)
                                  ? row[has_benchmark ? 2 : 1]
                                  : "";
        if (!native_keys.empty() && !native_keys.count({model, benchmark})) {
            unmatched.insert(model + "|" + benchmark);
        }
        for (std::size_t c = first_metric; c < header.size() && c < row.size(); ++c) {
            const std::string& cell = row[c];
            if (cell.empty() || cell == "nan") {
                continue;
            }
            ScoreRecord rec;
            rec.model = model;
            rec.benchmark = benchmark;
            rec.item_id = item_id.empty() ? "external" : item_id;
            rec.metric = header[c];
            try {
                rec.value = std::stod(cell);
            } catch (const std::exception&) {
                throw ParseError(csv_path.string() + " row " + std::to_string(ri + 1) +
                                 ": bad number '" + cell + "'");
            }
            out.records.push_back(std::move(rec));
        }
    }
    out.unmatched_keys.assign(unmatched.begin(), unmatched.end());
    return out;
}

namespace {

std::vector<ScoreRecord> load_all_scores(const AnalyzeConfig& cfg) {
    std::vector<ScoreRecord> records;
    for (const auto& path : cfg.score_files) {
        for (auto& r : read_scores(path)) {
            records.push_back(std::move(r));
        }
    }
    for (const auto& path : cfg.external_score_files) {
        auto external = load_external_scores(path, records);
        for (const auto& key : external.unmatched_keys) {
            std::cerr << "external scores " << path << ": key (" << key
                      << ") has no native counterpart\n";
        }
        for (auto& r : external.records) {
            records.push_back(std::move(r));
        }
    }
    if (!cfg.benchmark.empty()) {
        std::erase_if(records, [&](const ScoreRecord& r) { return r.benchmark != cfg.benchmark; });
    }
    if (records.empty()) {
        throw InsufficientData("no score records to analyze");
    }
    return records;
}

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

// mean over every value grouped by (row, col)
ScoreMatrix pivot_mean(const std::vector<ScoreRecord>& records,
                       const std::function<std::string(const ScoreRecord&)>& row_of,
                       const std::function<std::string(const ScoreRecord&)>& col_of) {
    std::vector<std::string> rows, cols;
    std::map<std::pair<std::string, std::string>, std::pair<double, std::size_t>> acc;
    for (const auto& r : records) {
        if (!r.value) {
            continue;
        }
        auto key = std::make_pair(row_of(r), col_of(r));
        rows.push_back(key.first);
        cols.push_back(key.second);
        auto& [sum, count] = acc[key];
        sum += *r.value;
        ++count;
    }
    ScoreMatrix m = ScoreMatrix::create(sorted_unique(std::move(rows)),
                                        sorted_unique(std::move(cols)));
    for (std::size_t r = 0; r < m.n_rows(); ++r) {
        for (std::size_t c = 0; c < m.n_cols(); ++c) {
            auto it = acc.find({m.row_labels[r], m.col_labels[c]});
            if (it != acc.end()) {
                m.values[r][c] = it->second.first / static_cast<double>(it->second.second);
            }
        }
    }
    return m;
}

void write_matrix(const std::filesystem::path& dir, const std::string& name,
                  const ScoreMatrix& m, const std::vector<std::string>& warnings = {}) {
    write_file_atomic(dir / (name + ".csv"), m.to_csv());
    json j = m.to_json();
    if (!warnings.empty()) {
        j["warnings"] = warnings;
    }
    write_file_atomic(dir / (name + ".json"), j.dump(2) + "\n");
}

std::string prompt_key(const ScoreRecord& r, bool with_repetition) {
    std::string key = r.model + "|" + r.item_id;
    if (!r.target_id.empty()) {
        key += ":" + r.target_id;
    }
    if (with_repetition) {
        key += "|rep" + std::to_string(r.repetition);
    }
    return key;
}

RankDirection direction_for(const std::string& metric, const std::string& requested) {
    if (requested == "higher_better") {
        return RankDirection::higher_better;
    }
    if (requested == "lower_better") {
        return RankDirection::lower_better;
    }
    bool lower = metric.find("perplexity") != std::string::npos ||
                 metric.find("bits_per_byte") != std::string::npos ||
                 metric.find("cross_entropy") != std::string::npos;
    return lower ? RankDirection::lower_better : RankDirection::higher_better;
}

} // namespace

void analyze(AnalysisMode mode, const AnalyzeConfig& cfg) {
    auto records = load_all_scores(cfg);
    auto out_dir = cfg.out_dir / "analysis";
    std::filesystem::create_directories(out_dir);

    std::vector<std::string> benchmarks;
    std::vector<std::string> models;
    for (const auto& r : records) {
        benchmarks.push_back(r.benchmark);
        models.push_back(r.model);
    }
    benchmarks = sorted_unique(std::move(benchmarks));
    models = sorted_unique(std::move(models));

    switch (mode) {
        case AnalysisMode::correlate_metrics: {
            if (models.size() < 2) {
                throw InsufficientData("correlate_metrics needs >= 2 models");
            }
            for (const auto& bench : benchmarks) {
                std::vector<ScoreRecord> subset;
                std::copy_if(records.begin(), records.end(), std::back_inserter(subset),
                             [&](const ScoreRecord& r) { return r.benchmark == bench; });
                ScoreMatrix m = pivot_mean(
                    subset, [](const ScoreRecord& r) { return r.model; },
                    [](const ScoreRecord& r) { return r.metric; });
                if (m.n_rows() < 2) {
                    continue;
                }
                std::vector<std::string> warnings;
                if (m.n_rows() == 2) {
                    warnings.push_back("only 2 models: correlations are degenerate (+-1)");
                    std::cerr << "correlate_metrics(" << bench << "): " << warnings.back() << "\n";
                }
                write_matrix(out_dir, "metrics_correlation_" + sanitize_filename(bench),
                             correlation_matrix(m, CorrelationAxis::columns), warnings);
            }
            break;
        }
        case AnalysisMode::correlate_benchmarks: {
            if (models.size() < 2) {
                throw InsufficientData("correlate_benchmarks needs >= 2 models");
            }
            std::vector<std::string> metric_names;
            for (const auto& r : records) {
                metric_names.push_back(r.metric);
            }
            metric_names = sorted_unique(std::move(metric_names));
            if (!cfg.metric.empty()) {
                metric_names = {cfg.metric};
            }
            for (const auto& metric : metric_names) {
                std::vector<ScoreRecord> subset;
                std::copy_if(records.begin(), records.end(), std::back_inserter(subset),
                             [&](const ScoreRecord& r) { return r.metric == metric; });
                ScoreMatrix m = pivot_mean(
                    subset, [](const ScoreRecord& r) { return r.model; },
                    [](const ScoreRecord& r) { return r.benchmark; });
                if (m.n_cols() < 2 || m.n_rows() < 2) {
                    continue;
                }
                std::vector<std::string> warnings;
                if (m.n_rows() == 2) {
                    warnings.push_back("only 2 models: correlations are degenerate (+-1)");
                }
                write_matrix(out_dir, "benchmarks_correlation_" + sanitize_filename(metric),
                             correlation_matrix(m, CorrelationAxis::columns), warnings);
            }
            break;
        }
        case AnalysisMode::resilience: {
            // prompt -> scores across rephrasing variants, per (benchmark, metric)
            json detail = json::object();
            std::string csv = "benchmark,metric,mean_scaled_variance,n_prompts\n";
            bool any = false;
            for (const auto& bench : benchmarks) {
                std::map<std::string, std::map<std::string, std::map<int, double>>> grouped;
                std::map<std::string, std::pair<double, double>> ranges;
                for (const auto& r : records) {
                    if (r.benchmark != bench || !r.value) {
                        continue;
                    }
                    grouped[r.metric][prompt_key(r, true)][r.rephrasing] = *r.value;
                    auto [it, fresh] = ranges.try_emplace(r.metric, *r.value, *r.value);
                    if (!fresh) {
                        it->second.first = std::min(it->second.first, *r.value);
                        it->second.second = std::max(it->second.second, *r.value);
                    }
                }
                for (const auto& [metric, prompts] : grouped) {
                    std::map<std::string, std::vector<double>> variant_scores;
                    for (const auto& [prompt, by_variant] : prompts) {
                        if (by_variant.size() < 2) {
                            continue;
                        }
                        std::vector<double> vs;
                        for (const auto& [variant, v] : by_variant) {
                            vs.push_back(v);
                        }
                        variant_scores[prompt] = std::move(vs);
                    }
                    if (variant_scores.empty()) {
                        continue;
                    }
                    any = true;
                    double range = ranges[metric].second - ranges[metric].first;
                    auto report = resilience(variant_scores, range);
                    csv += bench + "," + metric + "," + format_double(report.mean) + "," +
                           std::to_string(report.scaled_variances.size()) + "\n";
                    json per_prompt = json::object();
                    for (const auto& [prompt, v] : report.scaled_variances) {
                        per_prompt[prompt] = v;
                    }
                    detail[bench][metric] = {{"mean_scaled_variance", report.mean},
                                             {"column_range", range},
                                             {"scaled_variances", std::move(per_prompt)}};
                }
            }
            if (!any) {
                throw InsufficientData("resilience needs >= 2 rephrasing variants per prompt");
            }
            write_file_atomic(out_dir / "resilience.csv", csv);
            write_file_atomic(out_dir / "resilience.json", detail.dump(2) + "\n");
            break;
        }
        case AnalysisMode::self_consistency: {
            json detail = json::object();
            std::string csv = "benchmark,metric,mean_variance,mean_cv,n_prompts\n";
            bool any = false;
            for (const auto& bench : benchmarks) {
                std::map<std::string, std::map<std::string, std::vector<double>>> grouped;
                for (const auto& r : records) {
                    if (r.benchmark != bench || !r.value || r.rephrasing != 0) {
                        continue;
                    }
                    grouped[r.metric][prompt_key(r, false)].push_back(*r.value);
                }
                for (auto& [metric, prompts] : grouped) {
                    std::map<std::string, std::vector<double>> repeat_scores;
                    for (auto& [prompt, vs] : prompts) {
                        if (vs.size() >= 2) {
                            repeat_scores[prompt] = std::move(vs);
                        }
                    }
                    if (repeat_scores.empty()) {
                        continue;
                    }
                    any = true;
                    auto report = self_consistency(repeat_scores);
                    double cv_sum = 0.0;
                    for (const auto& [prompt, cv] : report.cv) {
                        cv_sum += cv;
                    }
                    double mean_cv = report.cv.empty()
                                         ? std::numeric_limits<double>::quiet_NaN()
                                         : cv_sum / static_cast<double>(report.cv.size());
                    csv += bench + "," + metric + "," + format_double(report.mean_variance) + "," +
                           format_double(mean_cv) + "," +
                           std::to_string(report.per_prompt_variance.size()) + "\n";
                    json per_prompt = json::object();
                    for (const auto& [prompt, v] : report.per_prompt_variance) {
                        per_prompt[prompt] = v;
                    }
                    json cvs = json::object();
                    for (const auto& [prompt, v] : report.cv) {
                        cvs[prompt] = v;
                    }
                    detail[bench][metric] = {{"mean_variance", report.mean_variance},
                                             {"variances", std::move(per_prompt)},
                                             {"cv", std::move(cvs)}};
                }
            }
            if (!any) {
                throw InsufficientData("self_consistency needs >= 2 repetitions per prompt");
            }
            write_file_atomic(out_dir / "self_consistency.csv", csv);
            write_file_atomic(out_dir / "self_consistency.json", detail.dump(2) + "\n");
            break;
        }
        case AnalysisMode::rank: {
            for (const auto& bench : benchmarks) {
                std::vector<ScoreRecord> subset;
                std::copy_if(records.begin(), records.end(), std::back_inserter(subset),
                             [&](const ScoreRecord& r) { return r.benchmark == bench; });
                ScoreMatrix m = pivot_mean(
                    subset, [](const ScoreRecord& r) { return r.model; },
                    [](const ScoreRecord& r) { return r.metric; });
                std::vector<std::string> metric_names = m.col_labels;
                if (!cfg.metric.empty()) {
                    metric_names = {cfg.metric};
                }
                ScoreMatrix ranks = ScoreMatrix::create(m.row_labels, metric_names);
                for (std::size_t c = 0; c < metric_names.size(); ++c) {
                    auto ranked = rank_models(m, metric_names[c],
                                              direction_for(metric_names[c], cfg.rank_direction));
                    for (const auto& [model, rank] : ranked) {
                        auto ri = ranks.row_index(model);
                        if (ri) {
                            ranks.values[*ri][c] = static_cast<double>(rank);
                        }
                    }
                }
                write_matrix(out_dir, "ranking_" + sanitize_filename(bench), ranks);
            }
            break;
        }
    }
}

} // namespace releval
