#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace releval {

struct FreeTarget {
    std::string target;
};

struct FactualityPair {
    std::string must_have;
    std::string nice_to_have;
};

struct Mcqa {
    std::vector<std::string> options; // 2..26
    int gold_index = 0;
};

struct QaItem {
    std::string id;
    std::string question;
    std::string category;
    std::variant<FreeTarget, FactualityPair, Mcqa> payload;

    bool is_mcqa() const { return std::holds_alternative<Mcqa>(payload); }

    // Reference texts for generation-based metrics.
    std::vector<std::string> references() const;

    // (target_id, text) pairs for reference-scored metrics: "target" for a
    // free target, "must_have"/"nice_to_have" for a factuality pair.
    std::vector<std::pair<std::string, std::string>> targets() const;
};

enum class DatasetFormat { auto_detect, jsonl, csv };

DatasetFormat dataset_format_from(const std::string& name);
std::string dataset_format_name(DatasetFormat format);

// Loads and validates a dataset. JSONL rows and CSV columns use the same
// field names: question plus one of {target|answer}, {must_have,
// nice_to_have}, or {options[]/op1..opN, gold_index/cop}. cop is the 1-based
// correct option number. Missing ids default to item-<line>.
std::vector<QaItem> load_dataset(const std::filesystem::path& path,
                                 DatasetFormat format = DatasetFormat::auto_detect);

} // namespace releval
