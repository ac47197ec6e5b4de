#include "releval/dataset.hpp"

#include "releval/errors.hpp"
#include "releval/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace releval {

using nlohmann::json;

std::vector<std::string> QaItem::references() const {
    if (const auto* free = std::get_if<FreeTarget>(&payload)) {
        return {free->target};
    }
    if (const auto* pair = std::get_if<FactualityPair>(&payload)) {
        return {pair->must_have, pair->nice_to_have};
    }
    return {};
}

std::vector<std::pair<std::string, std::string>> QaItem::targets() const {
    if (const auto* free = std::get_if<FreeTarget>(&payload)) {
        return {{"target", free->target}};
    }
    if (const auto* pair = std::get_if<FactualityPair>(&payload)) {
        return {{"must_have", pair->must_have}, {"nice_to_have", pair->nice_to_have}};
    }
    return {};
}

DatasetFormat dataset_format_from(const std::string& name) {
    if (name == "jsonl") {
        return DatasetFormat::jsonl;
    }
    if (name == "csv") {
        return DatasetFormat::csv;
    }
    if (name.empty() || name == "auto") {
        return DatasetFormat::auto_detect;
    }
    throw InvalidRequest("unknown dataset format: " + name);
}

std::string dataset_format_name(DatasetFormat format) {
    switch (format) {
        case DatasetFormat::jsonl: return "jsonl";
        case DatasetFormat::csv: return "csv";
        case DatasetFormat::auto_detect: return "auto";
    }
    return "auto";
}

namespace {

std::string field_as_string(const json& v) {
    if (v.is_string()) {
        return v.get<std::string>();
    }
    if (v.is_number_integer()) {
        return std::to_string(v.get<long long>());
    }
    if (v.is_number()) {
        return format_double(v.get<double>());
    }
    throw ParseError("field is neither string nor number");
}

// Builds one item from a flat key->json map; `issues` collects schema
// problems instead of throwing so every offending id can be reported.
std::optional<QaItem> item_from_fields(const std::map<std::string, json>& fields,
                                       std::size_t line_no,
                                       std::vector<std::string>& issues) {
    QaItem item;
    auto get = [&](const char* key) -> const json* {
        auto it = fields.find(key);
        return it == fields.end() || it->second.is_null() ? nullptr : &it->second;
    };
    if (const json* id = get("id")) {
        item.id = field_as_string(*id);
    } else {
        item.id = "item-" + std::to_string(line_no);
    }
    if (const json* q = get("question")) {
        item.question = q->get<std::string>();
    }
    if (item.question.empty()) {
        issues.push_back(item.id + ": empty question");
        return std::nullopt;
    }
    if (const json* cat = get("category")) {
        item.category = cat->get<std::string>();
    }

    std::vector<std::string> options;
    if (const json* opts = get("options")) {
        for (const auto& o : *opts) {
            options.push_back(o.get<std::string>());
        }
    } else {
        for (int i = 1; i <= 26; ++i) {
            const json* op = get(("op" + std::to_string(i)).c_str());
            if (!op) {
                break;
            }
            options.push_back(field_as_string(*op));
        }
    }
    if (!options.empty()) {
        if (options.size() < 2 || options.size() > 26) {
            issues.push_back(item.id + ": needs 2..26 options, got " +
                             std::to_string(options.size()));
            return std::nullopt;
        }
        int gold = -1;
        if (const json* gi = get("gold_index")) {
            gold = gi->is_number() ? gi->get<int>() : std::stoi(gi->get<std::string>());
        } else if (const json* cop = get("cop")) {
            // cop is 1-based
            gold = (cop->is_number() ? cop->get<int>() : std::stoi(cop->get<std::string>())) - 1;
        } else {
            issues.push_back(item.id + ": missing gold index (gold_index or cop)");
            return std::nullopt;
        }
        if (gold < 0 || gold >= static_cast<int>(options.size())) {
            issues.push_back(item.id + ": gold index out of range");
            return std::nullopt;
        }
        item.payload = Mcqa{std::move(options), gold};
        return item;
    }

    const json* must = get("must_have");
    const json* nice = get("nice_to_have");
    if (must || nice) {
        if (!must || !nice) {
            issues.push_back(item.id + ": factuality pair needs both must_have and nice_to_have");
            return std::nullopt;
        }
        item.payload = FactualityPair{must->get<std::string>(), nice->get<std::string>()};
        return item;
    }

    const json* target = get("target");
    if (!target) {
        target = get("answer");
    }
    if (target) {
        std::string text = target->get<std::string>();
        if (text.empty()) {
            issues.push_back(item.id + ": empty target");
            return std::nullopt;
        }
        item.payload = FreeTarget{std::move(text)};
        return item;
    }

    issues.push_back(item.id + ": no reference payload (target/answer, must_have+nice_to_have, "
                               "or options with a gold index)");
    return std::nullopt;
}

std::vector<QaItem> load_jsonl(const std::string& content) {
    std::vector<QaItem> items;
    std::vector<std::string> issues;
    std::istringstream in(content);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        json row;
        try {
            row = json::parse(line);
        } catch (const json::exception& ex) {
            throw ParseError("line " + std::to_string(line_no) + ": " + ex.what());
        }
        if (!row.is_object()) {
            throw ParseError("line " + std::to_string(line_no) + ": row is not an object");
        }
        std::map<std::string, json> fields;
        for (const auto& [key, value] : row.items()) {
            fields[key] = value;
        }
        try {
            if (auto item = item_from_fields(fields, line_no, issues)) {
                items.push_back(std::move(*item));
            }
        } catch (const json::exception& ex) {
            issues.push_back("line " + std::to_string(line_no) + ": " + ex.what());
        }
    }
    if (!issues.empty()) {
        std::string msg = "invalid items:";
        for (const auto& i : issues) {
            msg += "\n  " + i;
        }
        throw ValidationError(msg);
    }
    return items;
}

std::vector<QaItem> load_csv(const std::string& content) {
    auto rows = parse_csv(content);
    if (rows.empty()) {
        throw ParseError("empty CSV file");
    }
    const auto& header = rows[0];
    std::vector<QaItem> items;
    std::vector<std::string> issues;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() == 1 && row[0].empty()) {
            continue;
        }
        std::map<std::string, json> fields;
        for (std::size_t c = 0; c < header.size() && c < row.size(); ++c) {
            if (!row[c].empty()) {
                fields[header[c]] = row[c];
            }
        }
        if (auto item = item_from_fields(fields, r + 1, issues)) {
            items.push_back(std::move(*item));
        }
    }
    if (!issues.empty()) {
        std::string msg = "invalid items:";
        for (const auto& i : issues) {
            msg += "\n  " + i;
        }
        throw ValidationError(msg);
    }
    return items;
}

} // namespace

std::vector<QaItem> load_dataset(const std::filesystem::path& path, DatasetFormat format) {
    if (format == DatasetFormat::auto_detect) {
        format = path.extension() == ".csv" ? DatasetFormat::csv : DatasetFormat::jsonl;
    }
    std::string content = read_file(path);
    auto items = format == DatasetFormat::csv ? load_csv(content) : load_jsonl(content);
    std::set<std::string> ids;
    std::vector<std::string> dups;
    for (const auto& item : items) {
        if (!ids.insert(item.id).second) {
            dups.push_back(item.id);
        }
    }
    if (!dups.empty()) {
        std::string msg = "duplicate ids:";
        for (const auto& d : dups) {
            msg += " " + d;
        }
        throw ValidationError(msg);
    }
    return items;
}

} // namespace releval
