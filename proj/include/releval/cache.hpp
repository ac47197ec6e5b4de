#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace releval {

std::string sha256_hex(std::string_view data);

// Append-only key-value store: one JSON file per key inside one directory.
// put() writes through a temp file and renames, so concurrent writers of the
// same key end with one complete value (last writer wins).
class KvCache {
public:
    explicit KvCache(std::filesystem::path dir);

    std::optional<nlohmann::json> get(const std::string& key) const;
    void put(const std::string& key, const nlohmann::json& value);

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path record_path(const std::string& key) const;
    std::filesystem::path dir_;
};

} // namespace releval
