#include "releval/cache.hpp"

#include "releval/errors.hpp"
#include "releval/util.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>

namespace releval {

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

KvCache::KvCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path KvCache::record_path(const std::string& key) const {
    return dir_ / (key + ".json");
}

std::optional<nlohmann::json> KvCache::get(const std::string& key) const {
    auto path = record_path(key);
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) {
        return std::nullopt;
    }
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const std::exception&) {
        // torn or corrupt record: treat as a miss, the writer will replace it
        return std::nullopt;
    }
}

void KvCache::put(const std::string& key, const nlohmann::json& value) {
    write_file_atomic(record_path(key), value.dump());
}

} // namespace releval
