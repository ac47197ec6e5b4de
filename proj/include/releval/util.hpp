#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace releval {

// Shortest decimal representation that round-trips the double. NaN prints
// as "nan", infinities as "inf"/"-inf".
std::string format_double(double v);

// Fixed-point with `precision` digits, e.g. format_fixed(0.75, 3) == "0.750".
std::string format_fixed(double v, int precision);

// log(sum_i exp(v_i)), stable against overflow. Empty input yields -inf.
double log_sum_exp(std::span<const double> values);

// Splits `text` into UTF-8 code points. Invalid lead/continuation bytes are
// passed through as single-byte units.
std::vector<std::string> utf8_codepoints(std::string_view text);

bool is_valid_utf8(std::string_view text);

// Replaces invalid UTF-8 sequences with U+FFFD so the result is always
// serializable.
std::string sanitize_utf8(std::string_view text);

// Whitespace-separated word count on the raw string.
std::size_t count_words(std::string_view text);

// FNV-1a, stable across platforms and runs.
std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ull);

// splitmix64 finalizer; used to derive independent seeds.
std::uint64_t mix64(std::uint64_t x);

std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// RFC-4180-ish CSV: quoted fields, doubled quotes, newlines inside quotes.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

// Runs fn(0..n-1) on up to `workers` threads. The first exception thrown by
// any worker is rethrown on the caller after all threads join.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

class Semaphore {
public:
    explicit Semaphore(int count) : count_(count) {}
    void acquire();
    void release();

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    int count_;
};

// RAII guard for Semaphore.
class SlotGuard {
public:
    explicit SlotGuard(Semaphore& sem) : sem_(sem) { sem_.acquire(); }
    ~SlotGuard() { sem_.release(); }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;

private:
    Semaphore& sem_;
};

} // namespace releval
