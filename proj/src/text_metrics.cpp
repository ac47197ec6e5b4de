#include "releval/text_metrics.hpp"

#include "releval/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

namespace releval {

namespace {

double f1_of(double p, double r) {
    return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

// n-gram key: tokens joined with a separator that cannot occur inside them.
std::map<std::string, int> ngram_counts(std::span<const std::string> tokens, int n) {
    std::map<std::string, int> counts;
    if (static_cast<int>(tokens.size()) < n) {
        return counts;
    }
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key;
        for (int k = 0; k < n; ++k) {
            key += tokens[i + k];
            key.push_back('\x1f');
        }
        ++counts[key];
    }
    return counts;
}

} // namespace

std::vector<std::string> normalize_tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    };
    for (unsigned char c : text) {
        bool word_char = std::isalnum(c) || c >= 0x80;
        if (word_char) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

NgramScore rouge_n(std::span<const std::string> candidate,
                   std::span<const std::string> reference, int n) {
    if (n < 1) {
        throw InvalidRequest("rouge_n: n must be >= 1");
    }
    auto cand = ngram_counts(candidate, n);
    auto ref = ngram_counts(reference, n);
    std::size_t cand_total = candidate.size() >= static_cast<std::size_t>(n)
                                 ? candidate.size() - n + 1
                                 : 0;
    std::size_t ref_total = reference.size() >= static_cast<std::size_t>(n)
                                ? reference.size() - n + 1
                                : 0;
    if (cand_total == 0 || ref_total == 0) {
        return {};
    }
    long overlap = 0;
    for (const auto& [key, count] : cand) {
        auto it = ref.find(key);
        if (it != ref.end()) {
            overlap += std::min(count, it->second);
        }
    }
    NgramScore s;
    s.precision = static_cast<double>(overlap) / static_cast<double>(cand_total);
    s.recall = static_cast<double>(overlap) / static_cast<double>(ref_total);
    s.f1 = f1_of(s.precision, s.recall);
    return s;
}

NgramScore rouge_l(std::span<const std::string> candidate,
                   std::span<const std::string> reference) {
    if (candidate.empty() || reference.empty()) {
        return {};
    }
    std::size_t m = candidate.size();
    std::size_t n = reference.size();
    std::vector<std::size_t> prev(n + 1, 0), row(n + 1, 0);
    for (std::size_t i = 1; i <= m; ++i) {
        for (std::size_t j = 1; j <= n; ++j) {
            if (candidate[i - 1] == reference[j - 1]) {
                row[j] = prev[j - 1] + 1;
            } else {
                row[j] = std::max(prev[j], row[j - 1]);
            }
        }
        std::swap(prev, row);
    }
    double lcs = static_cast<double>(prev[n]);
    NgramScore s;
    s.precision = lcs / static_cast<double>(m);
    s.recall = lcs / static_cast<double>(n);
    s.f1 = f1_of(s.precision, s.recall);
    return s;
}

double bleu(std::span<const std::string> candidate,
            std::span<const std::string> reference) {
    if (candidate.empty() || reference.empty()) {
        return 0.0;
    }
    // Orders where the candidate has no n-grams are dropped and the uniform
    // weights renormalized over the rest, so bleu(a, a) is 1 for short a.
    double log_sum = 0.0;
    int orders = 0;
    for (int n = 1; n <= 4; ++n) {
        if (static_cast<int>(candidate.size()) < n) {
            break;
        }
        std::size_t total = candidate.size() - n + 1;
        auto cand = ngram_counts(candidate, n);
        auto ref = ngram_counts(reference, n);
        long clipped = 0;
        for (const auto& [key, count] : cand) {
            auto it = ref.find(key);
            if (it != ref.end()) {
                clipped += std::min(count, it->second);
            }
        }
        double p = clipped > 0
                       ? static_cast<double>(clipped) / static_cast<double>(total)
                       : 1.0 / (2.0 * static_cast<double>(total));
        log_sum += std::log(p);
        ++orders;
    }
    if (orders == 0) {
        return 0.0;
    }
    double bp = candidate.size() < reference.size()
                    ? std::exp(1.0 - static_cast<double>(reference.size()) /
                                         static_cast<double>(candidate.size()))
                    : 1.0;
    return bp * std::exp(log_sum / orders);
}

bool is_ngram_metric(const std::string& name) {
    return name == "rouge1" || name == "rouge2" || name == "rougeL" || name == "bleu";
}

double ngram_metric(const std::string& name, const std::string& candidate,
                    const std::vector<std::string>& references) {
    auto cand = normalize_tokenize(candidate);
    double best = 0.0;
    for (const auto& reference : references) {
        auto ref = normalize_tokenize(reference);
        double v = 0.0;
        if (name == "rouge1") {
            v = rouge_n(cand, ref, 1).f1;
        } else if (name == "rouge2") {
            v = rouge_n(cand, ref, 2).f1;
        } else if (name == "rougeL") {
            v = rouge_l(cand, ref).f1;
        } else if (name == "bleu") {
            v = bleu(cand, ref);
        } else {
            throw InvalidRequest("unknown n-gram metric: " + name);
        }
        best = std::max(best, v);
    }
    return best;
}

} // namespace releval
