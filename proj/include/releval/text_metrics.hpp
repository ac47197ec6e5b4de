#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace releval {

struct NgramScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Lowercases ASCII letters and splits on maximal runs of non-alphanumeric
// characters. Digits are kept; bytes >= 0x80 count as word characters so
// multibyte letters are not split apart.
std::vector<std::string> normalize_tokenize(std::string_view text);

// Clipped n-gram overlap. Precision over candidate n-grams, recall over
// reference n-grams; all zero when either side has no n-grams.
NgramScore rouge_n(std::span<const std::string> candidate,
                   std::span<const std::string> reference, int n);

// Longest common subsequence variant: precision = LCS/|candidate|,
// recall = LCS/|reference|.
NgramScore rouge_l(std::span<const std::string> candidate,
                   std::span<const std::string> reference);

// Sentence-level BLEU, modified precisions up to 4-grams, uniform weights
// over the orders the candidate actually has, brevity penalty
// exp(1 - |ref|/|cand|) when the candidate is shorter. Zero-match precisions
// are floored at 1/(2 * candidate n-gram count).
double bleu(std::span<const std::string> candidate,
            std::span<const std::string> reference);

// Named metric over raw text with multiple references; the score is the
// maximum over references. `name` is one of rouge1, rouge2, rougeL, bleu.
// ROUGE scores report F1.
double ngram_metric(const std::string& name, const std::string& candidate,
                    const std::vector<std::string>& references);

bool is_ngram_metric(const std::string& name);

} // namespace releval
