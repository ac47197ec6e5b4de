#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace releval {

// Dense labelled matrix with explicit missing cells.
struct ScoreMatrix {
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::vector<std::vector<std::optional<double>>> values; // [row][col]

    static ScoreMatrix create(std::vector<std::string> rows, std::vector<std::string> cols);

    std::size_t n_rows() const { return row_labels.size(); }
    std::size_t n_cols() const { return col_labels.size(); }
    std::optional<double>& at(std::size_t r, std::size_t c) { return values[r][c]; }
    const std::optional<double>& at(std::size_t r, std::size_t c) const { return values[r][c]; }
    std::optional<std::size_t> col_index(const std::string& name) const;
    std::optional<std::size_t> row_index(const std::string& name) const;
    ScoreMatrix transposed() const;

    // Header row is the column labels, first column the row label; missing
    // cells render as "nan".
    std::string to_csv() const;
    static ScoreMatrix from_csv(const std::string& text);

    // Plot-data shape: {"row_labels": [...], "col_labels": [...], "values": [[...]]}
    // with nulls for missing cells.
    nlohmann::json to_json() const;
};

// Sample Pearson correlation. Throws DegenerateInput on fewer than two
// points or a constant vector; the caller reports such cells as missing.
double pearson(std::span<const double> x, std::span<const double> y);

// Rank-transformed Pearson with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

enum class CorrelationAxis { columns, rows };

// Pairwise-complete correlation of columns (or rows) against each other.
// Output is symmetric with an exact unit diagonal; degenerate pairs are
// missing cells.
ScoreMatrix correlation_matrix(const ScoreMatrix& m, CorrelationAxis axis,
                               bool use_spearman = false);

struct ResilienceReport {
    std::map<std::string, double> scaled_variances; // prompt -> population var / range
    double mean = 0.0;
};

// Population variance per prompt across rephrasing variants, divided by the
// metric column's max-min range. A zero range means every score in the
// column is identical, so all scaled variances are defined as 0.
ResilienceReport resilience(const std::map<std::string, std::vector<double>>& variant_scores,
                            double column_range);

struct ConsistencyReport {
    std::map<std::string, double> per_prompt_variance;
    double mean_variance = 0.0;
    std::map<std::string, double> cv; // prompts with zero mean are excluded
};

// Population variance and coefficient of variation per prompt across
// repeated generations.
ConsistencyReport self_consistency(const std::map<std::string, std::vector<double>>& repeat_scores);

enum class RankDirection { higher_better, lower_better };

// Competition ranking of the rows by one column: best rank is 1, ties share
// the better rank and the next rank skips. Missing cells rank after every
// present value.
std::vector<std::pair<std::string, int>> rank_models(const ScoreMatrix& m,
                                                     const std::string& col,
                                                     RankDirection direction);

} // namespace releval
