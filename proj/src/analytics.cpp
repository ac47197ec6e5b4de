#include "releval/analytics.hpp"

#include "releval/errors.hpp"
#include "releval/util.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace releval {

namespace {

double population_variance(std::span<const double> xs, double mean) {
    // identical values must give exactly 0, not mean-rounding dust
    bool all_equal = true;
    for (double x : xs) {
        all_equal = all_equal && x == xs.front();
    }
    if (all_equal) {
        return 0.0;
    }
    double acc = 0.0;
    for (double x : xs) {
        acc += (x - mean) * (x - mean);
    }
    return acc / static_cast<double>(xs.size());
}

double mean_of(std::span<const double> xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

std::vector<double> average_ranks(std::span<const double> xs) {
    std::size_t n = xs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return xs[a] < xs[b];
    });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) {
            ++j;
        }
        double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }
    return ranks;
}

} // namespace

ScoreMatrix ScoreMatrix::create(std::vector<std::string> rows, std::vector<std::string> cols) {
    ScoreMatrix m;
    m.row_labels = std::move(rows);
    m.col_labels = std::move(cols);
    m.values.assign(m.row_labels.size(),
                    std::vector<std::optional<double>>(m.col_labels.size()));
    return m;
}

std::optional<std::size_t> ScoreMatrix::col_index(const std::string& name) const {
    auto it = std::find(col_labels.begin(), col_labels.end(), name);
    if (it == col_labels.end()) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - col_labels.begin());
}

std::optional<std::size_t> ScoreMatrix::row_index(const std::string& name) const {
    auto it = std::find(row_labels.begin(), row_labels.end(), name);
    if (it == row_labels.end()) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - row_labels.begin());
}

ScoreMatrix ScoreMatrix::transposed() const {
    ScoreMatrix t = create(col_labels, row_labels);
    for (std::size_t r = 0; r < n_rows(); ++r) {
        for (std::size_t c = 0; c < n_cols(); ++c) {
            t.values[c][r] = values[r][c];
        }
    }
    return t;
}

std::string ScoreMatrix::to_csv() const {
    std::ostringstream out;
    auto quote = [](const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) {
            return s;
        }
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') {
                q += "\"\"";
            } else {
                q.push_back(c);
            }
        }
        q.push_back('"');
        return q;
    };
    for (const auto& c : col_labels) {
        out << ',' << quote(c);
    }
    out << '\n';
    for (std::size_t r = 0; r < n_rows(); ++r) {
        out << quote(row_labels[r]);
        for (std::size_t c = 0; c < n_cols(); ++c) {
            out << ',';
            out << (values[r][c] ? format_double(*values[r][c]) : "nan");
        }
        out << '\n';
    }
    return out.str();
}

ScoreMatrix ScoreMatrix::from_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> current;
    std::string field;
    bool quoted = false;
    std::size_t i = 0;
    auto end_field = [&] {
        current.push_back(std::move(field));
        field.clear();
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(std::move(current));
        current.clear();
    };
    while (i < text.size()) {
        char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\n') {
            end_row();
        } else if (c != '\r') {
            field.push_back(c);
        }
        ++i;
    }
    if (!field.empty() || !current.empty()) {
        end_row();
    }
    if (rows.empty()) {
        throw ParseError("empty CSV");
    }
    ScoreMatrix m;
    const auto& header = rows[0];
    for (std::size_t c = 1; c < header.size(); ++c) {
        m.col_labels.push_back(header[c]);
    }
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.empty() || (row.size() == 1 && row[0].empty())) {
            continue;
        }
        m.row_labels.push_back(row[0]);
        std::vector<std::optional<double>> vals(m.col_labels.size());
        for (std::size_t c = 0; c + 1 < row.size() && c < vals.size(); ++c) {
            const std::string& cell = row[c + 1];
            if (cell.empty() || cell == "nan") {
                continue;
            }
            try {
                vals[c] = std::stod(cell);
            } catch (const std::exception&) {
                throw ParseError("line " + std::to_string(r + 1) + ": bad number '" + cell + "'");
            }
        }
        m.values.push_back(std::move(vals));
    }
    return m;
}

nlohmann::json ScoreMatrix::to_json() const {
    nlohmann::json j;
    j["row_labels"] = row_labels;
    j["col_labels"] = col_labels;
    nlohmann::json vals = nlohmann::json::array();
    for (const auto& row : values) {
        nlohmann::json jrow = nlohmann::json::array();
        for (const auto& v : row) {
            if (v) {
                jrow.push_back(*v);
            } else {
                jrow.push_back(nullptr);
            }
        }
        vals.push_back(std::move(jrow));
    }
    j["values"] = std::move(vals);
    return j;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw InvalidRequest("pearson: length mismatch");
    }
    if (x.size() < 2) {
        throw DegenerateInput("pearson: need at least 2 observations");
    }
    double mx = mean_of(x);
    double my = mean_of(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double dx = x[i] - mx;
        double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw DegenerateInput("pearson: constant vector");
    }
    double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw InvalidRequest("spearman: length mismatch");
    }
    auto rx = average_ranks(x);
    auto ry = average_ranks(y);
    return pearson(rx, ry);
}

ScoreMatrix correlation_matrix(const ScoreMatrix& m, CorrelationAxis axis, bool use_spearman) {
    ScoreMatrix base = (axis == CorrelationAxis::rows) ? m.transposed() : m;
    if (base.n_rows() < 2) {
        throw InsufficientData("correlation needs at least 2 observations per pair");
    }
    std::size_t k = base.n_cols();
    ScoreMatrix out = ScoreMatrix::create(base.col_labels, base.col_labels);
    for (std::size_t a = 0; a < k; ++a) {
        out.values[a][a] = 1.0;
        for (std::size_t b = a + 1; b < k; ++b) {
            std::vector<double> xs, ys;
            for (std::size_t r = 0; r < base.n_rows(); ++r) {
                if (base.values[r][a] && base.values[r][b]) {
                    xs.push_back(*base.values[r][a]);
                    ys.push_back(*base.values[r][b]);
                }
            }
            try {
                double r = use_spearman ? spearman(xs, ys) : pearson(xs, ys);
                out.values[a][b] = r;
                out.values[b][a] = r;
            } catch (const DegenerateInput&) {
                // cell stays missing
            }
        }
    }
    return out;
}

ResilienceReport resilience(const std::map<std::string, std::vector<double>>& variant_scores,
                            double column_range) {
    if (column_range < 0.0) {
        throw InvalidRequest("resilience: negative column range");
    }
    ResilienceReport report;
    double sum = 0.0;
    for (const auto& [prompt, scores] : variant_scores) {
        if (scores.size() < 2) {
            throw InvalidRequest("resilience: prompt '" + prompt + "' has fewer than 2 variants");
        }
        double scaled = 0.0;
        if (column_range > 0.0) {
            scaled = population_variance(scores, mean_of(scores)) / column_range;
        }
        report.scaled_variances[prompt] = scaled;
        sum += scaled;
    }
    if (!report.scaled_variances.empty()) {
        report.mean = sum / static_cast<double>(report.scaled_variances.size());
    }
    return report;
}

ConsistencyReport self_consistency(const std::map<std::string, std::vector<double>>& repeat_scores) {
    ConsistencyReport report;
    double sum = 0.0;
    for (const auto& [prompt, scores] : repeat_scores) {
        if (scores.size() < 2) {
            throw InvalidRequest("self_consistency: prompt '" + prompt +
                                 "' has fewer than 2 repetitions");
        }
        double mean = mean_of(scores);
        double var = population_variance(scores, mean);
        report.per_prompt_variance[prompt] = var;
        sum += var;
        if (mean != 0.0) {
            report.cv[prompt] = std::sqrt(var) / mean;
        }
    }
    if (!report.per_prompt_variance.empty()) {
        report.mean_variance = sum / static_cast<double>(report.per_prompt_variance.size());
    }
    return report;
}

std::vector<std::pair<std::string, int>> rank_models(const ScoreMatrix& m,
                                                     const std::string& col,
                                                     RankDirection direction) {
    auto ci = m.col_index(col);
    if (!ci) {
        throw UnknownColumn("rank_models: no column '" + col + "'");
    }
    struct Entry {
        std::string label;
        std::optional<double> value;
    };
    std::vector<Entry> entries;
    for (std::size_t r = 0; r < m.n_rows(); ++r) {
        entries.push_back({m.row_labels[r], m.values[r][*ci]});
    }
    auto better = [&](const std::optional<double>& a, const std::optional<double>& b) {
        if (!a) {
            return false; // missing is never better
        }
        if (!b) {
            return true;
        }
        return direction == RankDirection::higher_better ? *a > *b : *a < *b;
    };
    std::vector<std::pair<std::string, int>> out;
    for (const auto& e : entries) {
        int rank = 1;
        for (const auto& other : entries) {
            if (better(other.value, e.value)) {
                ++rank;
            }
        }
        out.emplace_back(e.label, rank);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second < b.second : a.first < b.first;
    });
    return out;
}

} // namespace releval
