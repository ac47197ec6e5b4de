#include "releval/report.hpp"

#include "releval/errors.hpp"
#include "releval/util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace releval {

using nlohmann::json;

std::string format_mean_stderr(double mean, double std_error, int precision) {
    return format_fixed(mean, precision) + " ± " + format_fixed(std_error, precision);
}

std::string format_pair(double first, double second, int precision) {
    return "[" + format_fixed(first, precision) + ", " + format_fixed(second, precision) + "]";
}

ReportFormat report_format_from(const std::string& name) {
    if (name == "csv") {
        return ReportFormat::csv;
    }
    if (name == "json") {
        return ReportFormat::json;
    }
    if (name == "markdown" || name == "md") {
        return ReportFormat::markdown;
    }
    throw InvalidRequest("unknown report format: " + name);
}

Summary summarize_scores(const std::vector<ScoreRecord>& records) {
    // population sd / sqrt(N); for 0/1 accuracy values this is the binomial
    // standard error
    std::map<std::string, std::map<std::string, std::vector<double>>> grouped;
    for (const auto& r : records) {
        if (!r.value) {
            continue;
        }
        grouped[r.model + " | " + r.benchmark][r.metric].push_back(*r.value);
    }
    Summary s;
    std::vector<std::string> metrics;
    for (const auto& [row, by_metric] : grouped) {
        s.row_labels.push_back(row);
        for (const auto& [metric, vs] : by_metric) {
            metrics.push_back(metric);
        }
    }
    std::sort(metrics.begin(), metrics.end());
    metrics.erase(std::unique(metrics.begin(), metrics.end()), metrics.end());
    s.metrics = metrics;
    for (const auto& row : s.row_labels) {
        std::vector<std::optional<SummaryCell>> cells(s.metrics.size());
        const auto& by_metric = grouped[row];
        for (std::size_t c = 0; c < s.metrics.size(); ++c) {
            auto it = by_metric.find(s.metrics[c]);
            if (it == by_metric.end()) {
                continue;
            }
            const auto& vs = it->second;
            SummaryCell cell;
            cell.n = vs.size();
            double sum = 0.0;
            for (double v : vs) {
                sum += v;
            }
            cell.mean = sum / static_cast<double>(vs.size());
            if (vs.size() >= 2) {
                double var = 0.0;
                for (double v : vs) {
                    var += (v - cell.mean) * (v - cell.mean);
                }
                var /= static_cast<double>(vs.size());
                cell.std_error = std::sqrt(var / static_cast<double>(vs.size()));
            } else {
                cell.std_error = std::numeric_limits<double>::quiet_NaN();
            }
            cells[c] = cell;
        }
        s.cells.push_back(std::move(cells));
    }
    return s;
}

namespace {

std::string render_csv(const Summary& s) {
    std::ostringstream out;
    out << "model_benchmark";
    for (const auto& m : s.metrics) {
        out << ',' << m << ',' << m << "_stderr";
    }
    out << '\n';
    for (std::size_t r = 0; r < s.row_labels.size(); ++r) {
        out << '"' << s.row_labels[r] << '"';
        for (std::size_t c = 0; c < s.metrics.size(); ++c) {
            const auto& cell = s.cells[r][c];
            if (cell) {
                out << ',' << format_double(cell->mean) << ',' << format_double(cell->std_error);
            } else {
                out << ",nan,nan";
            }
        }
        out << '\n';
    }
    return out.str();
}

std::string markdown_safe(std::string text) {
    for (auto& c : text) {
        if (c == '|') {
            c = '/';
        }
    }
    return text;
}

std::string render_markdown(const Summary& s) {
    std::ostringstream out;
    out << "| model / benchmark |";
    for (const auto& m : s.metrics) {
        out << ' ' << m << " |";
    }
    out << "\n|---|";
    for (std::size_t c = 0; c < s.metrics.size(); ++c) {
        out << "---|";
    }
    out << '\n';
    for (std::size_t r = 0; r < s.row_labels.size(); ++r) {
        out << "| " << markdown_safe(s.row_labels[r]) << " |";
        for (std::size_t c = 0; c < s.metrics.size(); ++c) {
            const auto& cell = s.cells[r][c];
            out << ' ' << (cell ? format_mean_stderr(cell->mean, cell->std_error) : "nan") << " |";
        }
        out << '\n';
    }
    return out.str();
}

json render_json(const Summary& s) {
    json rows = json::array();
    for (std::size_t r = 0; r < s.row_labels.size(); ++r) {
        json row{{"row", s.row_labels[r]}};
        json metrics = json::object();
        for (std::size_t c = 0; c < s.metrics.size(); ++c) {
            const auto& cell = s.cells[r][c];
            if (!cell) {
                metrics[s.metrics[c]] = nullptr;
                continue;
            }
            json m{{"mean", cell->mean}, {"n", cell->n}};
            if (std::isnan(cell->std_error)) {
                m["stderr"] = nullptr;
            } else {
                m["stderr"] = cell->std_error;
            }
            metrics[s.metrics[c]] = std::move(m);
        }
        row["metrics"] = std::move(metrics);
        rows.push_back(std::move(row));
    }
    return json{{"rows", std::move(rows)}};
}

} // namespace

std::filesystem::path emit_report(const Summary& summary, ReportFormat format,
                                  const std::filesystem::path& out_dir) {
    if (summary.row_labels.empty() || summary.metrics.empty()) {
        throw InvalidRequest("report: nothing to emit");
    }
    std::filesystem::create_directories(out_dir);
    std::filesystem::path path;
    switch (format) {
        case ReportFormat::csv:
            path = out_dir / "report.csv";
            write_file_atomic(path, render_csv(summary));
            break;
        case ReportFormat::markdown:
            path = out_dir / "report.md";
            write_file_atomic(path, render_markdown(summary));
            break;
        case ReportFormat::json:
            path = out_dir / "report.json";
            write_file_atomic(path, render_json(summary).dump(2) + "\n");
            break;
    }
    return path;
}

std::string relaxed_detail_markdown(const std::vector<json>& relaxed_rows) {
    // group the per-target rows by question so factuality pairs render as
    // one [must_have, nice_to_have] cell
    std::map<std::string, std::map<std::string, double>> by_question;
    for (const auto& row : relaxed_rows) {
        by_question[row.at("question_id").get<std::string>()]
                   [row.value("target_id", "target")] =
                       row.at("relaxed_cross_entropy").get<double>();
    }
    std::ostringstream out;
    out << "| question | relaxed cross-entropy |\n|---|---|\n";
    for (const auto& [question, targets] : by_question) {
        out << "| " << markdown_safe(question) << " | ";
        auto must = targets.find("must_have");
        auto nice = targets.find("nice_to_have");
        if (must != targets.end() && nice != targets.end()) {
            out << format_pair(must->second, nice->second);
        } else {
            bool first = true;
            for (const auto& [tid, v] : targets) {
                if (!first) {
                    out << ", ";
                }
                out << format_fixed(v, 3);
                first = false;
            }
        }
        out << " |\n";
    }
    return out.str();
}

} // namespace releval
