#pragma once

#include "releval/analytics.hpp"
#include "releval/harness_records.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace releval {

// "0.750 ± 0.097"; a NaN side renders as "nan".
std::string format_mean_stderr(double mean, double std_error, int precision = 3);

// "[2.055, 8.229]" — paired cross-entropies for factuality items.
std::string format_pair(double first, double second, int precision = 3);

enum class ReportFormat { csv, json, markdown };
ReportFormat report_format_from(const std::string& name);

struct SummaryCell {
    double mean = 0.0;
    double std_error = 0.0; // population sd / sqrt(N); NaN when N < 2
    std::size_t n = 0;
};

// (model, benchmark) x metric summary of a score table. Rows and columns are
// sorted; metric order is deterministic.
struct Summary {
    std::vector<std::string> row_labels; // "model | benchmark"
    std::vector<std::string> metrics;
    std::vector<std::vector<std::optional<SummaryCell>>> cells;
};

Summary summarize_scores(const std::vector<ScoreRecord>& records);

// Renders the summary in the requested format and writes it under out_dir
// as report.{csv,json,md}. Throws InvalidRequest on an empty summary; no
// file is written in that case. Returns the written path.
std::filesystem::path emit_report(const Summary& summary, ReportFormat format,
                                  const std::filesystem::path& out_dir);

// Markdown table of per-item relaxed results (one "[must, nice]" style cell
// per target pair) appended to factuality reports.
std::string relaxed_detail_markdown(const std::vector<nlohmann::json>& relaxed_rows);

} // namespace releval
