#pragma once

#include <string>
#include <vector>

#include "trunet/metrics/metrics.hpp"

namespace trunet {

enum class ReportFormat { kCsv, kMarkdown };

// Half-up rounding to four decimals, e.g. 0.12345 -> "0.1235".
std::string format_4dp(double value);

/// Method, DSC, mIoU, Recall, Precision, Accuracy, F2, FPS; one row per report
/// in the given order. A missing FPS is written as "-".
std::string render_report(const std::vector<MetricsReport>& reports, ReportFormat format);

struct ReportRow {
  std::string method;
  std::vector<double> values;  // DSC .. FPS; NaN where the cell is "-"
};

// Parses render_report(.., kCsv) output.
std::vector<ReportRow> parse_report_csv(const std::string& text);

}  // namespace trunet
