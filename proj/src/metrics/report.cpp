#include "trunet/metrics/report.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "trunet/errors.hpp"

namespace trunet {

std::string format_4dp(double value) {
  // The small bias lets decimal ties such as 0.12345 (stored just below the
  // tie) round up.
  const double scaled = std::floor(std::abs(value) * 1e4 + 0.5 + 1e-7);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%.4f", (value < 0 && scaled > 0) ? "-" : "", scaled / 1e4);
  return buf;
}

namespace {

constexpr const char* kColumns[] = {"Method", "DSC", "mIoU", "Recall", "Precision", "Accuracy", "F2", "FPS"};

std::vector<std::string> cells(const MetricsReport& r) {
  const MetricSet& m = r.mean;
  return {r.method,
          format_4dp(m.dsc),
          format_4dp(m.iou),
          format_4dp(m.recall),
          format_4dp(m.precision),
          format_4dp(m.accuracy),
          format_4dp(m.f2),
          r.fps ? format_4dp(*r.fps) : std::string("-")};
}

}  // namespace

std::string render_report(const std::vector<MetricsReport>& reports, ReportFormat format) {
  if (reports.empty()) throw ShapeError("render_report: no reports");
  std::ostringstream os;
  const std::string sep = format == ReportFormat::kCsv ? "," : " | ";
  auto row = [&](const std::vector<std::string>& values) {
    if (format == ReportFormat::kMarkdown) os << "| ";
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) os << sep;
      os << values[i];
    }
    if (format == ReportFormat::kMarkdown) os << " |";
    os << '\n';
  };
  row(std::vector<std::string>(std::begin(kColumns), std::end(kColumns)));
  if (format == ReportFormat::kMarkdown) {
    row(std::vector<std::string>(std::size(kColumns), "---"));
  }
  for (const auto& r : reports) row(cells(r));
  return os.str();
}

std::vector<ReportRow> parse_report_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<ReportRow> rows;
  bool header = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != std::size(kColumns)) throw FormatError("report row has wrong column count", 0);
    ReportRow row;
    row.method = fields[0];
    for (std::size_t i = 1; i < fields.size(); ++i) {
      row.values.push_back(fields[i] == "-" ? std::numeric_limits<double>::quiet_NaN() : std::stod(fields[i]));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace trunet
