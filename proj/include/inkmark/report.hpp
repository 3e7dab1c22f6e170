#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "inkmark/experiments.hpp"
#include "json.hpp"

namespace inkmark {

/// Canonical JSON text: sorted keys, two-space indent, trailing newline.
std::string canonical_json(const nlohmann::json& j);

/// One row per pool.
std::string pools_csv(const ExperimentReport& report);
/// One row per (pool, threshold) ROC point.
std::string roc_csv(const ExperimentReport& report);

struct SvgSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

/// Static line chart with axes, ticks and a legend.
std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<SvgSeries>& series);

std::string fnr_vs_entropy_svg(const ExperimentReport& report);
std::string roc_svg(const ExperimentReport& report);

/// Writes report.json, pools.csv, roc.csv, fnr_vs_entropy.svg and roc.svg
/// into `dir` (created if needed). Returns the written paths. Throws IoError.
std::vector<std::filesystem::path> emit_report(const ExperimentReport& report, const std::filesystem::path& dir);

/// Writes `contents` to `path`, throwing IoError on failure.
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace inkmark
