// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdal/engine.hpp"

namespace mdal {

/// `<dataset>__<strategy>__seed<seed>`
std::string run_stem(const std::string& dataset, const std::string& strategy, std::uint64_t seed);

/// Per-run learning curve:
///   round,labeled_total,labeled_frac,acc_domain_0..K-1,acc_macro
/// Only deterministic quantities go here; timings live in the metadata.
void write_run_csv(const LearningCurve& curve, std::size_t num_domains,
                   const std::filesystem::path& path);
LearningCurve read_run_csv(const std::filesystem::path& path);

/// Sidecar metadata. Everything except the "volatile" object (creation time,
/// wall-clock timings) is a deterministic function of config and seed.
nlohmann::json run_metadata(const ExperimentConfig& config, const PreparedData& data,
                            const RunResult& run);

/// A run found on disk, with its curve re-read from the CSV.
struct StoredRun {
  std::filesystem::path metadata_path;
  std::string dataset;
  std::string strategy;
  std::uint64_t seed = 0;
  bool ok = true;
  LearningCurve curve;
  std::vector<double> select_seconds;
};

/// Every run metadata file directly inside `dir`, sorted by file name.
std::vector<StoredRun> load_runs(const std::filesystem::path& dir);

struct ReportCell {
  double mean = 0.0;    // AULC × 100
  double stddev = 0.0;  // population, × 100
  std::size_t runs = 0;
};

struct ReportTable {
  std::vector<std::string> datasets;
  std::vector<std::string> strategies;
  std::map<std::pair<std::string, std::string>, ReportCell> cells;  // (strategy, dataset)
  /// Mean seconds per selection call, per strategy over all datasets.
  std::map<std::string, double> select_seconds;
};

/// Failed runs are left out.
ReportTable build_report(const std::vector<StoredRun>& runs);
/// `mean(std)` with two decimals.
std::string format_cell(const ReportCell& cell);
std::string report_csv(const ReportTable& table);
/// Aligned text; the best mean per dataset column is marked with '*'.
std::string report_text(const ReportTable& table);

struct StrategyCurve {
  std::string dataset;
  std::string strategy;
  AulcSummary summary;
};

std::vector<StrategyCurve> build_curves(const std::vector<StoredRun>& runs);
/// labeled_total,mean_acc,std_acc (one row per evaluation round)
std::string curve_csv(const StrategyCurve& curve);
/// Static SVG line plot of every strategy's mean curve on one dataset.
std::string curves_svg(const std::string& dataset, const std::vector<const StrategyCurve*>& curves);

}  // namespace mdal
