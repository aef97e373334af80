// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mdal/asp_model.hpp"
#include "mdal/data_io.hpp"
#include "mdal/pool.hpp"
#include "mdal/strategies.hpp"

namespace mdal {

inline constexpr const char* kVersion = "0.1.0";

struct EngineConfig {
  double init_fraction = 0.10;
  double step_fraction = 0.05;
  double budget_fraction = 0.50;
  bool warm_start = false;
};

/// Where the data comes from: an inline synthetic spec or a manifest file.
struct DatasetSource {
  std::optional<SyntheticSpec> synthetic;
  std::string manifest;
  double test_fraction = 0.25;
  /// Defaults to true for manifests, false for synthetic data.
  std::optional<bool> standardize;
  std::uint64_t split_seed = 0;
};

struct ExperimentConfig {
  DatasetSource dataset;
  std::vector<std::string> strategies{"random", "bvsb", "egl", "coreset", "badge", "p2s"};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  StrategyParams strategy_params;
  /// input_dim and num_classes are filled from the data.
  ModelConfig model;
  EngineConfig engine;

  /// Throws ValidationError naming the first bad field.
  void validate() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ExperimentConfig& config);

/// Train/test data per domain, ready for the loop.
struct PreparedData {
  std::string name;
  std::vector<DomainDataset> train;
  std::vector<DomainDataset> test;
};

PreparedData prepare_data(const DatasetSource& source);
/// Copies input_dim and per-domain class counts from the data.
ModelConfig model_config_for(const ModelConfig& base, const PreparedData& data);

struct RoundRecord {
  std::size_t round = 0;
  std::vector<std::size_t> labeled_per_domain;
  std::size_t labeled_total = 0;
  double labeled_frac = 0.0;
  std::vector<double> accuracy;  // per domain
  double macro_accuracy = 0.0;
  /// Time of the selection made after this round's evaluation (0 on the last round).
  double select_seconds = 0.0;
  double train_seconds = 0.0;
};

using LearningCurve = std::vector<RoundRecord>;

struct RunResult {
  std::string strategy;
  std::uint64_t seed = 0;
  LearningCurve records;
  /// Set when a round failed; `records` then holds the completed rounds.
  std::optional<std::string> error;
  /// Every batch selected during the run, in order.
  std::vector<QueryBatch> batches;
};

/// Round budget b = ⌈step_fraction·N⌉.
std::size_t round_budget(const EngineConfig& engine, std::size_t pool_size);

/// Runs the train → evaluate → select → annotate loop until the labeled
/// fraction reaches engine.budget_fraction.
RunResult run_experiment(const ExperimentConfig& config, const PreparedData& data,
                         StrategyKind strategy, std::uint64_t seed);

/// Trapezoidal area under macro accuracy vs labeled count, divided by the
/// span of the labeled-count axis. A single point returns its accuracy.
double compute_aulc(const LearningCurve& curve);

struct CurvePoint {
  std::size_t labeled_total = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

struct AulcSummary {
  std::vector<double> per_seed;
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::vector<CurvePoint> mean_curve;
};

/// Curves must share the same labeled-count axis.
AulcSummary aggregate_seeds(const std::vector<LearningCurve>& curves);

struct GridJob {
  StrategyKind strategy;
  std::uint64_t seed;
};

/// Runs independent jobs on up to `threads` workers; `on_done` is called
/// (serialized) as each job finishes. Results come back in job order.
std::vector<RunResult> run_grid(const ExperimentConfig& config, const PreparedData& data,
                                const std::vector<GridJob>& jobs, std::size_t threads,
                                const std::function<void(const RunResult&)>& on_done = {});

}  // namespace mdal
