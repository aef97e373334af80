// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mdal/asp_model.hpp"
#include "mdal/matrix.hpp"
#include "mdal/pool.hpp"
#include "mdal/rng.hpp"

namespace mdal {

enum class StrategyKind {
  kRandom,
  kBvsb,
  kEgl,
  kCoreset,
  kBadge,
  kP2s,
  kTwoStageCenter,
  kTwoStageBvsb,
  kTwoStageEgl,
  kP2sNoRegion,
};

/// Accepts the CLI names; `p2s-no-perturb` is an alias of `2s-center`.
StrategyKind parse_strategy(std::string_view name);
std::string_view strategy_name(StrategyKind kind);
/// Canonical names of every strategy (aliases excluded).
std::vector<std::string> strategy_names();

/// What n_k in the per-domain budget split counts.
enum class BudgetBasis { kUnlabeled, kFullPool };

struct StrategyParams {
  double sigma = 0.01;                  // perturbation std-dev
  std::size_t perturbation_samples = 20;
  BudgetBasis budget_basis = BudgetBasis::kUnlabeled;
};

/// Everything a strategy may look at. Model and pool are read-only.
struct SelectionContext {
  const AspMtlModel* model = nullptr;
  const PoolState* pool = nullptr;
  std::size_t budget = 0;
  RngStream* rng = nullptr;
  StrategyParams params;
};

/// Validates the context and dispatches. The result holds exactly
/// ctx.budget distinct unlabeled items, sorted by (domain, index).
QueryBatch select(StrategyKind kind, const SelectionContext& ctx);

QueryBatch random_select(const SelectionContext& ctx);
QueryBatch bvsb_select(const SelectionContext& ctx);
QueryBatch egl_select(const SelectionContext& ctx);
QueryBatch coreset_select(const SelectionContext& ctx);
QueryBatch badge_select(const SelectionContext& ctx);
QueryBatch p2s_select(const SelectionContext& ctx);

enum class SecondStageScorer { kCenter, kBvsb, kEgl, kPerturbation };

QueryBatch two_stage_variant_select(const SelectionContext& ctx, SecondStageScorer scorer,
                                    bool region_stage);

// ---- building blocks ------------------------------------------------------------

/// Largest-remainder split of `budget` proportional to `counts`, then capped by
/// `capacity` (overflow goes to the next-largest remainders with room).
/// Empty `capacity` means uncapped.
std::vector<std::size_t> allocate_budget(std::span<const std::size_t> counts, std::size_t budget,
                                         std::span<const std::size_t> capacity = {});

/// Top-1 minus top-2 probability.
double bvsb_margin(std::span<const double> probs);
/// Σ_c p_c·‖p − e_c‖·‖h‖.
double egl_score(std::span<const double> probs, std::span<const double> features);

/// Mean over `samples` Gaussian draws δ of KL(forward(x) ‖ forward_perturbed(x, δ)).
double perturbation_score(const AspMtlModel& model, std::span<const double> x, std::size_t domain,
                          double sigma, std::size_t samples, RngStream& rng);

/// k-means++ seeding: returns k distinct row indices. When every remaining
/// point coincides with a chosen center the next one is drawn uniformly from
/// the unchosen rows.
std::vector<std::size_t> kmeanspp_seed(const Matrix& points, std::size_t k, RngStream& rng);

struct KMeansResult {
  std::vector<std::size_t> assignment;  // cluster id per point
  Matrix centers;
  /// SSE after the seeding assignment, then after every Lloyd iteration.
  std::vector<double> sse_trace;
  double sse = 0.0;
  std::size_t iterations = 0;
};

/// k-means++ seeding followed by Lloyd iterations (nearest center, ties to
/// the lowest index; empty clusters take the point farthest from its center).
KMeansResult kmeans(const Matrix& points, std::size_t k, RngStream& rng,
                    std::size_t max_iterations = 100);

/// One domain's selection regions.
struct DomainRegions {
  std::size_t domain = 0;
  std::vector<std::size_t> candidates;  // unlabeled sample indices
  Matrix embeddings;                    // row i ↔ candidates[i]
  Matrix centers;                       // one row per region
  std::vector<std::vector<std::size_t>> regions;  // rows into `candidates`
};

using RegionPartition = std::vector<DomainRegions>;

/// Clusters each domain's unlabeled gradient embeddings into budgets[k]
/// regions; domains with a zero budget are skipped.
RegionPartition build_regions(const SelectionContext& ctx, std::span<const std::size_t> budgets);

/// Per-domain budgets for `ctx` (counts per ctx.params.budget_basis, capped by
/// the unlabeled counts).
std::vector<std::size_t> domain_budgets(const SelectionContext& ctx);

}  // namespace mdal
