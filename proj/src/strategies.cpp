// SPDX-License-Identifier: Apache-2.0
#include "mdal/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mdal/errors.hpp"

namespace mdal {

namespace {

struct NamedKind {
  std::string_view name;
  StrategyKind kind;
};

constexpr NamedKind kStrategyTable[] = {
    {"random", StrategyKind::kRandom},
    {"bvsb", StrategyKind::kBvsb},
    {"egl", StrategyKind::kEgl},
    {"coreset", StrategyKind::kCoreset},
    {"badge", StrategyKind::kBadge},
    {"p2s", StrategyKind::kP2s},
    {"2s-center", StrategyKind::kTwoStageCenter},
    {"2s-bvsb", StrategyKind::kTwoStageBvsb},
    {"2s-egl", StrategyKind::kTwoStageEgl},
    {"p2s-no-region", StrategyKind::kP2sNoRegion},
};

}  // namespace

StrategyKind parse_strategy(std::string_view name) {
  if (name == "p2s-no-perturb") return StrategyKind::kTwoStageCenter;
  for (const auto& e : kStrategyTable) {
    if (e.name == name) return e.kind;
  }
  throw ValidationError("unknown strategy '" + std::string(name) + "'");
}

std::string_view strategy_name(StrategyKind kind) {
  for (const auto& e : kStrategyTable) {
    if (e.kind == kind) return e.name;
  }
  return "unknown";
}

std::vector<std::string> strategy_names() {
  std::vector<std::string> out;
  for (const auto& e : kStrategyTable) out.emplace_back(e.name);
  return out;
}

// ---- budget allocation -------------------------------------------------------------

std::vector<std::size_t> allocate_budget(std::span<const std::size_t> counts, std::size_t budget,
                                         std::span<const std::size_t> capacity) {
  const std::size_t k = counts.size();
  if (k == 0) throw ValidationError("allocate_budget: no domains");
  if (budget < 1) throw ValidationError("allocate_budget: budget must be >= 1");
  if (!capacity.empty() && capacity.size() != k) {
    throw ValidationError("allocate_budget: capacity length differs from counts");
  }
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  if (total < budget) {
    throw ValidationError("allocate_budget: budget " + std::to_string(budget) +
                          " exceeds the counted items " + std::to_string(total));
  }
  if (!capacity.empty()) {
    const std::size_t room = std::accumulate(capacity.begin(), capacity.end(), std::size_t{0});
    if (room < budget) {
      throw ValidationError("allocate_budget: budget " + std::to_string(budget) +
                            " exceeds the unlabeled total " + std::to_string(room));
    }
  }

  __extension__ using Wide = unsigned __int128;
  // share_k = budget·n_k/total = floor_k + rem_k/total, exact in integers
  std::vector<std::size_t> out(k);
  std::vector<std::size_t> rem(k);
  std::size_t assigned = 0;
  for (std::size_t d = 0; d < k; ++d) {
    const auto scaled = static_cast<Wide>(budget) * counts[d];
    out[d] = static_cast<std::size_t>(scaled / total);
    rem[d] = static_cast<std::size_t>(scaled % total);
    assigned += out[d];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&rem](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; assigned < budget; ++i, ++assigned) ++out[order[i]];

  if (!capacity.empty()) {
    std::size_t overflow = 0;
    for (std::size_t d = 0; d < k; ++d) {
      if (out[d] > capacity[d]) {
        overflow += out[d] - capacity[d];
        out[d] = capacity[d];
      }
    }
    while (overflow > 0) {
      for (std::size_t d : order) {
        if (overflow == 0) break;
        if (out[d] < capacity[d]) {
          ++out[d];
          --overflow;
        }
      }
    }
  }
  return out;
}

std::vector<std::size_t> domain_budgets(const SelectionContext& ctx) {
  const PoolState& pool = *ctx.pool;
  std::vector<std::size_t> counts;
  std::vector<std::size_t> capacity;
  for (std::size_t k = 0; k < pool.num_domains(); ++k) {
    capacity.push_back(pool.unlabeled_count(k));
    counts.push_back(ctx.params.budget_basis == BudgetBasis::kFullPool ? pool.pool_size(k)
                                                                       : capacity.back());
  }
  return allocate_budget(counts, ctx.budget, capacity);
}

// ---- per-item scores ---------------------------------------------------------------

double bvsb_margin(std::span<const double> probs) {
  double first = -std::numeric_limits<double>::infinity();
  double second = -std::numeric_limits<double>::infinity();
  for (double p : probs) {
    if (p > first) {
      second = first;
      first = p;
    } else if (p > second) {
      second = p;
    }
  }
  return first - second;
}

double egl_score(std::span<const double> probs, std::span<const double> features) {
  const double h_norm = l2_norm(features);
  double sq_total = 0.0;
  for (double p : probs) sq_total += p * p;
  double score = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    // ‖p − e_c‖² = Σp² − 2p_c + 1
    const double residual = std::sqrt(std::max(sq_total - 2.0 * probs[c] + 1.0, 0.0));
    score += probs[c] * residual * h_norm;
  }
  return score;
}

double perturbation_score(const AspMtlModel& model, std::span<const double> x, std::size_t domain,
                          double sigma, std::size_t samples, RngStream& rng) {
  if (!(sigma > 0.0)) throw ValidationError("perturbation_score: sigma must be positive");
  if (samples < 1) throw ValidationError("perturbation_score: need at least one sample");
  const std::vector<double> hs = model.shared_features(x);
  const std::vector<double> hp = model.private_features(x, domain);
  const std::vector<double> original = model.head_proba(hs, hp, domain);
  std::vector<double> shifted(hs.size());
  double total = 0.0;
  for (std::size_t t = 0; t < samples; ++t) {
    const std::vector<double> delta = gaussian_sample(sigma, hs.size(), rng);
    for (std::size_t i = 0; i < hs.size(); ++i) shifted[i] = hs[i] + delta[i];
    total += kl_divergence(original, model.head_proba(shifted, hp, domain));
  }
  return total / static_cast<double>(samples);
}

// ---- k-means -----------------------------------------------------------------------

std::vector<std::size_t> kmeanspp_seed(const Matrix& points, std::size_t k, RngStream& rng) {
  const std::size_t n = points.rows();
  if (k < 1) throw ValidationError("kmeans++: k must be >= 1");
  if (k > n) {
    throw ValidationError("kmeans++: k=" + std::to_string(k) + " exceeds " + std::to_string(n) +
                          " points");
  }
  std::vector<std::size_t> chosen;
  std::vector<char> taken(n, 0);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());

  auto take = [&](std::size_t i) {
    chosen.push_back(i);
    taken[i] = 1;
    for (std::size_t j = 0; j < n; ++j) {
      d2[j] = std::min(d2[j], squared_distance(points.row(j), points.row(i)));
    }
    d2[i] = 0.0;
  };

  take(rng.uniform_index(n));
  while (chosen.size() < k) {
    double mass = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!taken[j]) mass += d2[j];
    }
    if (mass > 0.0) {
      const double target = rng.uniform01() * mass;
      double acc = 0.0;
      std::size_t pick = n;
      std::size_t last_positive = n;
      for (std::size_t j = 0; j < n; ++j) {
        if (taken[j] || d2[j] <= 0.0) continue;
        last_positive = j;
        acc += d2[j];
        if (acc > target) {
          pick = j;
          break;
        }
      }
      take(pick == n ? last_positive : pick);
    } else {
      std::vector<std::size_t> free;
      for (std::size_t j = 0; j < n; ++j) {
        if (!taken[j]) free.push_back(j);
      }
      take(free[rng.uniform_index(free.size())]);
    }
  }
  return chosen;
}

namespace {

std::size_t nearest_center(std::span<const double> point, const Matrix& centers, double* dist) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    const double d = squared_distance(point, centers.row(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

double assignment_sse(const Matrix& points, const Matrix& centers,
                      const std::vector<std::size_t>& assignment) {
  double sse = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    sse += squared_distance(points.row(i), centers.row(assignment[i]));
  }
  return sse;
}

// Nearest-center assignment plus repair of empty clusters.
std::vector<std::size_t> assign(const Matrix& points, Matrix& centers) {
  const std::size_t n = points.rows();
  const std::size_t k = centers.rows();
  std::vector<std::size_t> assignment(n);
  std::vector<std::size_t> sizes(k, 0);
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    assignment[i] = nearest_center(points.row(i), centers, &dist[i]);
    ++sizes[assignment[i]];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (sizes[c] != 0) continue;
    std::size_t far = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (sizes[assignment[i]] < 2) continue;
      if (far == n || dist[i] > dist[far]) far = i;
    }
    --sizes[assignment[far]];
    assignment[far] = c;
    sizes[c] = 1;
    dist[far] = 0.0;
    auto src = points.row(far);
    std::copy(src.begin(), src.end(), centers.row(c).begin());
  }
  return assignment;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, std::size_t k, RngStream& rng,
                    std::size_t max_iterations) {
  if (k < 1) throw ValidationError("kmeans: k must be >= 1");
  if (k > points.rows()) {
    throw ValidationError("kmeans: k=" + std::to_string(k) + " exceeds " +
                          std::to_string(points.rows()) + " points");
  }
  KMeansResult res;
  res.centers = gather_rows(points, kmeanspp_seed(points, k, rng));
  res.assignment = assign(points, res.centers);
  res.sse_trace.push_back(assignment_sse(points, res.centers, res.assignment));

  const std::size_t dim = points.cols();
  for (std::size_t it = 0; it < max_iterations; ++it) {
    Matrix sums(k, dim);
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < points.rows(); ++i) {
      auto dst = sums.row(res.assignment[i]);
      auto src = points.row(i);
      for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
      ++sizes[res.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      auto dst = res.centers.row(c);
      auto src = sums.row(c);
      for (std::size_t j = 0; j < dim; ++j) dst[j] = src[j] / static_cast<double>(sizes[c]);
    }
    std::vector<std::size_t> next = assign(points, res.centers);
    res.iterations = it + 1;
    res.sse_trace.push_back(assignment_sse(points, res.centers, next));
    const bool converged = next == res.assignment;
    res.assignment = std::move(next);
    if (converged) break;
  }
  res.sse = res.sse_trace.back();
  return res;
}

// ---- selection -----------------------------------------------------------------------

namespace {

void require_context(const SelectionContext& ctx) {
  if (ctx.pool == nullptr) throw ValidationError("selection: no pool");
  if (ctx.rng == nullptr) throw ValidationError("selection: no rng");
  if (ctx.budget < 1) throw ValidationError("selection: budget must be >= 1");
  if (ctx.budget > ctx.pool->total_unlabeled()) {
    throw ValidationError("selection: budget " + std::to_string(ctx.budget) + " exceeds " +
                          std::to_string(ctx.pool->total_unlabeled()) + " unlabeled items");
  }
}

void require_model(const SelectionContext& ctx) {
  if (ctx.model == nullptr) throw ValidationError("selection: strategy needs a model snapshot");
  if (ctx.model->num_domains() != ctx.pool->num_domains()) {
    throw ValidationError("selection: model and pool disagree on the domain count");
  }
}

std::vector<ItemRef> all_unlabeled(const PoolState& pool) {
  std::vector<ItemRef> out;
  for (std::size_t k = 0; k < pool.num_domains(); ++k) {
    for (std::size_t i : pool.unlabeled(k)) out.push_back({k, i});
  }
  return out;
}

// Items with the `count` highest scores; `items` is in (domain, index) order
// and stable sorting keeps that order among equal scores.
QueryBatch top_scored(const std::vector<ItemRef>& items, const std::vector<double>& scores,
                      std::size_t count) {
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  QueryBatch out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(items[order[i]]);
  std::sort(out.begin(), out.end());
  return out;
}

struct ItemView {
  std::vector<double> probs;
  std::vector<double> features;  // h_s ⊕ h_p
};

ItemView view_item(const AspMtlModel& model, const PoolState& pool, ItemRef item) {
  ItemView v;
  v.features = model.penultimate_features(pool.features(item), item.domain);
  auto h = std::span<const double>(v.features);
  v.probs = model.head_proba(h.first(model.shared_dim()), h.subspan(model.shared_dim()),
                             item.domain);
  return v;
}

std::string item_label(ItemRef item) {
  return std::to_string(item.domain) + "/" + std::to_string(item.index);
}

}  // namespace

QueryBatch random_select(const SelectionContext& ctx) {
  require_context(ctx);
  const PoolState& pool = *ctx.pool;
  const std::vector<std::size_t> budgets = domain_budgets(ctx);
  QueryBatch out;
  for (std::size_t k = 0; k < pool.num_domains(); ++k) {
    std::vector<std::size_t> u = pool.unlabeled(k);
    // partial Fisher-Yates
    for (std::size_t j = 0; j < budgets[k]; ++j) {
      const std::size_t r = j + ctx.rng->uniform_index(u.size() - j);
      std::swap(u[j], u[r]);
      out.push_back({k, u[j]});
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

QueryBatch bvsb_select(const SelectionContext& ctx) {
  require_context(ctx);
  require_model(ctx);
  const auto items = all_unlabeled(*ctx.pool);
  std::vector<double> scores;
  scores.reserve(items.size());
  for (const ItemRef& item : items) {
    scores.push_back(-bvsb_margin(view_item(*ctx.model, *ctx.pool, item).probs));
  }
  return top_scored(items, scores, ctx.budget);
}

QueryBatch egl_select(const SelectionContext& ctx) {
  require_context(ctx);
  require_model(ctx);
  const auto items = all_unlabeled(*ctx.pool);
  std::vector<double> scores;
  scores.reserve(items.size());
  for (const ItemRef& item : items) {
    const ItemView v = view_item(*ctx.model, *ctx.pool, item);
    scores.push_back(egl_score(v.probs, v.features));
  }
  return top_scored(items, scores, ctx.budget);
}

QueryBatch coreset_select(const SelectionContext& ctx) {
  require_context(ctx);
  require_model(ctx);
  const PoolState& pool = *ctx.pool;
  const AspMtlModel& model = *ctx.model;
  if (pool.total_labeled() == 0) throw ValidationError("coreset: needs at least one labeled item");

  const auto items = all_unlabeled(pool);
  std::vector<std::vector<double>> feats;
  feats.reserve(items.size());
  for (const ItemRef& item : items) {
    feats.push_back(model.penultimate_features(pool.features(item), item.domain));
  }
  std::vector<double> min_d2(items.size(), std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < pool.num_domains(); ++k) {
    for (std::size_t i : pool.labeled(k)) {
      const auto h = model.penultimate_features(pool.features({k, i}), k);
      for (std::size_t j = 0; j < items.size(); ++j) {
        min_d2[j] = std::min(min_d2[j], squared_distance(feats[j], h));
      }
    }
  }
  std::vector<char> picked(items.size(), 0);
  QueryBatch out;
  for (std::size_t step = 0; step < ctx.budget; ++step) {
    std::size_t best = items.size();
    for (std::size_t j = 0; j < items.size(); ++j) {
      if (picked[j]) continue;
      if (best == items.size() || min_d2[j] > min_d2[best]) best = j;
    }
    picked[best] = 1;
    out.push_back(items[best]);
    for (std::size_t j = 0; j < items.size(); ++j) {
      min_d2[j] = std::min(min_d2[j], squared_distance(feats[j], feats[best]));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

QueryBatch badge_select(const SelectionContext& ctx) {
  require_context(ctx);
  require_model(ctx);
  const PoolState& pool = *ctx.pool;
  const auto items = all_unlabeled(pool);
  std::vector<std::vector<double>> emb;
  std::size_t width = 0;
  for (const ItemRef& item : items) {
    emb.push_back(ctx.model->gradient_embedding(pool.features(item), item.domain));
    width = std::max(width, emb.back().size());
  }
  // domains with fewer classes are zero-padded to a common width
  Matrix points(items.size(), width);
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::copy(emb[i].begin(), emb[i].end(), points.row(i).begin());
  }
  QueryBatch out;
  for (std::size_t r : kmeanspp_seed(points, ctx.budget, *ctx.rng)) out.push_back(items[r]);
  std::sort(out.begin(), out.end());
  return out;
}

RegionPartition build_regions(const SelectionContext& ctx, std::span<const std::size_t> budgets) {
  require_model(ctx);
  const PoolState& pool = *ctx.pool;
  if (budgets.size() != pool.num_domains()) {
    throw ValidationError("build_regions: one budget per domain required");
  }
  RegionPartition out;
  for (std::size_t k = 0; k < pool.num_domains(); ++k) {
    if (budgets[k] == 0) continue;
    DomainRegions dr;
    dr.domain = k;
    dr.candidates = pool.unlabeled(k);
    const std::size_t width = ctx.model->num_classes(k) * ctx.model->feature_dim();
    dr.embeddings = Matrix(dr.candidates.size(), width);
    for (std::size_t r = 0; r < dr.candidates.size(); ++r) {
      const auto e = ctx.model->gradient_embedding(pool.features({k, dr.candidates[r]}), k);
      std::copy(e.begin(), e.end(), dr.embeddings.row(r).begin());
    }
    RngStream rng = ctx.rng->child("kmeans/" + std::to_string(k));
    KMeansResult km = kmeans(dr.embeddings, budgets[k], rng);
    dr.centers = std::move(km.centers);
    dr.regions.resize(budgets[k]);
    for (std::size_t r = 0; r < km.assignment.size(); ++r) dr.regions[km.assignment[r]].push_back(r);
    out.push_back(std::move(dr));
  }
  return out;
}

namespace {

// Higher is better for every scorer.
double second_stage_score(const SelectionContext& ctx, SecondStageScorer scorer, ItemRef item,
                          std::span<const double> embedding, std::span<const double> center) {
  const AspMtlModel& model = *ctx.model;
  switch (scorer) {
    case SecondStageScorer::kCenter:
      return -squared_distance(embedding, center);
    case SecondStageScorer::kBvsb:
      return -bvsb_margin(view_item(model, *ctx.pool, item).probs);
    case SecondStageScorer::kEgl: {
      const ItemView v = view_item(model, *ctx.pool, item);
      return egl_score(v.probs, v.features);
    }
    case SecondStageScorer::kPerturbation: {
      RngStream rng = ctx.rng->child("perturbation/" + item_label(item));
      return perturbation_score(model, ctx.pool->features(item), item.domain, ctx.params.sigma,
                                ctx.params.perturbation_samples, rng);
    }
  }
  return 0.0;
}

}  // namespace

QueryBatch two_stage_variant_select(const SelectionContext& ctx, SecondStageScorer scorer,
                                    bool region_stage) {
  require_context(ctx);
  require_model(ctx);
  const PoolState& pool = *ctx.pool;
  const std::vector<std::size_t> budgets = domain_budgets(ctx);
  QueryBatch out;

  if (region_stage) {
    for (const DomainRegions& dr : build_regions(ctx, budgets)) {
      for (std::size_t c = 0; c < dr.regions.size(); ++c) {
        std::size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        bool first = true;
        for (std::size_t r : dr.regions[c]) {  // ascending sample index
          const ItemRef item{dr.domain, dr.candidates[r]};
          const double s =
              second_stage_score(ctx, scorer, item, dr.embeddings.row(r), dr.centers.row(c));
          if (first || s > best_score) {
            best = r;
            best_score = s;
            first = false;
          }
        }
        out.push_back({dr.domain, dr.candidates[best]});
      }
    }
  } else {
    for (std::size_t k = 0; k < pool.num_domains(); ++k) {
      if (budgets[k] == 0) continue;
      std::vector<ItemRef> items;
      for (std::size_t i : pool.unlabeled(k)) items.push_back({k, i});
      Matrix emb;
      std::vector<double> centroid;
      if (scorer == SecondStageScorer::kCenter) {
        const std::size_t width = ctx.model->num_classes(k) * ctx.model->feature_dim();
        emb = Matrix(items.size(), width);
        centroid.assign(width, 0.0);
        for (std::size_t r = 0; r < items.size(); ++r) {
          const auto e = ctx.model->gradient_embedding(pool.features(items[r]), k);
          std::copy(e.begin(), e.end(), emb.row(r).begin());
          for (std::size_t j = 0; j < width; ++j) centroid[j] += e[j] / static_cast<double>(items.size());
        }
      }
      std::vector<double> scores;
      for (std::size_t r = 0; r < items.size(); ++r) {
        scores.push_back(scorer == SecondStageScorer::kCenter
                             ? -squared_distance(emb.row(r), centroid)
                             : second_stage_score(ctx, scorer, items[r], {}, {}));
      }
      const QueryBatch part = top_scored(items, scores, budgets[k]);
      out.insert(out.end(), part.begin(), part.end());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

QueryBatch p2s_select(const SelectionContext& ctx) {
  return two_stage_variant_select(ctx, SecondStageScorer::kPerturbation, true);
}

QueryBatch select(StrategyKind kind, const SelectionContext& ctx) {
  require_context(ctx);
  switch (kind) {
    case StrategyKind::kRandom:
      return random_select(ctx);
    case StrategyKind::kBvsb:
      return bvsb_select(ctx);
    case StrategyKind::kEgl:
      return egl_select(ctx);
    case StrategyKind::kCoreset:
      return coreset_select(ctx);
    case StrategyKind::kBadge:
      return badge_select(ctx);
    case StrategyKind::kP2s:
      return p2s_select(ctx);
    case StrategyKind::kTwoStageCenter:
      return two_stage_variant_select(ctx, SecondStageScorer::kCenter, true);
    case StrategyKind::kTwoStageBvsb:
      return two_stage_variant_select(ctx, SecondStageScorer::kBvsb, true);
    case StrategyKind::kTwoStageEgl:
      return two_stage_variant_select(ctx, SecondStageScorer::kEgl, true);
    case StrategyKind::kP2sNoRegion:
      return two_stage_variant_select(ctx, SecondStageScorer::kPerturbation, false);
  }
  throw ValidationError("unknown strategy kind");
}

}  // namespace mdal
