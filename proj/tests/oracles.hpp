// SPDX-License-Identifier: Apache-2.0
// Slow, obviously-correct reference implementations used as test oracles.
#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "mdal/asp_model.hpp"
#include "mdal/matrix.hpp"
#include "mdal/pool.hpp"

namespace mdal::testing {

/// Largest remainder with quotas compared as exact fractions r/N. Each
/// leftover unit goes to the domain with the largest unclaimed remainder,
/// found by a linear scan (lowest id wins ties).
inline std::vector<std::size_t> reference_allocation(const std::vector<std::size_t>& n,
                                                     std::size_t budget) {
  const std::uint64_t total = std::accumulate(n.begin(), n.end(), std::uint64_t{0});
  std::vector<std::size_t> out(n.size());
  std::vector<std::uint64_t> rem(n.size());
  std::size_t given = 0;
  for (std::size_t k = 0; k < n.size(); ++k) {
    const std::uint64_t num = static_cast<std::uint64_t>(budget) * n[k];
    out[k] = static_cast<std::size_t>(num / total);
    rem[k] = num % total;
    given += out[k];
  }
  std::vector<bool> claimed(n.size(), false);
  for (; given < budget; ++given) {
    std::size_t best = n.size();
    for (std::size_t k = 0; k < n.size(); ++k) {
      if (claimed[k]) continue;
      if (best == n.size() || rem[k] > rem[best]) best = k;
    }
    claimed[best] = true;
    ++out[best];
  }
  return out;
}

inline double partition_sse(const Matrix& pts, const std::vector<std::size_t>& label, std::size_t k) {
  Matrix centers(k, pts.cols());
  std::vector<double> count(k, 0.0);
  for (std::size_t i = 0; i < pts.rows(); ++i) {
    for (std::size_t j = 0; j < pts.cols(); ++j) centers(label[i], j) += pts(i, j);
    count[label[i]] += 1.0;
  }
  for (std::size_t c = 0; c < k; ++c) {
    for (double& v : centers.row(c)) v /= count[c];
  }
  double sse = 0.0;
  for (std::size_t i = 0; i < pts.rows(); ++i) sse += squared_distance(pts.row(i), centers.row(label[i]));
  return sse;
}

/// Minimum SSE over every partition of the rows into exactly k non-empty
/// clusters (k^n enumeration; fine for n ≤ 8).
inline double exhaustive_min_sse(const Matrix& pts, std::size_t k) {
  const std::size_t n = pts.rows();
  std::vector<std::size_t> label(n, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    std::vector<bool> used(k, false);
    for (std::size_t l : label) used[l] = true;
    if (std::all_of(used.begin(), used.end(), [](bool b) { return b; })) {
      best = std::min(best, partition_sse(pts, label, k));
    }
    std::size_t pos = 0;
    while (pos < n && ++label[pos] == k) label[pos++] = 0;
    if (pos == n) break;
  }
  return best;
}

/// Greedy k-center: recomputes every candidate's distance to the covered set
/// from scratch at each step; ties go to the earlier candidate.
inline std::vector<std::size_t> brute_farthest_first(const std::vector<std::vector<double>>& labeled,
                                                     const std::vector<std::vector<double>>& candidates,
                                                     std::size_t budget) {
  std::vector<std::size_t> chosen;
  for (std::size_t step = 0; step < budget; ++step) {
    std::size_t best = candidates.size();
    double best_d = -1.0;
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      if (std::find(chosen.begin(), chosen.end(), j) != chosen.end()) continue;
      double d = std::numeric_limits<double>::infinity();
      for (const auto& l : labeled) d = std::min(d, squared_distance(candidates[j], l));
      for (std::size_t c : chosen) d = std::min(d, squared_distance(candidates[j], candidates[c]));
      if (d > best_d) {
        best_d = d;
        best = j;
      }
    }
    chosen.push_back(best);
  }
  return chosen;
}

/// Gradient of the cross-entropy at `label` with respect to C_k's weight,
/// obtained by running the model's own backward pass.
inline Matrix backprop_head_gradient(AspMtlModel& model, std::span<const double> x, std::size_t k,
                                     std::size_t label) {
  model.zero_grad();
  TaskBatch task{k, Matrix::row_vector(x), {label}};
  accumulate_gradients(model, task, nullptr);
  Matrix g = model.classifier(k).weight().grad;
  model.zero_grad();
  return g;
}

}  // namespace mdal::testing
