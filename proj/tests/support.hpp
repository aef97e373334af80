// SPDX-License-Identifier: Apache-2.0
// Shared fixtures and numeric helpers for the test suites.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mdal/asp_model.hpp"
#include "mdal/data_io.hpp"
#include "mdal/matrix.hpp"
#include "mdal/pool.hpp"
#include "mdal/rng.hpp"

namespace mdal::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, RngStream& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal(0.0, scale);
  return m;
}

inline std::vector<double> random_vector(std::size_t n, RngStream& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal(0.0, scale);
  return v;
}

/// Random point on the probability simplex with every entry > 0.
inline std::vector<double> random_simplex(std::size_t n, RngStream& rng) {
  std::vector<double> p(n);
  double total = 0.0;
  for (double& v : p) {
    v = -std::log(1.0 - rng.uniform01()) + 1e-6;
    total += v;
  }
  for (double& v : p) v /= total;
  return p;
}

/// |a − b| relative to the larger magnitude, with an absolute floor so that
/// derivatives that are zero analytically are compared on an absolute scale.
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central difference of `f` with respect to the scalar `x`, restored afterwards.
inline double central_diff(const std::function<double()>& f, double& x, double h = 1e-5) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

struct SmallModelShape {
  std::size_t input_dim = 3;
  std::size_t shared = 4;
  std::size_t priv = 3;
  std::vector<std::size_t> classes{2, 3};
};

inline SmallModelShape random_shape(RngStream& rng, std::size_t max_dim = 8) {
  SmallModelShape s;
  s.input_dim = 1 + rng.uniform_index(max_dim);
  s.shared = 1 + rng.uniform_index(max_dim);
  s.priv = 1 + rng.uniform_index(max_dim);
  const std::size_t domains = 1 + rng.uniform_index(3);
  s.classes.clear();
  for (std::size_t k = 0; k < domains; ++k) s.classes.push_back(2 + rng.uniform_index(3));
  return s;
}

/// Glorot-initialized model with small random biases so no unit starts dead.
inline AspMtlModel random_model(const SmallModelShape& s, RngStream& rng, double lambda_adv = 0.05,
                                double lambda_diff = 0.0) {
  ModelConfig c;
  c.input_dim = s.input_dim;
  c.shared_hidden = s.shared;
  c.private_hidden = s.priv;
  c.num_classes = s.classes;
  c.lambda_adv = lambda_adv;
  c.lambda_diff = lambda_diff;
  AspMtlModel m(c, rng);
  for (Param* p : m.parameters()) {
    if (p->value.rows() == 1) {
      for (double& v : p->value.data()) v = rng.normal(0.0, 0.3);
    }
  }
  return m;
}

/// K domains of Gaussian blobs; item labels are uniform over the classes.
inline std::vector<DomainDataset> random_domains(RngStream& rng, std::size_t domains,
                                                 std::size_t per_domain, std::size_t dim,
                                                 std::size_t classes = 2) {
  std::vector<DomainDataset> out;
  for (std::size_t k = 0; k < domains; ++k) {
    DomainDataset d;
    d.name = "d" + std::to_string(k);
    d.domain = k;
    d.num_classes = classes;
    d.features = random_matrix(per_domain, dim, rng);
    for (std::size_t i = 0; i < per_domain; ++i) d.labels.push_back(rng.uniform_index(classes));
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace mdal::testing
