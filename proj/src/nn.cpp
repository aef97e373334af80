// SPDX-License-Identifier: Apache-2.0
#include "mdal/nn.hpp"

#include <algorithm>
#include <cmath>

#include "mdal/errors.hpp"

namespace mdal {

Linear::Linear(std::size_t in_dim, std::size_t out_dim)
    : weight_(Matrix(out_dim, in_dim)), bias_(Matrix(1, out_dim)) {}

Linear::Linear(Matrix weight, Matrix bias) : weight_(std::move(weight)), bias_(std::move(bias)) {
  if (bias_.value.rows() != 1 || bias_.value.cols() != weight_.value.rows()) {
    throw ShapeError("Linear: bias " + bias_.value.shape_string() + " does not match weight " +
                     weight_.value.shape_string());
  }
}

void Linear::init(RngStream& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in_dim() + out_dim()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& w : weight_.value.data()) w = dist(rng.engine());
  bias_.value.fill(0.0);
  weight_.zero_grad();
  bias_.zero_grad();
}

Matrix Linear::forward(const Matrix& x, ForwardInput* cache) const {
  if (x.cols() != in_dim()) {
    throw ShapeError("linear_forward: input " + x.shape_string() + " vs weight " +
                     weight_.value.shape_string());
  }
  Matrix y = matmul_transposed(x, weight_.value);
  auto b = bias_.value.row(0);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
  }
  if (cache) cache->input = x;
  return y;
}

Matrix Linear::backward(const ForwardInput& cache, const Matrix& dy) {
  if (!cache.input) throw UsageError("linear_backward called before linear_forward");
  const Matrix& x = *cache.input;
  if (dy.rows() != x.rows() || dy.cols() != out_dim()) {
    throw ShapeError("linear_backward: upstream " + dy.shape_string() + " vs expected [" +
                     std::to_string(x.rows()) + "x" + std::to_string(out_dim()) + "]");
  }
  Matrix dw = transposed_matmul(dy, x);
  auto& gw = weight_.grad.storage();
  for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += dw.storage()[i];
  auto gb = bias_.grad.row(0);
  for (std::size_t i = 0; i < dy.rows(); ++i) {
    auto r = dy.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) gb[j] += r[j];
  }
  return matmul(dy, weight_.value);
}

Matrix relu(const Matrix& x) {
  Matrix y = x;
  for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
  return y;
}

Matrix relu_backward(const Matrix& pre_activation, const Matrix& dy) {
  if (pre_activation.rows() != dy.rows() || pre_activation.cols() != dy.cols()) {
    throw ShapeError("relu_backward: cache " + pre_activation.shape_string() + " vs upstream " +
                     dy.shape_string());
  }
  Matrix dx = dy;
  auto x = pre_activation.data();
  auto d = dx.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(x[i] > 0.0)) d[i] = 0.0;
  }
  return dx;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto p = softmax(logits.row(i));
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return out;
}

SoftmaxXent softmax_cross_entropy(const Matrix& logits, std::span<const std::size_t> labels) {
  if (labels.size() != logits.rows()) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + logits.shape_string());
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= logits.cols()) {
      throw ValidationError("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                            " out of range [0, " + std::to_string(logits.cols()) + ")");
    }
  }
  SoftmaxXent out;
  out.probs = softmax_rows(logits);
  out.d_logits = out.probs;
  const double n = static_cast<double>(std::max<std::size_t>(labels.size(), 1));
  double nll = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto row = logits.row(i);
    // log-softmax directly from logits keeps tiny probabilities exact
    const double mx = *std::max_element(row.begin(), row.end());
    double lse = 0.0;
    for (double v : row) lse += std::exp(v - mx);
    nll -= row[labels[i]] - mx - std::log(lse);
    out.d_logits(i, labels[i]) -= 1.0;
  }
  for (double& g : out.d_logits.data()) g /= n;
  out.loss = nll / n;
  return out;
}

Matrix grad_reversal_backward(const Matrix& dy, double lambda) {
  if (lambda < 0.0) throw ValidationError("grad_reversal: lambda must be non-negative");
  Matrix dx = dy;
  for (double& v : dx.data()) v = lambda == 0.0 ? 0.0 : -lambda * v;
  return dx;
}

void sgd_step(std::span<Param* const> params, double lr) {
  if (!(lr > 0.0)) throw ValidationError("sgd_step: learning rate must be positive");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->grad.all_finite()) {
      throw NumericError("sgd_step: non-finite gradient in parameter #" + std::to_string(i) +
                         " " + params[i]->grad.shape_string());
    }
  }
  for (Param* p : params) {
    auto v = p->value.data();
    auto g = p->grad.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    p->zero_grad();
  }
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw ValidationError("kl_divergence: length mismatch " + std::to_string(p.size()) + " vs " +
                          std::to_string(q.size()));
  }
  double sp = 0.0;
  double sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) throw ValidationError("kl_divergence: negative probability");
    sp += p[i];
    sq += q[i];
  }
  if (std::abs(sp - 1.0) > 1e-6 || std::abs(sq - 1.0) > 1e-6) {
    throw ValidationError("kl_divergence: inputs must each sum to 1 within 1e-6");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = std::max(p[i], kProbFloor);
    const double qi = std::max(q[i], kProbFloor);
    kl += pi * std::log(pi / qi);
  }
  return kl > 0.0 ? kl : 0.0;
}

std::vector<double> gaussian_sample(double sigma, std::size_t dim, RngStream& rng) {
  if (!(sigma > 0.0)) throw ValidationError("gaussian_sample: sigma must be positive");
  if (dim == 0) throw ValidationError("gaussian_sample: dim must be at least 1");
  std::normal_distribution<double> dist(0.0, sigma);
  std::vector<double> out(dim);
  for (double& v : out) v = dist(rng.engine());
  return out;
}

}  // namespace mdal
