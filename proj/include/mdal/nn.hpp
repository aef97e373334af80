// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdal/matrix.hpp"
#include "mdal/rng.hpp"

namespace mdal {

/// Trainable tensor with its gradient accumulator.
struct Param {
  Matrix value;
  Matrix grad;

  Param() = default;
  explicit Param(Matrix v) : value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(0.0); }
};

/// Input remembered by a forward pass for the matching backward pass.
struct ForwardInput {
  std::optional<Matrix> input;
};

/// Fully connected layer `Y = X·Wᵀ + b`; W is (out × in), b is (1 × out).
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in_dim, std::size_t out_dim);
  Linear(Matrix weight, Matrix bias);

  /// Glorot-uniform weights, zero bias.
  void init(RngStream& rng);

  std::size_t in_dim() const noexcept { return weight_.value.cols(); }
  std::size_t out_dim() const noexcept { return weight_.value.rows(); }

  Matrix forward(const Matrix& x, ForwardInput* cache = nullptr) const;
  /// Accumulates dW = dYᵀ·X and db = colsum(dY); returns dX = dY·W.
  Matrix backward(const ForwardInput& cache, const Matrix& dy);

  Param& weight() noexcept { return weight_; }
  Param& bias() noexcept { return bias_; }
  const Param& weight() const noexcept { return weight_; }
  const Param& bias() const noexcept { return bias_; }

 private:
  Param weight_;
  Param bias_;
};

Matrix relu(const Matrix& x);
/// `pre_activation` is the ReLU input; the subgradient at 0 is 0.
Matrix relu_backward(const Matrix& pre_activation, const Matrix& dy);

struct SoftmaxXent {
  double loss = 0.0;
  Matrix d_logits;
  Matrix probs;
};

/// Row-wise max-shifted softmax.
Matrix softmax_rows(const Matrix& logits);
std::vector<double> softmax(std::span<const double> logits);

/// Mean negative log-likelihood over the batch, its logit gradient and the
/// probabilities.
SoftmaxXent softmax_cross_entropy(const Matrix& logits, std::span<const std::size_t> labels);

/// Identity forward.
inline Matrix grad_reversal_forward(const Matrix& x) { return x; }
/// dX = −λ·dY.
Matrix grad_reversal_backward(const Matrix& dy, double lambda);

/// value ← value − lr·grad, then zero the grads. Throws NumericError before
/// touching anything if a gradient is not finite.
void sgd_step(std::span<Param* const> params, double lr);

/// Probability floor applied to both arguments of kl_divergence.
inline constexpr double kProbFloor = 1e-12;

/// Σ P·ln(P/Q) with both sides clamped to kProbFloor; never negative.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// `dim` i.i.d. draws from N(0, σ²).
std::vector<double> gaussian_sample(double sigma, std::size_t dim, RngStream& rng);

}  // namespace mdal
