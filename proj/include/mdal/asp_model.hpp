// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mdal/matrix.hpp"
#include "mdal/nn.hpp"
#include "mdal/rng.hpp"

namespace mdal {

struct ModelConfig {
  std::size_t input_dim = 0;
  std::size_t shared_hidden = 64;
  std::size_t private_hidden = 64;
  /// One entry per domain; its length is the domain count K.
  std::vector<std::size_t> num_classes;
  double lambda_adv = 0.05;
  double lambda_diff = 0.0;
  double lr = 0.01;
  std::size_t batch_size = 8;
  std::size_t epochs_per_round = 30;

  std::size_t num_domains() const noexcept { return num_classes.size(); }
  /// Throws ValidationError naming the offending field.
  void validate() const;
};

/// Shared-private multi-domain classifier.
///
///   shared feature   h_s = relu(S·x + s)            (one per model)
///   private feature  h_p = relu(P_k·x + p_k)        (one per domain)
///   class head       softmax(C_k·[h_s ⊕ h_p] + c_k) (one per domain)
///   discriminator    D·GRL(h_s) + d -> K logits
///
/// All inference entry points are const and safe to call concurrently on a
/// frozen model.
class AspMtlModel {
 public:
  /// Zero-initialized parameters.
  explicit AspMtlModel(ModelConfig config);
  AspMtlModel(ModelConfig config, RngStream& init_rng);

  void reinitialize(RngStream& init_rng);

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t num_domains() const noexcept { return config_.num_domains(); }
  std::size_t input_dim() const noexcept { return config_.input_dim; }
  std::size_t shared_dim() const noexcept { return config_.shared_hidden; }
  std::size_t private_dim() const noexcept { return config_.private_hidden; }
  std::size_t feature_dim() const noexcept { return shared_dim() + private_dim(); }
  std::size_t num_classes(std::size_t domain) const;

  std::vector<double> forward(std::span<const double> x, std::size_t domain) const;
  /// Class probabilities with `delta` added to the shared feature only.
  std::vector<double> forward_perturbed(std::span<const double> x, std::size_t domain,
                                        std::span<const double> delta) const;
  Matrix predict_proba_batch(const Matrix& x, std::size_t domain) const;

  std::vector<double> shared_features(std::span<const double> x) const;
  std::vector<double> private_features(std::span<const double> x, std::size_t domain) const;
  /// h_s ⊕ h_p.
  std::vector<double> penultimate_features(std::span<const double> x, std::size_t domain) const;
  Matrix penultimate_features_batch(const Matrix& x, std::size_t domain) const;
  /// Class probabilities from precomputed features (perturbation goes into `shared`).
  std::vector<double> head_proba(std::span<const double> shared, std::span<const double> priv,
                                 std::size_t domain) const;

  /// Last-layer cross-entropy gradient at the pseudo-label argmax p, flattened
  /// row-major as (classes × feature_dim): E = (p − onehot(ŷ)) ⊗ h.
  std::vector<double> gradient_embedding(std::span<const double> x, std::size_t domain) const;

  Linear& shared_extractor() noexcept { return shared_; }
  Linear& private_extractor(std::size_t domain);
  Linear& classifier(std::size_t domain);
  Linear& discriminator() noexcept { return discriminator_; }
  const Linear& shared_extractor() const noexcept { return shared_; }
  const Linear& private_extractor(std::size_t domain) const;
  const Linear& classifier(std::size_t domain) const;
  const Linear& discriminator() const noexcept { return discriminator_; }

  /// Stable ordering: shared, privates, classifiers, discriminator (W then b).
  std::vector<Param*> parameters();
  std::vector<const Param*> parameters() const;
  std::vector<std::string> parameter_names() const;
  void zero_grad();

 private:
  void check_domain(std::size_t domain) const;
  void check_input(std::span<const double> x) const;

  ModelConfig config_;
  Linear shared_;
  std::vector<Linear> private_;
  std::vector<Linear> classifiers_;
  Linear discriminator_;
};

// ---- training ---------------------------------------------------------------

/// Supervised mini-batch from one domain.
struct TaskBatch {
  std::size_t domain = 0;
  Matrix x;
  std::vector<std::size_t> labels;
};

/// Unlabeled mini-batch from any domain; targets are domain ids.
struct AdversarialBatch {
  Matrix x;
  std::vector<std::size_t> domains;
};

/// Unweighted loss terms of one step.
struct LossTerms {
  double supervised = 0.0;
  double adversarial = 0.0;
  double diff = 0.0;
};

/// Loss terms without touching gradients.
LossTerms compute_losses(const AspMtlModel& model, const TaskBatch& task,
                         const AdversarialBatch* adversarial);

/// Accumulates into the parameter grads the update direction of
///   supervised + λ_adv·adversarial + λ_diff·diff,
/// where the adversarial term reaches the shared extractor through gradient
/// reversal. Returns the unweighted loss terms.
LossTerms accumulate_gradients(AspMtlModel& model, const TaskBatch& task,
                               const AdversarialBatch* adversarial);

/// A domain's pool as seen by the trainer.
struct DomainView {
  const Matrix* features = nullptr;         // every pool item of the domain
  std::span<const std::size_t> labels;      // labels aligned with `features`
  std::span<const std::size_t> labeled;     // indices currently labeled
};

struct EpochLoss {
  double supervised = 0.0;
  double adversarial = 0.0;
  double diff = 0.0;
};

struct TrainingLog {
  std::vector<EpochLoss> epochs;
};

/// Runs config().epochs_per_round epochs of plain SGD. Each step pairs a
/// task batch from the round-robin domain with an adversarial batch drawn
/// uniformly over all pools. An epoch is max(⌈|L|/batch_size⌉, K) steps so
/// every domain is visited at least once.
TrainingLog train_round(AspMtlModel& model, std::span<const DomainView> domains, RngStream& rng);

// ---- evaluation ---------------------------------------------------------------

struct LabeledSet {
  const Matrix* features = nullptr;
  std::span<const std::size_t> labels;
};

struct Evaluation {
  std::vector<double> per_domain;
  double macro = 0.0;
};

Evaluation evaluate(const AspMtlModel& model, std::span<const LabeledSet> test_sets);

// ---- checkpoints ----------------------------------------------------------------

/// Text format, see docs/checkpoint.md. Values are hex floats, so a save/load
/// round trip is bit-exact.
void save_checkpoint(const AspMtlModel& model, std::ostream& out);
AspMtlModel load_checkpoint(std::istream& in);

}  // namespace mdal
