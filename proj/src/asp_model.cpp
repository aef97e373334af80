// SPDX-License-Identifier: Apache-2.0
#include "mdal/asp_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mdal/errors.hpp"

namespace mdal {

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ValidationError("model." + field + ": " + why);
  };
  if (input_dim < 1) fail("input_dim", "must be >= 1");
  if (shared_hidden < 1) fail("shared_hidden", "must be >= 1");
  if (private_hidden < 1) fail("private_hidden", "must be >= 1");
  if (num_classes.empty()) fail("num_classes", "need at least one domain");
  for (std::size_t c : num_classes) {
    if (c < 2) fail("num_classes", "every domain needs at least 2 classes");
  }
  if (!(lambda_adv >= 0.0)) fail("lambda_adv", "must be >= 0");
  if (!(lambda_diff >= 0.0)) fail("lambda_diff", "must be >= 0");
  if (!(lr > 0.0)) fail("lr", "must be > 0");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
}

AspMtlModel::AspMtlModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::size_t k = num_domains();
  shared_ = Linear(input_dim(), shared_dim());
  private_.reserve(k);
  classifiers_.reserve(k);
  for (std::size_t d = 0; d < k; ++d) {
    private_.emplace_back(input_dim(), private_dim());
    classifiers_.emplace_back(feature_dim(), config_.num_classes[d]);
  }
  discriminator_ = Linear(shared_dim(), k);
}

AspMtlModel::AspMtlModel(ModelConfig config, RngStream& init_rng) : AspMtlModel(std::move(config)) {
  reinitialize(init_rng);
}

void AspMtlModel::reinitialize(RngStream& init_rng) {
  shared_.init(init_rng);
  for (auto& p : private_) p.init(init_rng);
  for (auto& c : classifiers_) c.init(init_rng);
  discriminator_.init(init_rng);
}

std::size_t AspMtlModel::num_classes(std::size_t domain) const {
  check_domain(domain);
  return config_.num_classes[domain];
}

void AspMtlModel::check_domain(std::size_t domain) const {
  if (domain >= num_domains()) {
    throw ValidationError("domain id " + std::to_string(domain) + " out of range [0, " +
                          std::to_string(num_domains()) + ")");
  }
}

void AspMtlModel::check_input(std::span<const double> x) const {
  if (x.size() != input_dim()) {
    throw ShapeError("input has " + std::to_string(x.size()) + " features, model expects " +
                     std::to_string(input_dim()));
  }
}

Linear& AspMtlModel::private_extractor(std::size_t domain) {
  check_domain(domain);
  return private_[domain];
}
const Linear& AspMtlModel::private_extractor(std::size_t domain) const {
  check_domain(domain);
  return private_[domain];
}
Linear& AspMtlModel::classifier(std::size_t domain) {
  check_domain(domain);
  return classifiers_[domain];
}
const Linear& AspMtlModel::classifier(std::size_t domain) const {
  check_domain(domain);
  return classifiers_[domain];
}

namespace {

// relu(W·x + b) for a single vector
std::vector<double> dense_relu(const Linear& layer, std::span<const double> x) {
  const Matrix& w = layer.weight().value;
  auto b = layer.bias().value.row(0);
  std::vector<double> out(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double v = dot(w.row(i), x) + b[i];
    out[i] = v > 0.0 ? v : 0.0;
  }
  return out;
}

}  // namespace

std::vector<double> AspMtlModel::shared_features(std::span<const double> x) const {
  check_input(x);
  return dense_relu(shared_, x);
}

std::vector<double> AspMtlModel::private_features(std::span<const double> x,
                                                  std::size_t domain) const {
  check_domain(domain);
  check_input(x);
  return dense_relu(private_[domain], x);
}

std::vector<double> AspMtlModel::penultimate_features(std::span<const double> x,
                                                      std::size_t domain) const {
  std::vector<double> h = shared_features(x);
  std::vector<double> p = private_features(x, domain);
  h.insert(h.end(), p.begin(), p.end());
  return h;
}

std::vector<double> AspMtlModel::head_proba(std::span<const double> shared,
                                            std::span<const double> priv,
                                            std::size_t domain) const {
  check_domain(domain);
  if (shared.size() != shared_dim() || priv.size() != private_dim()) {
    throw ShapeError("head_proba: feature sizes " + std::to_string(shared.size()) + "+" +
                     std::to_string(priv.size()) + " vs expected " + std::to_string(shared_dim()) +
                     "+" + std::to_string(private_dim()));
  }
  const Linear& head = classifiers_[domain];
  const Matrix& w = head.weight().value;
  auto b = head.bias().value.row(0);
  std::vector<double> logits(w.rows());
  for (std::size_t c = 0; c < w.rows(); ++c) {
    auto row = w.row(c);
    logits[c] = dot(row.first(shared_dim()), shared) + dot(row.subspan(shared_dim()), priv) + b[c];
  }
  return softmax(logits);
}

std::vector<double> AspMtlModel::forward(std::span<const double> x, std::size_t domain) const {
  check_domain(domain);
  return head_proba(shared_features(x), private_features(x, domain), domain);
}

std::vector<double> AspMtlModel::forward_perturbed(std::span<const double> x, std::size_t domain,
                                                   std::span<const double> delta) const {
  check_domain(domain);
  if (delta.size() != shared_dim()) {
    throw ValidationError("forward_perturbed: perturbation has " + std::to_string(delta.size()) +
                          " entries, shared feature has " + std::to_string(shared_dim()));
  }
  std::vector<double> hs = shared_features(x);
  for (std::size_t i = 0; i < hs.size(); ++i) hs[i] += delta[i];
  return head_proba(hs, private_features(x, domain), domain);
}

Matrix AspMtlModel::penultimate_features_batch(const Matrix& x, std::size_t domain) const {
  check_domain(domain);
  return hconcat(relu(shared_.forward(x)), relu(private_[domain].forward(x)));
}

Matrix AspMtlModel::predict_proba_batch(const Matrix& x, std::size_t domain) const {
  return softmax_rows(classifiers_[domain].forward(penultimate_features_batch(x, domain)));
}

std::vector<double> AspMtlModel::gradient_embedding(std::span<const double> x,
                                                    std::size_t domain) const {
  const std::vector<double> h = penultimate_features(x, domain);
  const std::vector<double> p =
      head_proba(std::span(h).first(shared_dim()), std::span(h).subspan(shared_dim()), domain);
  const auto yhat = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  std::vector<double> e(p.size() * h.size());
  for (std::size_t c = 0; c < p.size(); ++c) {
    const double r = p[c] - (c == yhat ? 1.0 : 0.0);
    for (std::size_t j = 0; j < h.size(); ++j) e[c * h.size() + j] = r * h[j];
  }
  return e;
}

std::vector<Param*> AspMtlModel::parameters() {
  std::vector<Param*> out{&shared_.weight(), &shared_.bias()};
  for (auto& p : private_) {
    out.push_back(&p.weight());
    out.push_back(&p.bias());
  }
  for (auto& c : classifiers_) {
    out.push_back(&c.weight());
    out.push_back(&c.bias());
  }
  out.push_back(&discriminator_.weight());
  out.push_back(&discriminator_.bias());
  return out;
}

std::vector<const Param*> AspMtlModel::parameters() const {
  auto mut = const_cast<AspMtlModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> AspMtlModel::parameter_names() const {
  std::vector<std::string> out{"shared.weight", "shared.bias"};
  for (std::size_t k = 0; k < num_domains(); ++k) {
    out.push_back("private." + std::to_string(k) + ".weight");
    out.push_back("private." + std::to_string(k) + ".bias");
  }
  for (std::size_t k = 0; k < num_domains(); ++k) {
    out.push_back("classifier." + std::to_string(k) + ".weight");
    out.push_back("classifier." + std::to_string(k) + ".bias");
  }
  out.push_back("discriminator.weight");
  out.push_back("discriminator.bias");
  return out;
}

void AspMtlModel::zero_grad() {
  for (Param* p : parameters()) p->zero_grad();
}

// ---- training -----------------------------------------------------------------

namespace {

struct TaskForward {
  ForwardInput shared_in, private_in, head_in;
  Matrix shared_pre, private_pre;
  Matrix hs, hp;
  SoftmaxXent xent;
};

TaskForward task_forward(const AspMtlModel& model, const TaskBatch& task, bool keep_cache) {
  if (task.x.rows() == 0) throw ValidationError("task batch is empty");
  TaskForward f;
  const Linear& head = model.classifier(task.domain);
  f.shared_pre = model.shared_extractor().forward(task.x, keep_cache ? &f.shared_in : nullptr);
  f.private_pre =
      model.private_extractor(task.domain).forward(task.x, keep_cache ? &f.private_in : nullptr);
  f.hs = relu(f.shared_pre);
  f.hp = relu(f.private_pre);
  Matrix logits = head.forward(hconcat(f.hs, f.hp), keep_cache ? &f.head_in : nullptr);
  f.xent = softmax_cross_entropy(logits, task.labels);
  return f;
}

struct AdvForward {
  ForwardInput shared_in, disc_in;
  Matrix shared_pre;
  SoftmaxXent xent;
};

AdvForward adversarial_forward(const AspMtlModel& model, const AdversarialBatch& adv,
                               bool keep_cache) {
  AdvForward f;
  f.shared_pre = model.shared_extractor().forward(adv.x, keep_cache ? &f.shared_in : nullptr);
  Matrix h = grad_reversal_forward(relu(f.shared_pre));
  Matrix logits = model.discriminator().forward(h, keep_cache ? &f.disc_in : nullptr);
  f.xent = softmax_cross_entropy(logits, adv.domains);
  return f;
}

double frobenius_sq(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return s;
}

bool has_adversarial(const AdversarialBatch* adv) { return adv != nullptr && adv->x.rows() > 0; }

}  // namespace

LossTerms compute_losses(const AspMtlModel& model, const TaskBatch& task,
                         const AdversarialBatch* adversarial) {
  LossTerms out;
  TaskForward t = task_forward(model, task, false);
  out.supervised = t.xent.loss;
  out.diff = frobenius_sq(transposed_matmul(t.hs, t.hp));
  if (has_adversarial(adversarial)) {
    out.adversarial = adversarial_forward(model, *adversarial, false).xent.loss;
  }
  return out;
}

LossTerms accumulate_gradients(AspMtlModel& model, const TaskBatch& task,
                               const AdversarialBatch* adversarial) {
  const ModelConfig& cfg = model.config();
  LossTerms out;

  TaskForward t = task_forward(model, task, true);
  out.supervised = t.xent.loss;
  const Matrix cross = transposed_matmul(t.hs, t.hp);  // H_sᵀ·H_p
  out.diff = frobenius_sq(cross);

  Matrix dh = model.classifier(task.domain).backward(t.head_in, t.xent.d_logits);
  Matrix dhs = column_slice(dh, 0, model.shared_dim());
  Matrix dhp = column_slice(dh, model.shared_dim(), model.private_dim());
  if (cfg.lambda_diff > 0.0) {
    // d‖M‖²/dH_s = 2·H_p·Mᵀ, d‖M‖²/dH_p = 2·H_s·M
    Matrix gs = matmul_transposed(t.hp, cross);
    Matrix gp = matmul(t.hs, cross);
    const double scale = 2.0 * cfg.lambda_diff;
    for (std::size_t i = 0; i < dhs.size(); ++i) dhs.data()[i] += scale * gs.data()[i];
    for (std::size_t i = 0; i < dhp.size(); ++i) dhp.data()[i] += scale * gp.data()[i];
  }
  model.shared_extractor().backward(t.shared_in, relu_backward(t.shared_pre, dhs));
  model.private_extractor(task.domain).backward(t.private_in, relu_backward(t.private_pre, dhp));

  if (has_adversarial(adversarial)) {
    AdvForward a = adversarial_forward(model, *adversarial, true);
    out.adversarial = a.xent.loss;
    Matrix d_logits = a.xent.d_logits;
    for (double& v : d_logits.data()) v *= cfg.lambda_adv;
    Matrix dh_rev = model.discriminator().backward(a.disc_in, d_logits);
    Matrix dh_shared = grad_reversal_backward(dh_rev, 1.0);
    model.shared_extractor().backward(a.shared_in, relu_backward(a.shared_pre, dh_shared));
  }
  return out;
}

namespace {

// Cycles through a shuffled copy of the labeled indices, reshuffling on wrap.
class BatchCursor {
 public:
  BatchCursor(std::span<const std::size_t> items, RngStream& rng)
      : order_(items.begin(), items.end()) {
    rng.shuffle(order_.begin(), order_.end());
  }

  std::vector<std::size_t> next(std::size_t n, RngStream& rng) {
    n = std::min(n, order_.size());
    std::vector<std::size_t> out;
    out.reserve(n);
    while (out.size() < n) {
      if (pos_ == order_.size()) {
        rng.shuffle(order_.begin(), order_.end());
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace

TrainingLog train_round(AspMtlModel& model, std::span<const DomainView> domains, RngStream& rng) {
  const ModelConfig& cfg = model.config();
  if (domains.size() != model.num_domains()) {
    throw ValidationError("train_round: got " + std::to_string(domains.size()) +
                          " domains, model has " + std::to_string(model.num_domains()));
  }
  std::size_t total_labeled = 0;
  std::vector<std::size_t> pool_offsets{0};
  for (std::size_t k = 0; k < domains.size(); ++k) {
    const DomainView& d = domains[k];
    if (d.features == nullptr || d.features->rows() == 0) {
      throw ValidationError("train_round: domain " + std::to_string(k) + " has an empty pool");
    }
    if (d.labeled.empty()) {
      throw ValidationError("train_round: domain " + std::to_string(k) + " has no labeled items");
    }
    if (d.labels.size() != d.features->rows()) {
      throw ShapeError("train_round: domain " + std::to_string(k) + " label/feature count mismatch");
    }
    total_labeled += d.labeled.size();
    pool_offsets.push_back(pool_offsets.back() + d.features->rows());
  }
  const std::size_t pool_total = pool_offsets.back();

  std::vector<BatchCursor> cursors;
  cursors.reserve(domains.size());
  for (const DomainView& d : domains) cursors.emplace_back(d.labeled, rng);

  const std::size_t steps = std::max<std::size_t>(
      (total_labeled + cfg.batch_size - 1) / cfg.batch_size, domains.size());
  auto params = model.parameters();
  model.zero_grad();

  TrainingLog log;
  std::size_t step_counter = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs_per_round; ++epoch) {
    EpochLoss sum;
    for (std::size_t s = 0; s < steps; ++s, ++step_counter) {
      const std::size_t k = step_counter % domains.size();
      const DomainView& d = domains[k];
      TaskBatch task;
      task.domain = k;
      const auto picked = cursors[k].next(cfg.batch_size, rng);
      task.x = gather_rows(*d.features, picked);
      task.labels.reserve(picked.size());
      for (std::size_t i : picked) task.labels.push_back(d.labels[i]);

      AdversarialBatch adv;
      adv.x = Matrix(cfg.batch_size, model.input_dim());
      adv.domains.resize(cfg.batch_size);
      for (std::size_t i = 0; i < cfg.batch_size; ++i) {
        const std::size_t flat = rng.uniform_index(pool_total);
        const auto it = std::upper_bound(pool_offsets.begin(), pool_offsets.end(), flat);
        const auto dom = static_cast<std::size_t>(it - pool_offsets.begin()) - 1;
        auto src = domains[dom].features->row(flat - pool_offsets[dom]);
        std::copy(src.begin(), src.end(), adv.x.row(i).begin());
        adv.domains[i] = dom;
      }

      const LossTerms terms = accumulate_gradients(model, task, &adv);
      if (!std::isfinite(terms.supervised) || !std::isfinite(terms.adversarial) ||
          !std::isfinite(terms.diff)) {
        std::ostringstream msg;
        msg << "train_round: non-finite loss at epoch " << epoch << " step " << s << " (domain "
            << k << "): supervised=" << terms.supervised << " adversarial=" << terms.adversarial
            << " diff=" << terms.diff;
        throw NumericError(msg.str());
      }
      sgd_step(params, cfg.lr);
      sum.supervised += terms.supervised;
      sum.adversarial += terms.adversarial;
      sum.diff += terms.diff;
    }
    const double n = static_cast<double>(steps);
    log.epochs.push_back({sum.supervised / n, sum.adversarial / n, sum.diff / n});
  }
  return log;
}

// ---- evaluation ---------------------------------------------------------------

Evaluation evaluate(const AspMtlModel& model, std::span<const LabeledSet> test_sets) {
  if (test_sets.size() != model.num_domains()) {
    throw ValidationError("evaluate: got " + std::to_string(test_sets.size()) +
                          " test sets for " + std::to_string(model.num_domains()) + " domains");
  }
  Evaluation out;
  for (std::size_t k = 0; k < test_sets.size(); ++k) {
    const LabeledSet& set = test_sets[k];
    if (set.features == nullptr || set.features->rows() == 0) {
      throw ValidationError("evaluate: test set of domain " + std::to_string(k) + " is empty");
    }
    if (set.labels.size() != set.features->rows()) {
      throw ShapeError("evaluate: domain " + std::to_string(k) + " label/feature count mismatch");
    }
    const Matrix probs = model.predict_proba_batch(*set.features, k);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < probs.rows(); ++i) {
      auto row = probs.row(i);
      const auto pred = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (pred == set.labels[i]) ++correct;
    }
    out.per_domain.push_back(static_cast<double>(correct) / static_cast<double>(probs.rows()));
  }
  out.macro = std::accumulate(out.per_domain.begin(), out.per_domain.end(), 0.0) /
              static_cast<double>(out.per_domain.size());
  return out;
}

// ---- checkpoints ------------------------------------------------------------------

namespace {

constexpr const char* kCheckpointMagic = "MDAL-CHECKPOINT";
constexpr int kCheckpointVersion = 1;

std::string hex_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::hex);
  return std::string(buf, res.ptr);
}

double parse_hex_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v, std::chars_format::hex);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError("checkpoint: bad value '" + s + "'");
  }
  return v;
}

}  // namespace

void save_checkpoint(const AspMtlModel& model, std::ostream& out) {
  const ModelConfig& c = model.config();
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "input_dim " << c.input_dim << '\n';
  out << "shared_hidden " << c.shared_hidden << '\n';
  out << "private_hidden " << c.private_hidden << '\n';
  out << "num_classes " << c.num_classes.size();
  for (std::size_t n : c.num_classes) out << ' ' << n;
  out << '\n';
  out << "lambda_adv " << hex_double(c.lambda_adv) << '\n';
  out << "lambda_diff " << hex_double(c.lambda_diff) << '\n';
  out << "lr " << hex_double(c.lr) << '\n';
  out << "batch_size " << c.batch_size << '\n';
  out << "epochs_per_round " << c.epochs_per_round << '\n';
  const auto params = model.parameters();
  const auto names = model.parameter_names();
  out << "params " << params.size() << '\n';
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& m = params[i]->value;
    out << names[i] << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t col = 0; col < m.cols(); ++col) {
        if (col) out << ' ';
        out << hex_double(m(r, col));
      }
      out << '\n';
    }
  }
}

AspMtlModel load_checkpoint(std::istream& in) {
  auto expect_key = [&in](const char* key) {
    std::string k;
    if (!(in >> k) || k != key) {
      throw ValidationError(std::string("checkpoint: expected '") + key + "', found '" + k + "'");
    }
  };
  auto read_size = [&in](const char* key) {
    std::size_t v = 0;
    if (!(in >> v)) throw ValidationError(std::string("checkpoint: bad integer for ") + key);
    return v;
  };
  auto read_real = [&in]() {
    std::string s;
    if (!(in >> s)) throw ValidationError("checkpoint: truncated");
    return parse_hex_double(s);
  };

  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kCheckpointMagic) {
    throw ValidationError("checkpoint: missing header");
  }
  if (version != kCheckpointVersion) {
    throw ValidationError("checkpoint: unsupported version " + std::to_string(version));
  }
  ModelConfig c;
  expect_key("input_dim");
  c.input_dim = read_size("input_dim");
  expect_key("shared_hidden");
  c.shared_hidden = read_size("shared_hidden");
  expect_key("private_hidden");
  c.private_hidden = read_size("private_hidden");
  expect_key("num_classes");
  c.num_classes.resize(read_size("num_classes"));
  for (auto& n : c.num_classes) n = read_size("num_classes");
  expect_key("lambda_adv");
  c.lambda_adv = read_real();
  expect_key("lambda_diff");
  c.lambda_diff = read_real();
  expect_key("lr");
  c.lr = read_real();
  expect_key("batch_size");
  c.batch_size = read_size("batch_size");
  expect_key("epochs_per_round");
  c.epochs_per_round = read_size("epochs_per_round");

  AspMtlModel model(c);
  auto params = model.parameters();
  const auto names = model.parameter_names();
  expect_key("params");
  if (read_size("params") != params.size()) throw ValidationError("checkpoint: parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    expect_key(names[i].c_str());
    Matrix& m = params[i]->value;
    const std::size_t rows = read_size("rows");
    const std::size_t cols = read_size("cols");
    if (rows != m.rows() || cols != m.cols()) {
      throw ShapeError("checkpoint: " + names[i] + " stored as [" + std::to_string(rows) + "x" +
                       std::to_string(cols) + "], model expects " + m.shape_string());
    }
    for (double& v : m.data()) v = read_real();
  }
  return model;
}

}  // namespace mdal
