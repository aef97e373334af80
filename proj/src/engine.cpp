// SPDX-License-Identifier: Apache-2.0
#include "mdal/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "mdal/errors.hpp"

namespace mdal {

using json = nlohmann::json;

// ---- config ---------------------------------------------------------------------

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ValidationError(field + ": " + why);
  };
  if (dataset.synthetic.has_value() == !dataset.manifest.empty()) {
    fail("dataset", "exactly one of 'synthetic' or 'manifest' is required");
  }
  if (dataset.synthetic) dataset.synthetic->validate();
  if (!(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0)) {
    fail("dataset.test_fraction", "must be in (0, 1)");
  }
  if (strategies.empty()) fail("strategies", "at least one strategy is required");
  for (const auto& s : strategies) {
    try {
      parse_strategy(s);
    } catch (const ValidationError& e) {
      fail("strategies", e.what());
    }
  }
  if (seeds.empty()) fail("seeds", "at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    fail("seeds", "duplicate seed");
  }
  if (!(strategy_params.sigma > 0.0)) fail("strategy_params.sigma", "must be > 0");
  if (strategy_params.perturbation_samples < 1) {
    fail("strategy_params.perturbation_samples", "must be >= 1");
  }
  const EngineConfig& e = engine;
  if (!(e.init_fraction > 0.0 && e.init_fraction <= 1.0)) {
    fail("engine.init_fraction", "must be in (0, 1]");
  }
  if (!(e.budget_fraction >= e.init_fraction && e.budget_fraction <= 1.0)) {
    fail("engine.budget_fraction", "must be in [init_fraction, 1]");
  }
  if (!(e.step_fraction > 0.0)) fail("engine.step_fraction", "must be > 0");
  if (!(model.lambda_adv >= 0.0)) fail("model.lambda_adv", "must be >= 0");
  if (!(model.lambda_diff >= 0.0)) fail("model.lambda_diff", "must be >= 0");
  if (!(model.lr > 0.0)) fail("model.lr", "must be > 0");
  if (model.batch_size < 1) fail("model.batch_size", "must be >= 1");
  if (model.shared_hidden < 1) fail("model.shared_hidden", "must be >= 1");
  if (model.private_hidden < 1) fail("model.private_hidden", "must be >= 1");
}

namespace {

bool is_count(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

// Strict object reader: rejects unknown keys and reports the full field path.
class Fields {
 public:
  Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ValidationError(path_ + ": expected an object");
  }

  bool has(const char* key) const { return obj_.contains(key); }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!is_count(*it)) throw ValidationError("");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw ValidationError("");
      } else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) {
        if (!it->is_array()) throw ValidationError("");
        for (const json& v : *it) {
          if (!is_count(v)) throw ValidationError("");
        }
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw ValidationError(path_ + "." + key + ": wrong type (" + it->dump() + ")");
    }
  }

  const json& child(const char* key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ValidationError(path_ + "." + it.key() + ": unknown field");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

SyntheticSpec synthetic_from_json(const json& doc, const std::string& path) {
  SyntheticSpec s;
  Fields f(doc, path);
  f.read("name", s.name);
  f.read("num_domains", s.num_domains);
  f.read("samples_per_domain", s.samples_per_domain);
  f.read("input_dim", s.input_dim);
  f.read("num_classes", s.num_classes);
  f.read("shared_strength", s.shared_strength);
  f.read("shift_strength", s.shift_strength);
  f.read("label_noise", s.label_noise);
  f.read("seed", s.seed);
  f.finish();
  return s;
}

json synthetic_to_json(const SyntheticSpec& s) {
  return {{"name", s.name},
          {"num_domains", s.num_domains},
          {"samples_per_domain", s.samples_per_domain},
          {"input_dim", s.input_dim},
          {"num_classes", s.num_classes},
          {"shared_strength", s.shared_strength},
          {"shift_strength", s.shift_strength},
          {"label_noise", s.label_noise},
          {"seed", s.seed}};
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& doc) {
  ExperimentConfig c;
  Fields top(doc, "config");
  if (!top.has("dataset")) throw ValidationError("config.dataset: missing");
  {
    Fields f(top.child("dataset"), "dataset");
    if (f.has("synthetic")) c.dataset.synthetic = synthetic_from_json(f.child("synthetic"), "dataset.synthetic");
    f.read("manifest", c.dataset.manifest);
    f.read("test_fraction", c.dataset.test_fraction);
    if (f.has("standardize")) {
      bool v = false;
      f.read("standardize", v);
      c.dataset.standardize = v;
    }
    f.read("split_seed", c.dataset.split_seed);
    f.finish();
  }
  top.read("strategies", c.strategies);
  top.read("seeds", c.seeds);
  if (top.has("strategy_params")) {
    Fields f(top.child("strategy_params"), "strategy_params");
    f.read("sigma", c.strategy_params.sigma);
    f.read("perturbation_samples", c.strategy_params.perturbation_samples);
    if (f.has("budget_basis")) {
      std::string basis;
      f.read("budget_basis", basis);
      if (basis == "unlabeled") {
        c.strategy_params.budget_basis = BudgetBasis::kUnlabeled;
      } else if (basis == "full_pool") {
        c.strategy_params.budget_basis = BudgetBasis::kFullPool;
      } else {
        throw ValidationError("strategy_params.budget_basis: expected 'unlabeled' or 'full_pool'");
      }
    }
    f.finish();
  }
  if (top.has("model")) {
    Fields f(top.child("model"), "model");
    f.read("shared_hidden", c.model.shared_hidden);
    f.read("private_hidden", c.model.private_hidden);
    f.read("lambda_adv", c.model.lambda_adv);
    f.read("lambda_diff", c.model.lambda_diff);
    f.read("lr", c.model.lr);
    f.read("batch_size", c.model.batch_size);
    f.read("epochs_per_round", c.model.epochs_per_round);
    f.finish();
  }
  if (top.has("engine")) {
    Fields f(top.child("engine"), "engine");
    f.read("init_fraction", c.engine.init_fraction);
    f.read("step_fraction", c.engine.step_fraction);
    f.read("budget_fraction", c.engine.budget_fraction);
    f.read("warm_start", c.engine.warm_start);
    f.finish();
  }
  top.finish();
  c.validate();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json dataset = {{"test_fraction", c.dataset.test_fraction}, {"split_seed", c.dataset.split_seed}};
  if (c.dataset.synthetic) dataset["synthetic"] = synthetic_to_json(*c.dataset.synthetic);
  if (!c.dataset.manifest.empty()) dataset["manifest"] = c.dataset.manifest;
  if (c.dataset.standardize) dataset["standardize"] = *c.dataset.standardize;
  return {
      {"dataset", dataset},
      {"strategies", c.strategies},
      {"seeds", c.seeds},
      {"strategy_params",
       {{"sigma", c.strategy_params.sigma},
        {"perturbation_samples", c.strategy_params.perturbation_samples},
        {"budget_basis",
         c.strategy_params.budget_basis == BudgetBasis::kFullPool ? "full_pool" : "unlabeled"}}},
      {"model",
       {{"shared_hidden", c.model.shared_hidden},
        {"private_hidden", c.model.private_hidden},
        {"lambda_adv", c.model.lambda_adv},
        {"lambda_diff", c.model.lambda_diff},
        {"lr", c.model.lr},
        {"batch_size", c.model.batch_size},
        {"epochs_per_round", c.model.epochs_per_round}}},
      {"engine",
       {{"init_fraction", c.engine.init_fraction},
        {"step_fraction", c.engine.step_fraction},
        {"budget_fraction", c.engine.budget_fraction},
        {"warm_start", c.engine.warm_start}}},
  };
}

// ---- data ---------------------------------------------------------------------------

PreparedData prepare_data(const DatasetSource& source) {
  PreparedData out;
  std::vector<DomainDataset> domains;
  bool standardize_default = false;
  if (source.synthetic) {
    out.name = source.synthetic->name;
    domains = generate_synthetic(*source.synthetic);
  } else {
    const DatasetManifest manifest = load_manifest(source.manifest);
    out.name = manifest.name;
    for (std::size_t k = 0; k < manifest.domains.size(); ++k) {
      domains.push_back(load_domain(manifest, k));
    }
    standardize_default = true;
  }
  const bool standardize_on = source.standardize.value_or(standardize_default);
  RngStream split_rng(source.split_seed, "split");
  for (const DomainDataset& d : domains) {
    RngStream rng = split_rng.child(std::to_string(d.domain));
    TrainTestSplit s = train_test_split(d, source.test_fraction, rng);
    if (standardize_on) standardize(s.train.features, s.test.features);
    out.train.push_back(std::move(s.train));
    out.test.push_back(std::move(s.test));
  }
  return out;
}

ModelConfig model_config_for(const ModelConfig& base, const PreparedData& data) {
  ModelConfig m = base;
  if (data.train.empty()) throw ValidationError("dataset has no domains");
  m.input_dim = data.train.front().features.cols();
  m.num_classes.clear();
  for (const DomainDataset& d : data.train) {
    if (d.features.cols() != m.input_dim) {
      throw ShapeError("domain '" + d.name + "' has " + std::to_string(d.features.cols()) +
                       " features, expected " + std::to_string(m.input_dim));
    }
    m.num_classes.push_back(d.num_classes);
  }
  return m;
}

// ---- loop -----------------------------------------------------------------------------

std::size_t round_budget(const EngineConfig& engine, std::size_t pool_size) {
  const double exact = engine.step_fraction * static_cast<double>(pool_size);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(exact - 1e-9)));
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool budget_reached(const EngineConfig& engine, std::size_t labeled, std::size_t total) {
  return static_cast<double>(labeled) >=
         engine.budget_fraction * static_cast<double>(total) - 1e-9;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const PreparedData& data,
                         StrategyKind strategy, std::uint64_t seed) {
  RunResult result;
  result.strategy = std::string(strategy_name(strategy));
  result.seed = seed;

  // Streams depend on the seed only, so every strategy starts from the same
  // initial labeled set and the same round-0 model.
  const RngStream root(seed, "experiment");
  try {
    RngStream split_rng = root.child("init_split");
    PoolState pool = init_split(data.train, config.engine.init_fraction, split_rng);
    const std::size_t n_total = pool.total_size();
    const std::size_t step = round_budget(config.engine, n_total);

    std::vector<LabeledSet> tests;
    for (const DomainDataset& d : data.test) tests.push_back({&d.features, d.labels});

    AspMtlModel model(model_config_for(config.model, data));
    for (std::size_t round = 0;; ++round) {
      const std::string tag = "round" + std::to_string(round);
      if (round == 0 || !config.engine.warm_start) {
        RngStream init_rng = root.child("model_init/" + tag);
        model.reinitialize(init_rng);
      }

      std::vector<std::vector<std::size_t>> labeled;
      std::vector<DomainView> views;
      for (std::size_t k = 0; k < pool.num_domains(); ++k) labeled.push_back(pool.labeled(k));
      for (std::size_t k = 0; k < pool.num_domains(); ++k) {
        const DomainDataset& d = pool.domain(k);
        views.push_back({&d.features, d.labels, labeled[k]});
      }
      RngStream train_rng = root.child("train/" + tag);
      const auto t_train = Clock::now();
      train_round(model, views, train_rng);
      const double train_seconds = seconds_since(t_train);

      const Evaluation ev = evaluate(model, tests);
      RoundRecord rec;
      rec.round = round;
      for (std::size_t k = 0; k < pool.num_domains(); ++k) {
        rec.labeled_per_domain.push_back(pool.labeled_count(k));
      }
      rec.labeled_total = pool.total_labeled();
      rec.labeled_frac = static_cast<double>(rec.labeled_total) / static_cast<double>(n_total);
      rec.accuracy = ev.per_domain;
      rec.macro_accuracy = ev.macro;
      rec.train_seconds = train_seconds;
      result.records.push_back(rec);

      if (budget_reached(config.engine, rec.labeled_total, n_total)) break;
      const std::size_t b = std::min(step, pool.total_unlabeled());
      if (b == 0) break;

      RngStream select_rng = root.child("select/" + tag);
      SelectionContext ctx{&model, &pool, b, &select_rng, config.strategy_params};
      const auto t_select = Clock::now();
      QueryBatch batch = select(strategy, ctx);
      result.records.back().select_seconds = seconds_since(t_select);
      if (batch.size() != b) {
        throw InvariantError("strategy returned " + std::to_string(batch.size()) +
                             " items, expected " + std::to_string(b));
      }
      pool.annotate(batch);
      result.batches.push_back(std::move(batch));
    }
  } catch (const std::exception& e) {
    result.error = e.what();
  }
  return result;
}

// ---- metrics ---------------------------------------------------------------------------

double compute_aulc(const LearningCurve& curve) {
  if (curve.empty()) throw ValidationError("compute_aulc: empty curve");
  if (curve.size() == 1) return curve.front().macro_accuracy;
  const double x0 = static_cast<double>(curve.front().labeled_total);
  const double x1 = static_cast<double>(curve.back().labeled_total);
  if (x1 == x0) {
    double s = 0.0;
    for (const auto& r : curve) s += r.macro_accuracy;
    return s / static_cast<double>(curve.size());
  }
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const double dx = static_cast<double>(curve[i].labeled_total) -
                      static_cast<double>(curve[i - 1].labeled_total);
    area += 0.5 * dx * (curve[i].macro_accuracy + curve[i - 1].macro_accuracy);
  }
  return area / (x1 - x0);
}

namespace {

std::pair<double, double> mean_and_pstd(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / n)};
}

}  // namespace

AulcSummary aggregate_seeds(const std::vector<LearningCurve>& curves) {
  if (curves.empty()) throw ValidationError("aggregate_seeds: no curves");
  const LearningCurve& ref = curves.front();
  for (const LearningCurve& c : curves) {
    bool same = c.size() == ref.size();
    for (std::size_t i = 0; same && i < c.size(); ++i) {
      same = c[i].labeled_total == ref[i].labeled_total;
    }
    if (!same) throw ValidationError("aggregate_seeds: curves have different round structures");
  }
  AulcSummary s;
  for (const LearningCurve& c : curves) s.per_seed.push_back(compute_aulc(c));
  std::tie(s.mean, s.stddev) = mean_and_pstd(s.per_seed);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    std::vector<double> ys;
    for (const LearningCurve& c : curves) ys.push_back(c[i].macro_accuracy);
    const auto [m, sd] = mean_and_pstd(ys);
    s.mean_curve.push_back({ref[i].labeled_total, m, sd});
  }
  return s;
}

// ---- grid ---------------------------------------------------------------------------------

std::vector<RunResult> run_grid(const ExperimentConfig& config, const PreparedData& data,
                                const std::vector<GridJob>& jobs, std::size_t threads,
                                const std::function<void(const RunResult&)>& on_done) {
  std::vector<RunResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex done_mu;
  auto worker = [&]() {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      results[i] = run_experiment(config, data, jobs[i].strategy, jobs[i].seed);
      if (on_done) {
        std::lock_guard<std::mutex> lock(done_mu);
        on_done(results[i]);
      }
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(jobs.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return results;
}

}  // namespace mdal
