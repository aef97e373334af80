// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "mdal/engine.hpp"
#include "mdal/errors.hpp"
#include "mdal/pool.hpp"
#include "support.hpp"

using namespace mdal;
using json = nlohmann::json;

namespace {

LearningCurve curve(const std::vector<std::size_t>& xs, const std::vector<double>& ys) {
  LearningCurve c;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    RoundRecord r;
    r.round = i;
    r.labeled_total = xs[i];
    r.macro_accuracy = ys[i];
    c.push_back(r);
  }
  return c;
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  SyntheticSpec s;
  s.name = "tiny";
  s.samples_per_domain = 80;
  s.input_dim = 6;
  c.dataset.synthetic = s;
  c.model.shared_hidden = 8;
  c.model.private_hidden = 8;
  c.model.epochs_per_round = 3;
  c.strategy_params.perturbation_samples = 4;
  return c;
}

}  // namespace

TEST_CASE("init split") {
  RngStream rng(1, "pool");
  auto domains = mdal::testing::random_domains(rng, 2, 10, 2);
  RngStream s1(3, "init");
  const PoolState pool = init_split(domains, 0.10, s1);
  CHECK(pool.labeled_count(0) == 1);
  CHECK(pool.labeled_count(1) == 1);
  for (std::size_t k = 0; k < 2; ++k) {
    auto l = pool.labeled(k);
    auto u = pool.unlabeled(k);
    CHECK(l.size() + u.size() == 10);
    std::vector<std::size_t> all;
    std::merge(l.begin(), l.end(), u.begin(), u.end(), std::back_inserter(all));
    for (std::size_t i = 0; i < 10; ++i) CHECK(all[i] == i);
  }
  RngStream s2(3, "init");
  CHECK(init_split(domains, 0.10, s2).labeled(0) == pool.labeled(0));

  RngStream s3(3, "init");
  const PoolState full = init_split(domains, 1.0, s3);
  CHECK(full.total_unlabeled() == 0);

  RngStream s4(3, "init");
  auto odd = mdal::testing::random_domains(rng, 1, 7, 2);
  CHECK(init_split(odd, 0.3, s4).labeled_count(0) == 3);  // ⌈2.1⌉
  CHECK_THROWS_AS(init_split(domains, 0.0, s4), ValidationError);
}

TEST_CASE("annotation bookkeeping") {
  RngStream rng(2, "pool");
  PoolState pool(mdal::testing::random_domains(rng, 2, 5, 2));
  CHECK(pool.total_labeled() == 0);
  pool.annotate({});
  CHECK(pool.total_labeled() == 0);

  const QueryBatch first{{0, 1}, {1, 4}};
  pool.annotate(first);
  CHECK(pool.total_labeled() == 2);
  CHECK(pool.is_labeled({0, 1}));
  CHECK(pool.labeled(1) == std::vector<std::size_t>{4});

  // every failure leaves the pool untouched
  CHECK_THROWS_AS(pool.annotate(QueryBatch{{0, 2}, {0, 1}}), InvariantError);
  CHECK_THROWS_AS(pool.annotate(QueryBatch{{0, 3}, {0, 3}}), InvariantError);
  CHECK_THROWS_AS(pool.annotate(QueryBatch{{0, 9}}), InvariantError);
  CHECK_THROWS_AS(pool.annotate(QueryBatch{{5, 0}}), InvariantError);
  CHECK(pool.total_labeled() == 2);
  CHECK_FALSE(pool.is_labeled({0, 2}));

  QueryBatch rest;
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t i : pool.unlabeled(k)) rest.push_back({k, i});
  }
  pool.annotate(rest);
  CHECK(pool.total_unlabeled() == 0);

  // copies share the sample store but not the labeled state
  PoolState copy = pool;
  CHECK(&copy.domain(0) == &pool.domain(0));
}

TEST_CASE("aulc examples") {
  CHECK(compute_aulc(curve({10, 20, 30}, {0.8, 0.8, 0.8})) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(compute_aulc(curve({10, 20}, {0.6, 0.8})) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(compute_aulc(curve({5, 10, 15}, {0.5, 0.7, 0.9})) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(compute_aulc(curve({7}, {0.4})) == 0.4);
  CHECK_THROWS_AS(compute_aulc({}), ValidationError);

  // uneven spacing: trapezoids weighted by width
  CHECK(compute_aulc(curve({0, 1, 4}, {0.0, 1.0, 1.0})) == doctest::Approx((0.5 + 3.0) / 4.0));
}

TEST_CASE("aulc is scale invariant and bounded") {
  RngStream rng(3, "aulc");
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> xs{1 + rng.uniform_index(50)};
    std::vector<double> ys{rng.uniform01()};
    const std::size_t n = 1 + rng.uniform_index(10);
    for (std::size_t i = 0; i < n; ++i) {
      xs.push_back(xs.back() + 1 + rng.uniform_index(20));
      ys.push_back(rng.uniform01());
    }
    const double a = compute_aulc(curve(xs, ys));
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    std::vector<std::size_t> scaled;
    for (std::size_t x : xs) scaled.push_back(7 * x);
    CHECK(compute_aulc(curve(scaled, ys)) == doctest::Approx(a).epsilon(1e-12));
  }
}

TEST_CASE("seed aggregation") {
  // two flat curves: AULC 0.80 and 0.82
  const LearningCurve a = curve({10, 20}, {0.80, 0.80});
  const LearningCurve b = curve({10, 20}, {0.82, 0.82});
  const AulcSummary s = aggregate_seeds({a, b});
  CHECK(s.mean == doctest::Approx(0.81).epsilon(1e-12));
  CHECK(s.stddev == doctest::Approx(0.01).epsilon(1e-9));
  const AulcSummary swapped = aggregate_seeds({b, a});
  CHECK(swapped.mean == s.mean);
  CHECK(swapped.stddev == s.stddev);
  CHECK(aggregate_seeds({a}).stddev == 0.0);

  const AulcSummary pointwise = aggregate_seeds({curve({1, 2}, {0.2, 0.6}), curve({1, 2}, {0.4, 1.0})});
  REQUIRE(pointwise.mean_curve.size() == 2);
  CHECK(pointwise.mean_curve[0].mean == doctest::Approx(0.3));
  CHECK(pointwise.mean_curve[1].mean == doctest::Approx(0.8));
  CHECK(pointwise.mean_curve[1].stddev == doctest::Approx(0.2));

  CHECK_THROWS_AS(aggregate_seeds({a, curve({10, 21}, {0.8, 0.8})}), ValidationError);
  CHECK_THROWS_AS(aggregate_seeds({a, curve({10}, {0.8})}), ValidationError);
  CHECK_THROWS_AS(aggregate_seeds({}), ValidationError);
}

TEST_CASE("round budget") {
  EngineConfig e;
  CHECK(round_budget(e, 900) == 45);
  CHECK(round_budget(e, 901) == 46);
  CHECK(round_budget(e, 10) == 1);
  e.step_fraction = 0.1;
  CHECK(round_budget(e, 30) == 3);  // 0.1·30 is not exactly 3 in binary
}

TEST_CASE("experiment loop bookkeeping") {
  const ExperimentConfig cfg = tiny_config();
  const PreparedData data = prepare_data(cfg.dataset);
  std::size_t n = 0;
  std::size_t labeled0 = 0;
  for (const auto& d : data.train) {
    n += d.size();
    labeled0 += static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(d.size()) - 1e-9));
  }
  const std::size_t b = static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(n) - 1e-9));
  std::size_t expected_rounds = 1;
  for (std::size_t l = labeled0; static_cast<double>(l) < 0.5 * static_cast<double>(n) - 1e-9; l += b) {
    ++expected_rounds;
  }

  for (StrategyKind kind : {StrategyKind::kRandom, StrategyKind::kP2s}) {
    const RunResult run = run_experiment(cfg, data, kind, 3);
    REQUIRE_FALSE(run.error);
    CHECK(run.records.size() == expected_rounds);
    CHECK(run.batches.size() == expected_rounds - 1);
    for (std::size_t i = 0; i < run.records.size(); ++i) {
      const RoundRecord& r = run.records[i];
      CHECK(r.round == i);
      CHECK(r.labeled_total == labeled0 + i * b);
      CHECK(r.accuracy.size() == 3);
      CHECK(r.train_seconds >= 0.0);
      if (i + 1 < run.records.size()) {
        CHECK(r.select_seconds > 0.0);
      } else {
        CHECK(r.select_seconds == 0.0);
      }
    }
    const double frac = run.records.back().labeled_frac;
    CHECK(frac >= 0.5 - 1e-9);
    CHECK(frac < 0.5 + 0.05 + 1.0 / static_cast<double>(n));

    std::set<ItemRef> seen;
    for (const auto& batch : run.batches) {
      CHECK(batch.size() == b);
      for (const ItemRef& it : batch) CHECK(seen.insert(it).second);
    }
  }
}

TEST_CASE("default fractions give eight selections on the reference synthetic size") {
  // 3×400 samples with a quarter held out per class leaves about 900 in the pool
  ExperimentConfig cfg = tiny_config();
  cfg.dataset.synthetic->samples_per_domain = 400;
  cfg.model.epochs_per_round = 1;
  const PreparedData data = prepare_data(cfg.dataset);
  std::size_t n = 0;
  for (const auto& d : data.train) n += d.size();
  REQUIRE(n >= 897);
  REQUIRE(n <= 903);
  const RunResult run = run_experiment(cfg, data, StrategyKind::kRandom, 0);
  CHECK(run.records.size() == 9);
  CHECK(run.batches.size() == 8);
}

TEST_CASE("budget equal to the initial fraction evaluates once") {
  ExperimentConfig cfg = tiny_config();
  cfg.engine.budget_fraction = cfg.engine.init_fraction;
  const PreparedData data = prepare_data(cfg.dataset);
  const RunResult run = run_experiment(cfg, data, StrategyKind::kBvsb, 0);
  REQUIRE_FALSE(run.error);
  CHECK(run.records.size() == 1);
  CHECK(run.batches.empty());
}

TEST_CASE("runs are deterministic and every strategy completes") {
  const ExperimentConfig cfg = tiny_config();
  const PreparedData data = prepare_data(cfg.dataset);
  for (const std::string& name : strategy_names()) {
    const StrategyKind kind = parse_strategy(name);
    const RunResult a = run_experiment(cfg, data, kind, 7);
    const RunResult b = run_experiment(cfg, data, kind, 7);
    INFO(name);
    REQUIRE_FALSE(a.error);
    CHECK(a.batches == b.batches);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
      CHECK(a.records[i].accuracy == b.records[i].accuracy);
      CHECK(a.records[i].labeled_per_domain == b.records[i].labeled_per_domain);
    }
  }
}

TEST_CASE("round-0 state is shared across strategies") {
  const ExperimentConfig cfg = tiny_config();
  const PreparedData data = prepare_data(cfg.dataset);
  const RunResult a = run_experiment(cfg, data, StrategyKind::kRandom, 4);
  const RunResult b = run_experiment(cfg, data, StrategyKind::kEgl, 4);
  CHECK(a.records[0].accuracy == b.records[0].accuracy);
}

TEST_CASE("a failing round keeps the error and the finished rounds") {
  ExperimentConfig cfg = tiny_config();
  cfg.model.lr = 1e300;
  const PreparedData data = prepare_data(cfg.dataset);
  const RunResult run = run_experiment(cfg, data, StrategyKind::kRandom, 0);
  REQUIRE(run.error);
  CHECK(run.records.empty());
}

TEST_CASE("grid runs match sequential runs") {
  ExperimentConfig cfg = tiny_config();
  cfg.model.epochs_per_round = 1;
  const PreparedData data = prepare_data(cfg.dataset);
  const std::vector<GridJob> jobs{{StrategyKind::kRandom, 0}, {StrategyKind::kCoreset, 1},
                                  {StrategyKind::kBadge, 2}, {StrategyKind::kRandom, 3}};
  std::size_t callbacks = 0;
  const auto par = run_grid(cfg, data, jobs, 3, [&](const RunResult&) { ++callbacks; });
  CHECK(callbacks == jobs.size());
  REQUIRE(par.size() == jobs.size());
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const RunResult seq = run_experiment(cfg, data, jobs[i].strategy, jobs[i].seed);
    CHECK(par[i].seed == jobs[i].seed);
    CHECK(par[i].batches == seq.batches);
  }
}

TEST_CASE("config JSON") {
  const json doc = {
      {"dataset", {{"synthetic", {{"name", "s"}, {"num_domains", 2}}}, {"test_fraction", 0.2}}},
      {"strategies", {"random", "p2s"}},
      {"seeds", {1, 2}},
      {"strategy_params", {{"sigma", 0.02}, {"budget_basis", "full_pool"}}},
      {"model", {{"lr", 0.05}}},
      {"engine", {{"budget_fraction", 0.3}}},
  };
  const ExperimentConfig c = experiment_config_from_json(doc);
  CHECK(c.dataset.synthetic->num_domains == 2);
  CHECK(c.dataset.test_fraction == 0.2);
  CHECK(c.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(c.strategy_params.budget_basis == BudgetBasis::kFullPool);
  CHECK(c.model.lr == 0.05);
  CHECK(c.model.batch_size == 8);
  CHECK(c.engine.budget_fraction == 0.3);

  const ExperimentConfig again = experiment_config_from_json(to_json(c));
  CHECK(to_json(again) == to_json(c));

  auto message = [](const json& d) {
    try {
      experiment_config_from_json(d);
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  json unknown = doc;
  unknown["model"]["momentum"] = 0.9;
  CHECK(message(unknown).find("model.momentum") != std::string::npos);
  json wrong = doc;
  wrong["engine"]["step_fraction"] = "big";
  CHECK(message(wrong).find("engine.step_fraction") != std::string::npos);
  json negative = doc;
  negative["seeds"] = {-1};
  CHECK_FALSE(message(negative).empty());
  json inverted = doc;
  inverted["engine"]["init_fraction"] = 0.5;
  CHECK(message(inverted).find("budget_fraction") != std::string::npos);
  json bad_strategy = doc;
  bad_strategy["strategies"] = {"nope"};
  CHECK(message(bad_strategy).find("strategies") != std::string::npos);
  json both = doc;
  both["dataset"]["manifest"] = "m.json";
  CHECK(message(both).find("dataset") != std::string::npos);
  json dup = doc;
  dup["seeds"] = {3, 3};
  CHECK(message(dup).find("seeds") != std::string::npos);
}
