// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mdal/data_io.hpp"
#include "mdal/errors.hpp"
#include "support.hpp"

using namespace mdal;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mdal_data_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<double> column_means(const Matrix& m) {
  std::vector<double> mean(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) mean[j] += m(i, j);
  }
  for (double& v : mean) v /= static_cast<double>(m.rows());
  return mean;
}

// Nearest-centroid classifier fitted on (x, y) and scored on (tx, ty).
double centroid_accuracy(const Matrix& x, const std::vector<std::size_t>& y, const Matrix& tx,
                         const std::vector<std::size_t>& ty, std::size_t classes) {
  Matrix centers(classes, x.cols());
  std::vector<double> count(classes, 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) centers(y[i], j) += x(i, j);
    count[y[i]] += 1.0;
  }
  for (std::size_t c = 0; c < classes; ++c) {
    for (double& v : centers.row(c)) v /= count[c];
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < tx.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (squared_distance(tx.row(i), centers.row(c)) < squared_distance(tx.row(i), centers.row(best))) {
        best = c;
      }
    }
    if (best == ty[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(tx.rows());
}

}  // namespace

TEST_CASE("domain CSV round-trips bit-exactly") {
  const fs::path dir = scratch("roundtrip");
  DomainDataset d;
  d.name = "t";
  d.num_classes = 3;
  d.features = Matrix{{0.1, 1.0 / 3.0, -1e-300}, {2.5e10, -0.0, 6.02214076e23}};
  d.labels = {2, 0};
  write_domain_csv(d, dir / "t.csv");
  const DomainDataset back = read_domain_csv(dir / "t.csv", 3, 3);
  CHECK(back.labels == d.labels);
  CHECK(back.features == d.features);
}

TEST_CASE("domain CSV errors carry line numbers") {
  const fs::path dir = scratch("errors");
  write_text(dir / "empty.csv", "");
  CHECK_THROWS_AS(read_domain_csv(dir / "empty.csv", 2, 2), ParseError);

  write_text(dir / "dim.csv", "0,1.0,2.0\n1,1.0,2.0,3.0\n");
  try {
    read_domain_csv(dir / "dim.csv", 2, 2);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    const std::string msg = e.what();
    CHECK(msg.find("3 features") != std::string::npos);
    CHECK(msg.find("dim 2") != std::string::npos);
  }

  write_text(dir / "label.csv", "0,1\n1,2\n5,3\n");
  try {
    read_domain_csv(dir / "label.csv", 1, 2);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }

  write_text(dir / "junk.csv", "0,1\n1,abc\n");
  CHECK_THROWS_AS(read_domain_csv(dir / "junk.csv", 1, 2), ParseError);
  write_text(dir / "nan.csv", "0,nan\n");
  CHECK_THROWS_AS(read_domain_csv(dir / "nan.csv", 1, 2), ParseError);
  CHECK_THROWS_AS(read_domain_csv(dir / "missing.csv", 1, 2), ValidationError);
}

TEST_CASE("manifest save and load") {
  const fs::path dir = scratch("manifest");
  DatasetManifest m;
  m.name = "toy";
  m.dim = 2;
  m.domains = {{"a", "a.csv", 2}, {"b", "b.csv", 3}};
  save_manifest(m, dir / "manifest.json");
  write_text(dir / "a.csv", "0,1,2\n1,3,4\n");
  write_text(dir / "b.csv", "2,1,2\n");

  const DatasetManifest back = load_manifest(dir / "manifest.json");
  CHECK(back.name == "toy");
  CHECK(back.dim == 2);
  REQUIRE(back.domains.size() == 2);
  CHECK(back.domains[1].classes == 3);
  const DomainDataset b = load_domain(back, 1);
  CHECK(b.domain == 1);
  CHECK(b.labels == std::vector<std::size_t>{2});
  CHECK_THROWS_AS(load_domain(back, 2), ValidationError);

  write_text(dir / "bad.json", "{\"name\": \"x\", \"dim\": 0, \"domains\": []}");
  CHECK_THROWS_AS(load_manifest(dir / "bad.json"), ValidationError);
  write_text(dir / "broken.json", "{not json");
  CHECK_THROWS_AS(load_manifest(dir / "broken.json"), ParseError);
}

TEST_CASE("synthetic data is valid and reproducible") {
  SyntheticSpec s;
  s.samples_per_domain = 120;
  s.label_noise = 0.1;
  const auto a = generate_synthetic(s);
  const auto b = generate_synthetic(s);
  REQUIRE(a.size() == 3);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].features == b[k].features);
    CHECK(a[k].labels == b[k].labels);
    CHECK(a[k].features.all_finite());
    CHECK(a[k].features.cols() == s.input_dim);
    for (std::size_t y : a[k].labels) CHECK(y < s.num_classes);
  }
  // files written twice are byte-identical
  const fs::path d1 = scratch("synth1");
  const fs::path d2 = scratch("synth2");
  write_domain_csv(a[0], d1 / "x.csv");
  write_domain_csv(b[0], d2 / "x.csv");
  CHECK(slurp(d1 / "x.csv") == slurp(d2 / "x.csv"));

  SyntheticSpec bad = s;
  bad.label_noise = 0.5;
  CHECK_THROWS_AS(generate_synthetic(bad), ValidationError);
  bad = s;
  bad.num_classes = 1;
  CHECK_THROWS_AS(generate_synthetic(bad), ValidationError);
  bad = s;
  bad.shift_strength = -1.0;
  CHECK_THROWS_AS(generate_synthetic(bad), ValidationError);
}

TEST_CASE("without shift every domain has the same distribution") {
  SyntheticSpec s;
  s.shift_strength = 0.0;
  s.samples_per_domain = 2000;
  const auto d = generate_synthetic(s);
  // per-feature two-sample z-test on the means; each feature has variance ≤ 1 + s²
  const double var = 1.0 + s.shared_strength * s.shared_strength;
  const double se = std::sqrt(2.0 * var / static_cast<double>(s.samples_per_domain));
  const auto m0 = column_means(d[0].features);
  for (std::size_t k = 1; k < d.size(); ++k) {
    const auto mk = column_means(d[k].features);
    for (std::size_t j = 0; j < m0.size(); ++j) CHECK(std::abs(m0[j] - mk[j]) < 4.5 * se);
  }
}

TEST_CASE("strong shared signal is linearly separable") {
  SyntheticSpec s;
  s.shared_strength = 8.0;
  s.samples_per_domain = 300;
  for (const DomainDataset& d : generate_synthetic(s)) {
    RngStream rng(1, "probe");
    const TrainTestSplit split = train_test_split(d, 0.3, rng);
    const double acc = centroid_accuracy(split.train.features, split.train.labels,
                                         split.test.features, split.test.labels, s.num_classes);
    CHECK(acc > 0.99);
  }
}

TEST_CASE("domain shift makes domains distinguishable") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticSpec s;
    s.seed = seed;
    s.samples_per_domain = 300;
    const auto domains = generate_synthetic(s);
    // pooled domain-id task, even rows to fit and odd rows to score
    std::vector<double> fit, held;
    std::vector<std::size_t> fit_y, held_y;
    for (const DomainDataset& d : domains) {
      for (std::size_t i = 0; i < d.size(); ++i) {
        auto& dst = i % 2 ? held : fit;
        dst.insert(dst.end(), d.features.row(i).begin(), d.features.row(i).end());
        (i % 2 ? held_y : fit_y).push_back(d.domain);
      }
    }
    const Matrix fx(fit_y.size(), s.input_dim, fit);
    const Matrix hx(held_y.size(), s.input_dim, held);
    const double acc = centroid_accuracy(fx, fit_y, hx, held_y, domains.size());
    INFO("seed ", seed, " accuracy ", acc);
    CHECK(acc > 1.0 / static_cast<double>(domains.size()) + 0.1);
  }
}

TEST_CASE("stratified split") {
  SyntheticSpec s;
  s.samples_per_domain = 203;
  s.num_classes = 3;
  const DomainDataset d = generate_synthetic(s)[0];
  RngStream r1(4, "split");
  RngStream r2(4, "split");
  const TrainTestSplit a = train_test_split(d, 0.25, r1);
  const TrainTestSplit b = train_test_split(d, 0.25, r2);
  CHECK(a.train.features == b.train.features);
  CHECK(a.test.labels == b.test.labels);
  CHECK(a.train.size() + a.test.size() == d.size());

  // disjoint: every original row lands on exactly one side
  std::multiset<std::vector<double>> rows;
  for (const DomainDataset* part : {&a.train, &a.test}) {
    for (std::size_t i = 0; i < part->size(); ++i) {
      rows.insert(std::vector<double>(part->features.row(i).begin(), part->features.row(i).end()));
    }
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(rows.count(std::vector<double>(d.features.row(i).begin(), d.features.row(i).end())) == 1);
  }

  std::map<std::size_t, double> total, in_test;
  for (std::size_t y : d.labels) total[y] += 1;
  for (std::size_t y : a.test.labels) in_test[y] += 1;
  for (const auto& [y, n] : total) CHECK(std::abs(in_test[y] - 0.25 * n) <= 1.0);

  DomainDataset tiny;
  tiny.features = Matrix{{1.0}, {2.0}, {3.0}};
  tiny.labels = {0, 0, 1};
  RngStream r3(1, "x");
  CHECK_THROWS_AS(train_test_split(tiny, 0.5, r3), ValidationError);
  CHECK_THROWS_AS(train_test_split(d, 1.0, r3), ValidationError);
}

TEST_CASE("standardization uses training statistics") {
  RngStream rng(6, "std");
  Matrix train = mdal::testing::random_matrix(50, 3, rng, 4.0);
  Matrix test = mdal::testing::random_matrix(10, 3, rng, 4.0);
  for (std::size_t i = 0; i < train.rows(); ++i) train(i, 2) = 7.0;
  for (std::size_t i = 0; i < test.rows(); ++i) test(i, 2) = 7.0;
  const Matrix raw_train = train;
  const Matrix raw_test = test;
  const Standardization st = standardize(train, test);

  const auto mean = column_means(train);
  CHECK(std::abs(mean[0]) < 1e-10);
  CHECK(std::abs(mean[1]) < 1e-10);
  for (std::size_t j = 0; j < 2; ++j) {
    double var = 0.0;
    for (std::size_t i = 0; i < train.rows(); ++i) var += train(i, j) * train(i, j);
    CHECK(std::sqrt(var / static_cast<double>(train.rows())) == doctest::Approx(1.0).epsilon(1e-10));
  }
  for (std::size_t i = 0; i < train.rows(); ++i) CHECK(train(i, 2) == 0.0);
  for (std::size_t i = 0; i < test.rows(); ++i) CHECK(test(i, 2) == 0.0);

  // test rows are mapped with the training mean and std, not their own
  const auto raw_mean = column_means(raw_train);
  for (std::size_t i = 0; i < test.rows(); ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(st.mean[j] == doctest::Approx(raw_mean[j]).epsilon(1e-12));
      CHECK(test(i, j) == doctest::Approx((raw_test(i, j) - st.mean[j]) / st.stddev[j]).epsilon(1e-12));
    }
  }
  Matrix empty(0, 3);
  CHECK_THROWS_AS(standardize(empty, test), ValidationError);
}
