// SPDX-License-Identifier: Apache-2.0
#include "mdal/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mdal/errors.hpp"

namespace mdal {

namespace fs = std::filesystem;
using json = nlohmann::json;

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  DatasetManifest m;
  try {
    m.name = doc.at("name").get<std::string>();
    m.dim = doc.at("dim").get<std::size_t>();
    for (const auto& d : doc.at("domains")) {
      ManifestDomain md;
      md.name = d.at("name").get<std::string>();
      md.file = d.at("file").get<std::string>();
      md.classes = d.at("classes").get<std::size_t>();
      if (md.classes < 2) {
        throw ValidationError("manifest " + path.string() + ": domain '" + md.name +
                              "' needs at least 2 classes");
      }
      m.domains.push_back(std::move(md));
    }
  } catch (const json::exception& e) {
    throw ValidationError("manifest " + path.string() + ": " + e.what());
  }
  if (m.dim == 0) throw ValidationError("manifest " + path.string() + ": dim must be >= 1");
  if (m.domains.empty()) throw ValidationError("manifest " + path.string() + ": no domains");
  m.base_dir = path.parent_path();
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  json doc;
  doc["name"] = manifest.name;
  doc["dim"] = manifest.dim;
  doc["domains"] = json::array();
  for (const auto& d : manifest.domains) {
    doc["domains"].push_back({{"name", d.name}, {"file", d.file}, {"classes", d.classes}});
  }
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write manifest " + path.string());
  out << doc.dump(2) << '\n';
}

DomainDataset load_domain(const DatasetManifest& manifest, std::size_t k) {
  if (k >= manifest.domains.size()) {
    throw ValidationError("manifest has no domain " + std::to_string(k));
  }
  const ManifestDomain& d = manifest.domains[k];
  fs::path file = d.file;
  if (file.is_relative()) file = manifest.base_dir / file;
  DomainDataset out = read_domain_csv(file, manifest.dim, d.classes);
  out.name = d.name;
  out.domain = k;
  return out;
}

namespace {

template <class T>
bool parse_number(std::string_view s, T& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

DomainDataset read_domain_csv(const fs::path& path, std::size_t dim, std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open data file " + path.string());
  const std::string file = path.string();
  DomainDataset out;
  out.name = path.stem().string();
  out.num_classes = num_classes;
  std::vector<double> values;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::string_view rest(line);
    std::size_t field = 0;
    std::size_t columns = 0;
    while (true) {
      const auto comma = rest.find(',');
      const std::string_view cell = rest.substr(0, comma);
      if (field == 0) {
        long long label = 0;
        if (!parse_number(cell, label)) {
          throw ParseError(file, lineno, "label '" + std::string(cell) + "' is not an integer");
        }
        if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
          throw ParseError(file, lineno, "label " + std::to_string(label) + " outside [0, " +
                                             std::to_string(num_classes) + ")");
        }
        out.labels.push_back(static_cast<std::size_t>(label));
      } else {
        double v = 0.0;
        if (!parse_number(cell, v)) {
          throw ParseError(file, lineno, "column " + std::to_string(field + 1) + ": '" +
                                             std::string(cell) + "' is not a number");
        }
        if (!std::isfinite(v)) {
          throw ParseError(file, lineno, "column " + std::to_string(field + 1) + " is not finite");
        }
        values.push_back(v);
        ++columns;
      }
      ++field;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (columns != dim) {
      throw ParseError(file, lineno, "row has " + std::to_string(columns) +
                                         " features but the manifest declares dim " +
                                         std::to_string(dim));
    }
  }
  if (out.labels.empty()) throw ParseError(file, lineno, "no data rows");
  out.features = Matrix(out.labels.size(), dim, std::move(values));
  return out;
}

void write_domain_csv(const DomainDataset& data, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write data file " + path.string());
  char buf[64];
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.labels[i];
    for (double v : data.features.row(i)) {
      auto res = std::to_chars(buf, buf + sizeof buf, v);
      out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
}

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ValidationError("synthetic." + field + ": " + why);
  };
  if (num_domains < 1) fail("num_domains", "must be >= 1");
  if (samples_per_domain < 2) fail("samples_per_domain", "must be >= 2");
  if (input_dim < 1) fail("input_dim", "must be >= 1");
  if (num_classes < 2) fail("num_classes", "must be >= 2");
  if (!(shared_strength >= 0.0)) fail("shared_strength", "must be >= 0");
  if (!(shift_strength >= 0.0)) fail("shift_strength", "must be >= 0");
  if (!(label_noise >= 0.0 && label_noise < 0.5)) fail("label_noise", "must be in [0, 0.5)");
}

namespace {

std::vector<double> unit_direction(std::size_t dim, RngStream& rng) {
  std::vector<double> v(dim);
  double norm = 0.0;
  while (norm == 0.0) {
    for (double& x : v) x = rng.normal(0.0, 1.0);
    norm = l2_norm(v);
  }
  for (double& x : v) x /= norm;
  return v;
}

}  // namespace

std::vector<DomainDataset> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  RngStream root(spec.seed, "synthetic");
  RngStream dir_rng = root.child("directions");
  const std::vector<double> w_shared = unit_direction(spec.input_dim, dir_rng);

  std::vector<DomainDataset> out;
  for (std::size_t k = 0; k < spec.num_domains; ++k) {
    const std::vector<double> w_k = unit_direction(spec.input_dim, dir_rng);
    const std::vector<double> u_k = unit_direction(spec.input_dim, dir_rng);
    RngStream rng = root.child("domain/" + std::to_string(k));

    DomainDataset d;
    d.name = spec.name + "_d" + std::to_string(k);
    d.domain = k;
    d.num_classes = spec.num_classes;
    d.features = Matrix(spec.samples_per_domain, spec.input_dim);
    d.labels.resize(spec.samples_per_domain);
    const double span = static_cast<double>(spec.num_classes - 1);
    for (std::size_t i = 0; i < spec.samples_per_domain; ++i) {
      const std::size_t y = rng.uniform_index(spec.num_classes);
      const double a = 2.0 * static_cast<double>(y) / span - 1.0;
      auto row = d.features.row(i);
      for (std::size_t j = 0; j < spec.input_dim; ++j) {
        row[j] = a * (spec.shared_strength * w_shared[j] + spec.shift_strength * w_k[j]) +
                 spec.shift_strength * u_k[j] + rng.normal(0.0, 1.0);
      }
      std::size_t label = y;
      if (spec.label_noise > 0.0 && rng.uniform01() < spec.label_noise) {
        label = (y + 1 + rng.uniform_index(spec.num_classes - 1)) % spec.num_classes;
      }
      d.labels[i] = label;
    }
    out.push_back(std::move(d));
  }
  return out;
}

TrainTestSplit train_test_split(const DomainDataset& data, double test_fraction, RngStream& rng) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ValidationError("train_test_split: test_fraction must be in (0, 1)");
  }
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);

  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  for (auto& [label, idx] : by_class) {
    if (idx.size() < 2) {
      throw ValidationError("train_test_split: class " + std::to_string(label) + " of domain '" +
                            data.name + "' has fewer than 2 samples");
    }
    rng.shuffle(idx.begin(), idx.end());
    auto n_test = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(idx.size())));
    n_test = std::clamp<std::size_t>(n_test, 1, idx.size() - 1);
    test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_idx.insert(train_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());

  auto subset = [&data](const std::vector<std::size_t>& idx) {
    DomainDataset s;
    s.name = data.name;
    s.domain = data.domain;
    s.num_classes = data.num_classes;
    s.features = gather_rows(data.features, idx);
    for (std::size_t i : idx) s.labels.push_back(data.labels[i]);
    return s;
  };
  return {subset(train_idx), subset(test_idx)};
}

Standardization standardize(Matrix& train, Matrix& test) {
  if (train.rows() == 0) throw ValidationError("standardize: empty training matrix");
  if (test.cols() != train.cols() && test.rows() != 0) {
    throw ShapeError("standardize: train " + train.shape_string() + " vs test " +
                     test.shape_string());
  }
  const std::size_t d = train.cols();
  const double n = static_cast<double>(train.rows());
  Standardization s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  for (std::size_t i = 0; i < train.rows(); ++i) {
    auto r = train.row(i);
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
  }
  for (std::size_t j = 0; j < d; ++j) {
    s.mean[j] /= n;
    // a constant column must map to exact zeros
    bool constant = true;
    for (std::size_t i = 1; i < train.rows() && constant; ++i) constant = train(i, j) == train(0, j);
    if (constant) s.mean[j] = train(0, j);
  }
  for (std::size_t i = 0; i < train.rows(); ++i) {
    auto r = train.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double c = r[j] - s.mean[j];
      s.stddev[j] += c * c;
    }
  }
  for (double& v : s.stddev) v = std::max(std::sqrt(v / n), 1e-8);
  auto apply = [&s, d](Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      auto r = m.row(i);
      for (std::size_t j = 0; j < d; ++j) r[j] = (r[j] - s.mean[j]) / s.stddev[j];
    }
  };
  apply(train);
  apply(test);
  return s;
}

}  // namespace mdal
