// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mdal/matrix.hpp"
#include "mdal/rng.hpp"

namespace mdal {

/// One domain's samples: dense features plus integer class labels.
struct DomainDataset {
  std::string name;
  std::size_t domain = 0;
  std::size_t num_classes = 2;
  Matrix features;
  std::vector<std::size_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

struct ManifestDomain {
  std::string name;
  std::string file;  // relative to the manifest's directory unless absolute
  std::size_t classes = 2;
};

/// JSON: {"name": ..., "dim": ..., "domains": [{"name", "file", "classes"}]}
struct DatasetManifest {
  std::string name;
  std::size_t dim = 0;
  std::vector<ManifestDomain> domains;
  std::filesystem::path base_dir;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DomainDataset load_domain(const DatasetManifest& manifest, std::size_t k);

/// CSV without header: label first, then `dim` features.
DomainDataset read_domain_csv(const std::filesystem::path& path, std::size_t dim,
                              std::size_t num_classes);
/// Shortest round-trip decimal formatting; reading the file back is bit-exact.
void write_domain_csv(const DomainDataset& data, const std::filesystem::path& path);

struct SyntheticSpec {
  std::string name = "synthetic";
  std::size_t num_domains = 3;
  std::size_t samples_per_domain = 400;
  std::size_t input_dim = 20;
  std::size_t num_classes = 2;
  double shared_strength = 1.0;
  double shift_strength = 1.0;
  double label_noise = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Domain k draws x = a(y)·(s·w_shared + d·w_k) + d·u_k + N(0, I), with
/// a(y) spread evenly over [−1, 1] by class, unit directions w_shared, w_k, u_k,
/// s = shared_strength and d = shift_strength. Labels are then replaced with a
/// different class at rate label_noise.
std::vector<DomainDataset> generate_synthetic(const SyntheticSpec& spec);

struct TrainTestSplit {
  DomainDataset train;
  DomainDataset test;
};

/// Class-stratified split; every class keeps at least one item on each side.
TrainTestSplit train_test_split(const DomainDataset& data, double test_fraction, RngStream& rng);

struct Standardization {
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Per-feature z-scoring with statistics from `train` only (std floored at
/// 1e-8). Both matrices are transformed in place.
Standardization standardize(Matrix& train, Matrix& test);

}  // namespace mdal
