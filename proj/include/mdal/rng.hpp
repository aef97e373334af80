// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace mdal {

/// Labeled pseudo-random stream. The engine state is a pure function of
/// (seed, label), so two streams with the same pair replay the same draws and
/// streams with different labels are decorrelated.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string label);

  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& label() const noexcept { return label_; }

  /// Independent stream tagged `label/suffix` under the same seed.
  RngStream child(std::string_view suffix) const;

  std::mt19937_64& engine() noexcept { return engine_; }

  double uniform01();
  /// Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n);
  double normal(double mean, double stddev);

  template <class It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, engine_);
  }

 private:
  std::uint64_t seed_;
  std::string label_;
  std::mt19937_64 engine_;
};

/// Stable 64-bit mixing of a seed with a string label (FNV-1a + splitmix64).
std::uint64_t mix_seed(std::uint64_t seed, std::string_view label);

}  // namespace mdal
