// SPDX-License-Identifier: Apache-2.0
#include "mdal/rng.hpp"

#include <algorithm>

#include "mdal/errors.hpp"

namespace mdal {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(seed) ^ h);
}

RngStream::RngStream(std::uint64_t seed, std::string label)
    : seed_(seed), label_(std::move(label)), engine_(mix_seed(seed_, label_)) {}

RngStream RngStream::child(std::string_view suffix) const {
  std::string l = label_;
  l += '/';
  l += suffix;
  return RngStream(seed_, std::move(l));
}

double RngStream::uniform01() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

std::size_t RngStream::uniform_index(std::size_t n) {
  if (n == 0) throw ValidationError("uniform_index: empty range");
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

double RngStream::normal(double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(engine_);
}

}  // namespace mdal
