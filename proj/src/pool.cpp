// SPDX-License-Identifier: Apache-2.0
#include "mdal/pool.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mdal/errors.hpp"

namespace mdal {

PoolState::PoolState(std::vector<DomainDataset> domains)
    : store_(std::make_shared<const std::vector<DomainDataset>>(std::move(domains))) {
  for (const DomainDataset& d : *store_) {
    labeled_.emplace_back(d.size(), 0);
    labeled_count_.push_back(0);
    total_size_ += d.size();
  }
}

const DomainDataset& PoolState::domain(std::size_t k) const {
  if (k >= store_->size()) {
    throw ValidationError("domain id " + std::to_string(k) + " out of range [0, " +
                          std::to_string(store_->size()) + ")");
  }
  return (*store_)[k];
}

void PoolState::check(ItemRef item) const {
  if (item.domain >= num_domains() || item.index >= (*store_)[item.domain].size()) {
    throw InvariantError("item (" + std::to_string(item.domain) + ", " +
                         std::to_string(item.index) + ") is not in the pool");
  }
}

std::span<const double> PoolState::features(ItemRef item) const {
  check(item);
  return (*store_)[item.domain].features.row(item.index);
}

bool PoolState::is_labeled(ItemRef item) const {
  check(item);
  return labeled_[item.domain][item.index] != 0;
}

std::vector<std::size_t> PoolState::labeled(std::size_t k) const {
  domain(k);
  std::vector<std::size_t> out;
  out.reserve(labeled_count_[k]);
  for (std::size_t i = 0; i < labeled_[k].size(); ++i) {
    if (labeled_[k][i]) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> PoolState::unlabeled(std::size_t k) const {
  domain(k);
  std::vector<std::size_t> out;
  out.reserve(labeled_[k].size() - labeled_count_[k]);
  for (std::size_t i = 0; i < labeled_[k].size(); ++i) {
    if (!labeled_[k][i]) out.push_back(i);
  }
  return out;
}

std::size_t PoolState::unlabeled_count(std::size_t k) const {
  return domain(k).size() - labeled_count_[k];
}

std::size_t PoolState::total_labeled() const noexcept {
  return std::accumulate(labeled_count_.begin(), labeled_count_.end(), std::size_t{0});
}

void PoolState::annotate(std::span<const ItemRef> batch) {
  std::set<ItemRef> seen;
  for (const ItemRef& item : batch) {
    check(item);
    if (labeled_[item.domain][item.index]) {
      throw InvariantError("item (" + std::to_string(item.domain) + ", " +
                           std::to_string(item.index) + ") is already labeled");
    }
    if (!seen.insert(item).second) {
      throw InvariantError("item (" + std::to_string(item.domain) + ", " +
                           std::to_string(item.index) + ") appears twice in the batch");
    }
  }
  for (const ItemRef& item : batch) {
    labeled_[item.domain][item.index] = 1;
    ++labeled_count_[item.domain];
  }
}

PoolState init_split(std::vector<DomainDataset> domains, double init_fraction, RngStream& rng) {
  if (!(init_fraction > 0.0 && init_fraction <= 1.0)) {
    throw ValidationError("init_fraction must be in (0, 1]");
  }
  std::vector<std::size_t> counts;
  for (const DomainDataset& d : domains) {
    if (d.size() == 0) throw ValidationError("domain '" + d.name + "' is empty");
    // guard against 0.1*10 landing a hair above 1
    const double exact = init_fraction * static_cast<double>(d.size());
    auto n = static_cast<std::size_t>(std::ceil(exact - 1e-9));
    if (n == 0) {
      throw ValidationError("init_fraction " + std::to_string(init_fraction) +
                            " labels nothing in domain '" + d.name + "'");
    }
    counts.push_back(std::min(n, d.size()));
  }
  PoolState pool(std::move(domains));
  QueryBatch batch;
  for (std::size_t k = 0; k < pool.num_domains(); ++k) {
    std::vector<std::size_t> idx(pool.pool_size(k));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(idx.begin(), idx.end());
    for (std::size_t j = 0; j < counts[k]; ++j) batch.push_back({k, idx[j]});
  }
  pool.annotate(batch);
  return pool;
}

}  // namespace mdal
