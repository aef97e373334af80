// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <memory>
#include <span>
#include <vector>

#include "mdal/data_io.hpp"
#include "mdal/rng.hpp"

namespace mdal {

/// A pool item: (domain id, row index in that domain's store).
struct ItemRef {
  std::size_t domain = 0;
  std::size_t index = 0;

  friend auto operator<=>(const ItemRef&, const ItemRef&) = default;
};

using QueryBatch = std::vector<ItemRef>;

/// Labeled / unlabeled bookkeeping over an immutable per-domain sample store.
/// Copies share the store.
class PoolState {
 public:
  /// Everything starts unlabeled.
  explicit PoolState(std::vector<DomainDataset> domains);

  std::size_t num_domains() const noexcept { return store_->size(); }
  const DomainDataset& domain(std::size_t k) const;
  std::span<const double> features(ItemRef item) const;

  bool is_labeled(ItemRef item) const;
  std::vector<std::size_t> labeled(std::size_t k) const;
  std::vector<std::size_t> unlabeled(std::size_t k) const;
  std::size_t labeled_count(std::size_t k) const { return labeled_count_.at(k); }
  std::size_t unlabeled_count(std::size_t k) const;
  std::size_t pool_size(std::size_t k) const { return domain(k).size(); }

  std::size_t total_size() const noexcept { return total_size_; }
  std::size_t total_labeled() const noexcept;
  std::size_t total_unlabeled() const noexcept { return total_size_ - total_labeled(); }

  /// Moves every batch item U→L. Throws InvariantError (and changes nothing)
  /// if an item is already labeled, out of range or listed twice.
  void annotate(std::span<const ItemRef> batch);

 private:
  void check(ItemRef item) const;

  std::shared_ptr<const std::vector<DomainDataset>> store_;
  std::vector<std::vector<char>> labeled_;
  std::vector<std::size_t> labeled_count_;
  std::size_t total_size_ = 0;
};

/// Labels ⌈init_fraction·n_k⌉ uniformly chosen items in every domain.
PoolState init_split(std::vector<DomainDataset> domains, double init_fraction, RngStream& rng);

}  // namespace mdal
