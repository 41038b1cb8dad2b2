#include "clab/buffer.hpp"

#include <numeric>
#include <stdexcept>

namespace clab {

namespace {
constexpr std::uint64_t kTagInsert = 0x425546u;
constexpr std::uint64_t kTagSample = 0x534d50u;
}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::uint64_t seed)
    : capacity_(capacity), rng_(mix_seed(seed, kTagInsert)) {
  if (capacity == 0) {
    throw std::invalid_argument("replay buffer: capacity must be positive");
  }
  entries_.reserve(capacity);
}

void ReplayBuffer::insert(const Tensor& image, std::size_t label) {
  if (entries_.size() < capacity_) {
    entries_.push_back({image, label});
  } else {
    const std::size_t slot = rng_.uniform_index(seen_ + 1);
    if (slot < capacity_) entries_[slot] = {image, label};
  }
  ++seen_;
}

std::vector<ReplayItem> ReplayBuffer::sample_batch(std::size_t k,
                                                   std::uint64_t seed) const {
  std::vector<ReplayItem> batch;
  if (entries_.empty() || k == 0) return batch;
  batch.reserve(k);
  Rng rng(mix_seed(seed, kTagSample));
  if (k <= entries_.size()) {
    // Partial Fisher-Yates over an index view.
    std::vector<std::size_t> order(entries_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + rng.uniform_index(order.size() - i);
      std::swap(order[i], order[j]);
      batch.push_back(entries_[order[i]]);
    }
  } else {
    for (std::size_t i = 0; i < k; ++i) {
      batch.push_back(entries_[rng.uniform_index(entries_.size())]);
    }
  }
  return batch;
}

void ReplayBuffer::restore(std::vector<ReplayItem> entries, std::size_t seen_count) {
  if (entries.size() > capacity_) {
    throw std::invalid_argument("replay buffer: restored entries exceed capacity");
  }
  if (entries.size() != std::min(seen_count, capacity_)) {
    throw std::invalid_argument("replay buffer: entry count inconsistent with seen count");
  }
  entries_ = std::move(entries);
  seen_ = seen_count;
}

}  // namespace clab
