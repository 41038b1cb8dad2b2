#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "clab/rng.hpp"
#include "clab/tensor.hpp"

namespace clab {

struct ReplayItem {
  Tensor image;  // stored un-augmented; views are generated at draw time
  std::size_t label = 0;
};

// Fixed-capacity episodic memory with reservoir insertion: after n offers
// every offered sample is present with probability capacity/n.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::uint64_t seed);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t seen_count() const { return seen_; }
  bool empty() const { return entries_.empty(); }
  const std::vector<ReplayItem>& entries() const { return entries_; }

  void insert(const Tensor& image, std::size_t label);

  // k uniform draws, without replacement when k <= size. An empty buffer
  // yields an empty batch (callers drop the replay term).
  std::vector<ReplayItem> sample_batch(std::size_t k, std::uint64_t seed) const;

  // Checkpoint plumbing.
  std::string rng_state() const { return rng_.state_str(); }
  void set_rng_state(const std::string& state) { rng_.set_state_str(state); }
  void restore(std::vector<ReplayItem> entries, std::size_t seen_count);

 private:
  std::size_t capacity_;
  std::size_t seen_ = 0;
  std::vector<ReplayItem> entries_;
  Rng rng_;
};

}  // namespace clab
