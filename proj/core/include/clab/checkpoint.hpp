#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "clab/buffer.hpp"
#include "clab/model.hpp"

namespace clab {

struct Checkpoint {
  NetworkConfig network;
  std::uint64_t seed = 0;
  MultiHeadNet net;
  std::unique_ptr<ReplayBuffer> buffer;  // null when the run kept no memory
};

// Container layout: 4-byte little-endian header length, JSON header (network
// config echo, parameter/buffer counts, seed, replay manifest), then one flat
// little-endian float64 array holding parameters, normalization statistics,
// and stored replay images in that order.
void save_checkpoint(const std::string& path, const MultiHeadNet& net,
                     std::uint64_t seed, const ReplayBuffer* buffer = nullptr);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace clab
