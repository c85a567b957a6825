#pragma once

#include <cstdint>

#include "cpt/model.hpp"
#include "cpt/trace.hpp"

namespace cpt {

struct GenerateOptions {
  // 0 means the checkpoint's max_context; values above it are clamped.
  std::size_t max_len = 0;
  double temperature = 1.0;
  DeviceType device_type = DeviceType::Phone;
  std::size_t threads = 0;  // generate_dataset only; results independent of it
};

// One autoregressive rollout: prompt token from the released initial-event
// distribution (interarrival and stop zero), then sample event type, scaled
// interarrival (clamped to [0,1]) and stop flag per step until stop=1 or
// the length cap. A pure function of (checkpoint, seed).
Stream generate_stream(const Checkpoint& ckpt, std::uint64_t seed,
                       const GenerateOptions& opts = {});

// n independent rollouts with per-stream seeds derived from (seed, index).
TraceDataset generate_dataset(const Checkpoint& ckpt, std::size_t n_streams,
                              std::uint64_t seed, const GenerateOptions& opts = {});

}  // namespace cpt
