#pragma once

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "iqtcfm/config.hpp"
#include "iqtcfm/nn/params.hpp"

namespace iqtcfm {

/// Model snapshot: architecture plus its parameter store. Serialization is
/// bit-exact: header {magic, version, NetworkConfig JSON, total_count}, then
/// one record per tensor (name, rank, dims, float32 payload, little-endian).
struct Checkpoint {
  NetworkConfig config;
  nn::Store params;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct CurveRow {
  uint32_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

/// Resumable optimizer + loop state. Restoring and continuing reproduces the
/// uninterrupted trajectory bit-exactly (all RNG streams are derived from the
/// run seed and epoch/record indices, so no generator state needs saving).
struct TrainState {
  uint32_t next_epoch = 0;
  uint64_t adam_steps = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<CurveRow> curve;
  nn::Store params;
  nn::Store m;  // Adam first moments
  nn::Store v;  // Adam second moments
};

void save_train_state(const TrainState& state, const NetworkConfig& cfg,
                      const std::filesystem::path& path);
TrainState load_train_state(const std::filesystem::path& path, const NetworkConfig& expected);

}  // namespace iqtcfm
