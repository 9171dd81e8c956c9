#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "iqtcfm/checkpoint.hpp"
#include "iqtcfm/config.hpp"
#include "iqtcfm/flow.hpp"
#include "iqtcfm/manifest.hpp"
#include "iqtcfm/nn/params.hpp"
#include "iqtcfm/nn/unet.hpp"

namespace iqtcfm {

/// Cosine-annealed learning rate at the start of `epoch` (0-based; epoch ==
/// epochs yields the final value). Endpoints are exact: cosine_lr(0) ==
/// lr_init and cosine_lr(epochs) == lr_min.
double cosine_lr(uint32_t epoch, const TrainingConfig& cfg);

/// Rescales all gradients in place when their global L2 norm exceeds
/// `bound` (values <= 0 disable clipping). Returns the pre-clip norm.
double clip_gradients(nn::Store& grads, double bound);

/// One Adam update with coupled L2 decay (g += weight_decay * theta), step
/// counter `step` counting from 1. Per-element arithmetic runs in double.
/// Any non-finite gradient rejects the whole step: parameters and moments
/// stay untouched and the function returns false.
bool adam_step(nn::Store& params, const nn::Store& grads, nn::Store& m, nn::Store& v,
               uint64_t step, double lr, const TrainingConfig& cfg);

/// A preloaded, padded training record. `index` is the record's position in
/// the manifest and keys its per-epoch sample stream, so resumed runs draw
/// identical noise regardless of shuffle order.
struct TrainSample {
  Tensor high;
  Tensor low;
  uint32_t index = 0;
};

/// Loads every record of `split_name`, padding both images to a multiple of
/// `divisor` (the network's spatial divisor).
std::vector<TrainSample> load_training_split(const DatasetManifest& man,
                                             const std::filesystem::path& base_dir,
                                             const std::string& split_name, uint32_t divisor);

struct EpochStats {
  double mean_loss = 0.0;       // mean per-sample CFM loss over the epoch
  uint32_t rejected_steps = 0;  // optimizer steps skipped on non-finite gradients
};

/// One pass over `samples` in a freshly seeded shuffle, batch_size at a time
/// (the last partial batch is kept). Gradients are averaged over the actual
/// batch, optionally clipped, then applied with adam_step; `adam_steps` is
/// the persistent accepted-step counter.
EpochStats train_epoch(UNet& net, nn::Store& m, nn::Store& v, uint64_t& adam_steps,
                       const std::vector<TrainSample>& samples, uint32_t epoch, double lr,
                       uint64_t seed, const TrainingConfig& cfg);

/// Mean CFM loss of `fn` over `samples` with per-record frozen noise/t
/// draws, so values are comparable across epochs and runs.
double validate(const VelocityFn& fn, const std::vector<TrainSample>& samples, uint64_t seed);

struct FitResult {
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  double best_val = std::numeric_limits<double>::infinity();
  uint32_t epochs_run = 0;  // epochs executed by this invocation
};

/// Full training loop under `run_dir`: resumes from checkpoints/state.ckpt
/// when present, rewrites curves/curves.csv after every epoch, prints one
/// key=value progress line per epoch to stdout, and keeps best.ckpt (lowest
/// validation loss) plus last.ckpt + state.ckpt. `max_epochs_this_run`
/// (0 = unlimited) stops after that many epochs with state saved, leaving
/// the schedule untouched; a later call continues bit-exactly.
FitResult fit(const RunConfig& cfg, const std::filesystem::path& run_dir,
              uint32_t max_epochs_this_run = 0);

}  // namespace iqtcfm
