#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace iqtcfm {

/// U-Net hyperparameters. Channel counts at level l are
/// 4*branch_channels*channel_mult[l]; the bottleneck runs at the deepest
/// level's width, one pixel-unshuffle below it.
struct NetworkConfig {
  uint32_t branch_channels = 16;
  uint32_t depth = 3;
  std::vector<uint32_t> channel_mult = {1, 2, 4};
  uint32_t res_blocks_per_level = 2;
  uint32_t se_reduction = 8;
  uint32_t time_embed_dim = 128;
  uint32_t attn_heads = 4;
  uint32_t groupnorm_groups = 8;

  uint32_t stem_channels() const { return 4 * branch_channels; }
  uint32_t level_channels(uint32_t level) const { return stem_channels() * channel_mult[level]; }
  uint32_t bottleneck_channels() const { return level_channels(depth - 1); }
  uint32_t spatial_divisor() const { return 1u << depth; }

  void validate() const;
};

struct TrainingConfig {
  double lr_init = 1e-4;
  double lr_min = 1e-6;
  double weight_decay = 1e-4;
  uint32_t batch_size = 4;
  uint32_t epochs = 200;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  uint32_t checkpoint_every = 10;
  double grad_clip = 0.0;  // global-norm bound; 0 disables

  void validate() const;
};

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

/// Degradation parameter distributions. The 3-vector is
/// (snr_wm, snr_gm, contrast_gain); the in-distribution reference Gaussian
/// defines the Mahalanobis gate. These moments are calibration constants,
/// exposed in the config and recorded in every manifest.
struct SimulatorConfig {
  Vec3 ind_mean = {12.0, 8.0, 1.0};
  Mat3 ind_cov = {{{4.0, 0.0, 0.0}, {0.0, 2.25, 0.0}, {0.0, 0.0, 0.01}}};
  Vec3 ood_mean = {4.0, 3.5, 0.8};
  Mat3 ood_cov = {{{1.0, 0.0, 0.0}, {0.0, 0.5625, 0.0}, {0.0, 0.0, 0.0025}}};
  uint32_t downsample_factor = 2;
  uint32_t max_attempts = 10000;

  void validate() const;  // covariances must be symmetric positive definite
};

struct SamplerConfig {
  uint32_t n_steps = 50;
  std::string method = "euler";  // "euler" | "midpoint"

  void validate() const;
};

/// Dataset synthesis source and sizes. The training pool is split
/// train_fraction/val_fraction into train/val; test pools are labeled directly.
struct DataConfig {
  std::string source = "phantom";  // "phantom" | "volumes"
  uint32_t phantom_h = 64;
  uint32_t phantom_w = 64;
  uint32_t train_pool = 10;
  uint32_t test_ind = 4;
  uint32_t test_ood = 4;
  double train_fraction = 0.8;
  double val_fraction = 0.2;

  void validate() const;
};

struct PathsConfig {
  std::string input_dir;          // NIfTI / raw volume directory for source=volumes
  std::string output_dir = "runs";
};

struct RunConfig {
  uint64_t seed = 0;
  NetworkConfig network;
  TrainingConfig training;
  SimulatorConfig simulator;
  SamplerConfig sampler;
  DataConfig data;
  PathsConfig paths;

  void validate() const;
};

/// Strict JSON round trip: unknown keys are an error, known keys are
/// optional and fall back to the defaults above.
RunConfig run_config_from_json_text(const std::string& text);
std::string run_config_to_json_text(const RunConfig& cfg);

/// Network section alone; embedded in checkpoint headers.
NetworkConfig network_config_from_json_text(const std::string& text);
std::string network_config_to_json_text(const NetworkConfig& cfg);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

/// Applies "dotted.key=value" overrides to the config. Values parse as
/// JSON scalars when possible, else as strings.
RunConfig apply_overrides(const RunConfig& cfg, const std::vector<std::string>& overrides);

/// 16-hex-digit digest of the resolved config (seed included); keys run
/// directories and detects stale outputs.
std::string run_config_digest(const RunConfig& cfg);

/// Digest of the simulator section only; recorded in dataset manifests.
std::string simulator_config_digest(const SimulatorConfig& cfg);

}  // namespace iqtcfm
