#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "iqtcfm/config.hpp"
#include "iqtcfm/degradation_params.hpp"
#include "iqtcfm/manifest.hpp"
#include "iqtcfm/random.hpp"
#include "iqtcfm/tensor.hpp"

namespace iqtcfm {

enum class Tissue : uint8_t { background = 0, gm = 1, wm = 2 };

/// Per-pixel tissue labels with the same H x W footprint as the image.
struct TissueMask {
  uint32_t h = 0;
  uint32_t w = 0;
  std::vector<uint8_t> labels;  // values from Tissue

  TissueMask() = default;
  TissueMask(uint32_t h_, uint32_t w_)
      : h(h_), w(w_), labels(size_t(h_) * w_, uint8_t(Tissue::background)) {}

  uint8_t& at(uint32_t y, uint32_t x) { return labels[size_t(y) * w + x]; }
  uint8_t at(uint32_t y, uint32_t x) const { return labels[size_t(y) * w + x]; }
  size_t count(Tissue t) const;
};

/// Rejection-sample degradation parameters from the in-distribution Gaussian;
/// accepted draws satisfy mahalanobis < 1, snr_wm > snr_gm, and positivity.
DegradationParams sample_params_ind(const SimulatorConfig& cfg, RandomStream& rng);

/// Sample from the shifted out-of-distribution Gaussian; accepted draws have
/// mahalanobis >= 1 w.r.t. the in-distribution reference (SNR order is free).
DegradationParams sample_params_ood(const SimulatorConfig& cfg, RandomStream& rng);

struct DegradeResult {
  Tensor image;
  std::vector<std::string> warnings;  // steps skipped due to empty tissue classes
};

/// Degradation pipeline: contrast remap -> k x block-average downsample +
/// bicubic re-upsample -> tissue-wise additive Gaussian noise -> clamp [0,1].
DegradeResult degrade(const Tensor& high, const TissueMask& mask, const DegradationParams& p,
                      RandomStream& rng);

/// Synthetic "brain": rotated ellipse with a WM core (~0.75) and GM shell
/// (~0.55), a smooth multiplicative bias field, and mild texture noise.
std::pair<Tensor, TissueMask> make_phantom(uint32_t h, uint32_t w, RandomStream& rng);

/// Three-class Otsu split on a 256-bin histogram anchored at intensity 0:
/// background below the lower threshold, GM between, WM above. Near-constant
/// images are all background.
TissueMask estimate_mask(const Tensor& high);

/// Block-average k x downsample then bicubic upsample of the low image: what
/// the resolution channel alone recovers. Identity when k == 1.
Tensor interpolation_baseline(const Tensor& low, uint32_t k);

/// Generate the full dataset (pool + InD/OOD test records), write image pairs
/// under out_dir/images and the manifest to out_dir/manifest.jsonl.
DatasetManifest build_dataset(const RunConfig& cfg, const std::filesystem::path& out_dir,
                              std::vector<std::string>* warnings = nullptr);

}  // namespace iqtcfm
