#pragma once

#include <cstdint>

namespace iqtcfm {

/// One draw of the stochastic degradation model. The Mahalanobis distance
/// is always measured against the in-distribution reference Gaussian over
/// (snr_wm, snr_gm, contrast_gain).
struct DegradationParams {
  double snr_wm = 0;         // linear SNR in white matter, > 0
  double snr_gm = 0;         // linear SNR in gray matter, > 0
  double contrast_gain = 1;  // multiplicative GM/WM contrast factor, > 0
  uint32_t downsample_factor = 1;
  double mahalanobis = 0;
};

}  // namespace iqtcfm
