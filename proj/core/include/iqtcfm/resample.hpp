#pragma once

#include "iqtcfm/tensor.hpp"

namespace iqtcfm {

/// (C,H,W) -> (C,H/k,W/k); each output pixel is the mean of a k x k block.
/// H and W must be divisible by k.
Tensor block_downsample(const Tensor& x, uint32_t k);

/// (C,h,w) -> (C,h*k,w*k) separable Catmull-Rom interpolation with
/// pixel-center alignment. Out-of-range taps are linearly extrapolated from
/// the two nearest samples so linear ramps are reproduced exactly at borders.
Tensor bicubic_upsample(const Tensor& x, uint32_t k);

/// block_downsample then bicubic_upsample back to the original grid.
/// Identity when k == 1.
Tensor resample_roundtrip(const Tensor& x, uint32_t k);

}  // namespace iqtcfm
