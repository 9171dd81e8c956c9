#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "iqtcfm/tensor.hpp"

namespace iqtcfm {

// ---------------------------------------------------------------------------
// Raw tensor container (.rt)
//
//   bytes  0..11   magic "IQTCFMTENSOR"
//   bytes 12..15   u32 format version (currently 1)
//   u32            rank
//   u32 x rank     dims
//   f32 x N        payload
//
// All integers and floats little-endian. Round-trips bit-exactly.
// ---------------------------------------------------------------------------

void write_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

/// Volume ingestion result. `tensor` is min-max normalized to [0,1];
/// the original range is kept for provenance.
struct LoadedVolume {
  Tensor tensor;      // rank 3: (slices, H, W) for volumes, (1, H, W) for single slices
  double orig_min = 0;
  double orig_max = 0;
};

/// Reads a NIfTI-1 file (.nii / .nii.gz, scalar single-frame) or a raw
/// tensor file, normalizes per-volume min-max to [0,1], and records the
/// original range. A constant volume maps to all zeros.
LoadedVolume load_volume(const std::filesystem::path& path);

/// Writes `t` in the raw container, or as 16-bit grayscale PNG when the
/// path ends in .png (requires a single-channel rank-3 tensor; values are
/// clamped to [0,1] and quantized round-half-up to 0..65535).
void save_volume(const Tensor& t, const std::filesystem::path& path);

/// Splits a (D,H,W) volume into D independent (1,H,W) axial slices.
std::vector<Tensor> slice_volume(const Tensor& volume);

/// Round-half-up quantization used by the PNG exporter.
uint16_t quantize16(float v);

void write_png_gray16(const Tensor& t, const std::filesystem::path& path);
Tensor read_png_gray16(const std::filesystem::path& path);

/// 8-bit RGB export for panels and colormapped error maps; expects (3,H,W)
/// in [0,1].
void write_png_rgb8(const Tensor& t, const std::filesystem::path& path);

}  // namespace iqtcfm
