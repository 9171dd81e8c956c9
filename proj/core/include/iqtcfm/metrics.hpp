#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "iqtcfm/manifest.hpp"
#include "iqtcfm/tensor.hpp"

namespace iqtcfm {

inline constexpr double kPsnrCapDb = 100.0;
inline constexpr double kErrorMapScale = 0.25;  // fixed export range for error maps

/// 10*log10(max_val^2 / mse), capped at 100 dB so aggregates stay finite;
/// `capped` (optional) reports whether the cap fired.
double psnr_from_mse(double mse, double max_val = 1.0, bool* capped = nullptr);

/// PSNR between two equal-shape tensors; the MSE accumulates in double.
double psnr(const Tensor& ref, const Tensor& test, double max_val = 1.0, bool* capped = nullptr);

/// Mean SSIM over valid 11x11 window centers: Gaussian weights sigma = 1.5,
/// K1 = 0.01, K2 = 0.03, dynamic range 1. Single channel, H, W >= 11.
double ssim(const Tensor& ref, const Tensor& test);

/// Elementwise |ref - test|.
Tensor error_map(const Tensor& ref, const Tensor& test);

/// Renders an error map to (3,H,W) RGB on the fixed [0, 0.25] scale with a
/// hot colormap: u = min(1, m/0.25), (r,g,b) = clamp01(3u, 3u-1, 3u-2).
Tensor colorize_error_map(const Tensor& err);

/// colorize_error_map + RGB8 PNG export.
void write_error_map_png(const Tensor& err, const std::filesystem::path& path);

/// External perceptual-score hook. No pretrained weights ship with the
/// toolkit; with no provider the LPIPS column reads "n/a".
class LpipsProvider {
 public:
  virtual ~LpipsProvider() = default;
  /// Lower is better. Non-finite results are treated as missing.
  virtual double score(const Tensor& ref, const Tensor& test) = 0;
};

/// Per-image metric row; `lpips` is empty without a provider (or when the
/// provider failed for this image).
struct MetricResult {
  std::string subject_id;
  std::string method;
  double psnr_db = 0.0;
  double ssim_val = 0.0;
  std::optional<double> lpips;
};

/// One reconstruction method competing in a report. `reconstruct` returns
/// the estimate for a record, or nullopt when unavailable; missing records
/// are excluded from the method's aggregates with the count disclosed.
struct MethodSpec {
  std::string name;
  std::optional<uint64_t> param_count;  // empty renders as "n/a"
  std::function<std::optional<Tensor>(const ManifestRecord&, const PairedSample&)> reconstruct;
};

struct MethodMeta {
  std::string name;
  std::optional<uint64_t> param_count;
};

struct AggregateRow {
  std::string method;
  uint32_t n_images = 0;
  uint32_t excluded = 0;
  double psnr_mean = 0.0, psnr_std = 0.0;
  double ssim_mean = 0.0, ssim_std = 0.0;
  std::optional<double> lpips_mean, lpips_std;
  uint32_t lpips_n = 0;
  std::optional<uint64_t> param_count;
};

struct EvaluationReport {
  std::string split;
  uint32_t split_size = 0;
  std::string config_digest;  // dataset provenance, from the manifest
  std::vector<MetricResult> per_image;  // record-major, methods in spec order
  std::vector<AggregateRow> rows;       // one per method
  std::vector<std::string> warnings;
};

/// Scores every record of `split` under every method. When `errmap_dir` is
/// non-empty, writes {subject}_{method}_err.png error maps there. Aggregates
/// come from `aggregate` over the per-image rows.
EvaluationReport evaluate(const DatasetManifest& man, const std::filesystem::path& base_dir,
                          const std::string& split, const std::vector<MethodSpec>& methods,
                          LpipsProvider* lpips = nullptr,
                          const std::filesystem::path& errmap_dir = {});

/// Pure fold over per-image rows in order, one output row per method;
/// mean and population standard deviation (divide by N). `split_size`
/// fixes each method's disclosed exclusion count.
std::vector<AggregateRow> aggregate(const std::vector<MetricResult>& per_image,
                                    const std::vector<MethodMeta>& methods, uint32_t split_size);

}  // namespace iqtcfm
