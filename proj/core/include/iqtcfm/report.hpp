#pragma once

#include <filesystem>
#include <vector>

#include "iqtcfm/metrics.hpp"

namespace iqtcfm {

/// Published reference parameter count, printed next to this build's own
/// count in every evaluation report.
inline constexpr uint64_t kReferenceParamCount = 5253249;

/// subject_id,method,psnr,ssim,lpips (last field empty when absent).
/// Doubles use shortest round-trip formatting, so reading the file back
/// recovers every value bit-exactly.
void write_per_image_csv(const std::vector<MetricResult>& rows,
                         const std::filesystem::path& path);
std::vector<MetricResult> read_per_image_csv(const std::filesystem::path& path);

/// Machine-readable aggregate table, one row per method.
void write_report_csv(const EvaluationReport& rep, const std::filesystem::path& path);

/// Aligned-text table with the PSNR↑ / SSIM↑ / LPIPS↓ / Params↓ column
/// scheme, a population-std footnote, and parameter counts (this
/// configuration next to the published reference).
void write_report_text(const EvaluationReport& rep, const std::filesystem::path& path);

}  // namespace iqtcfm
