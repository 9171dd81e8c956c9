#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "iqtcfm/degradation_params.hpp"
#include "iqtcfm/random.hpp"
#include "iqtcfm/tensor.hpp"

namespace iqtcfm {

inline constexpr const char* kSplitTrain = "train";
inline constexpr const char* kSplitVal = "val";
inline constexpr const char* kSplitTestInd = "test_ind";
inline constexpr const char* kSplitTestOod = "test_ood";

/// One dataset entry; image pixels live in raw tensor files referenced by
/// path (relative to the manifest's directory).
struct ManifestRecord {
  std::string subject_id;
  std::string split;
  std::string high_path;
  std::string low_path;
  DegradationParams params;
  uint64_t seed = 0;  // per-record derived seed used for its degradation
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  uint64_t seed = 0;
  std::string simulator_config_digest;

  std::vector<const ManifestRecord*> split(const std::string& name) const;
};

/// In-memory training pair; `low` is derived from `high` by the simulator.
struct PairedSample {
  Tensor low;
  Tensor high;
  std::string subject_id;
  DegradationParams params;
};

PairedSample load_pair(const ManifestRecord& rec, const std::filesystem::path& base_dir);

/// JSON-lines serialization: a header line followed by one record per
/// line. Byte-identical for identical inputs.
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Assigns train/val labels to every record of the pool by seeded shuffle.
/// The train count is floor(train_fraction * N); the remainder goes to
/// val. Record order is preserved; only labels change.
DatasetManifest split_manifest(const DatasetManifest& pool, double train_fraction,
                               double val_fraction, RandomStream& rng);

}  // namespace iqtcfm
