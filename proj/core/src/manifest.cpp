#include "iqtcfm/manifest.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

#include "iqtcfm/errors.hpp"
#include "iqtcfm/tensor_io.hpp"

namespace iqtcfm {
namespace {

using nlohmann::json;

json params_to(const DegradationParams& p) {
  return json{{"snr_wm", p.snr_wm},
              {"snr_gm", p.snr_gm},
              {"contrast_gain", p.contrast_gain},
              {"downsample_factor", p.downsample_factor},
              {"mahalanobis", p.mahalanobis}};
}

DegradationParams params_from(const json& j) {
  DegradationParams p;
  p.snr_wm = j.at("snr_wm").get<double>();
  p.snr_gm = j.at("snr_gm").get<double>();
  p.contrast_gain = j.at("contrast_gain").get<double>();
  p.downsample_factor = j.at("downsample_factor").get<uint32_t>();
  p.mahalanobis = j.at("mahalanobis").get<double>();
  return p;
}

}  // namespace

std::vector<const ManifestRecord*> DatasetManifest::split(const std::string& name) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : records)
    if (r.split == name) out.push_back(&r);
  return out;
}

PairedSample load_pair(const ManifestRecord& rec, const std::filesystem::path& base_dir) {
  PairedSample s;
  s.subject_id = rec.subject_id;
  s.params = rec.params;
  s.high = read_tensor(base_dir / rec.high_path);
  s.low = read_tensor(base_dir / rec.low_path);
  require_same_shape(s.low, s.high, "load_pair");
  if (!s.low.all_finite() || !s.high.all_finite())
    throw IoError("pair " + rec.subject_id + " contains non-finite values");
  return s;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);  // binary: no newline translation
  if (!out) throw IoError("cannot write manifest " + path.string());
  json header{{"format", "iqtcfm-manifest-v1"},
              {"seed", m.seed},
              {"simulator_config_digest", m.simulator_config_digest}};
  out << header.dump() << "\n";
  for (const auto& r : m.records) {
    json jr{{"subject_id", r.subject_id}, {"split", r.split},   {"high_path", r.high_path},
            {"low_path", r.low_path},     {"params", params_to(r.params)}, {"seed", r.seed}};
    out << jr.dump() << "\n";
  }
  if (!out) throw IoError("short write to manifest " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty manifest " + path.string());
  DatasetManifest m;
  try {
    json header = json::parse(line);
    if (header.value("format", "") != "iqtcfm-manifest-v1")
      throw IoError(path.string() + ": unrecognized manifest format");
    m.seed = header.at("seed").get<uint64_t>();
    m.simulator_config_digest = header.at("simulator_config_digest").get<std::string>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json jr = json::parse(line);
      ManifestRecord r;
      r.subject_id = jr.at("subject_id").get<std::string>();
      r.split = jr.at("split").get<std::string>();
      r.high_path = jr.at("high_path").get<std::string>();
      r.low_path = jr.at("low_path").get<std::string>();
      r.params = params_from(jr.at("params"));
      r.seed = jr.at("seed").get<uint64_t>();
      m.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed manifest line: " + e.what());
  }
  return m;
}

DatasetManifest split_manifest(const DatasetManifest& pool, double train_fraction,
                               double val_fraction, RandomStream& rng) {
  if (pool.records.empty()) throw std::invalid_argument("split_manifest: empty pool");
  if (std::abs(train_fraction + val_fraction - 1.0) > 1e-9)
    throw std::invalid_argument("split_manifest: fractions must sum to 1");
  size_t n = pool.records.size();
  size_t n_train = size_t(double(n) * train_fraction);  // floor, remainder to val
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t(0));
  rng.shuffle(order);
  DatasetManifest out = pool;
  for (size_t i = 0; i < n; ++i)
    out.records[order[i]].split = i < n_train ? kSplitTrain : kSplitVal;
  return out;
}

}  // namespace iqtcfm
