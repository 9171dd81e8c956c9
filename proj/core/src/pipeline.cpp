#include "iqtcfm/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>

#include "iqtcfm/checkpoint.hpp"
#include "iqtcfm/errors.hpp"
#include "iqtcfm/flow.hpp"
#include "iqtcfm/manifest.hpp"
#include "iqtcfm/metrics.hpp"
#include "iqtcfm/random.hpp"
#include "iqtcfm/report.hpp"
#include "iqtcfm/simulator.hpp"
#include "iqtcfm/tensor_io.hpp"
#include "iqtcfm/training.hpp"

namespace iqtcfm {
namespace fs = std::filesystem;

namespace {

constexpr const char* kTestSplits[2] = {kSplitTestInd, kSplitTestOod};

fs::path manifest_path(const fs::path& run_dir) {
  return run_dir / "manifest" / "manifest.jsonl";
}

DatasetManifest read_run_manifest(const fs::path& run_dir) {
  fs::path p = manifest_path(run_dir);
  if (!fs::exists(p))
    throw ConfigError("no dataset manifest at " + p.string() + "; run `iqtcfm simulate` first");
  return read_manifest(p);
}

/// Loads best.ckpt and instantiates the network after checking that the
/// checkpoint was trained with this run's network config.
UNet load_network(const RunConfig& cfg, const fs::path& run_dir) {
  fs::path best = run_dir / "checkpoints" / "best.ckpt";
  if (!fs::exists(best))
    throw ConfigError("no checkpoint at " + best.string() + "; run `iqtcfm train` first");
  Checkpoint ckpt = load_checkpoint(best);
  if (network_config_to_json_text(ckpt.config) != network_config_to_json_text(cfg.network))
    throw ConfigError("checkpoint network config does not match the run config: " + best.string());
  UNet net(ckpt.config);
  net.params() = ckpt.params;
  return net;
}

Tensor gray_to_rgb(const Tensor& g) {
  Tensor rgb = Tensor::zeros({3, g.h(), g.w()});
  for (uint32_t c = 0; c < 3; ++c)
    for (uint32_t y = 0; y < g.h(); ++y)
      for (uint32_t x = 0; x < g.w(); ++x) rgb(c, y, x) = clamp01(g(0, y, x));
  return rgb;
}

void paste(Tensor& panel, const Tensor& tile, uint32_t top, uint32_t left) {
  for (uint32_t c = 0; c < 3; ++c)
    for (uint32_t y = 0; y < tile.h(); ++y)
      for (uint32_t x = 0; x < tile.w(); ++x) panel(c, top + y, left + x) = tile(c, y, x);
}

constexpr uint32_t kLegendWidth = 16;

/// Two rows of tiles (images, then error maps vs `high`) plus a vertical
/// legend strip on the right spanning the full [0, 0.25] error scale.
Tensor render_panel(const Tensor& high, const std::vector<Tensor>& tiles) {
  uint32_t h = high.h(), w = high.w();
  uint32_t ph = 2 * h, pw = uint32_t(tiles.size()) * w + kLegendWidth;
  Tensor panel = Tensor::zeros({3, ph, pw});
  for (size_t i = 0; i < tiles.size(); ++i) {
    paste(panel, gray_to_rgb(tiles[i]), 0, uint32_t(i) * w);
    paste(panel, colorize_error_map(error_map(high, tiles[i])), h, uint32_t(i) * w);
  }
  Tensor legend = Tensor::zeros({1, ph, kLegendWidth});
  for (uint32_t y = 0; y < ph; ++y) {
    float v = float(kErrorMapScale * (1.0 - double(y) / double(ph - 1)));
    for (uint32_t x = 0; x < kLegendWidth; ++x) legend(0, y, x) = v;
  }
  paste(panel, colorize_error_map(legend), 0, uint32_t(tiles.size()) * w);
  return panel;
}

}  // namespace

fs::path prepare_run_dir(const RunConfig& cfg) {
  cfg.validate();
  fs::path run_dir = fs::path(cfg.paths.output_dir) / run_config_digest(cfg);
  fs::create_directories(run_dir);
  fs::path resolved = run_dir / "resolved.json";
  if (!fs::exists(resolved)) {
    std::ofstream out(resolved, std::ios::binary);
    if (!out) throw IoError("cannot write " + resolved.string());
    out << run_config_to_json_text(cfg) << "\n";
  }
  return run_dir;
}

RunLock::RunLock(const fs::path& run_dir) : path_(run_dir / ".lock") {
  int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST)
      throw RuntimeFailure("run directory is locked by another command (" + path_.string() +
                           "); remove the stale lock if no command is running");
    throw IoError("cannot create lock file " + path_.string() + ": " + std::strerror(errno));
  }
  std::string pid = std::to_string(::getpid()) + "\n";
  ssize_t n = ::write(fd, pid.data(), pid.size());
  (void)n;
  ::close(fd);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

Tensor reconstruct_cfm(const UNet& net, const Tensor& low, const SamplerConfig& sampler,
                       uint64_t run_seed, const std::string& subject_id) {
  uint32_t top = 0, left = 0;
  Tensor low_p = pad_to_multiple(low, net.config().spatial_divisor(), top, left);
  RandomStream rng(derive_seed(run_seed, "infer", fnv1a64(subject_id)));
  Tensor x0 = sample_noise(low_p.dims, rng);
  VelocityFn fn = [&net](const Tensor& x, double t, const Tensor& cond) {
    return net.forward(x, cond, t, nullptr);
  };
  Tensor xT = integrate(fn, x0, low_p, sampler);
  return clamp01(crop(xT, top, left, low.h(), low.w()));
}

void cmd_simulate(const RunConfig& cfg) {
  fs::path run_dir = prepare_run_dir(cfg);
  RunLock lock(run_dir);
  fs::path man_path = manifest_path(run_dir);
  size_t expected = size_t(cfg.data.train_pool) + cfg.data.test_ind + cfg.data.test_ood;
  if (fs::exists(man_path)) {
    DatasetManifest existing = read_manifest(man_path);
    if (existing.seed == cfg.seed &&
        existing.simulator_config_digest == simulator_config_digest(cfg.simulator) &&
        existing.records.size() == expected) {
      std::cerr << "[simulate] dataset up to date (" << existing.records.size() << " records)\n";
      return;
    }
    std::cerr << "[simulate] existing manifest does not match this config; rebuilding\n";
  }
  std::vector<std::string> warnings;
  DatasetManifest man = build_dataset(cfg, man_path.parent_path(), &warnings);
  for (const std::string& w : warnings) std::cerr << "[simulate] warning: " << w << "\n";
  std::cerr << "[simulate] wrote " << man.records.size() << " records: " << "train "
            << man.split(kSplitTrain).size() << ", val " << man.split(kSplitVal).size()
            << ", test_ind " << man.split(kSplitTestInd).size() << ", test_ood "
            << man.split(kSplitTestOod).size() << " -> " << man_path.string() << "\n";
}

void cmd_train(const RunConfig& cfg) {
  fs::path run_dir = prepare_run_dir(cfg);
  RunLock lock(run_dir);
  if (!fs::exists(manifest_path(run_dir)))
    throw ConfigError("no dataset manifest; run `iqtcfm simulate` first");
  FitResult res = fit(cfg, run_dir);
  std::cerr << "[train] done after " << res.epochs_run << " epoch(s); best validation loss "
            << res.best_val << "; checkpoints in " << (run_dir / "checkpoints").string() << "\n";
}

void cmd_infer(const RunConfig& cfg) {
  fs::path run_dir = prepare_run_dir(cfg);
  RunLock lock(run_dir);
  DatasetManifest man = read_run_manifest(run_dir);
  UNet net = load_network(cfg, run_dir);
  fs::path base = manifest_path(run_dir).parent_path();
  fs::path recon_dir = run_dir / "recon";
  fs::create_directories(recon_dir);
  size_t done = 0, rejected = 0;
  for (const char* split : kTestSplits) {
    for (const ManifestRecord* rec : man.split(split)) {
      try {
        PairedSample pair = load_pair(*rec, base);
        Tensor out = reconstruct_cfm(net, pair.low, cfg.sampler, cfg.seed, rec->subject_id);
        write_tensor(out, recon_dir / (rec->subject_id + "_cfm.rt"));
        write_png_gray16(out, recon_dir / (rec->subject_id + "_cfm.png"));
        ++done;
      } catch (const std::exception& e) {
        std::cerr << "[infer] rejected " << rec->subject_id << ": " << e.what() << "\n";
        ++rejected;
      }
    }
  }
  std::cerr << "[infer] reconstructed " << done << " image(s)"
            << (rejected ? " (" + std::to_string(rejected) + " rejected)" : std::string())
            << " -> " << recon_dir.string() << "\n";
}

void cmd_evaluate(const RunConfig& cfg) {
  fs::path run_dir = prepare_run_dir(cfg);
  RunLock lock(run_dir);
  DatasetManifest man = read_run_manifest(run_dir);
  UNet net = load_network(cfg, run_dir);
  fs::path base = manifest_path(run_dir).parent_path();
  fs::path recon_dir = run_dir / "recon";

  std::vector<MethodSpec> methods;
  methods.push_back({"Interpolation", std::nullopt,
                     [](const ManifestRecord& rec, const PairedSample& pair)
                         -> std::optional<Tensor> {
                       return interpolation_baseline(pair.low, rec.params.downsample_factor);
                     }});
  methods.push_back({"IQT-CFM", uint64_t(net.param_count()),
                     [&](const ManifestRecord& rec, const PairedSample& pair)
                         -> std::optional<Tensor> {
                       fs::path rt = recon_dir / (rec.subject_id + "_cfm.rt");
                       if (fs::exists(rt)) return read_tensor(rt);
                       return reconstruct_cfm(net, pair.low, cfg.sampler, cfg.seed,
                                              rec.subject_id);
                     }});
  std::vector<MethodMeta> metas;
  for (const MethodSpec& ms : methods) metas.push_back({ms.name, ms.param_count});

  for (const char* split : kTestSplits) {
    fs::path split_dir = run_dir / "reports" / split;
    fs::create_directories(split_dir);
    EvaluationReport rep = evaluate(man, base, split, methods, nullptr, split_dir);
    for (const std::string& w : rep.warnings) std::cerr << "[evaluate] " << split << ": " << w
                                                        << "\n";
    write_per_image_csv(rep.per_image, split_dir / "per_image.csv");
    // Regenerate the aggregates from the stored CSV so the published report
    // is a pure function of the per-image file.
    rep.per_image = read_per_image_csv(split_dir / "per_image.csv");
    rep.rows = aggregate(rep.per_image, metas, rep.split_size);
    write_report_csv(rep, split_dir / "report.csv");
    write_report_text(rep, split_dir / "report.txt");
    std::cerr << "[evaluate] wrote " << (split_dir / "report.txt").string() << "\n";
  }
}

void cmd_report(const RunConfig& cfg) {
  fs::path run_dir = prepare_run_dir(cfg);
  RunLock lock(run_dir);
  DatasetManifest man = read_run_manifest(run_dir);
  fs::path base = manifest_path(run_dir).parent_path();
  fs::path recon_dir = run_dir / "recon";
  fs::path panels_dir = run_dir / "panels";
  fs::create_directories(panels_dir);
  size_t done = 0;
  std::vector<std::string> missing;
  for (const char* split : kTestSplits) {
    for (const ManifestRecord* rec : man.split(split)) {
      fs::path rt = recon_dir / (rec->subject_id + "_cfm.rt");
      if (!fs::exists(rt)) {
        missing.push_back(rec->subject_id);
        continue;
      }
      PairedSample pair = load_pair(*rec, base);
      Tensor interp = interpolation_baseline(pair.low, rec->params.downsample_factor);
      Tensor cfm = read_tensor(rt);
      Tensor panel = render_panel(pair.high, {pair.high, pair.low, interp, cfm});
      write_png_rgb8(panel, panels_dir / (rec->subject_id + ".png"));
      ++done;
    }
  }
  for (const std::string& id : missing)
    std::cerr << "[report] missing reconstruction for " << id << "; run `iqtcfm infer`\n";
  std::cerr << "[report] wrote " << done << " panel(s) -> " << panels_dir.string() << "\n";
}

}  // namespace iqtcfm
