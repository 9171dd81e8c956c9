#include "iqtcfm/simulator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "iqtcfm/errors.hpp"
#include "iqtcfm/resample.hpp"
#include "iqtcfm/tensor_io.hpp"

namespace iqtcfm {
namespace {

Eigen::Vector3d to_vec(const Vec3& v) { return {v[0], v[1], v[2]}; }

Eigen::Matrix3d to_mat(const Mat3& m) {
  Eigen::Matrix3d out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out(r, c) = m[size_t(r)][size_t(c)];
  return out;
}

Eigen::Vector3d draw3(RandomStream& rng) {
  double a = rng.normal(), b = rng.normal(), c = rng.normal();
  return {a, b, c};
}

bool positive(const Eigen::Vector3d& x) { return x[0] > 0 && x[1] > 0 && x[2] > 0; }

DegradationParams pack(const Eigen::Vector3d& x, double mahal, uint32_t k) {
  DegradationParams p;
  p.snr_wm = x[0];
  p.snr_gm = x[1];
  p.contrast_gain = x[2];
  p.downsample_factor = k;
  p.mahalanobis = mahal;
  return p;
}

}  // namespace

size_t TissueMask::count(Tissue t) const {
  return size_t(std::count(labels.begin(), labels.end(), uint8_t(t)));
}

DegradationParams sample_params_ind(const SimulatorConfig& cfg, RandomStream& rng) {
  Eigen::Vector3d mu = to_vec(cfg.ind_mean);
  Eigen::LLT<Eigen::Matrix3d> llt(to_mat(cfg.ind_cov));
  if (llt.info() != Eigen::Success)
    throw ConfigError("sample_params_ind: ind_cov is not positive definite");
  Eigen::Matrix3d L = llt.matrixL();
  for (uint32_t attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    Eigen::Vector3d z = draw3(rng);
    Eigen::Vector3d x = mu + L * z;
    double mahal = z.norm();  // x - mu = Lz, so z'z is the Mahalanobis form
    if (mahal < 1.0 && x[0] > x[1] && positive(x))
      return pack(x, mahal, cfg.downsample_factor);
  }
  throw RuntimeFailure("sample_params_ind: no accepted draw after " +
                       std::to_string(cfg.max_attempts) + " attempts");
}

DegradationParams sample_params_ood(const SimulatorConfig& cfg, RandomStream& rng) {
  Eigen::Vector3d mu_ind = to_vec(cfg.ind_mean);
  Eigen::LLT<Eigen::Matrix3d> llt_ind(to_mat(cfg.ind_cov));
  Eigen::LLT<Eigen::Matrix3d> llt_ood(to_mat(cfg.ood_cov));
  if (llt_ind.info() != Eigen::Success || llt_ood.info() != Eigen::Success)
    throw ConfigError("sample_params_ood: covariance is not positive definite");
  Eigen::Matrix3d L = llt_ood.matrixL();
  Eigen::Vector3d mu = to_vec(cfg.ood_mean);
  for (uint32_t attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    Eigen::Vector3d x = mu + L * draw3(rng);
    // Distance is measured against the in-distribution reference Gaussian.
    Eigen::Vector3d y = llt_ind.matrixL().solve(x - mu_ind);
    double mahal = y.norm();
    if (mahal >= 1.0 && positive(x)) return pack(x, mahal, cfg.downsample_factor);
  }
  throw RuntimeFailure("sample_params_ood: no accepted draw after " +
                       std::to_string(cfg.max_attempts) + " attempts");
}

DegradeResult degrade(const Tensor& high, const TissueMask& mask, const DegradationParams& p,
                      RandomStream& rng) {
  if (high.dims.size() != 3 || high.c() != 1)
    throw std::invalid_argument("degrade: expected a (1,H,W) tensor, got " + shape_str(high.dims));
  if (mask.h != high.h() || mask.w != high.w())
    throw std::invalid_argument("degrade: mask shape mismatch");
  if (min_value(high) < 0.0 || max_value(high) > 1.0)
    throw std::invalid_argument("degrade: input must lie in [0,1]");
  if (p.snr_wm <= 0 || p.snr_gm <= 0 || p.contrast_gain <= 0)
    throw std::invalid_argument("degrade: params must be strictly positive");

  DegradeResult res;
  uint32_t h = high.h(), w = high.w();
  size_t n_gm = mask.count(Tissue::gm), n_wm = mask.count(Tissue::wm);

  // 1) Contrast remap: scale GM, then renormalize so the image stays in [0,1].
  Tensor img = high;
  if (n_gm == 0) {
    res.warnings.push_back("contrast remap skipped: no GM pixels");
  } else {
    for (uint32_t y = 0; y < h; ++y)
      for (uint32_t x = 0; x < w; ++x)
        if (mask.at(y, x) == uint8_t(Tissue::gm))
          img(0, y, x) = float(double(img(0, y, x)) * p.contrast_gain);
    double m = max_value(img);
    if (m > 1.0) {
      float inv = float(1.0 / m);
      for (float& v : img.data) v *= inv;
    }
  }

  // 2) Resolution loss on the fixed grid.
  img = resample_roundtrip(img, p.downsample_factor);

  // 3) Tissue-wise additive Gaussian noise, sigma = mean_signal / snr.
  //    Background shares the GM sigma. One normal draw per pixel regardless of
  //    sigma, so the stream position is independent of the mask content.
  double sum_gm = 0.0, sum_wm = 0.0;
  for (uint32_t y = 0; y < h; ++y)
    for (uint32_t x = 0; x < w; ++x) {
      uint8_t l = mask.at(y, x);
      if (l == uint8_t(Tissue::gm)) sum_gm += img(0, y, x);
      else if (l == uint8_t(Tissue::wm)) sum_wm += img(0, y, x);
    }
  bool have_gm = n_gm > 0, have_wm = n_wm > 0;
  double sigma_gm = have_gm ? (sum_gm / double(n_gm)) / p.snr_gm : 0.0;
  double sigma_wm = have_wm ? (sum_wm / double(n_wm)) / p.snr_wm : 0.0;
  if (!std::isfinite(sigma_gm)) sigma_gm = 0.0;  // snr = inf encodes the sigma=0 path
  if (!std::isfinite(sigma_wm)) sigma_wm = 0.0;
  if (!have_gm) res.warnings.push_back("gm/background noise skipped: no GM pixels");
  if (!have_wm) res.warnings.push_back("wm noise skipped: no WM pixels");
  for (uint32_t y = 0; y < h; ++y)
    for (uint32_t x = 0; x < w; ++x) {
      double n = rng.normal();
      uint8_t l = mask.at(y, x);
      double sigma = l == uint8_t(Tissue::wm) ? sigma_wm : sigma_gm;
      img(0, y, x) = float(double(img(0, y, x)) + sigma * n);
    }

  // 4) Clamp.
  for (float& v : img.data) v = clamp01(v);
  res.image = std::move(img);
  return res;
}

std::pair<Tensor, TissueMask> make_phantom(uint32_t h, uint32_t w, RandomStream& rng) {
  if (h < 32 || w < 32) throw std::invalid_argument("make_phantom: size must be at least 32x32");
  double cy = 0.5 * h + rng.uniform(-0.05, 0.05) * h;
  double cx = 0.5 * w + rng.uniform(-0.05, 0.05) * w;
  double a = rng.uniform(0.66, 0.92) * 0.5 * w;  // outer semi-axes
  double b = rng.uniform(0.66, 0.92) * 0.5 * h;
  double theta = rng.uniform(0.0, 3.14159265358979323846);
  double core = rng.uniform(0.55, 0.70);  // WM core scale relative to the shell
  double g1 = rng.uniform(-0.08, 0.08);   // bias-field coefficients
  double g2 = rng.uniform(-0.08, 0.08);
  double g3 = rng.uniform(-0.08, 0.08);
  double ct = std::cos(theta), st = std::sin(theta);

  Tensor img = Tensor::zeros({1, h, w});
  TissueMask mask(h, w);
  for (uint32_t y = 0; y < h; ++y)
    for (uint32_t x = 0; x < w; ++x) {
      double dy = double(y) - cy, dx = double(x) - cx;
      double xr = dx * ct + dy * st, yr = -dx * st + dy * ct;
      double q = (xr / a) * (xr / a) + (yr / b) * (yr / b);
      double texture = rng.normal() * 0.01;  // drawn for every pixel
      if (q > 1.0) continue;                 // background stays 0
      double u = 2.0 * double(x) / double(w) - 1.0;
      double v = 2.0 * double(y) / double(h) - 1.0;
      double bias = 1.0 + g1 * u + g2 * v + g3 * u * v;
      bool wm = q <= core * core;
      mask.at(y, x) = uint8_t(wm ? Tissue::wm : Tissue::gm);
      img(0, y, x) = clamp01(float((wm ? 0.75 : 0.55) * bias + texture));
    }
  return {std::move(img), std::move(mask)};
}

TissueMask estimate_mask(const Tensor& high) {
  if (high.dims.size() != 3 || high.c() != 1)
    throw std::invalid_argument("estimate_mask: expected a (1,H,W) tensor");
  uint32_t h = high.h(), w = high.w();
  TissueMask mask(h, w);
  double lo = min_value(high), hi = max_value(high);
  if (!(hi - lo > 1e-6)) return mask;  // near-constant: all background

  // The histogram is anchored at intensity 0, not at the image minimum, so a
  // dark-but-nonzero class can be labeled foreground (background is empty when
  // no pixels fall below the lower threshold).
  constexpr int kBins = 256;
  double scale = double(kBins) / hi;
  std::array<double, kBins> hist{};
  auto bin_of = [&](float v) {
    int bi = int(double(v) * scale);
    return std::clamp(bi, 0, kBins - 1);
  };
  for (float v : high.data) hist[size_t(bin_of(v))] += 1.0;

  // Prefix sums of mass and index-weighted mass for O(1) class statistics.
  std::array<double, kBins + 1> cw{}, cm{};
  for (int i = 0; i < kBins; ++i) {
    cw[size_t(i) + 1] = cw[size_t(i)] + hist[size_t(i)];
    cm[size_t(i) + 1] = cm[size_t(i)] + hist[size_t(i)] * double(i);
  }
  double total = cw[kBins], mean_total = cm[kBins] / total;
  auto class_var = [&](int a, int b) {  // class = bins [a, b)
    double wgt = cw[size_t(b)] - cw[size_t(a)];
    if (wgt <= 0.0) return 0.0;
    double mu = (cm[size_t(b)] - cm[size_t(a)]) / wgt;
    return wgt * (mu - mean_total) * (mu - mean_total);
  };

  // Exhaustive two-threshold Otsu; ties prefer more nonempty foreground classes.
  double best_var = -1.0;
  int best_fg = -1, best_t1 = 1, best_t2 = 2;
  for (int t1 = 1; t1 < kBins - 1; ++t1)
    for (int t2 = t1 + 1; t2 < kBins; ++t2) {
      double var = class_var(0, t1) + class_var(t1, t2) + class_var(t2, kBins);
      int fg = int(cw[size_t(t2)] - cw[size_t(t1)] > 0) + int(cw[kBins] - cw[size_t(t2)] > 0);
      if (var > best_var || (var == best_var && fg > best_fg)) {
        best_var = var;
        best_fg = fg;
        best_t1 = t1;
        best_t2 = t2;
      }
    }

  for (uint32_t y = 0; y < h; ++y)
    for (uint32_t x = 0; x < w; ++x) {
      int bi = bin_of(high(0, y, x));
      mask.at(y, x) = uint8_t(bi < best_t1   ? Tissue::background
                              : bi < best_t2 ? Tissue::gm
                                             : Tissue::wm);
    }
  return mask;
}

Tensor interpolation_baseline(const Tensor& low, uint32_t k) {
  return resample_roundtrip(low, k);
}

namespace {

struct SourceImage {
  std::string id;
  Tensor high;
  TissueMask mask;
};

std::vector<SourceImage> phantom_sources(const RunConfig& cfg, size_t total) {
  std::vector<SourceImage> out;
  out.reserve(total);
  for (size_t i = 0; i < total; ++i) {
    RandomStream rng(derive_seed(cfg.seed, "phantom", i));
    auto [img, mask] = make_phantom(cfg.data.phantom_h, cfg.data.phantom_w, rng);
    char id[32];
    std::snprintf(id, sizeof id, "phantom_%04zu", i);
    out.push_back({id, std::move(img), std::move(mask)});
  }
  return out;
}

std::vector<SourceImage> volume_sources(const RunConfig& cfg, size_t total) {
  if (cfg.paths.input_dir.empty())
    throw ConfigError("build_dataset: data.source=\"volumes\" requires paths.input_dir");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(cfg.paths.input_dir)) {
    if (!e.is_regular_file()) continue;
    auto name = e.path().filename().string();
    if (name.ends_with(".nii") || name.ends_with(".nii.gz") || name.ends_with(".rt"))
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw ConfigError("build_dataset: no .nii/.nii.gz/.rt files in " + cfg.paths.input_dir);

  std::vector<SourceImage> out;
  for (const auto& f : files) {
    if (out.size() >= total) break;
    LoadedVolume vol = load_volume(f);
    auto slices = slice_volume(vol.tensor);
    std::string stem = f.stem().string();
    if (stem.ends_with(".nii")) stem = stem.substr(0, stem.size() - 4);
    for (size_t z = 0; z < slices.size() && out.size() < total; ++z) {
      char id[160];
      std::snprintf(id, sizeof id, "%s_z%03zu", stem.c_str(), z);
      TissueMask mask = estimate_mask(slices[z]);
      out.push_back({id, std::move(slices[z]), std::move(mask)});
    }
  }
  if (out.size() < total)
    throw ConfigError("build_dataset: need " + std::to_string(total) + " slices, found " +
                      std::to_string(out.size()));
  return out;
}

}  // namespace

DatasetManifest build_dataset(const RunConfig& cfg, const std::filesystem::path& out_dir,
                              std::vector<std::string>* warnings) {
  const DataConfig& d = cfg.data;
  size_t total = size_t(d.train_pool) + d.test_ind + d.test_ood;
  std::vector<SourceImage> sources = d.source == "phantom" ? phantom_sources(cfg, total)
                                                           : volume_sources(cfg, total);

  std::filesystem::create_directories(out_dir / "images");
  DatasetManifest pool, tests;
  pool.seed = tests.seed = cfg.seed;
  pool.simulator_config_digest = tests.simulator_config_digest =
      simulator_config_digest(cfg.simulator);

  for (size_t i = 0; i < total; ++i) {
    SourceImage& src = sources[i];
    bool ood = i >= size_t(d.train_pool) + d.test_ind;
    uint64_t rec_seed = derive_seed(cfg.seed, "record", i);
    RandomStream rng(rec_seed);
    DegradationParams p =
        ood ? sample_params_ood(cfg.simulator, rng) : sample_params_ind(cfg.simulator, rng);
    DegradeResult deg = degrade(src.high, src.mask, p, rng);
    if (warnings)
      for (const auto& msg : deg.warnings) warnings->push_back(src.id + ": " + msg);

    ManifestRecord rec;
    rec.subject_id = src.id;
    rec.split = i < d.train_pool ? kSplitTrain : (ood ? kSplitTestOod : kSplitTestInd);
    rec.high_path = "images/" + src.id + "_high.rt";
    rec.low_path = "images/" + src.id + "_low.rt";
    rec.params = p;
    rec.seed = rec_seed;
    write_tensor(src.high, out_dir / rec.high_path);
    write_tensor(deg.image, out_dir / rec.low_path);
    (i < d.train_pool ? pool : tests).records.push_back(std::move(rec));
  }

  RandomStream split_rng(derive_seed(cfg.seed, "split"));
  DatasetManifest manifest = split_manifest(pool, d.train_fraction, d.val_fraction, split_rng);
  for (auto& r : tests.records) manifest.records.push_back(std::move(r));
  write_manifest(manifest, out_dir / "manifest.jsonl");
  return manifest;
}

}  // namespace iqtcfm
