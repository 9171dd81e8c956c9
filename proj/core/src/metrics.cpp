#include "iqtcfm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "iqtcfm/errors.hpp"
#include "iqtcfm/tensor_io.hpp"

namespace iqtcfm {
namespace {

constexpr int kWin = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (K1*L)^2, L = 1
constexpr double kC2 = 0.03 * 0.03;  // (K2*L)^2

void require_image(const Tensor& t, const char* op) {
  if (t.dims.size() != 3 || t.c() != 1)
    throw std::invalid_argument(std::string(op) + ": expected a (1,H,W) tensor, got " +
                                shape_str(t.dims));
}

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  double s = 0.0;
  for (double x : v) s += x;
  mean = s / double(v.size());
  double q = 0.0;
  for (double x : v) {
    double d = x - mean;
    q += d * d;
  }
  sd = std::sqrt(q / double(v.size()));
}

}  // namespace

double psnr_from_mse(double mse, double max_val, bool* capped) {
  if (capped) *capped = false;
  if (!(max_val > 0.0)) throw std::invalid_argument("psnr: max_val must be positive");
  if (!(mse >= 0.0)) throw std::invalid_argument("psnr: mse must be non-negative");
  if (mse == 0.0) {
    if (capped) *capped = true;
    return kPsnrCapDb;
  }
  double db = 10.0 * std::log10(max_val * max_val / mse);
  if (db > kPsnrCapDb) {
    if (capped) *capped = true;
    return kPsnrCapDb;
  }
  return db;
}

double psnr(const Tensor& ref, const Tensor& test, double max_val, bool* capped) {
  require_same_shape(ref, test, "psnr");
  if (ref.data.empty()) throw std::invalid_argument("psnr: empty tensor");
  double acc = 0.0;
  for (size_t i = 0; i < ref.data.size(); ++i) {
    double d = double(ref.data[i]) - double(test.data[i]);
    acc += d * d;
  }
  return psnr_from_mse(acc / double(ref.data.size()), max_val, capped);
}

double ssim(const Tensor& ref, const Tensor& test) {
  require_same_shape(ref, test, "ssim");
  require_image(ref, "ssim");
  uint32_t h = ref.h(), w = ref.w();
  if (h < kWin || w < kWin)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");

  double win[kWin][kWin];
  double wsum = 0.0;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      double dy = i - kWin / 2, dx = j - kWin / 2;
      win[i][j] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSsimSigma * kSsimSigma));
      wsum += win[i][j];
    }
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) win[i][j] /= wsum;

  double acc = 0.0;
  size_t count = 0;
  for (uint32_t cy = kWin / 2; cy + kWin / 2 < h; ++cy) {
    for (uint32_t cx = kWin / 2; cx + kWin / 2 < w; ++cx) {
      double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
      for (int i = 0; i < kWin; ++i) {
        for (int j = 0; j < kWin; ++j) {
          double wv = win[i][j];
          double a = ref(0, cy + i - kWin / 2, cx + j - kWin / 2);
          double b = test(0, cy + i - kWin / 2, cx + j - kWin / 2);
          mx += wv * a;
          my += wv * b;
          mxx += wv * a * a;
          myy += wv * b * b;
          mxy += wv * a * b;
        }
      }
      double vx = mxx - mx * mx;
      double vy = myy - my * my;
      double cov = mxy - mx * my;
      double num = (2.0 * mx * my + kC1) * (2.0 * cov + kC2);
      double den = (mx * mx + my * my + kC1) * (vx + vy + kC2);
      acc += num / den;
      ++count;
    }
  }
  return acc / double(count);
}

Tensor error_map(const Tensor& ref, const Tensor& test) {
  require_same_shape(ref, test, "error_map");
  Tensor out(ref.dims);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = std::fabs(ref.data[i] - test.data[i]);
  return out;
}

Tensor colorize_error_map(const Tensor& err) {
  require_image(err, "colorize_error_map");
  uint32_t h = err.h(), w = err.w();
  Tensor rgb = Tensor::zeros({3, h, w});
  for (uint32_t y = 0; y < h; ++y) {
    for (uint32_t x = 0; x < w; ++x) {
      double m = err(0, y, x);
      if (!(m >= 0.0)) m = 0.0;
      double u = std::min(1.0, m / kErrorMapScale);
      rgb(0, y, x) = float(std::min(1.0, 3.0 * u));
      rgb(1, y, x) = float(std::clamp(3.0 * u - 1.0, 0.0, 1.0));
      rgb(2, y, x) = float(std::clamp(3.0 * u - 2.0, 0.0, 1.0));
    }
  }
  return rgb;
}

void write_error_map_png(const Tensor& err, const std::filesystem::path& path) {
  write_png_rgb8(colorize_error_map(err), path);
}

EvaluationReport evaluate(const DatasetManifest& man, const std::filesystem::path& base_dir,
                          const std::string& split, const std::vector<MethodSpec>& methods,
                          LpipsProvider* lpips, const std::filesystem::path& errmap_dir) {
  if (methods.empty()) throw std::invalid_argument("evaluate: no methods given");
  auto records = man.split(split);
  if (records.empty()) throw ConfigError("evaluate: split \"" + split + "\" is empty");
  EvaluationReport rep;
  rep.split = split;
  rep.split_size = uint32_t(records.size());
  rep.config_digest = man.simulator_config_digest;
  if (!errmap_dir.empty()) std::filesystem::create_directories(errmap_dir);

  for (const ManifestRecord* rec : records) {
    PairedSample pair = load_pair(*rec, base_dir);
    for (const MethodSpec& ms : methods) {
      std::optional<Tensor> recon = ms.reconstruct(*rec, pair);
      if (!recon) {
        rep.warnings.push_back(ms.name + ": no reconstruction for " + rec->subject_id +
                               "; excluded from aggregates");
        continue;
      }
      if (recon->dims != pair.high.dims) {
        rep.warnings.push_back(ms.name + ": reconstruction shape " + shape_str(recon->dims) +
                               " != reference " + shape_str(pair.high.dims) + " for " +
                               rec->subject_id + "; excluded from aggregates");
        continue;
      }
      MetricResult r;
      r.subject_id = rec->subject_id;
      r.method = ms.name;
      bool capped = false;
      r.psnr_db = psnr(pair.high, *recon, 1.0, &capped);
      if (capped)
        rep.warnings.push_back(ms.name + ": PSNR capped at 100 dB for " + rec->subject_id);
      r.ssim_val = ssim(pair.high, *recon);
      if (lpips) {
        bool ok = true;
        double score = 0.0;
        try {
          score = lpips->score(pair.high, *recon);
        } catch (const std::exception& e) {
          ok = false;
          rep.warnings.push_back(std::string("lpips provider failed for ") + rec->subject_id +
                                 ": " + e.what() + "; omitted");
        }
        if (ok && std::isfinite(score))
          r.lpips = score;
        else if (ok)
          rep.warnings.push_back("lpips provider returned a non-finite score for " +
                                 rec->subject_id + "; omitted");
      }
      if (!errmap_dir.empty())
        write_error_map_png(error_map(pair.high, *recon),
                            errmap_dir / (rec->subject_id + "_" + ms.name + "_err.png"));
      rep.per_image.push_back(std::move(r));
    }
  }

  std::vector<MethodMeta> metas;
  metas.reserve(methods.size());
  for (const MethodSpec& ms : methods) metas.push_back({ms.name, ms.param_count});
  rep.rows = aggregate(rep.per_image, metas, rep.split_size);
  return rep;
}

std::vector<AggregateRow> aggregate(const std::vector<MetricResult>& per_image,
                                    const std::vector<MethodMeta>& methods, uint32_t split_size) {
  std::vector<AggregateRow> rows;
  rows.reserve(methods.size());
  for (const MethodMeta& meta : methods) {
    AggregateRow row;
    row.method = meta.name;
    row.param_count = meta.param_count;
    std::vector<double> ps, ss, ls;
    for (const MetricResult& r : per_image) {
      if (r.method != meta.name) continue;
      ps.push_back(r.psnr_db);
      ss.push_back(r.ssim_val);
      if (r.lpips) ls.push_back(*r.lpips);
    }
    row.n_images = uint32_t(ps.size());
    row.excluded = split_size >= row.n_images ? split_size - row.n_images : 0;
    if (!ps.empty()) {
      mean_std(ps, row.psnr_mean, row.psnr_std);
      mean_std(ss, row.ssim_mean, row.ssim_std);
    }
    row.lpips_n = uint32_t(ls.size());
    if (!ls.empty()) {
      double m = 0, sd = 0;
      mean_std(ls, m, sd);
      row.lpips_mean = m;
      row.lpips_std = sd;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace iqtcfm
