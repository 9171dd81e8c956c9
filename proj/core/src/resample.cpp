#include "iqtcfm/resample.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace iqtcfm {
namespace {

struct Taps {
  int base;       // leftmost of the four source taps (may be out of range)
  double w[4];    // Catmull-Rom weights
};

// Destination pixel centers map to source coordinate (j + 0.5)/k - 0.5.
std::vector<Taps> make_taps(uint32_t n_dst, uint32_t k) {
  std::vector<Taps> taps(n_dst);
  for (uint32_t j = 0; j < n_dst; ++j) {
    double s = (j + 0.5) / double(k) - 0.5;
    double fl = std::floor(s);
    double u = s - fl;
    double u2 = u * u, u3 = u2 * u;
    Taps& t = taps[j];
    t.base = int(fl) - 1;
    t.w[0] = 0.5 * (-u3 + 2.0 * u2 - u);
    t.w[1] = 0.5 * (3.0 * u3 - 5.0 * u2 + 2.0);
    t.w[2] = 0.5 * (-3.0 * u3 + 4.0 * u2 + u);
    t.w[3] = 0.5 * (u3 - u2);
  }
  return taps;
}

// Linear extrapolation outside [0, n): keeps ramps exact at the borders.
inline double fetch(const double* v, int n, int i) {
  if (i >= 0 && i < n) return v[i];
  if (n == 1) return v[0];
  if (i < 0) return v[0] + double(i) * (v[1] - v[0]);
  return v[n - 1] + double(i - (n - 1)) * (v[n - 1] - v[n - 2]);
}

inline double apply_taps(const double* v, int n, const Taps& t) {
  return t.w[0] * fetch(v, n, t.base) + t.w[1] * fetch(v, n, t.base + 1) +
         t.w[2] * fetch(v, n, t.base + 2) + t.w[3] * fetch(v, n, t.base + 3);
}

}  // namespace

Tensor block_downsample(const Tensor& x, uint32_t k) {
  if (x.dims.size() != 3) throw std::invalid_argument("block_downsample: rank-3 input required");
  if (k == 0) throw std::invalid_argument("block_downsample: k must be >= 1");
  if (k == 1) return x;
  uint32_t c = x.c(), h = x.h(), w = x.w();
  if (h % k != 0 || w % k != 0)
    throw std::invalid_argument("block_downsample: " + shape_str(x.dims) +
                                " not divisible by k=" + std::to_string(k));
  Tensor out = Tensor::zeros({c, h / k, w / k});
  double inv = 1.0 / (double(k) * double(k));
  for (uint32_t ch = 0; ch < c; ++ch)
    for (uint32_t oy = 0; oy < h / k; ++oy)
      for (uint32_t ox = 0; ox < w / k; ++ox) {
        double acc = 0.0;
        for (uint32_t dy = 0; dy < k; ++dy)
          for (uint32_t dx = 0; dx < k; ++dx)
            acc += x(ch, oy * k + dy, ox * k + dx);
        out(ch, oy, ox) = float(acc * inv);
      }
  return out;
}

Tensor bicubic_upsample(const Tensor& x, uint32_t k) {
  if (x.dims.size() != 3) throw std::invalid_argument("bicubic_upsample: rank-3 input required");
  if (k == 0) throw std::invalid_argument("bicubic_upsample: k must be >= 1");
  if (k == 1) return x;
  uint32_t c = x.c(), h = x.h(), w = x.w();
  uint32_t oh = h * k, ow = w * k;
  auto tx = make_taps(ow, k);
  auto ty = make_taps(oh, k);
  Tensor out = Tensor::zeros({c, oh, ow});
  std::vector<double> row(w), mid(h * ow), col(h);
  for (uint32_t ch = 0; ch < c; ++ch) {
    // Horizontal pass into a double-precision intermediate, then vertical.
    for (uint32_t y = 0; y < h; ++y) {
      for (uint32_t xx = 0; xx < w; ++xx) row[xx] = x(ch, y, xx);
      for (uint32_t ox = 0; ox < ow; ++ox)
        mid[y * ow + ox] = apply_taps(row.data(), int(w), tx[ox]);
    }
    for (uint32_t ox = 0; ox < ow; ++ox) {
      for (uint32_t y = 0; y < h; ++y) col[y] = mid[y * ow + ox];
      for (uint32_t oy = 0; oy < oh; ++oy)
        out(ch, oy, ox) = float(apply_taps(col.data(), int(h), ty[oy]));
    }
  }
  return out;
}

Tensor resample_roundtrip(const Tensor& x, uint32_t k) {
  if (k == 1) return x;
  return bicubic_upsample(block_downsample(x, k), k);
}

}  // namespace iqtcfm
