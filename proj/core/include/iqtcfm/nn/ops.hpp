#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "iqtcfm/tensor.hpp"

// Primitive differentiable ops. Each op ships a matching *_backward that
// accumulates parameter gradients (via += into pre-shaped buffers) and
// returns the input gradient. Statistics are accumulated in double even for
// float tensors; the float/double template split lets the same code serve
// production (float) and high-precision gradient checks (double).
namespace iqtcfm::nn {

template <typename S>
using EigenRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapRM = Eigen::Map<EigenRM<S>>;
template <typename S>
using CMapRM = Eigen::Map<const EigenRM<S>>;

inline constexpr double kNormEps = 1e-5;

// ---------------------------------------------------------------- elementwise

template <typename S>
TensorT<S> silu(const TensorT<S>& x) {
  TensorT<S> y = x;
  for (auto& v : y.data) {
    double xv = double(v);
    v = S(xv / (1.0 + std::exp(-xv)));
  }
  return y;
}

template <typename S>
TensorT<S> silu_backward(const TensorT<S>& x, const TensorT<S>& dy) {
  TensorT<S> dx = x;
  for (size_t i = 0; i < x.data.size(); ++i) {
    double xv = double(x.data[i]);
    double s = 1.0 / (1.0 + std::exp(-xv));
    dx.data[i] = S(double(dy.data[i]) * s * (1.0 + xv * (1.0 - s)));
  }
  return dx;
}

template <typename S>
TensorT<S> sigmoid(const TensorT<S>& x) {
  TensorT<S> y = x;
  for (auto& v : y.data) v = S(1.0 / (1.0 + std::exp(-double(v))));
  return y;
}

/// dy/dx expressed through the forward output y = sigmoid(x).
template <typename S>
TensorT<S> sigmoid_backward_from_y(const TensorT<S>& y, const TensorT<S>& dy) {
  TensorT<S> dx = y;
  for (size_t i = 0; i < y.data.size(); ++i) {
    double yv = double(y.data[i]);
    dx.data[i] = S(double(dy.data[i]) * yv * (1.0 - yv));
  }
  return dx;
}

// ------------------------------------------------------- conv2d, same padding

/// Valid destination-column range [x0,x1) for a horizontal kernel offset, so
/// that source column x + off stays inside [0,w). Empty ranges yield x0 >= x1.
inline void col_range(int off, uint32_t w, uint32_t& x0, uint32_t& x1) {
  x0 = off < 0 ? uint32_t(-off) : 0;
  x1 = off > 0 ? (uint32_t(off) >= w ? 0 : w - uint32_t(off)) : w;
}

template <typename S>
void im2col(const TensorT<S>& x, uint32_t k, std::vector<S>& col) {
  uint32_t c = x.c(), h = x.h(), w = x.w(), p = k / 2;
  col.assign(size_t(c) * k * k * h * w, S(0));
  size_t hw = size_t(h) * w;
  for (uint32_t ci = 0; ci < c; ++ci)
    for (uint32_t ky = 0; ky < k; ++ky)
      for (uint32_t kx = 0; kx < k; ++kx) {
        S* row = col.data() + ((size_t(ci) * k + ky) * k + kx) * hw;
        int off = int(kx) - int(p);
        uint32_t x0, x1;
        col_range(off, w, x0, x1);
        if (x0 >= x1) continue;
        for (uint32_t y = 0; y < h; ++y) {
          int sy = int(y) + int(ky) - int(p);
          if (sy < 0 || sy >= int(h)) continue;
          const S* src = &x(ci, uint32_t(sy), uint32_t(int(x0) + off));
          std::memcpy(row + size_t(y) * w + x0, src, sizeof(S) * (x1 - x0));
        }
      }
}

template <typename S>
void col2im_add(const std::vector<S>& col, uint32_t k, TensorT<S>& dx) {
  uint32_t c = dx.c(), h = dx.h(), w = dx.w(), p = k / 2;
  size_t hw = size_t(h) * w;
  for (uint32_t ci = 0; ci < c; ++ci)
    for (uint32_t ky = 0; ky < k; ++ky)
      for (uint32_t kx = 0; kx < k; ++kx) {
        const S* row = col.data() + ((size_t(ci) * k + ky) * k + kx) * hw;
        int off = int(kx) - int(p);
        uint32_t x0, x1;
        col_range(off, w, x0, x1);
        if (x0 >= x1) continue;
        for (uint32_t y = 0; y < h; ++y) {
          int sy = int(y) + int(ky) - int(p);
          if (sy < 0 || sy >= int(h)) continue;
          S* dst = &dx(ci, uint32_t(sy), uint32_t(int(x0) + off));
          const S* src = row + size_t(y) * w + x0;
          for (uint32_t i = 0; i < x1 - x0; ++i) dst[i] += src[i];
        }
      }
}

/// x: (C,H,W), w: (OC,C,K,K) with K odd, b: (OC) -> (OC,H,W), zero padding K/2.
template <typename S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
  if (x.dims.size() != 3 || w.dims.size() != 4) throw std::invalid_argument("conv2d: bad ranks");
  uint32_t oc = w.dims[0], ic = w.dims[1], k = w.dims[2];
  if (w.dims[3] != k || k % 2 == 0) throw std::invalid_argument("conv2d: kernel must be odd square");
  if (ic != x.c()) throw std::invalid_argument("conv2d: channel mismatch");
  uint32_t h = x.h(), wd = x.w();
  size_t hw = size_t(h) * wd, ckk = size_t(ic) * k * k;

  std::vector<S> col;
  im2col(x, k, col);
  TensorT<S> y = TensorT<S>::zeros({oc, h, wd});
  MapRM<S> ym(y.data.data(), oc, Eigen::Index(hw));
  CMapRM<S> wm(w.data.data(), oc, Eigen::Index(ckk));
  CMapRM<S> cm(col.data(), Eigen::Index(ckk), Eigen::Index(hw));
  ym.noalias() = wm * cm;
  for (uint32_t o = 0; o < oc; ++o) ym.row(o).array() += b.data[o];
  return y;
}

/// Accumulates dw, db; returns dx. Recomputes im2col from the saved input.
template <typename S>
TensorT<S> conv2d_backward(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& dy,
                           TensorT<S>& dw, TensorT<S>& db) {
  uint32_t oc = w.dims[0], ic = w.dims[1], k = w.dims[2];
  uint32_t h = x.h(), wd = x.w();
  size_t hw = size_t(h) * wd, ckk = size_t(ic) * k * k;

  for (uint32_t o = 0; o < oc; ++o) {
    double acc = 0.0;
    const S* row = dy.data.data() + size_t(o) * hw;
    for (size_t i = 0; i < hw; ++i) acc += double(row[i]);
    db.data[o] = S(double(db.data[o]) + acc);
  }

  std::vector<S> col;
  im2col(x, k, col);
  CMapRM<S> dym(dy.data.data(), oc, Eigen::Index(hw));
  CMapRM<S> cm(col.data(), Eigen::Index(ckk), Eigen::Index(hw));
  MapRM<S> dwm(dw.data.data(), oc, Eigen::Index(ckk));
  dwm.noalias() += dym * cm.transpose();

  std::vector<S> dcol(ckk * hw);
  MapRM<S> dcm(dcol.data(), Eigen::Index(ckk), Eigen::Index(hw));
  CMapRM<S> wm(w.data.data(), oc, Eigen::Index(ckk));
  dcm.noalias() = wm.transpose() * dym;
  TensorT<S> dx = TensorT<S>::zeros(x.dims);
  col2im_add(dcol, k, dx);
  return dx;
}

// ------------------------------------------------------------------- dense

/// y = W x + b on vectors; W: (out,in).
template <typename S>
TensorT<S> dense(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
  uint32_t out = w.dims[0], in = w.dims[1];
  if (x.data.size() != in) throw std::invalid_argument("dense: input size mismatch");
  TensorT<S> y = TensorT<S>::zeros({out});
  CMapRM<S> wm(w.data.data(), out, in);
  Eigen::Map<const Eigen::Vector<S, Eigen::Dynamic>> xv(x.data.data(), in);
  Eigen::Map<Eigen::Vector<S, Eigen::Dynamic>> yv(y.data.data(), out);
  Eigen::Map<const Eigen::Vector<S, Eigen::Dynamic>> bv(b.data.data(), out);
  yv.noalias() = wm * xv + bv;
  return y;
}

template <typename S>
TensorT<S> dense_backward(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& dy,
                          TensorT<S>& dw, TensorT<S>& db) {
  uint32_t out = w.dims[0], in = w.dims[1];
  CMapRM<S> wm(w.data.data(), out, in);
  MapRM<S> dwm(dw.data.data(), out, in);
  Eigen::Map<const Eigen::Vector<S, Eigen::Dynamic>> xv(x.data.data(), in);
  Eigen::Map<const Eigen::Vector<S, Eigen::Dynamic>> dyv(dy.data.data(), out);
  Eigen::Map<Eigen::Vector<S, Eigen::Dynamic>> dbv(db.data.data(), out);
  dwm.noalias() += dyv * xv.transpose();
  dbv += dyv;
  TensorT<S> dx = TensorT<S>::zeros({in});
  Eigen::Map<Eigen::Vector<S, Eigen::Dynamic>> dxv(dx.data.data(), in);
  dxv.noalias() = wm.transpose() * dyv;
  return dx;
}

/// Y = X W^T + b over a token sequence; X: (T,in), W: (out,in) -> (T,out).
template <typename S>
TensorT<S> seq_dense(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
  uint32_t t = x.dims[0], in = x.dims[1], out = w.dims[0];
  if (w.dims[1] != in) throw std::invalid_argument("seq_dense: size mismatch");
  TensorT<S> y = TensorT<S>::zeros({t, out});
  CMapRM<S> xm(x.data.data(), t, in);
  CMapRM<S> wm(w.data.data(), out, in);
  MapRM<S> ym(y.data.data(), t, out);
  ym.noalias() = xm * wm.transpose();
  Eigen::Map<const Eigen::RowVector<S, Eigen::Dynamic>> bv(b.data.data(), out);
  ym.rowwise() += bv;
  return y;
}

template <typename S>
TensorT<S> seq_dense_backward(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& dy,
                              TensorT<S>& dw, TensorT<S>& db) {
  uint32_t t = x.dims[0], in = x.dims[1], out = w.dims[0];
  CMapRM<S> xm(x.data.data(), t, in);
  CMapRM<S> wm(w.data.data(), out, in);
  CMapRM<S> dym(dy.data.data(), t, out);
  MapRM<S> dwm(dw.data.data(), out, in);
  dwm.noalias() += dym.transpose() * xm;
  Eigen::Map<Eigen::RowVector<S, Eigen::Dynamic>> dbv(db.data.data(), out);
  dbv += dym.colwise().sum();
  TensorT<S> dx = TensorT<S>::zeros({t, in});
  MapRM<S> dxm(dx.data.data(), t, in);
  dxm.noalias() = dym * wm;
  return dx;
}

// ---------------------------------------------------------------- groupnorm

/// x: (C,H,W); gamma/beta: (C); writes normalized activations and per-group
/// inverse stddev to the out-params for the backward pass.
template <typename S>
TensorT<S> groupnorm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                     uint32_t groups, TensorT<S>* xhat_out, TensorT<S>* invstd_out) {
  uint32_t c = x.c(), h = x.h(), w = x.w();
  if (c % groups != 0) throw std::invalid_argument("groupnorm: channels % groups != 0");
  uint32_t cpg = c / groups;
  size_t gsz = size_t(cpg) * h * w;
  TensorT<S> xhat = x, y = x;
  TensorT<S> invstd = TensorT<S>::zeros({groups});
  for (uint32_t g = 0; g < groups; ++g) {
    const S* base = x.data.data() + size_t(g) * gsz;
    double mean = 0.0;
    for (size_t i = 0; i < gsz; ++i) mean += double(base[i]);
    mean /= double(gsz);
    double var = 0.0;
    for (size_t i = 0; i < gsz; ++i) {
      double d = double(base[i]) - mean;
      var += d * d;
    }
    var /= double(gsz);
    double inv = 1.0 / std::sqrt(var + kNormEps);
    invstd.data[g] = S(inv);
    for (uint32_t cc = 0; cc < cpg; ++cc) {
      uint32_t ch = g * cpg + cc;
      double gm = double(gamma.data[ch]), bt = double(beta.data[ch]);
      size_t off = size_t(ch) * h * w;
      for (size_t i = 0; i < size_t(h) * w; ++i) {
        double xh = (double(x.data[off + i]) - mean) * inv;
        xhat.data[off + i] = S(xh);
        y.data[off + i] = S(gm * xh + bt);
      }
    }
  }
  if (xhat_out) *xhat_out = std::move(xhat);
  if (invstd_out) *invstd_out = std::move(invstd);
  return y;
}

template <typename S>
TensorT<S> groupnorm_backward(const TensorT<S>& xhat, const TensorT<S>& invstd,
                              const TensorT<S>& gamma, const TensorT<S>& dy, uint32_t groups,
                              TensorT<S>& dgamma, TensorT<S>& dbeta) {
  uint32_t c = xhat.c(), h = xhat.h(), w = xhat.w();
  uint32_t cpg = c / groups;
  size_t hw = size_t(h) * w, gsz = size_t(cpg) * hw;
  TensorT<S> dx = TensorT<S>::zeros(xhat.dims);
  for (uint32_t ch = 0; ch < c; ++ch) {
    double dg = 0.0, dbv = 0.0;
    size_t off = size_t(ch) * hw;
    for (size_t i = 0; i < hw; ++i) {
      dg += double(dy.data[off + i]) * double(xhat.data[off + i]);
      dbv += double(dy.data[off + i]);
    }
    dgamma.data[ch] = S(double(dgamma.data[ch]) + dg);
    dbeta.data[ch] = S(double(dbeta.data[ch]) + dbv);
  }
  for (uint32_t g = 0; g < groups; ++g) {
    size_t base = size_t(g) * gsz;
    double sum_g = 0.0, sum_gx = 0.0;
    for (uint32_t cc = 0; cc < cpg; ++cc) {
      double gm = double(gamma.data[g * cpg + cc]);
      size_t off = base + size_t(cc) * hw;
      for (size_t i = 0; i < hw; ++i) {
        double gi = double(dy.data[off + i]) * gm;
        sum_g += gi;
        sum_gx += gi * double(xhat.data[off + i]);
      }
    }
    double n = double(gsz), inv = double(invstd.data[g]);
    for (uint32_t cc = 0; cc < cpg; ++cc) {
      double gm = double(gamma.data[g * cpg + cc]);
      size_t off = base + size_t(cc) * hw;
      for (size_t i = 0; i < hw; ++i) {
        double gi = double(dy.data[off + i]) * gm;
        dx.data[off + i] =
            S(inv * (gi - sum_g / n - double(xhat.data[off + i]) * sum_gx / n));
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- layernorm

/// Row-wise layer norm over (T,C); gamma/beta per channel.
template <typename S>
TensorT<S> layernorm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                     TensorT<S>* xhat_out, TensorT<S>* invstd_out) {
  uint32_t t = x.dims[0], c = x.dims[1];
  TensorT<S> xhat = x, y = x;
  TensorT<S> invstd = TensorT<S>::zeros({t});
  for (uint32_t r = 0; r < t; ++r) {
    const S* row = x.data.data() + size_t(r) * c;
    double mean = 0.0;
    for (uint32_t i = 0; i < c; ++i) mean += double(row[i]);
    mean /= double(c);
    double var = 0.0;
    for (uint32_t i = 0; i < c; ++i) {
      double d = double(row[i]) - mean;
      var += d * d;
    }
    var /= double(c);
    double inv = 1.0 / std::sqrt(var + kNormEps);
    invstd.data[r] = S(inv);
    size_t off = size_t(r) * c;
    for (uint32_t i = 0; i < c; ++i) {
      double xh = (double(row[i]) - mean) * inv;
      xhat.data[off + i] = S(xh);
      y.data[off + i] = S(double(gamma.data[i]) * xh + double(beta.data[i]));
    }
  }
  if (xhat_out) *xhat_out = std::move(xhat);
  if (invstd_out) *invstd_out = std::move(invstd);
  return y;
}

template <typename S>
TensorT<S> layernorm_backward(const TensorT<S>& xhat, const TensorT<S>& invstd,
                              const TensorT<S>& gamma, const TensorT<S>& dy, TensorT<S>& dgamma,
                              TensorT<S>& dbeta) {
  uint32_t t = xhat.dims[0], c = xhat.dims[1];
  TensorT<S> dx = TensorT<S>::zeros(xhat.dims);
  for (uint32_t i = 0; i < c; ++i) {
    double dg = 0.0, dbv = 0.0;
    for (uint32_t r = 0; r < t; ++r) {
      size_t idx = size_t(r) * c + i;
      dg += double(dy.data[idx]) * double(xhat.data[idx]);
      dbv += double(dy.data[idx]);
    }
    dgamma.data[i] = S(double(dgamma.data[i]) + dg);
    dbeta.data[i] = S(double(dbeta.data[i]) + dbv);
  }
  for (uint32_t r = 0; r < t; ++r) {
    size_t off = size_t(r) * c;
    double sum_g = 0.0, sum_gx = 0.0;
    for (uint32_t i = 0; i < c; ++i) {
      double gi = double(dy.data[off + i]) * double(gamma.data[i]);
      sum_g += gi;
      sum_gx += gi * double(xhat.data[off + i]);
    }
    double n = double(c), inv = double(invstd.data[r]);
    for (uint32_t i = 0; i < c; ++i) {
      double gi = double(dy.data[off + i]) * double(gamma.data[i]);
      dx.data[off + i] = S(inv * (gi - sum_g / n - double(xhat.data[off + i]) * sum_gx / n));
    }
  }
  return dx;
}

// ------------------------------------------------------------------ softmax

/// Row-wise softmax over the last dim of a rank-2 tensor.
template <typename S>
TensorT<S> softmax_rows(const TensorT<S>& x) {
  uint32_t r = x.dims[0], c = x.dims[1];
  TensorT<S> y = x;
  for (uint32_t i = 0; i < r; ++i) {
    size_t off = size_t(i) * c;
    double mx = -1e300;
    for (uint32_t j = 0; j < c; ++j) mx = std::max(mx, double(x.data[off + j]));
    double sum = 0.0;
    for (uint32_t j = 0; j < c; ++j) {
      double e = std::exp(double(x.data[off + j]) - mx);
      y.data[off + j] = S(e);
      sum += e;
    }
    for (uint32_t j = 0; j < c; ++j) y.data[off + j] = S(double(y.data[off + j]) / sum);
  }
  return y;
}

template <typename S>
TensorT<S> softmax_rows_backward(const TensorT<S>& y, const TensorT<S>& dy) {
  uint32_t r = y.dims[0], c = y.dims[1];
  TensorT<S> dx = y;
  for (uint32_t i = 0; i < r; ++i) {
    size_t off = size_t(i) * c;
    double dot = 0.0;
    for (uint32_t j = 0; j < c; ++j) dot += double(y.data[off + j]) * double(dy.data[off + j]);
    for (uint32_t j = 0; j < c; ++j)
      dx.data[off + j] = S(double(y.data[off + j]) * (double(dy.data[off + j]) - dot));
  }
  return dx;
}

// ------------------------------------------------------ pixel shuffle pair

/// (C,H,W) -> (4C,H/2,W/2); out channel c*4 + dy*2 + dx holds the (dy,dx)
/// offset of each 2x2 block (channel-major over row/col offsets).
template <typename S>
TensorT<S> pixel_unshuffle(const TensorT<S>& x) {
  uint32_t c = x.c(), h = x.h(), w = x.w();
  if (h % 2 != 0 || w % 2 != 0) throw std::invalid_argument("pixel_unshuffle: odd spatial dims");
  TensorT<S> y = TensorT<S>::zeros({c * 4, h / 2, w / 2});
  for (uint32_t ci = 0; ci < c; ++ci)
    for (uint32_t dy = 0; dy < 2; ++dy)
      for (uint32_t dx = 0; dx < 2; ++dx)
        for (uint32_t yy = 0; yy < h / 2; ++yy)
          for (uint32_t xx = 0; xx < w / 2; ++xx)
            y(ci * 4 + dy * 2 + dx, yy, xx) = x(ci, yy * 2 + dy, xx * 2 + dx);
  return y;
}

/// (4C,H,W) -> (C,2H,2W); exact inverse of pixel_unshuffle.
template <typename S>
TensorT<S> pixel_shuffle(const TensorT<S>& x) {
  uint32_t c4 = x.c(), h = x.h(), w = x.w();
  if (c4 % 4 != 0) throw std::invalid_argument("pixel_shuffle: channels % 4 != 0");
  uint32_t c = c4 / 4;
  TensorT<S> y = TensorT<S>::zeros({c, h * 2, w * 2});
  for (uint32_t ci = 0; ci < c; ++ci)
    for (uint32_t dy = 0; dy < 2; ++dy)
      for (uint32_t dx = 0; dx < 2; ++dx)
        for (uint32_t yy = 0; yy < h; ++yy)
          for (uint32_t xx = 0; xx < w; ++xx)
            y(ci, yy * 2 + dy, xx * 2 + dx) = x(ci * 4 + dy * 2 + dx, yy, xx);
  return y;
}

// ------------------------------------------------------------ rearrangements

template <typename S>
TensorT<S> concat_channels(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.h() != b.h() || a.w() != b.w())
    throw std::invalid_argument("concat_channels: spatial mismatch");
  TensorT<S> y = TensorT<S>::zeros({a.c() + b.c(), a.h(), a.w()});
  std::memcpy(y.data.data(), a.data.data(), sizeof(S) * a.data.size());
  std::memcpy(y.data.data() + a.data.size(), b.data.data(), sizeof(S) * b.data.size());
  return y;
}

template <typename S>
void split_channels(const TensorT<S>& y, uint32_t ca, TensorT<S>& a, TensorT<S>& b) {
  uint32_t cb = y.c() - ca;
  a = TensorT<S>::zeros({ca, y.h(), y.w()});
  b = TensorT<S>::zeros({cb, y.h(), y.w()});
  std::memcpy(a.data.data(), y.data.data(), sizeof(S) * a.data.size());
  std::memcpy(b.data.data(), y.data.data() + a.data.size(), sizeof(S) * b.data.size());
}

/// (C,H,W) -> token sequence (H*W, C); token index is y*W + x.
template <typename S>
TensorT<S> to_seq(const TensorT<S>& x) {
  uint32_t c = x.c(), h = x.h(), w = x.w();
  TensorT<S> y = TensorT<S>::zeros({h * w, c});
  for (uint32_t ci = 0; ci < c; ++ci)
    for (uint32_t yy = 0; yy < h; ++yy)
      for (uint32_t xx = 0; xx < w; ++xx)
        y.data[(size_t(yy) * w + xx) * c + ci] = x(ci, yy, xx);
  return y;
}

template <typename S>
TensorT<S> from_seq(const TensorT<S>& x, uint32_t h, uint32_t w) {
  uint32_t c = x.dims[1];
  TensorT<S> y = TensorT<S>::zeros({c, h, w});
  for (uint32_t ci = 0; ci < c; ++ci)
    for (uint32_t yy = 0; yy < h; ++yy)
      for (uint32_t xx = 0; xx < w; ++xx)
        y(ci, yy, xx) = x.data[(size_t(yy) * w + xx) * c + ci];
  return y;
}

/// Per-channel spatial mean: (C,H,W) -> (C).
template <typename S>
TensorT<S> channel_mean(const TensorT<S>& x) {
  uint32_t c = x.c();
  size_t hw = size_t(x.h()) * x.w();
  TensorT<S> y = TensorT<S>::zeros({c});
  for (uint32_t ci = 0; ci < c; ++ci) {
    double acc = 0.0;
    const S* base = x.data.data() + size_t(ci) * hw;
    for (size_t i = 0; i < hw; ++i) acc += double(base[i]);
    y.data[ci] = S(acc / double(hw));
  }
  return y;
}

}  // namespace iqtcfm::nn
