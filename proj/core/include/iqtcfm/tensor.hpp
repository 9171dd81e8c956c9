#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace iqtcfm {

/// Dense row-major tensor. Rank 3 (C,H,W) carries images, noise, velocities
/// and feature maps; other ranks carry network parameters (conv kernels,
/// dense weights, vectors).
template <typename S>
struct TensorT {
  std::vector<uint32_t> dims;
  std::vector<S> data;

  TensorT() = default;
  explicit TensorT(std::vector<uint32_t> d, S fill = S(0))
      : dims(std::move(d)), data(element_count(dims), fill) {}

  static size_t element_count(const std::vector<uint32_t>& d) {
    size_t n = 1;
    for (uint32_t x : d) n *= x;
    return d.empty() ? 0 : n;
  }

  static TensorT zeros(std::vector<uint32_t> d) { return TensorT(std::move(d)); }
  static TensorT full(std::vector<uint32_t> d, S v) { return TensorT(std::move(d), v); }

  size_t rank() const { return dims.size(); }
  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  // (C,H,W) accessors; only valid for rank-3 tensors.
  uint32_t c() const { assert(rank() == 3); return dims[0]; }
  uint32_t h() const { assert(rank() == 3); return dims[1]; }
  uint32_t w() const { assert(rank() == 3); return dims[2]; }

  S& operator()(uint32_t ci, uint32_t yi, uint32_t xi) {
    assert(rank() == 3 && ci < dims[0] && yi < dims[1] && xi < dims[2]);
    return data[(size_t(ci) * dims[1] + yi) * dims[2] + xi];
  }
  const S& operator()(uint32_t ci, uint32_t yi, uint32_t xi) const {
    assert(rank() == 3 && ci < dims[0] && yi < dims[1] && xi < dims[2]);
    return data[(size_t(ci) * dims[1] + yi) * dims[2] + xi];
  }
  S& operator[](size_t i) { return data[i]; }
  S operator[](size_t i) const { return data[i]; }

  bool same_shape(const TensorT& o) const { return dims == o.dims; }

  bool all_finite() const {
    for (S v : data)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  template <typename T>
  TensorT<T> cast() const {
    TensorT<T> out;
    out.dims = dims;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = T(data[i]);
    return out;
  }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

inline std::string shape_str(const std::vector<uint32_t>& d) {
  std::string s = "(";
  for (size_t i = 0; i < d.size(); ++i) s += (i ? "," : "") + std::to_string(d[i]);
  return s + ")";
}

template <typename S>
void require_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.dims) +
                                " vs " + shape_str(b.dims));
}

inline float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

template <typename S>
TensorT<S> clamp01(TensorT<S> t) {
  for (S& v : t.data) v = v < S(0) ? S(0) : (v > S(1) ? S(1) : v);
  return t;
}

template <typename S>
S min_value(const TensorT<S>& t) {
  S m = t.data.front();
  for (S v : t.data) m = v < m ? v : m;
  return m;
}

template <typename S>
S max_value(const TensorT<S>& t) {
  S m = t.data.front();
  for (S v : t.data) m = v > m ? v : m;
  return m;
}

/// Mean of all elements, accumulated in double.
template <typename S>
double mean_value(const TensorT<S>& t) {
  double s = 0;
  for (S v : t.data) s += double(v);
  return t.empty() ? 0.0 : s / double(t.size());
}

}  // namespace iqtcfm
