#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "iqtcfm/config.hpp"
#include "iqtcfm/nn/ops.hpp"
#include "iqtcfm/nn/params.hpp"
#include "iqtcfm/random.hpp"

namespace iqtcfm {

/// Enumerates every parameter (name, shape) of the architecture in definition
/// order. That order fixes RNG consumption at init and checkpoint layout.
void for_each_param(const NetworkConfig& cfg,
                    const std::function<void(const std::string&, std::vector<uint32_t>)>& fn);

/// Learnable element count of the instantiated architecture.
size_t count_params(const NetworkConfig& cfg);

/// Sinusoidal lift of scalar t: half sines then half cosines with frequencies
/// log-spaced over [1, 1e4]. dim must be even.
template <typename S>
TensorT<S> sinusoidal_features(double t, uint32_t dim) {
  if (dim % 2 != 0) throw std::invalid_argument("sinusoidal_features: dim must be even");
  uint32_t half = dim / 2;
  TensorT<S> f = TensorT<S>::zeros({dim});
  for (uint32_t i = 0; i < half; ++i) {
    double omega = half > 1 ? std::pow(10.0, 4.0 * double(i) / double(half - 1)) : 1.0;
    f.data[i] = S(std::sin(t * omega));
    f.data[half + i] = S(std::cos(t * omega));
  }
  return f;
}

/// Zero-pad a (C,H,W) map symmetrically so both spatial dims become multiples
/// of m; reports the top/left offsets needed to crop back.
template <typename S>
TensorT<S> pad_to_multiple(const TensorT<S>& x, uint32_t m, uint32_t& top, uint32_t& left) {
  uint32_t h = x.h(), w = x.w();
  uint32_t ph = (m - h % m) % m, pw = (m - w % m) % m;
  top = ph / 2;
  left = pw / 2;
  if (ph == 0 && pw == 0) return x;
  TensorT<S> y = TensorT<S>::zeros({x.c(), h + ph, w + pw});
  for (uint32_t c = 0; c < x.c(); ++c)
    for (uint32_t yy = 0; yy < h; ++yy)
      for (uint32_t xx = 0; xx < w; ++xx) y(c, yy + top, xx + left) = x(c, yy, xx);
  return y;
}

template <typename S>
TensorT<S> crop(const TensorT<S>& x, uint32_t top, uint32_t left, uint32_t h, uint32_t w) {
  if (x.h() == h && x.w() == w && top == 0 && left == 0) return x;
  TensorT<S> y = TensorT<S>::zeros({x.c(), h, w});
  for (uint32_t c = 0; c < x.c(); ++c)
    for (uint32_t yy = 0; yy < h; ++yy)
      for (uint32_t xx = 0; xx < w; ++xx) y(c, yy, xx) = x(c, yy + top, xx + left);
  return y;
}

/// Conditional U-Net velocity field v(x_t, t | x_low). Templated on the
/// scalar so gradient checks can run end to end in double precision.
template <typename S>
class UNetT {
 public:
  explicit UNetT(NetworkConfig cfg);

  const NetworkConfig& config() const { return cfg_; }
  nn::StoreT<S>& params() { return store_; }
  const nn::StoreT<S>& params() const { return store_; }
  size_t param_count() const { return store_.total_count(); }

  /// Fan-in-scaled uniform init; norm gains 1, biases 0, output head all zero.
  void init(RandomStream& rng);

  /// x_t, x_low: (1,H,W) with H,W divisible by 2^depth. Pass a tape to record
  /// the activations backward() needs; pass nullptr for inference.
  TensorT<S> forward(const TensorT<S>& x_t, const TensorT<S>& x_low, double t,
                     nn::TapeT<S>* tape) const;

  /// Accumulates parameter gradients of a scalar loss into `grads` given
  /// d(loss)/d(output). `grads` must mirror the store's shapes (zeros_like).
  void backward(const TensorT<S>& dy, const nn::TapeT<S>& tape, nn::StoreT<S>& grads) const;

  using T = TensorT<S>;
  using Tape = nn::TapeT<S>;
  using Store = nn::StoreT<S>;

  /// Building blocks, exposed for direct unit testing. `pre` names the
  /// parameter group ("enc0.res0", "mid.attn", ...) inside the store.
  T res_block(const std::string& pre, const T& x, uint32_t in_c, uint32_t out_c, const T& temb,
              Tape* tape) const;
  T res_block_bwd(const std::string& pre, const T& dy, uint32_t in_c, uint32_t out_c,
                  const Tape& tape, Store& grads, T& d_temb) const;
  T transformer(const std::string& pre, const T& x, Tape* tape) const;
  T transformer_bwd(const std::string& pre, const T& dy, const Tape& tape, Store& grads) const;

 private:
  const T& p(const std::string& name) const { return store_.at(name); }
  static const T& cached(const Tape& tape, const std::string& key);
  static void put(Tape* tape, const std::string& key, const T& v);

  uint32_t lvl(uint32_t l) const { return cfg_.level_channels(l); }

  NetworkConfig cfg_;
  Store store_;
};

using UNet = UNetT<float>;

// ---------------------------------------------------------------------------
// template definitions
// ---------------------------------------------------------------------------

template <typename S>
UNetT<S>::UNetT(NetworkConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  for_each_param(cfg_, [&](const std::string& name, std::vector<uint32_t> dims) {
    store_.add(name, std::move(dims));
  });
}

template <typename S>
void UNetT<S>::init(RandomStream& rng) {
  for (const auto& name : store_.order) {
    T& t = store_.at(name);
    bool zero_head = name == "head.conv.w" || name == "head.conv.b";
    if (!zero_head && name.size() > 2 && name.compare(name.size() - 2, 2, ".w") == 0) {
      size_t fan_in = 1;
      for (size_t d = 1; d < t.dims.size(); ++d) fan_in *= t.dims[d];
      double bound = std::sqrt(3.0 / double(fan_in));
      for (auto& v : t.data) v = S(rng.uniform(-bound, bound));
    } else if (name.size() > 2 && name.compare(name.size() - 2, 2, ".g") == 0) {
      for (auto& v : t.data) v = S(1);
    } else {
      for (auto& v : t.data) v = S(0);  // biases and the zeroed head
    }
  }
}

template <typename S>
const TensorT<S>& UNetT<S>::cached(const Tape& tape, const std::string& key) {
  auto it = tape.find(key);
  if (it == tape.end()) throw std::out_of_range("tape entry missing: " + key);
  return it->second;
}

template <typename S>
void UNetT<S>::put(Tape* tape, const std::string& key, const T& v) {
  if (tape) (*tape)[key] = v;
}

template <typename S>
TensorT<S> UNetT<S>::res_block(const std::string& pre, const T& x, uint32_t in_c, uint32_t out_c,
                               const T& temb, Tape* tape) const {
  uint32_t g = cfg_.groupnorm_groups;
  put(tape, pre + ".conv1.x", x);
  T h = nn::conv2d(x, p(pre + ".conv1.w"), p(pre + ".conv1.b"));
  T xhat, invstd;
  h = nn::groupnorm(h, p(pre + ".norm1.g"), p(pre + ".norm1.b"), g, &xhat, &invstd);
  put(tape, pre + ".norm1.xhat", xhat);
  put(tape, pre + ".norm1.invstd", invstd);
  put(tape, pre + ".act1.x", h);
  h = nn::silu(h);

  T tv = nn::dense(temb, p(pre + ".temb.w"), p(pre + ".temb.b"));
  size_t hw = size_t(h.h()) * h.w();
  for (uint32_t c = 0; c < out_c; ++c) {
    S add = tv.data[c];
    S* base = h.data.data() + size_t(c) * hw;
    for (size_t i = 0; i < hw; ++i) base[i] += add;
  }

  put(tape, pre + ".conv2.x", h);
  T h2 = nn::conv2d(h, p(pre + ".conv2.w"), p(pre + ".conv2.b"));
  h2 = nn::groupnorm(h2, p(pre + ".norm2.g"), p(pre + ".norm2.b"), g, &xhat, &invstd);
  put(tape, pre + ".norm2.xhat", xhat);
  put(tape, pre + ".norm2.invstd", invstd);
  put(tape, pre + ".act2.x", h2);
  h2 = nn::silu(h2);

  // Squeeze-and-excitation channel gate.
  T s = nn::channel_mean(h2);
  put(tape, pre + ".se.s", s);
  T z1 = nn::dense(s, p(pre + ".se.fc1.w"), p(pre + ".se.fc1.b"));
  put(tape, pre + ".se.z1", z1);
  T a1 = nn::silu(z1);
  put(tape, pre + ".se.a1", a1);
  T gate = nn::sigmoid(nn::dense(a1, p(pre + ".se.fc2.w"), p(pre + ".se.fc2.b")));
  put(tape, pre + ".se.g", gate);
  put(tape, pre + ".se.x", h2);
  for (uint32_t c = 0; c < out_c; ++c) {
    S gc = gate.data[c];
    S* base = h2.data.data() + size_t(c) * hw;
    for (size_t i = 0; i < hw; ++i) base[i] *= gc;
  }

  if (in_c == out_c) {
    for (size_t i = 0; i < h2.data.size(); ++i) h2.data[i] += x.data[i];
  } else {
    T sc = nn::conv2d(x, p(pre + ".skip.w"), p(pre + ".skip.b"));
    for (size_t i = 0; i < h2.data.size(); ++i) h2.data[i] += sc.data[i];
  }
  return h2;
}

template <typename S>
TensorT<S> UNetT<S>::res_block_bwd(const std::string& pre, const T& dy, uint32_t in_c,
                                   uint32_t out_c, const Tape& tape, Store& grads,
                                   T& d_temb) const {
  uint32_t g = cfg_.groupnorm_groups;
  const T& x = cached(tape, pre + ".conv1.x");
  size_t hw = size_t(dy.h()) * dy.w();

  // SE gate backward: y = h2 * gate[c] + shortcut.
  const T& h2 = cached(tape, pre + ".se.x");
  const T& gate = cached(tape, pre + ".se.g");
  T dh2 = dy;
  T dgate = T::zeros({out_c});
  for (uint32_t c = 0; c < out_c; ++c) {
    double acc = 0.0;
    const S* dyb = dy.data.data() + size_t(c) * hw;
    const S* h2b = h2.data.data() + size_t(c) * hw;
    S* dh2b = dh2.data.data() + size_t(c) * hw;
    S gc = gate.data[c];
    for (size_t i = 0; i < hw; ++i) {
      acc += double(dyb[i]) * double(h2b[i]);
      dh2b[i] = S(double(dyb[i]) * double(gc));
    }
    dgate.data[c] = S(acc);
  }
  T dz2 = nn::sigmoid_backward_from_y(gate, dgate);
  T da1 = nn::dense_backward(cached(tape, pre + ".se.a1"), p(pre + ".se.fc2.w"), dz2,
                             grads.at(pre + ".se.fc2.w"), grads.at(pre + ".se.fc2.b"));
  T dz1 = nn::silu_backward(cached(tape, pre + ".se.z1"), da1);
  T ds = nn::dense_backward(cached(tape, pre + ".se.s"), p(pre + ".se.fc1.w"), dz1,
                            grads.at(pre + ".se.fc1.w"), grads.at(pre + ".se.fc1.b"));
  for (uint32_t c = 0; c < out_c; ++c) {
    S add = S(double(ds.data[c]) / double(hw));
    S* base = dh2.data.data() + size_t(c) * hw;
    for (size_t i = 0; i < hw; ++i) base[i] += add;
  }

  // Second conv unit.
  dh2 = nn::silu_backward(cached(tape, pre + ".act2.x"), dh2);
  dh2 = nn::groupnorm_backward(cached(tape, pre + ".norm2.xhat"),
                               cached(tape, pre + ".norm2.invstd"), p(pre + ".norm2.g"), dh2, g,
                               grads.at(pre + ".norm2.g"), grads.at(pre + ".norm2.b"));
  T dh = nn::conv2d_backward(cached(tape, pre + ".conv2.x"), p(pre + ".conv2.w"), dh2,
                             grads.at(pre + ".conv2.w"), grads.at(pre + ".conv2.b"));

  // Time-embedding projection: broadcast add over space.
  T dtv = T::zeros({out_c});
  for (uint32_t c = 0; c < out_c; ++c) {
    double acc = 0.0;
    const S* base = dh.data.data() + size_t(c) * hw;
    for (size_t i = 0; i < hw; ++i) acc += double(base[i]);
    dtv.data[c] = S(acc);
  }
  T dtemb_part = nn::dense_backward(cached(tape, "temb.out"), p(pre + ".temb.w"), dtv,
                                    grads.at(pre + ".temb.w"), grads.at(pre + ".temb.b"));
  for (size_t i = 0; i < d_temb.data.size(); ++i) d_temb.data[i] += dtemb_part.data[i];

  // First conv unit.
  dh = nn::silu_backward(cached(tape, pre + ".act1.x"), dh);
  dh = nn::groupnorm_backward(cached(tape, pre + ".norm1.xhat"),
                              cached(tape, pre + ".norm1.invstd"), p(pre + ".norm1.g"), dh, g,
                              grads.at(pre + ".norm1.g"), grads.at(pre + ".norm1.b"));
  T dx = nn::conv2d_backward(x, p(pre + ".conv1.w"), dh, grads.at(pre + ".conv1.w"),
                             grads.at(pre + ".conv1.b"));

  if (in_c == out_c) {
    for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dy.data[i];
  } else {
    T dsc = nn::conv2d_backward(x, p(pre + ".skip.w"), dy, grads.at(pre + ".skip.w"),
                                grads.at(pre + ".skip.b"));
    for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dsc.data[i];
  }
  return dx;
}

template <typename S>
TensorT<S> UNetT<S>::transformer(const std::string& pre, const T& x, Tape* tape) const {
  uint32_t c = x.c(), h = x.h(), w = x.w();
  uint32_t heads = cfg_.attn_heads, dh = c / heads, tokens = h * w;
  double scale = 1.0 / std::sqrt(double(dh));

  T xs = nn::to_seq(x);
  put(tape, pre + ".seq_in", xs);
  T xhat, invstd;
  T u = nn::layernorm(xs, p(pre + ".ln.g"), p(pre + ".ln.b"), &xhat, &invstd);
  put(tape, pre + ".ln.xhat", xhat);
  put(tape, pre + ".ln.invstd", invstd);
  put(tape, pre + ".U", u);
  T q = nn::seq_dense(u, p(pre + ".q.w"), p(pre + ".q.b"));
  T k = nn::seq_dense(u, p(pre + ".k.w"), p(pre + ".k.b"));
  T v = nn::seq_dense(u, p(pre + ".v.w"), p(pre + ".v.b"));
  put(tape, pre + ".Q", q);
  put(tape, pre + ".K", k);
  put(tape, pre + ".V", v);

  T attn = T::zeros({heads, tokens, tokens});
  T o = T::zeros({tokens, c});
  nn::CMapRM<S> qm(q.data.data(), tokens, c), km(k.data.data(), tokens, c),
      vm(v.data.data(), tokens, c);
  nn::MapRM<S> om(o.data.data(), tokens, c);
  for (uint32_t hd = 0; hd < heads; ++hd) {
    T logits = T::zeros({tokens, tokens});
    nn::MapRM<S> lm(logits.data.data(), tokens, tokens);
    lm.noalias() = qm.block(0, hd * dh, tokens, dh) * km.block(0, hd * dh, tokens, dh).transpose();
    lm *= S(scale);
    T a = nn::softmax_rows(logits);
    std::memcpy(attn.data.data() + size_t(hd) * tokens * tokens, a.data.data(),
                sizeof(S) * a.data.size());
    nn::CMapRM<S> am(a.data.data(), tokens, tokens);
    om.block(0, hd * dh, tokens, dh).noalias() = am * vm.block(0, hd * dh, tokens, dh);
  }
  put(tape, pre + ".A", attn);
  put(tape, pre + ".O", o);
  T x1 = nn::seq_dense(o, p(pre + ".o.w"), p(pre + ".o.b"));
  for (size_t i = 0; i < x1.data.size(); ++i) x1.data[i] += xs.data[i];
  put(tape, pre + ".X1", x1);

  T u2 = nn::layernorm(x1, p(pre + ".mlp_ln.g"), p(pre + ".mlp_ln.b"), &xhat, &invstd);
  put(tape, pre + ".mlp_ln.xhat", xhat);
  put(tape, pre + ".mlp_ln.invstd", invstd);
  put(tape, pre + ".U2", u2);
  T z = nn::seq_dense(u2, p(pre + ".mlp1.w"), p(pre + ".mlp1.b"));
  put(tape, pre + ".Z", z);
  T hidden = nn::silu(z);
  put(tape, pre + ".H", hidden);
  T y = nn::seq_dense(hidden, p(pre + ".mlp2.w"), p(pre + ".mlp2.b"));
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += x1.data[i];
  return nn::from_seq(y, h, w);
}

template <typename S>
TensorT<S> UNetT<S>::transformer_bwd(const std::string& pre, const T& dy_map, const Tape& tape,
                                     Store& grads) const {
  uint32_t c = dy_map.c(), h = dy_map.h(), w = dy_map.w();
  uint32_t heads = cfg_.attn_heads, dh = c / heads, tokens = h * w;
  double scale = 1.0 / std::sqrt(double(dh));

  T dx2 = nn::to_seq(dy_map);
  // MLP branch: x2 = x1 + mlp2(silu(mlp1(ln(x1)))).
  T dhid = nn::seq_dense_backward(cached(tape, pre + ".H"), p(pre + ".mlp2.w"), dx2,
                                  grads.at(pre + ".mlp2.w"), grads.at(pre + ".mlp2.b"));
  T dz = nn::silu_backward(cached(tape, pre + ".Z"), dhid);
  T du2 = nn::seq_dense_backward(cached(tape, pre + ".U2"), p(pre + ".mlp1.w"), dz,
                                 grads.at(pre + ".mlp1.w"), grads.at(pre + ".mlp1.b"));
  T dx1 = nn::layernorm_backward(cached(tape, pre + ".mlp_ln.xhat"),
                                 cached(tape, pre + ".mlp_ln.invstd"), p(pre + ".mlp_ln.g"), du2,
                                 grads.at(pre + ".mlp_ln.g"), grads.at(pre + ".mlp_ln.b"));
  for (size_t i = 0; i < dx1.data.size(); ++i) dx1.data[i] += dx2.data[i];

  // Attention branch: x1 = x + o_proj(concat_heads(A V)).
  T dov = nn::seq_dense_backward(cached(tape, pre + ".O"), p(pre + ".o.w"), dx1,
                                 grads.at(pre + ".o.w"), grads.at(pre + ".o.b"));
  const T& q = cached(tape, pre + ".Q");
  const T& k = cached(tape, pre + ".K");
  const T& v = cached(tape, pre + ".V");
  const T& attn = cached(tape, pre + ".A");
  T dq = T::zeros({tokens, c}), dk = T::zeros({tokens, c}), dv = T::zeros({tokens, c});
  nn::CMapRM<S> qm(q.data.data(), tokens, c), km(k.data.data(), tokens, c),
      vm(v.data.data(), tokens, c), dom(dov.data.data(), tokens, c);
  nn::MapRM<S> dqm(dq.data.data(), tokens, c), dkm(dk.data.data(), tokens, c),
      dvm(dv.data.data(), tokens, c);
  for (uint32_t hd = 0; hd < heads; ++hd) {
    T a = T::zeros({tokens, tokens});
    std::memcpy(a.data.data(), attn.data.data() + size_t(hd) * tokens * tokens,
                sizeof(S) * a.data.size());
    nn::CMapRM<S> am(a.data.data(), tokens, tokens);
    T da = T::zeros({tokens, tokens});
    nn::MapRM<S> dam(da.data.data(), tokens, tokens);
    dam.noalias() = dom.block(0, hd * dh, tokens, dh) * vm.block(0, hd * dh, tokens, dh).transpose();
    dvm.block(0, hd * dh, tokens, dh).noalias() = am.transpose() * dom.block(0, hd * dh, tokens, dh);
    T dlogits = nn::softmax_rows_backward(a, da);
    nn::MapRM<S> dlm(dlogits.data.data(), tokens, tokens);
    dlm *= S(scale);
    dqm.block(0, hd * dh, tokens, dh).noalias() = dlm * km.block(0, hd * dh, tokens, dh);
    dkm.block(0, hd * dh, tokens, dh).noalias() =
        dlm.transpose() * qm.block(0, hd * dh, tokens, dh);
  }
  const T& u = cached(tape, pre + ".U");
  T du = nn::seq_dense_backward(u, p(pre + ".q.w"), dq, grads.at(pre + ".q.w"),
                                grads.at(pre + ".q.b"));
  T duk = nn::seq_dense_backward(u, p(pre + ".k.w"), dk, grads.at(pre + ".k.w"),
                                 grads.at(pre + ".k.b"));
  T duv = nn::seq_dense_backward(u, p(pre + ".v.w"), dv, grads.at(pre + ".v.w"),
                                 grads.at(pre + ".v.b"));
  for (size_t i = 0; i < du.data.size(); ++i) du.data[i] += duk.data[i] + duv.data[i];
  T dxs = nn::layernorm_backward(cached(tape, pre + ".ln.xhat"),
                                 cached(tape, pre + ".ln.invstd"), p(pre + ".ln.g"), du,
                                 grads.at(pre + ".ln.g"), grads.at(pre + ".ln.b"));
  for (size_t i = 0; i < dxs.data.size(); ++i) dxs.data[i] += dx1.data[i];
  return nn::from_seq(dxs, h, w);
}

template <typename S>
TensorT<S> UNetT<S>::forward(const T& x_t, const T& x_low, double t, Tape* tape) const {
  require_same_shape(x_t, x_low, "unet forward");
  if (x_t.dims.size() != 3 || x_t.c() != 1)
    throw std::invalid_argument("unet forward: inputs must be (1,H,W)");
  uint32_t div = cfg_.spatial_divisor();
  if (x_t.h() % div != 0 || x_t.w() % div != 0)
    throw std::invalid_argument("unet forward: spatial dims must be divisible by " +
                                std::to_string(div));

  // Time embedding: sinusoidal lift then a 2-layer SiLU MLP.
  T sf = sinusoidal_features<S>(t, cfg_.time_embed_dim);
  put(tape, "temb.sf", sf);
  T tz = nn::dense(sf, p("temb.dense1.w"), p("temb.dense1.b"));
  put(tape, "temb.z1", tz);
  T ta = nn::silu(tz);
  put(tape, "temb.a1", ta);
  T temb = nn::dense(ta, p("temb.dense2.w"), p("temb.dense2.b"));
  put(tape, "temb.out", temb);

  // Multi-scale stem over [x_t || x_low].
  T x = nn::concat_channels(x_t, x_low);
  put(tape, "stem.x", x);
  T hmap = nn::conv2d(x, p("stem.b0.w"), p("stem.b0.b"));
  for (int bi = 1; bi < 4; ++bi) {
    std::string pre = "stem.b" + std::to_string(bi);
    hmap = nn::concat_channels(hmap, nn::conv2d(x, p(pre + ".w"), p(pre + ".b")));
  }

  // Encoder with skip captures.
  std::vector<T> skips;
  uint32_t cur_c = cfg_.stem_channels();
  for (uint32_t l = 0; l < cfg_.depth; ++l) {
    for (uint32_t b = 0; b < cfg_.res_blocks_per_level; ++b) {
      std::string pre = "enc" + std::to_string(l) + ".res" + std::to_string(b);
      hmap = res_block(pre, hmap, cur_c, lvl(l), temb, tape);
      cur_c = lvl(l);
    }
    skips.push_back(hmap);
    std::string dn = "down" + std::to_string(l);
    T hu = nn::pixel_unshuffle(hmap);
    put(tape, dn + ".x", hu);
    hmap = nn::conv2d(hu, p(dn + ".w"), p(dn + ".b"));
    cur_c = lvl(std::min(l + 1, cfg_.depth - 1));
  }

  // Bottleneck: res, transformer, res.
  uint32_t cb = cfg_.bottleneck_channels();
  hmap = res_block("mid.res0", hmap, cb, cb, temb, tape);
  hmap = transformer("mid.attn", hmap, tape);
  hmap = res_block("mid.res1", hmap, cb, cb, temb, tape);

  // Decoder with skip concatenation.
  for (int li = int(cfg_.depth) - 1; li >= 0; --li) {
    uint32_t l = uint32_t(li);
    std::string up = "up" + std::to_string(l);
    put(tape, up + ".x", hmap);
    hmap = nn::conv2d(hmap, p(up + ".w"), p(up + ".b"));
    hmap = nn::pixel_shuffle(hmap);
    hmap = nn::concat_channels(hmap, skips[l]);
    cur_c = 2 * lvl(l);
    for (uint32_t b = 0; b < cfg_.res_blocks_per_level; ++b) {
      std::string pre = "dec" + std::to_string(l) + ".res" + std::to_string(b);
      hmap = res_block(pre, hmap, cur_c, lvl(l), temb, tape);
      cur_c = lvl(l);
    }
  }

  // Output head; the conv is zero-initialized so the initial field is 0.
  T xhat, invstd;
  hmap = nn::groupnorm(hmap, p("head.norm.g"), p("head.norm.b"), cfg_.groupnorm_groups, &xhat,
                       &invstd);
  put(tape, "head.norm.xhat", xhat);
  put(tape, "head.norm.invstd", invstd);
  put(tape, "head.act.x", hmap);
  hmap = nn::silu(hmap);
  put(tape, "head.conv.x", hmap);
  return nn::conv2d(hmap, p("head.conv.w"), p("head.conv.b"));
}

template <typename S>
void UNetT<S>::backward(const T& dy, const Tape& tape, Store& grads) const {
  T d_temb = T::zeros({cfg_.time_embed_dim});

  // Head.
  T dh = nn::conv2d_backward(cached(tape, "head.conv.x"), p("head.conv.w"), dy,
                             grads.at("head.conv.w"), grads.at("head.conv.b"));
  dh = nn::silu_backward(cached(tape, "head.act.x"), dh);
  dh = nn::groupnorm_backward(cached(tape, "head.norm.xhat"), cached(tape, "head.norm.invstd"),
                              p("head.norm.g"), dh, cfg_.groupnorm_groups,
                              grads.at("head.norm.g"), grads.at("head.norm.b"));

  // Decoder levels in reverse execution order (level 0 ran last).
  std::vector<T> d_skip(cfg_.depth);
  for (uint32_t l = 0; l < cfg_.depth; ++l) {
    for (int b = int(cfg_.res_blocks_per_level) - 1; b >= 0; --b) {
      std::string pre = "dec" + std::to_string(l) + ".res" + std::to_string(b);
      uint32_t in_c = b == 0 ? 2 * lvl(l) : lvl(l);
      dh = res_block_bwd(pre, dh, in_c, lvl(l), tape, grads, d_temb);
    }
    T d_up;
    nn::split_channels(dh, lvl(l), d_up, d_skip[l]);
    T d_conv_out = nn::pixel_unshuffle(d_up);
    std::string up = "up" + std::to_string(l);
    dh = nn::conv2d_backward(cached(tape, up + ".x"), p(up + ".w"), d_conv_out,
                             grads.at(up + ".w"), grads.at(up + ".b"));
  }

  // Bottleneck.
  uint32_t cb = cfg_.bottleneck_channels();
  dh = res_block_bwd("mid.res1", dh, cb, cb, tape, grads, d_temb);
  dh = transformer_bwd("mid.attn", dh, tape, grads);
  dh = res_block_bwd("mid.res0", dh, cb, cb, tape, grads, d_temb);

  // Encoder levels in reverse.
  for (int li = int(cfg_.depth) - 1; li >= 0; --li) {
    uint32_t l = uint32_t(li);
    std::string dn = "down" + std::to_string(l);
    T d_hu = nn::conv2d_backward(cached(tape, dn + ".x"), p(dn + ".w"), dh, grads.at(dn + ".w"),
                                 grads.at(dn + ".b"));
    dh = nn::pixel_shuffle(d_hu);
    for (size_t i = 0; i < dh.data.size(); ++i) dh.data[i] += d_skip[l].data[i];
    for (int b = int(cfg_.res_blocks_per_level) - 1; b >= 0; --b) {
      std::string pre = "enc" + std::to_string(l) + ".res" + std::to_string(b);
      uint32_t in_c = (b == 0 && l == 0) ? cfg_.stem_channels() : lvl(l);
      dh = res_block_bwd(pre, dh, in_c, lvl(l), tape, grads, d_temb);
    }
  }

  // Stem: split the gradient across the four branches.
  const T& x = cached(tape, "stem.x");
  uint32_t bc = cfg_.branch_channels;
  size_t hw = size_t(dh.h()) * dh.w();
  for (int bi = 0; bi < 4; ++bi) {
    T db = T::zeros({bc, dh.h(), dh.w()});
    std::memcpy(db.data.data(), dh.data.data() + size_t(bi) * bc * hw,
                sizeof(S) * db.data.size());
    std::string pre = "stem.b" + std::to_string(bi);
    nn::conv2d_backward(x, p(pre + ".w"), db, grads.at(pre + ".w"), grads.at(pre + ".b"));
  }

  // Time-embedding MLP (shared by every res block).
  T dta = nn::dense_backward(cached(tape, "temb.a1"), p("temb.dense2.w"), d_temb,
                             grads.at("temb.dense2.w"), grads.at("temb.dense2.b"));
  T dtz = nn::silu_backward(cached(tape, "temb.z1"), dta);
  nn::dense_backward(cached(tape, "temb.sf"), p("temb.dense1.w"), dtz, grads.at("temb.dense1.w"),
                     grads.at("temb.dense1.b"));
}

}  // namespace iqtcfm
