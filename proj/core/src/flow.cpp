#include "iqtcfm/flow.hpp"

#include <cmath>
#include <stdexcept>

#include "iqtcfm/errors.hpp"

namespace iqtcfm {

Tensor sample_noise(const std::vector<uint32_t>& dims, RandomStream& rng) {
  return rng.normal_tensor(dims);
}

Tensor interpolate(const Tensor& x0, const Tensor& x1, double t) {
  require_same_shape(x0, x1, "interpolate");
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("interpolate: t must lie in [0,1]");
  if (t == 0.0) return x0;  // keep the endpoints bit-exact
  if (t == 1.0) return x1;
  Tensor out = x0;
  double omt = 1.0 - t;
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = float(omt * double(x0.data[i]) + t * double(x1.data[i]));
  return out;
}

Tensor target_velocity(const Tensor& x0, const Tensor& x1) {
  require_same_shape(x0, x1, "target_velocity");
  Tensor out = x1;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = x1.data[i] - x0.data[i];
  return out;
}

double cfm_loss(const Tensor& pred_v, const Tensor& target_v) {
  require_same_shape(pred_v, target_v, "cfm_loss");
  double acc = 0.0;
  for (size_t i = 0; i < pred_v.data.size(); ++i) {
    double d = double(pred_v.data[i]) - double(target_v.data[i]);
    acc += d * d;
  }
  return acc / double(pred_v.data.size());
}

PathPoint make_training_point(const PairedSample& sample, RandomStream& rng) {
  require_same_shape(sample.low, sample.high, "make_training_point");
  PathPoint p;
  p.t = rng.uniform();
  Tensor x0 = sample_noise(sample.high.dims, rng);
  p.x_t = interpolate(x0, sample.high, p.t);
  p.target_v = target_velocity(x0, sample.high);
  p.cond = sample.low;
  return p;
}

Tensor integrate(const VelocityFn& model, const Tensor& x0, const Tensor& cond,
                 const SamplerConfig& cfg) {
  cfg.validate();
  auto eval = [&](const Tensor& x, double t, uint32_t step) {
    Tensor v = model(x, t, cond);
    require_same_shape(v, x, "integrate: model output");
    if (!v.all_finite())
      throw RuntimeFailure("integrate: non-finite velocity at step " + std::to_string(step));
    return v;
  };
  Tensor x = x0;
  double dt = 1.0 / double(cfg.n_steps);
  for (uint32_t k = 0; k < cfg.n_steps; ++k) {
    double t = double(k) * dt;
    if (cfg.method == "euler") {
      Tensor v = eval(x, t, k);
      for (size_t i = 0; i < x.data.size(); ++i)
        x.data[i] = float(double(x.data[i]) + dt * double(v.data[i]));
    } else {  // midpoint
      Tensor v1 = eval(x, t, k);
      Tensor xm = x;
      for (size_t i = 0; i < x.data.size(); ++i)
        xm.data[i] = float(double(x.data[i]) + 0.5 * dt * double(v1.data[i]));
      Tensor v2 = eval(xm, t + 0.5 * dt, k);
      for (size_t i = 0; i < x.data.size(); ++i)
        x.data[i] = float(double(x.data[i]) + dt * double(v2.data[i]));
    }
  }
  return x;
}

}  // namespace iqtcfm
