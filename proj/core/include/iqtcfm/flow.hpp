#pragma once

#include <functional>
#include <vector>

#include "iqtcfm/config.hpp"
#include "iqtcfm/manifest.hpp"
#include "iqtcfm/random.hpp"
#include "iqtcfm/tensor.hpp"

namespace iqtcfm {

/// One supervised regression point on the linear probability path.
struct PathPoint {
  Tensor x_t;       // interpolant at time t
  double t = 0.0;   // in [0,1]
  Tensor target_v;  // x1 - x0, constant along the linear path
  Tensor cond;      // conditioning image x_low
};

/// i.i.d. standard normal tensor (the source distribution p0).
Tensor sample_noise(const std::vector<uint32_t>& dims, RandomStream& rng);

/// x_t = (1-t) x0 + t x1; bit-exact at both endpoints.
Tensor interpolate(const Tensor& x0, const Tensor& x1, double t);

/// v = x1 - x0.
Tensor target_velocity(const Tensor& x0, const Tensor& x1);

/// Mean squared error over all elements, accumulated in double.
double cfm_loss(const Tensor& pred_v, const Tensor& target_v);

/// Draw t ~ U[0,1] and x0 ~ N(0,I), then assemble the path point for a pair.
PathPoint make_training_point(const PairedSample& sample, RandomStream& rng);

using VelocityFn = std::function<Tensor(const Tensor& x, double t, const Tensor& cond)>;

/// Integrate dx/dt = v(x,t,cond) from t=0 to t=1 on a uniform grid with
/// dt = 1/n_steps. Euler or midpoint per cfg.method. A non-finite velocity
/// aborts with the offending step index.
Tensor integrate(const VelocityFn& model, const Tensor& x0, const Tensor& cond,
                 const SamplerConfig& cfg);

}  // namespace iqtcfm
