// Microbenchmarks for the hot paths: network passes, the degradation
// pipeline, ODE sampling, and the evaluation metrics.
#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "iqtcfm/config.hpp"
#include "iqtcfm/flow.hpp"
#include "iqtcfm/metrics.hpp"
#include "iqtcfm/nn/ops.hpp"
#include "iqtcfm/nn/unet.hpp"
#include "iqtcfm/random.hpp"
#include "iqtcfm/resample.hpp"
#include "iqtcfm/simulator.hpp"
#include "iqtcfm/training.hpp"

using namespace iqtcfm;

namespace {

NetworkConfig desk_network() {
  NetworkConfig c;
  c.branch_channels = 4;
  c.depth = 2;
  c.channel_mult = {1, 2};
  c.res_blocks_per_level = 1;
  c.se_reduction = 4;
  c.time_embed_dim = 32;
  c.attn_heads = 4;
  c.groupnorm_groups = 4;
  return c;
}

Tensor random_image(const std::vector<uint32_t>& dims, uint64_t seed) {
  RandomStream rng(seed);
  Tensor t(dims);
  for (float& v : t.data) v = float(rng.uniform());
  return t;
}

UNet make_net() {
  UNet net(desk_network());
  RandomStream rng(derive_seed(1, "init"));
  net.init(rng);
  return net;
}

void bm_unet_forward(benchmark::State& state) {
  UNet net = make_net();
  uint32_t n = uint32_t(state.range(0));
  Tensor x = random_image({1, n, n}, 2);
  Tensor low = random_image({1, n, n}, 3);
  for (auto _ : state) {
    Tensor y = net.forward(x, low, 0.5, nullptr);
    benchmark::DoNotOptimize(y.data.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * n * n);
}

void bm_unet_train_step(benchmark::State& state) {
  UNet net = make_net();
  uint32_t n = uint32_t(state.range(0));
  Tensor x = random_image({1, n, n}, 2);
  Tensor low = random_image({1, n, n}, 3);
  RandomStream rng(4);
  Tensor target = sample_noise({1, n, n}, rng);
  nn::Store grads = net.params().zeros_like();
  for (auto _ : state) {
    UNet::Tape tape;
    Tensor pred = net.forward(x, low, 0.5, &tape);
    Tensor dy(pred.dims);
    double k = 2.0 / double(pred.data.size());
    for (size_t i = 0; i < dy.data.size(); ++i)
      dy.data[i] = float((double(pred.data[i]) - double(target.data[i])) * k);
    net.backward(dy, tape, grads);
    benchmark::DoNotOptimize(grads.at("stem.b0.w").data.data());
  }
}

void bm_adam_step(benchmark::State& state) {
  UNet net = make_net();
  nn::Store grads = net.params().zeros_like();
  RandomStream rng(5);
  for (const std::string& name : grads.order)
    for (float& g : grads.at(name).data) g = float(rng.uniform(-1e-3, 1e-3));
  nn::Store m = net.params().zeros_like(), v = net.params().zeros_like();
  TrainingConfig cfg;
  uint64_t step = 0;
  for (auto _ : state) {
    adam_step(net.params(), grads, m, v, ++step, 1e-4, cfg);
    benchmark::DoNotOptimize(net.params().at("stem.b0.w").data.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(net.param_count()));
}

void bm_phantom(benchmark::State& state) {
  uint32_t n = uint32_t(state.range(0));
  RandomStream rng(6);
  for (auto _ : state) {
    auto [img, mask] = make_phantom(n, n, rng);
    benchmark::DoNotOptimize(img.data.data());
    benchmark::DoNotOptimize(mask.labels.data());
  }
}

void bm_degrade(benchmark::State& state) {
  uint32_t n = uint32_t(state.range(0));
  RandomStream prng(7);
  auto [img, mask] = make_phantom(n, n, prng);
  DegradationParams p;
  p.snr_wm = 10.0;
  p.snr_gm = 7.0;
  p.contrast_gain = 0.9;
  p.downsample_factor = 2;
  for (auto _ : state) {
    RandomStream rng(8);
    DegradeResult r = degrade(img, mask, p, rng);
    benchmark::DoNotOptimize(r.image.data.data());
  }
}

void bm_resample_roundtrip(benchmark::State& state) {
  uint32_t n = uint32_t(state.range(0));
  Tensor img = random_image({1, n, n}, 9);
  for (auto _ : state) {
    Tensor y = resample_roundtrip(img, 2);
    benchmark::DoNotOptimize(y.data.data());
  }
}

void bm_integrate_euler(benchmark::State& state) {
  UNet net = make_net();
  uint32_t n = 64;
  Tensor low = random_image({1, n, n}, 10);
  RandomStream rng(11);
  Tensor x0 = sample_noise({1, n, n}, rng);
  VelocityFn fn = [&](const Tensor& x, double t, const Tensor& cond) {
    return net.forward(x, cond, t, nullptr);
  };
  SamplerConfig sc;
  sc.method = "euler";
  sc.n_steps = uint32_t(state.range(0));
  for (auto _ : state) {
    Tensor y = integrate(fn, x0, low, sc);
    benchmark::DoNotOptimize(y.data.data());
  }
}

void bm_psnr(benchmark::State& state) {
  uint32_t n = uint32_t(state.range(0));
  Tensor a = random_image({1, n, n}, 12);
  Tensor b = random_image({1, n, n}, 13);
  for (auto _ : state) benchmark::DoNotOptimize(psnr(a, b));
  state.SetItemsProcessed(int64_t(state.iterations()) * n * n);
}

void bm_ssim(benchmark::State& state) {
  uint32_t n = uint32_t(state.range(0));
  Tensor a = random_image({1, n, n}, 14);
  Tensor b = random_image({1, n, n}, 15);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
  state.SetItemsProcessed(int64_t(state.iterations()) * n * n);
}

void bm_conv2d(benchmark::State& state) {
  uint32_t c = uint32_t(state.range(0));
  Tensor x = random_image({c, 64, 64}, 16);
  Tensor w = random_image({c, c, 3, 3}, 17);
  for (float& v : w.data) v = (v - 0.5f) * 0.1f;
  Tensor b({c});
  for (auto _ : state) {
    Tensor y = nn::conv2d(x, w, b);
    benchmark::DoNotOptimize(y.data.data());
  }
}

BENCHMARK(bm_unet_forward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_unet_train_step)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_adam_step);
BENCHMARK(bm_phantom)->Arg(64)->Arg(128);
BENCHMARK(bm_degrade)->Arg(64)->Arg(128);
BENCHMARK(bm_resample_roundtrip)->Arg(64)->Arg(256);
BENCHMARK(bm_integrate_euler)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_psnr)->Arg(256);
BENCHMARK(bm_ssim)->Arg(256);
BENCHMARK(bm_conv2d)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
