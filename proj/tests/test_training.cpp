// Tests for the optimizer, the scheduler, epoch/validation loops, and the
// resumable fit driver.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "iqtcfm/errors.hpp"
#include "iqtcfm/simulator.hpp"
#include "iqtcfm/training.hpp"

using namespace iqtcfm;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path p =
      fs::temp_directory_path() / ("iqtcfm_train_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

NetworkConfig tiny_network() {
  NetworkConfig c;
  c.branch_channels = 1;
  c.depth = 2;
  c.channel_mult = {1, 2};
  c.res_blocks_per_level = 1;
  c.se_reduction = 2;
  c.time_embed_dim = 8;
  c.attn_heads = 2;
  c.groupnorm_groups = 2;
  return c;
}

// One-scalar parameter store plus matching moment buffers.
struct ScalarAdam {
  nn::Store params, grads, m, v;
  ScalarAdam(float theta, float g) {
    params.add("w", {1}).data[0] = theta;
    grads.add("w", {1}).data[0] = g;
    m = params.zeros_like();
    v = params.zeros_like();
  }
};

std::vector<TrainSample> toy_samples(uint32_t n, uint32_t size, uint64_t seed) {
  std::vector<TrainSample> out;
  for (uint32_t i = 0; i < n; ++i) {
    RandomStream rng(seed + i);
    auto [high, mask] = make_phantom(size, size, rng);
    DegradationParams p;
    p.snr_wm = 12.0;
    p.snr_gm = 8.0;
    p.contrast_gain = 0.9;
    p.downsample_factor = 2;
    TrainSample s;
    s.high = high;
    s.low = degrade(high, mask, p, rng).image;
    s.index = i;
    out.push_back(std::move(s));
  }
  return out;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

RunConfig toy_run_config(uint32_t epochs) {
  RunConfig cfg;
  cfg.seed = 99;
  cfg.network = tiny_network();
  cfg.training.lr_init = 1e-3;
  cfg.training.lr_min = 1e-5;
  cfg.training.batch_size = 2;
  cfg.training.epochs = epochs;
  cfg.training.checkpoint_every = 2;
  cfg.data.phantom_h = 32;
  cfg.data.phantom_w = 32;
  cfg.data.train_pool = 8;
  cfg.data.test_ind = 1;
  cfg.data.test_ood = 1;
  return cfg;
}

}  // namespace

TEST_CASE("the cosine schedule hits its endpoints exactly and decays") {
  TrainingConfig cfg;  // lr 1e-4 -> 1e-6 over 200 epochs
  CHECK(cosine_lr(0, cfg) == cfg.lr_init);
  CHECK(cosine_lr(cfg.epochs, cfg) == cfg.lr_min);
  CHECK(cosine_lr(cfg.epochs + 50, cfg) == cfg.lr_min);
  CHECK(std::abs(cosine_lr(100, cfg) - 5.05e-5) < 1e-12);
  double prev = cosine_lr(0, cfg);
  for (uint32_t e = 1; e <= cfg.epochs; ++e) {
    double cur = cosine_lr(e, cfg);
    CHECK(cur <= prev);
    prev = cur;
  }
}

TEST_CASE("the first Adam step matches the hand-computed value") {
  TrainingConfig cfg;
  cfg.weight_decay = 0.0;
  ScalarAdam s(0.0f, 1.0f);
  REQUIRE(adam_step(s.params, s.grads, s.m, s.v, 1, 1e-4, cfg));
  // theta_1 = -lr / (1 + eps) with bias-corrected mhat = vhat = 1
  CHECK(std::abs(double(s.params.at("w").data[0]) - (-9.999999900000002e-05)) < 1e-10);

  ScalarAdam big(0.0f, 1.0f);
  REQUIRE(adam_step(big.params, big.grads, big.m, big.v, 1, 0.1, cfg));
  CHECK(std::abs(double(big.params.at("w").data[0]) - (-0.1 / (1.0 + 1e-8))) < 1e-8);
}

TEST_CASE("weight decay alone pulls parameters toward zero") {
  TrainingConfig cfg;
  cfg.weight_decay = 0.1;
  ScalarAdam s(0.5f, 0.0f);
  REQUIRE(adam_step(s.params, s.grads, s.m, s.v, 1, 1e-2, cfg));
  // effective gradient 0.05; mhat = 0.05, vhat = 0.0025
  double expect = 0.5 - 1e-2 * 0.05 / (std::sqrt(0.0025) + 1e-8);
  CHECK(std::abs(double(s.params.at("w").data[0]) - expect) < 1e-6);
  CHECK(double(s.params.at("w").data[0]) < 0.5);
}

TEST_CASE("a zero gradient with zero decay is a no-op") {
  TrainingConfig cfg;
  cfg.weight_decay = 0.0;
  ScalarAdam s(0.75f, 0.0f);
  REQUIRE(adam_step(s.params, s.grads, s.m, s.v, 1, 0.1, cfg));
  CHECK(s.params.at("w").data[0] == 0.75f);
  CHECK(s.m.at("w").data[0] == 0.0f);
  CHECK(s.v.at("w").data[0] == 0.0f);
}

TEST_CASE("non-finite gradients reject the step and leave state untouched") {
  TrainingConfig cfg;
  ScalarAdam s(0.25f, NAN);
  CHECK(!adam_step(s.params, s.grads, s.m, s.v, 1, 0.1, cfg));
  CHECK(s.params.at("w").data[0] == 0.25f);
  CHECK(s.m.at("w").data[0] == 0.0f);
  CHECK(s.v.at("w").data[0] == 0.0f);
  s.grads.at("w").data[0] = INFINITY;
  CHECK(!adam_step(s.params, s.grads, s.m, s.v, 1, 0.1, cfg));
  CHECK(s.params.at("w").data[0] == 0.25f);
}

TEST_CASE("repeated Adam steps are deterministic") {
  TrainingConfig cfg;
  ScalarAdam a(1.0f, 0.0f), b(1.0f, 0.0f);
  for (uint64_t step = 1; step <= 10; ++step) {
    a.grads.at("w").data[0] = 2.0f * a.params.at("w").data[0];
    b.grads.at("w").data[0] = 2.0f * b.params.at("w").data[0];
    REQUIRE(adam_step(a.params, a.grads, a.m, a.v, step, 0.05, cfg));
    REQUIRE(adam_step(b.params, b.grads, b.m, b.v, step, 0.05, cfg));
    CHECK(a.params.at("w").data[0] == b.params.at("w").data[0]);
  }
}

TEST_CASE("Adam descends a quadratic bowl") {
  TrainingConfig cfg;
  cfg.weight_decay = 0.0;
  ScalarAdam s(1.0f, 0.0f);
  for (uint64_t step = 1; step <= 100; ++step) {
    s.grads.at("w").data[0] = 2.0f * s.params.at("w").data[0];
    REQUIRE(adam_step(s.params, s.grads, s.m, s.v, step, 0.05, cfg));
  }
  CHECK(std::abs(s.params.at("w").data[0]) < 0.05f);
}

TEST_CASE("gradient clipping rescales to the bound and reports the norm") {
  nn::Store g;
  g.add("a", {2}).data = {3.0f, 0.0f};
  g.add("b", {1}).data = {4.0f};
  double norm = clip_gradients(g, 1.0);  // global norm 5
  CHECK(norm == doctest::Approx(5.0).epsilon(1e-9));
  double after = std::sqrt(double(g.at("a").data[0]) * g.at("a").data[0] +
                           double(g.at("b").data[0]) * g.at("b").data[0]);
  CHECK(after == doctest::Approx(1.0).epsilon(1e-6));

  nn::Store g2;
  g2.add("a", {1}).data = {0.5f};
  CHECK(clip_gradients(g2, 1.0) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(g2.at("a").data[0] == 0.5f);  // under the bound: untouched
  CHECK(clip_gradients(g2, 0.0) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(g2.at("a").data[0] == 0.5f);  // disabled: untouched
}

TEST_CASE("the first batch of a fresh network scores the prior loss") {
  // A zero-initialized head predicts v = 0, so the epoch-0 loss of a single
  // full batch is the mean squared target velocity under the same frozen
  // per-record streams.
  auto samples = toy_samples(2, 32, 500);
  RunConfig cfg = toy_run_config(4);
  cfg.training.batch_size = 4;  // both samples land in one pre-update batch
  UNet net(cfg.network);
  RandomStream init(derive_seed(cfg.seed, "init"));
  net.init(init);
  nn::Store m = net.params().zeros_like(), v = net.params().zeros_like();
  uint64_t steps = 0;
  EpochStats st = train_epoch(net, m, v, steps, samples, 0, 1e-3, cfg.seed, cfg.training);
  CHECK(steps == 1);

  double expect = 0.0;
  Tensor zero({1, 32, 32}, 0.0f);
  for (const TrainSample& s : samples) {
    RandomStream rng(derive_seed(cfg.seed, "train", 0, s.index));
    PairedSample pair{s.low, s.high, "", DegradationParams{}};
    PathPoint pt = make_training_point(pair, rng);
    expect += cfm_loss(zero, pt.target_v);
  }
  expect /= double(samples.size());
  CHECK(st.mean_loss == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("epochs are deterministic in the seed and vary across epochs") {
  auto samples = toy_samples(4, 32, 600);
  RunConfig cfg = toy_run_config(4);
  UNet a(cfg.network), b(cfg.network), c(cfg.network);
  RandomStream ra(derive_seed(7, "init")), rb(derive_seed(7, "init")),
      rc(derive_seed(7, "init"));
  a.init(ra);
  b.init(rb);
  c.init(rc);
  nn::Store ma = a.params().zeros_like(), va = a.params().zeros_like();
  nn::Store mb = b.params().zeros_like(), vb = b.params().zeros_like();
  nn::Store mc = c.params().zeros_like(), vc = c.params().zeros_like();
  uint64_t sa = 0, sb = 0, sc = 0;
  (void)train_epoch(a, ma, va, sa, samples, 0, 1e-3, 7, cfg.training);
  (void)train_epoch(b, mb, vb, sb, samples, 0, 1e-3, 7, cfg.training);
  (void)train_epoch(c, mc, vc, sc, samples, 1, 1e-3, 7, cfg.training);
  for (const std::string& n : a.params().order) {
    CHECK(a.params().at(n).data == b.params().at(n).data);
  }
  bool any_diff = false;
  for (const std::string& n : a.params().order)
    if (a.params().at(n).data != c.params().at(n).data) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("training on one pair drives the loss far below its start") {
  auto samples = toy_samples(1, 32, 700);
  RunConfig cfg = toy_run_config(60);
  cfg.training.batch_size = 1;
  cfg.training.lr_init = 3e-3;
  cfg.training.lr_min = 3e-4;
  cfg.training.epochs = 60;
  UNet net(cfg.network);
  RandomStream init(derive_seed(cfg.seed, "init"));
  net.init(init);
  nn::Store m = net.params().zeros_like(), v = net.params().zeros_like();
  uint64_t steps = 0;
  double first = 0, last = 0;
  for (uint32_t e = 0; e < cfg.training.epochs; ++e) {
    double lr = cosine_lr(e, cfg.training);
    EpochStats st = train_epoch(net, m, v, steps, samples, e, lr, cfg.seed, cfg.training);
    if (e == 0) first = st.mean_loss;
    last = st.mean_loss;
  }
  CHECK(last < 0.1 * first);
}

TEST_CASE("validation is frozen per record and zero for a perfect oracle") {
  auto samples = toy_samples(3, 32, 800);
  const uint64_t seed = 31;
  // Precompute each record's frozen path point; key the lookup by the drawn
  // time, which identifies the record.
  std::map<double, Tensor> truth;
  for (const TrainSample& s : samples) {
    RandomStream rng(derive_seed(seed, "val", s.index));
    PairedSample pair{s.low, s.high, "", DegradationParams{}};
    PathPoint pt = make_training_point(pair, rng);
    truth[pt.t] = pt.target_v;
  }
  REQUIRE(truth.size() == samples.size());
  VelocityFn oracle = [&](const Tensor&, double t, const Tensor&) {
    auto it = truth.find(t);
    REQUIRE(it != truth.end());
    return it->second;
  };
  CHECK(validate(oracle, samples, seed) == 0.0);

  VelocityFn zero = [](const Tensor& x, double, const Tensor&) {
    return Tensor(x.dims, 0.0f);
  };
  double z1 = validate(zero, samples, seed);
  double z2 = validate(zero, samples, seed);
  CHECK(z1 == z2);
  CHECK(z1 > 0.0);
}

TEST_CASE("fit improves validation loss and writes its artifacts") {
  RunConfig cfg = toy_run_config(12);
  fs::path run = temp_dir("fit");
  build_dataset(cfg, run / "manifest");
  FitResult res = fit(cfg, run);
  CHECK(res.epochs_run == 12);
  CHECK(fs::exists(res.best_checkpoint));
  CHECK(fs::exists(res.last_checkpoint));
  CHECK(fs::exists(run / "checkpoints" / "state.ckpt"));
  CHECK(fs::exists(run / "curves" / "curves.csv"));

  std::ifstream csv(run / "curves" / "curves.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "epoch,train_loss,val_loss,lr");
  std::vector<CurveRow> rows;
  while (std::getline(csv, line)) {
    std::istringstream ss(line);
    std::string cell;
    CurveRow r;
    std::getline(ss, cell, ',');
    r.epoch = uint32_t(std::stoul(cell));
    std::getline(ss, cell, ',');
    r.train_loss = std::stod(cell);
    std::getline(ss, cell, ',');
    r.val_loss = std::stod(cell);
    std::getline(ss, cell, ',');
    r.lr = std::stod(cell);
    rows.push_back(r);
  }
  REQUIRE(rows.size() == 12);
  double min_val = INFINITY;
  for (uint32_t e = 0; e < 12; ++e) {
    CHECK(rows[e].epoch == e);
    CHECK(rows[e].lr == cosine_lr(e, cfg.training));  // shortest round-trip text
    min_val = std::min(min_val, rows[e].val_loss);
  }
  CHECK(res.best_val == min_val);

  // The best model must beat the zero-velocity prior on the same frozen draws.
  DatasetManifest man = read_manifest(run / "manifest" / "manifest.jsonl");
  auto val = load_training_split(man, run / "manifest", kSplitVal,
                                 cfg.network.spatial_divisor());
  VelocityFn zero = [](const Tensor& x, double, const Tensor&) {
    return Tensor(x.dims, 0.0f);
  };
  CHECK(res.best_val < validate(zero, val, cfg.seed));
  fs::remove_all(run);
}

TEST_CASE("an interrupted fit resumes to a bit-identical result") {
  RunConfig cfg = toy_run_config(6);
  fs::path straight = temp_dir("straight"), paused = temp_dir("paused");
  build_dataset(cfg, straight / "manifest");
  build_dataset(cfg, paused / "manifest");
  FitResult full = fit(cfg, straight);
  CHECK(full.epochs_run == 6);
  FitResult part = fit(cfg, paused, 2);
  CHECK(part.epochs_run == 2);
  FitResult rest = fit(cfg, paused);
  CHECK(rest.epochs_run == 4);
  CHECK(file_bytes(straight / "checkpoints" / "best.ckpt") ==
        file_bytes(paused / "checkpoints" / "best.ckpt"));
  CHECK(file_bytes(straight / "checkpoints" / "last.ckpt") ==
        file_bytes(paused / "checkpoints" / "last.ckpt"));
  CHECK(file_bytes(straight / "curves" / "curves.csv") ==
        file_bytes(paused / "curves" / "curves.csv"));
  CHECK(full.best_val == rest.best_val);
  fs::remove_all(straight);
  fs::remove_all(paused);
}

TEST_CASE("training splits load padded to the network grid") {
  RunConfig cfg = toy_run_config(4);
  cfg.data.phantom_h = 34;
  cfg.data.phantom_w = 34;
  fs::path run = temp_dir("pad");
  DatasetManifest man = build_dataset(cfg, run / "manifest");
  auto train = load_training_split(man, run / "manifest", kSplitTrain, 4);
  REQUIRE(train.size() == 6);
  for (const TrainSample& s : train) {
    CHECK(s.high.dims == std::vector<uint32_t>{1, 36, 36});
    CHECK(s.low.dims == std::vector<uint32_t>{1, 36, 36});
    CHECK(man.records[s.index].split == kSplitTrain);
  }
  fs::remove_all(run);
}

TEST_CASE("checkpoints round-trip bit-exactly and reject foreign configs") {
  NetworkConfig cfg = tiny_network();
  UNet net(cfg);
  RandomStream rng(123);
  net.init(rng);
  fs::path dir = temp_dir("ckpt");
  fs::path path = dir / "model.ckpt";
  save_checkpoint(Checkpoint{cfg, net.params()}, path);
  Checkpoint back = load_checkpoint(path);
  CHECK(network_config_to_json_text(back.config) == network_config_to_json_text(cfg));
  REQUIRE(back.params.order == net.params().order);
  for (const std::string& n : net.params().order)
    CHECK(back.params.at(n).data == net.params().at(n).data);

  // Re-saving the loaded model reproduces the same bytes.
  fs::path again = dir / "again.ckpt";
  save_checkpoint(back, again);
  CHECK(file_bytes(path) == file_bytes(again));

  TrainState state;
  state.next_epoch = 3;
  state.adam_steps = 17;
  state.best_val = 0.25;
  state.curve.push_back({0, 1.0, 2.0, 1e-3});
  state.params = net.params();
  state.m = net.params().zeros_like();
  state.v = net.params().zeros_like();
  fs::path spath = dir / "state.ckpt";
  save_train_state(state, cfg, spath);
  TrainState sback = load_train_state(spath, cfg);
  CHECK(sback.next_epoch == 3);
  CHECK(sback.adam_steps == 17);
  CHECK(sback.best_val == 0.25);
  REQUIRE(sback.curve.size() == 1);
  CHECK(sback.curve[0].lr == 1e-3);
  for (const std::string& n : net.params().order)
    CHECK(sback.params.at(n).data == net.params().at(n).data);

  NetworkConfig other = cfg;
  other.depth = 3;
  other.channel_mult = {1, 2, 2};
  CHECK_THROWS_AS((void)load_train_state(spath, other), ConfigError);
  CHECK_THROWS_AS((void)load_checkpoint(dir / "missing.ckpt"), IoError);
  fs::remove_all(dir);
}
