#include "iqtcfm/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <numeric>
#include <nlohmann/json.hpp>

#include "iqtcfm/errors.hpp"
#include "iqtcfm/random.hpp"

namespace iqtcfm {
namespace {

// Shortest round-trip decimal form; parsing it back recovers the bits.
std::string fmt(double v) { return nlohmann::json(v).dump(); }

bool store_all_finite(const nn::Store& s) {
  for (const auto& name : s.order)
    if (!s.tensors.at(name).all_finite()) return false;
  return true;
}

}  // namespace

double cosine_lr(uint32_t epoch, const TrainingConfig& cfg) {
  if (epoch == 0) return cfg.lr_init;
  if (epoch >= cfg.epochs) return cfg.lr_min;
  double u = 0.5 * (1.0 + std::cos(std::numbers::pi * double(epoch) / double(cfg.epochs)));
  return cfg.lr_min * (1.0 - u) + cfg.lr_init * u;
}

double clip_gradients(nn::Store& grads, double bound) {
  double sq = 0.0;
  for (const auto& name : grads.order)
    for (float g : grads.tensors.at(name).data) sq += double(g) * double(g);
  double norm = std::sqrt(sq);
  if (bound > 0.0 && norm > bound) {
    double scale = bound / norm;
    for (const auto& name : grads.order)
      for (float& g : grads.tensors.at(name).data) g = float(double(g) * scale);
  }
  return norm;
}

bool adam_step(nn::Store& params, const nn::Store& grads, nn::Store& m, nn::Store& v,
               uint64_t step, double lr, const TrainingConfig& cfg) {
  if (step == 0) throw std::invalid_argument("adam_step: step counts from 1");
  if (!store_all_finite(grads)) return false;
  double bc1 = 1.0 - std::pow(cfg.beta1, double(step));
  double bc2 = 1.0 - std::pow(cfg.beta2, double(step));
  for (const auto& name : params.order) {
    Tensor& th = params.tensors.at(name);
    const Tensor& gr = grads.at(name);
    Tensor& mt = m.tensors.at(name);
    Tensor& vt = v.tensors.at(name);
    require_same_shape(th, gr, "adam_step");
    for (size_t i = 0; i < th.data.size(); ++i) {
      double theta = th.data[i];
      double g = double(gr.data[i]) + cfg.weight_decay * theta;
      double mi = cfg.beta1 * double(mt.data[i]) + (1.0 - cfg.beta1) * g;
      double vi = cfg.beta2 * double(vt.data[i]) + (1.0 - cfg.beta2) * g * g;
      mt.data[i] = float(mi);
      vt.data[i] = float(vi);
      th.data[i] = float(theta - lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps));
    }
  }
  return true;
}

std::vector<TrainSample> load_training_split(const DatasetManifest& man,
                                             const std::filesystem::path& base_dir,
                                             const std::string& split_name, uint32_t divisor) {
  std::vector<TrainSample> out;
  for (size_t i = 0; i < man.records.size(); ++i) {
    if (man.records[i].split != split_name) continue;
    PairedSample pair = load_pair(man.records[i], base_dir);
    uint32_t top = 0, left = 0;
    TrainSample s;
    s.high = pad_to_multiple(pair.high, divisor, top, left);
    s.low = pad_to_multiple(pair.low, divisor, top, left);
    s.index = uint32_t(i);
    out.push_back(std::move(s));
  }
  return out;
}

EpochStats train_epoch(UNet& net, nn::Store& m, nn::Store& v, uint64_t& adam_steps,
                       const std::vector<TrainSample>& samples, uint32_t epoch, double lr,
                       uint64_t seed, const TrainingConfig& cfg) {
  if (samples.empty()) throw std::invalid_argument("train_epoch: empty sample set");
  std::vector<uint32_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0u);
  RandomStream shuffle_rng(derive_seed(seed, "shuffle", epoch));
  shuffle_rng.shuffle(order);

  EpochStats stats;
  double loss_sum = 0.0;
  size_t done = 0;
  while (done < order.size()) {
    size_t batch = std::min<size_t>(cfg.batch_size, order.size() - done);
    nn::Store grads = net.params().zeros_like();
    for (size_t b = 0; b < batch; ++b) {
      const TrainSample& s = samples[order[done + b]];
      RandomStream rec_rng(derive_seed(seed, "train", epoch, s.index));
      PairedSample pair{s.low, s.high, std::string(), DegradationParams{}};
      PathPoint pt = make_training_point(pair, rec_rng);
      nn::Tape tape;
      Tensor pred = net.forward(pt.x_t, pt.cond, pt.t, &tape);
      loss_sum += cfm_loss(pred, pt.target_v);
      // d/d(pred) of the batch loss (1/B) sum_b mean_el (pred_b - v_b)^2
      double scale = 2.0 / (double(pred.data.size()) * double(batch));
      Tensor dpred(pred.dims);
      for (size_t i = 0; i < dpred.data.size(); ++i)
        dpred.data[i] = float((double(pred.data[i]) - double(pt.target_v.data[i])) * scale);
      net.backward(dpred, tape, grads);
    }
    if (store_all_finite(grads)) {
      clip_gradients(grads, cfg.grad_clip);
      ++adam_steps;
      adam_step(net.params(), grads, m, v, adam_steps, lr, cfg);
    } else {
      ++stats.rejected_steps;
    }
    done += batch;
  }
  stats.mean_loss = loss_sum / double(order.size());
  return stats;
}

double validate(const VelocityFn& fn, const std::vector<TrainSample>& samples, uint64_t seed) {
  if (samples.empty()) throw std::invalid_argument("validate: empty sample set");
  double sum = 0.0;
  for (const TrainSample& s : samples) {
    RandomStream rng(derive_seed(seed, "val", s.index));
    PairedSample pair{s.low, s.high, std::string(), DegradationParams{}};
    PathPoint pt = make_training_point(pair, rng);
    sum += cfm_loss(fn(pt.x_t, pt.t, pt.cond), pt.target_v);
  }
  return sum / double(samples.size());
}

namespace {

void write_curves_csv(const std::vector<CurveRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,train_loss,val_loss,lr\n";
  for (const CurveRow& r : rows)
    out << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.val_loss) << ',' << fmt(r.lr)
        << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

FitResult fit(const RunConfig& cfg, const std::filesystem::path& run_dir,
              uint32_t max_epochs_this_run) {
  namespace fs = std::filesystem;
  cfg.validate();
  fs::path man_path = run_dir / "manifest" / "manifest.jsonl";
  DatasetManifest man = read_manifest(man_path);
  uint32_t divisor = cfg.network.spatial_divisor();
  auto train = load_training_split(man, man_path.parent_path(), kSplitTrain, divisor);
  auto val = load_training_split(man, man_path.parent_path(), kSplitVal, divisor);
  if (train.empty()) throw ConfigError("fit: manifest has no train records");
  if (val.empty()) throw ConfigError("fit: manifest has no val records");

  fs::path ckpt_dir = run_dir / "checkpoints";
  fs::path curves_dir = run_dir / "curves";
  fs::create_directories(ckpt_dir);
  fs::create_directories(curves_dir);
  fs::path state_path = ckpt_dir / "state.ckpt";
  fs::path best_path = ckpt_dir / "best.ckpt";
  fs::path last_path = ckpt_dir / "last.ckpt";

  UNet net(cfg.network);
  nn::Store m = net.params().zeros_like();
  nn::Store v = net.params().zeros_like();
  TrainState state;
  if (fs::exists(state_path)) {
    state = load_train_state(state_path, cfg.network);
    net.params() = state.params;
    m = state.m;
    v = state.v;
    std::cerr << "[train] resuming at epoch " << state.next_epoch << "\n";
  } else {
    RandomStream init_rng(derive_seed(cfg.seed, "init"));
    net.init(init_rng);
  }

  FitResult result;
  result.best_checkpoint = best_path;
  result.last_checkpoint = last_path;
  uint64_t adam_steps = state.adam_steps;
  double best_val = state.best_val;

  auto net_fn = [&net](const Tensor& x, double t, const Tensor& cond) {
    return net.forward(x, cond, t, nullptr);
  };
  auto save_state = [&](uint32_t next_epoch) {
    state.next_epoch = next_epoch;
    state.adam_steps = adam_steps;
    state.best_val = best_val;
    state.params = net.params();
    state.m = m;
    state.v = v;
    save_train_state(state, cfg.network, state_path);
  };

  for (uint32_t e = state.next_epoch; e < cfg.training.epochs; ++e) {
    double lr = cosine_lr(e, cfg.training);
    EpochStats st = train_epoch(net, m, v, adam_steps, train, e, lr, cfg.seed, cfg.training);
    if (!std::isfinite(st.mean_loss))
      throw RuntimeFailure("fit: non-finite training loss at epoch " + std::to_string(e));
    if (st.rejected_steps > 0)
      std::cerr << "[train] warning: epoch " << e << " rejected " << st.rejected_steps
                << " non-finite optimizer step(s)\n";
    double vl = validate(net_fn, val, cfg.seed);
    if (!std::isfinite(vl))
      throw RuntimeFailure("fit: non-finite validation loss at epoch " + std::to_string(e));
    state.curve.push_back({e, st.mean_loss, vl, lr});
    write_curves_csv(state.curve, curves_dir / "curves.csv");
    std::cout << "epoch=" << e << " train_loss=" << fmt(st.mean_loss) << " val_loss=" << fmt(vl)
              << " lr=" << fmt(lr) << std::endl;
    if (vl < best_val) {
      best_val = vl;
      save_checkpoint(Checkpoint{cfg.network, net.params()}, best_path);
    }
    ++result.epochs_run;
    bool finished = (e + 1 == cfg.training.epochs);
    bool pausing = (max_epochs_this_run != 0 && result.epochs_run >= max_epochs_this_run);
    if (finished || pausing || (e + 1) % cfg.training.checkpoint_every == 0) {
      save_checkpoint(Checkpoint{cfg.network, net.params()}, last_path);
      save_state(e + 1);
    }
    if (pausing && !finished) {
      std::cerr << "[train] pausing after " << result.epochs_run << " epoch(s)\n";
      break;
    }
  }
  result.best_val = best_val;
  return result;
}

}  // namespace iqtcfm
