#include "iqtcfm/config.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "iqtcfm/errors.hpp"
#include "iqtcfm/random.hpp"

namespace iqtcfm {
namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& ctx) {
  if (!j.is_object()) throw ConfigError("config: " + ctx + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("config: unknown key \"" + it.key() + "\" in " + ctx);
}

template <typename T>
void get(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config: bad value for \"") + key + "\": " + e.what());
    }
  }
}

void get_mat3(const json& j, const char* key, Mat3& out) {
  if (auto it = j.find(key); it != j.end()) {
    std::array<std::array<double, 3>, 3> m;
    try {
      m = it->get<std::array<std::array<double, 3>, 3>>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("config: \"") + key + "\" must be a 3x3 matrix");
    }
    out = m;
  }
}

json mat3_json(const Mat3& m) {
  return json::array({json(m[0]), json(m[1]), json(m[2])});
}

NetworkConfig network_from(const json& j) {
  check_keys(j, {"branch_channels", "depth", "channel_mult", "res_blocks_per_level",
                 "se_reduction", "time_embed_dim", "attn_heads", "groupnorm_groups"},
             "network");
  NetworkConfig c;
  get(j, "branch_channels", c.branch_channels);
  get(j, "depth", c.depth);
  get(j, "channel_mult", c.channel_mult);
  get(j, "res_blocks_per_level", c.res_blocks_per_level);
  get(j, "se_reduction", c.se_reduction);
  get(j, "time_embed_dim", c.time_embed_dim);
  get(j, "attn_heads", c.attn_heads);
  get(j, "groupnorm_groups", c.groupnorm_groups);
  return c;
}

json network_to(const NetworkConfig& c) {
  return json{{"branch_channels", c.branch_channels},
              {"depth", c.depth},
              {"channel_mult", c.channel_mult},
              {"res_blocks_per_level", c.res_blocks_per_level},
              {"se_reduction", c.se_reduction},
              {"time_embed_dim", c.time_embed_dim},
              {"attn_heads", c.attn_heads},
              {"groupnorm_groups", c.groupnorm_groups}};
}

TrainingConfig training_from(const json& j) {
  check_keys(j, {"lr_init", "lr_min", "weight_decay", "batch_size", "epochs", "beta1", "beta2",
                 "eps", "checkpoint_every", "grad_clip"},
             "training");
  TrainingConfig c;
  get(j, "lr_init", c.lr_init);
  get(j, "lr_min", c.lr_min);
  get(j, "weight_decay", c.weight_decay);
  get(j, "batch_size", c.batch_size);
  get(j, "epochs", c.epochs);
  get(j, "beta1", c.beta1);
  get(j, "beta2", c.beta2);
  get(j, "eps", c.eps);
  get(j, "checkpoint_every", c.checkpoint_every);
  get(j, "grad_clip", c.grad_clip);
  return c;
}

json training_to(const TrainingConfig& c) {
  return json{{"lr_init", c.lr_init},     {"lr_min", c.lr_min},
              {"weight_decay", c.weight_decay}, {"batch_size", c.batch_size},
              {"epochs", c.epochs},       {"beta1", c.beta1},
              {"beta2", c.beta2},         {"eps", c.eps},
              {"checkpoint_every", c.checkpoint_every}, {"grad_clip", c.grad_clip}};
}

SimulatorConfig simulator_from(const json& j) {
  check_keys(j, {"ind_mean", "ind_cov", "ood_mean", "ood_cov", "downsample_factor", "max_attempts"},
             "simulator");
  SimulatorConfig c;
  get(j, "ind_mean", c.ind_mean);
  get_mat3(j, "ind_cov", c.ind_cov);
  get(j, "ood_mean", c.ood_mean);
  get_mat3(j, "ood_cov", c.ood_cov);
  get(j, "downsample_factor", c.downsample_factor);
  get(j, "max_attempts", c.max_attempts);
  return c;
}

json simulator_to(const SimulatorConfig& c) {
  return json{{"ind_mean", c.ind_mean},       {"ind_cov", mat3_json(c.ind_cov)},
              {"ood_mean", c.ood_mean},       {"ood_cov", mat3_json(c.ood_cov)},
              {"downsample_factor", c.downsample_factor}, {"max_attempts", c.max_attempts}};
}

SamplerConfig sampler_from(const json& j) {
  check_keys(j, {"n_steps", "method"}, "sampler");
  SamplerConfig c;
  get(j, "n_steps", c.n_steps);
  get(j, "method", c.method);
  return c;
}

json sampler_to(const SamplerConfig& c) {
  return json{{"n_steps", c.n_steps}, {"method", c.method}};
}

DataConfig data_from(const json& j) {
  check_keys(j, {"source", "phantom_size", "counts", "train_fraction", "val_fraction"}, "data");
  DataConfig c;
  get(j, "source", c.source);
  if (auto it = j.find("phantom_size"); it != j.end()) {
    auto v = it->get<std::vector<uint32_t>>();
    if (v.size() != 2) throw ConfigError("config: data.phantom_size must be [H, W]");
    c.phantom_h = v[0];
    c.phantom_w = v[1];
  }
  if (auto it = j.find("counts"); it != j.end()) {
    check_keys(*it, {"train_pool", "test_ind", "test_ood"}, "data.counts");
    get(*it, "train_pool", c.train_pool);
    get(*it, "test_ind", c.test_ind);
    get(*it, "test_ood", c.test_ood);
  }
  get(j, "train_fraction", c.train_fraction);
  get(j, "val_fraction", c.val_fraction);
  return c;
}

json data_to(const DataConfig& c) {
  return json{{"source", c.source},
              {"phantom_size", json::array({c.phantom_h, c.phantom_w})},
              {"counts", json{{"train_pool", c.train_pool},
                              {"test_ind", c.test_ind},
                              {"test_ood", c.test_ood}}},
              {"train_fraction", c.train_fraction},
              {"val_fraction", c.val_fraction}};
}

PathsConfig paths_from(const json& j) {
  check_keys(j, {"input_dir", "output_dir"}, "paths");
  PathsConfig c;
  get(j, "input_dir", c.input_dir);
  get(j, "output_dir", c.output_dir);
  return c;
}

json paths_to(const PathsConfig& c) {
  return json{{"input_dir", c.input_dir}, {"output_dir", c.output_dir}};
}

json run_to(const RunConfig& c) {
  return json{{"seed", c.seed},           {"network", network_to(c.network)},
              {"training", training_to(c.training)}, {"simulator", simulator_to(c.simulator)},
              {"sampler", sampler_to(c.sampler)},    {"data", data_to(c.data)},
              {"paths", paths_to(c.paths)}};
}

RunConfig run_from(const json& j) {
  check_keys(j, {"seed", "network", "training", "simulator", "sampler", "data", "paths"}, "top level");
  RunConfig c;
  get(j, "seed", c.seed);
  if (j.count("network")) c.network = network_from(j.at("network"));
  if (j.count("training")) c.training = training_from(j.at("training"));
  if (j.count("simulator")) c.simulator = simulator_from(j.at("simulator"));
  if (j.count("sampler")) c.sampler = sampler_from(j.at("sampler"));
  if (j.count("data")) c.data = data_from(j.at("data"));
  if (j.count("paths")) c.paths = paths_from(j.at("paths"));
  return c;
}

void require_spd(const Mat3& m, const char* what) {
  Eigen::Matrix3d e;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) e(r, c) = m[size_t(r)][size_t(c)];
  if ((e - e.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw ConfigError(std::string("simulator: ") + what + " is not symmetric");
  Eigen::LLT<Eigen::Matrix3d> llt(e);
  if (llt.info() != Eigen::Success)
    throw ConfigError(std::string("simulator: ") + what + " is not positive definite");
}

}  // namespace

void NetworkConfig::validate() const {
  if (branch_channels == 0 || depth == 0 || res_blocks_per_level == 0 || se_reduction == 0 ||
      time_embed_dim == 0 || attn_heads == 0 || groupnorm_groups == 0)
    throw ConfigError("network: all fields must be positive");
  if (channel_mult.size() != depth)
    throw ConfigError("network: channel_mult must list one multiplier per level (depth=" +
                      std::to_string(depth) + ")");
  if (time_embed_dim % 2 != 0) throw ConfigError("network: time_embed_dim must be even");
  for (uint32_t l = 0; l < depth; ++l) {
    if (channel_mult[l] == 0) throw ConfigError("network: channel_mult entries must be positive");
    uint32_t ch = level_channels(l);
    if (ch % groupnorm_groups != 0)
      throw ConfigError("network: level " + std::to_string(l) + " channels (" + std::to_string(ch) +
                        ") not divisible by groupnorm_groups");
    if (ch < se_reduction)
      throw ConfigError("network: level " + std::to_string(l) + " channels smaller than se_reduction");
  }
  if (bottleneck_channels() % attn_heads != 0)
    throw ConfigError("network: bottleneck channels not divisible by attn_heads");
}

void TrainingConfig::validate() const {
  if (lr_min > lr_init) throw ConfigError("training: lr_min must be <= lr_init");
  if (batch_size == 0) throw ConfigError("training: batch_size must be >= 1");
  if (epochs == 0) throw ConfigError("training: epochs must be >= 1");
  if (checkpoint_every == 0) throw ConfigError("training: checkpoint_every must be >= 1");
  if (grad_clip < 0) throw ConfigError("training: grad_clip must be >= 0");
}

void SimulatorConfig::validate() const {
  require_spd(ind_cov, "ind_cov");
  require_spd(ood_cov, "ood_cov");
  if (downsample_factor == 0) throw ConfigError("simulator: downsample_factor must be >= 1");
  if (max_attempts == 0) throw ConfigError("simulator: max_attempts must be >= 1");
  for (double v : ind_mean)
    if (v <= 0) throw ConfigError("simulator: ind_mean entries must be positive");
}

void SamplerConfig::validate() const {
  if (n_steps == 0) throw ConfigError("sampler: n_steps must be >= 1");
  if (method != "euler" && method != "midpoint")
    throw ConfigError("sampler: method must be \"euler\" or \"midpoint\"");
}

void DataConfig::validate() const {
  if (source != "phantom" && source != "volumes")
    throw ConfigError("data: source must be \"phantom\" or \"volumes\"");
  if (source == "phantom" && (phantom_h < 32 || phantom_w < 32))
    throw ConfigError("data: phantom size must be at least 32x32");
  if (train_pool == 0) throw ConfigError("data: train_pool must be >= 1");
  if (train_fraction <= 0 || val_fraction < 0 ||
      std::abs(train_fraction + val_fraction - 1.0) > 1e-9)
    throw ConfigError("data: train_fraction + val_fraction must equal 1");
}

void RunConfig::validate() const {
  network.validate();
  training.validate();
  simulator.validate();
  sampler.validate();
  data.validate();
}

RunConfig run_config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  return run_from(j);
}

std::string run_config_to_json_text(const RunConfig& cfg) { return run_to(cfg).dump(2) + "\n"; }

NetworkConfig network_config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("network config: invalid JSON: ") + e.what());
  }
  return network_from(j);
}

std::string network_config_to_json_text(const NetworkConfig& cfg) {
  return network_to(cfg).dump();
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return run_config_from_json_text(text);
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << run_config_to_json_text(cfg);
}

RunConfig apply_overrides(const RunConfig& cfg, const std::vector<std::string>& overrides) {
  json j = run_to(cfg);
  for (const std::string& ov : overrides) {
    auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override must look like dotted.key=value: \"" + ov + "\"");
    std::string key = ov.substr(0, eq);
    std::string val = ov.substr(eq + 1);
    json parsed;
    try {
      parsed = json::parse(val);
    } catch (const json::exception&) {
      parsed = val;  // unquoted strings pass through
    }
    json* node = &j;
    size_t pos = 0;
    while (true) {
      size_t dot = key.find('.', pos);
      std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
      if (part.empty()) throw ConfigError("override has an empty key segment: \"" + ov + "\"");
      if (dot == std::string::npos) {
        (*node)[part] = parsed;
        break;
      }
      if (!node->contains(part)) (*node)[part] = json::object();
      node = &(*node)[part];
      pos = dot + 1;
    }
  }
  return run_from(j);
}

namespace {

std::string hex64(uint64_t v) {
  static const char* d = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[size_t(i)] = d[v & 0xF];
    v >>= 4;
  }
  return s;
}

}  // namespace

std::string run_config_digest(const RunConfig& cfg) {
  return hex64(fnv1a64(run_to(cfg).dump()));
}

std::string simulator_config_digest(const SimulatorConfig& cfg) {
  return hex64(fnv1a64(simulator_to(cfg).dump()));
}

}  // namespace iqtcfm
