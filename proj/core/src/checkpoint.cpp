#include "iqtcfm/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "iqtcfm/errors.hpp"

namespace iqtcfm {
namespace {

using nlohmann::json;

constexpr char kCkptMagic[8] = {'I', 'Q', 'T', 'C', 'F', 'M', 'C', 'K'};
constexpr char kStateMagic[8] = {'I', 'Q', 'T', 'C', 'F', 'M', 'T', 'S'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  put_u32(out, uint32_t(v));
  put_u32(out, uint32_t(v >> 32));
}

uint32_t get_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("checkpoint: truncated " + what);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

uint64_t get_u64(std::istream& in, const std::string& what) {
  uint64_t lo = get_u32(in, what);
  uint64_t hi = get_u32(in, what);
  return lo | hi << 32;
}

void put_f32_payload(std::ostream& out, const std::vector<float>& data) {
  for (float f : data) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
}

void get_f32_payload(std::istream& in, std::vector<float>& data, const std::string& what) {
  for (float& f : data) {
    uint32_t bits = get_u32(in, what);
    std::memcpy(&f, &bits, 4);
  }
}

void write_store(std::ostream& out, const nn::Store& store) {
  put_u32(out, uint32_t(store.order.size()));
  for (const auto& name : store.order) {
    const Tensor& t = store.tensors.at(name);
    put_u32(out, uint32_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    put_u32(out, uint32_t(t.dims.size()));
    for (uint32_t d : t.dims) put_u32(out, d);
    put_f32_payload(out, t.data);
  }
}

nn::Store read_store(std::istream& in, const std::string& what) {
  nn::Store store;
  uint32_t n = get_u32(in, what);
  for (uint32_t i = 0; i < n; ++i) {
    uint32_t len = get_u32(in, what);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw IoError("checkpoint: truncated " + what);
    uint32_t rank = get_u32(in, what);
    std::vector<uint32_t> dims(rank);
    for (auto& d : dims) d = get_u32(in, what);
    Tensor& t = store.add(name, dims);
    get_f32_payload(in, t.data, what);
  }
  return store;
}

void check_magic(std::istream& in, const char (&magic)[8], const std::string& path) {
  char got[8];
  if (!in.read(got, 8) || std::memcmp(got, magic, 8) != 0)
    throw IoError(path + ": not a recognized checkpoint file");
  uint32_t version = get_u32(in, "version");
  if (version != kVersion)
    throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
}

std::string read_json_blob(std::istream& in) {
  uint32_t len = get_u32(in, "header");
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) throw IoError("checkpoint: truncated header");
  return text;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kCkptMagic, 8);
  put_u32(out, kVersion);
  std::string cfg = network_config_to_json_text(ckpt.config);
  put_u32(out, uint32_t(cfg.size()));
  out.write(cfg.data(), std::streamsize(cfg.size()));
  put_u64(out, ckpt.params.total_count());
  write_store(out, ckpt.params);
  if (!out) throw IoError("short write to checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  check_magic(in, kCkptMagic, path.string());
  Checkpoint ckpt;
  ckpt.config = network_config_from_json_text(read_json_blob(in));
  uint64_t declared = get_u64(in, "total_count");
  ckpt.params = read_store(in, "params");
  if (declared != ckpt.params.total_count())
    throw IoError(path.string() + ": header count " + std::to_string(declared) +
                  " != stored elements " + std::to_string(ckpt.params.total_count()));
  return ckpt;
}

void save_train_state(const TrainState& state, const NetworkConfig& cfg,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write train state " + path.string());
  out.write(kStateMagic, 8);
  put_u32(out, kVersion);
  json rows = json::array();
  for (const auto& r : state.curve)
    rows.push_back(json::array({r.epoch, r.train_loss, r.val_loss, r.lr}));
  json head{{"network", nlohmann::json::parse(network_config_to_json_text(cfg))},
            {"next_epoch", state.next_epoch},
            {"adam_steps", state.adam_steps},
            {"best_val", state.best_val},
            {"curve", rows}};
  std::string head_text = head.dump();
  put_u32(out, uint32_t(head_text.size()));
  out.write(head_text.data(), std::streamsize(head_text.size()));
  write_store(out, state.params);
  write_store(out, state.m);
  write_store(out, state.v);
  if (!out) throw IoError("short write to train state " + path.string());
}

TrainState load_train_state(const std::filesystem::path& path, const NetworkConfig& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open train state " + path.string());
  check_magic(in, kStateMagic, path.string());
  TrainState state;
  json head;
  try {
    head = json::parse(read_json_blob(in));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed state header: " + e.what());
  }
  std::string stored = head.at("network").dump();
  if (stored != network_config_to_json_text(expected))
    throw ConfigError(path.string() + ": train state was produced by a different network config");
  state.next_epoch = head.at("next_epoch").get<uint32_t>();
  state.adam_steps = head.at("adam_steps").get<uint64_t>();
  state.best_val = head.at("best_val").get<double>();
  for (const auto& r : head.at("curve"))
    state.curve.push_back({r.at(0).get<uint32_t>(), r.at(1).get<double>(), r.at(2).get<double>(),
                           r.at(3).get<double>()});
  state.params = read_store(in, "params");
  state.m = read_store(in, "m");
  state.v = read_store(in, "v");
  return state;
}

}  // namespace iqtcfm
