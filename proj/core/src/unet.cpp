#include "iqtcfm/nn/unet.hpp"

#include <algorithm>

namespace iqtcfm {
namespace {

using EmitFn = std::function<void(const std::string&, std::vector<uint32_t>)>;

void res_block_params(const std::string& pre, uint32_t in_c, uint32_t out_c,
                      const NetworkConfig& cfg, const EmitFn& fn) {
  uint32_t se_hidden = out_c / cfg.se_reduction;
  fn(pre + ".conv1.w", {out_c, in_c, 3, 3});
  fn(pre + ".conv1.b", {out_c});
  fn(pre + ".norm1.g", {out_c});
  fn(pre + ".norm1.b", {out_c});
  fn(pre + ".temb.w", {out_c, cfg.time_embed_dim});
  fn(pre + ".temb.b", {out_c});
  fn(pre + ".conv2.w", {out_c, out_c, 3, 3});
  fn(pre + ".conv2.b", {out_c});
  fn(pre + ".norm2.g", {out_c});
  fn(pre + ".norm2.b", {out_c});
  fn(pre + ".se.fc1.w", {se_hidden, out_c});
  fn(pre + ".se.fc1.b", {se_hidden});
  fn(pre + ".se.fc2.w", {out_c, se_hidden});
  fn(pre + ".se.fc2.b", {out_c});
  if (in_c != out_c) {
    fn(pre + ".skip.w", {out_c, in_c, 1, 1});
    fn(pre + ".skip.b", {out_c});
  }
}

}  // namespace

void for_each_param(const NetworkConfig& cfg, const EmitFn& fn) {
  cfg.validate();
  auto lvl = [&](uint32_t l) { return cfg.level_channels(l); };
  uint32_t bc = cfg.branch_channels, d = cfg.time_embed_dim;

  const uint32_t kernels[4] = {1, 3, 7, 15};
  for (int bi = 0; bi < 4; ++bi) {
    std::string pre = "stem.b" + std::to_string(bi);
    fn(pre + ".w", {bc, 2, kernels[bi], kernels[bi]});
    fn(pre + ".b", {bc});
  }
  fn("temb.dense1.w", {d, d});
  fn("temb.dense1.b", {d});
  fn("temb.dense2.w", {d, d});
  fn("temb.dense2.b", {d});

  for (uint32_t l = 0; l < cfg.depth; ++l) {
    for (uint32_t b = 0; b < cfg.res_blocks_per_level; ++b) {
      uint32_t in_c = (b == 0 && l == 0) ? cfg.stem_channels() : lvl(l);
      res_block_params("enc" + std::to_string(l) + ".res" + std::to_string(b), in_c, lvl(l), cfg,
                       fn);
    }
    uint32_t dn_out = lvl(std::min(l + 1, cfg.depth - 1));
    fn("down" + std::to_string(l) + ".w", {dn_out, 4 * lvl(l), 1, 1});
    fn("down" + std::to_string(l) + ".b", {dn_out});
  }

  uint32_t cb = cfg.bottleneck_channels();
  res_block_params("mid.res0", cb, cb, cfg, fn);
  fn("mid.attn.ln.g", {cb});
  fn("mid.attn.ln.b", {cb});
  for (const char* proj : {"q", "k", "v", "o"}) {
    fn(std::string("mid.attn.") + proj + ".w", {cb, cb});
    fn(std::string("mid.attn.") + proj + ".b", {cb});
  }
  fn("mid.attn.mlp_ln.g", {cb});
  fn("mid.attn.mlp_ln.b", {cb});
  fn("mid.attn.mlp1.w", {4 * cb, cb});
  fn("mid.attn.mlp1.b", {4 * cb});
  fn("mid.attn.mlp2.w", {cb, 4 * cb});
  fn("mid.attn.mlp2.b", {cb});
  res_block_params("mid.res1", cb, cb, cfg, fn);

  for (int li = int(cfg.depth) - 1; li >= 0; --li) {
    uint32_t l = uint32_t(li);
    uint32_t below = l + 1 < cfg.depth ? lvl(l + 1) : cb;
    fn("up" + std::to_string(l) + ".w", {4 * lvl(l), below, 1, 1});
    fn("up" + std::to_string(l) + ".b", {4 * lvl(l)});
    for (uint32_t b = 0; b < cfg.res_blocks_per_level; ++b) {
      uint32_t in_c = b == 0 ? 2 * lvl(l) : lvl(l);
      res_block_params("dec" + std::to_string(l) + ".res" + std::to_string(b), in_c, lvl(l), cfg,
                       fn);
    }
  }

  fn("head.norm.g", {lvl(0)});
  fn("head.norm.b", {lvl(0)});
  fn("head.conv.w", {1, lvl(0), 3, 3});
  fn("head.conv.b", {1});
}

size_t count_params(const NetworkConfig& cfg) {
  size_t total = 0;
  for_each_param(cfg, [&](const std::string&, std::vector<uint32_t> dims) {
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    total += n;
  });
  return total;
}

template class UNetT<float>;
template class UNetT<double>;

}  // namespace iqtcfm
