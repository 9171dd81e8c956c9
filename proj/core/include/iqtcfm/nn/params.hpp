#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "iqtcfm/tensor.hpp"

namespace iqtcfm::nn {

/// Ordered name -> tensor map. Order is the definition order of the network
/// layout, which fixes both RNG consumption at init and checkpoint layout.
template <typename S>
struct StoreT {
  std::vector<std::string> order;
  std::unordered_map<std::string, TensorT<S>> tensors;

  TensorT<S>& add(const std::string& name, std::vector<uint32_t> dims) {
    auto [it, fresh] = tensors.emplace(name, TensorT<S>::zeros(dims));
    if (!fresh) throw std::invalid_argument("duplicate parameter " + name);
    order.push_back(name);
    return it->second;
  }
  TensorT<S>& at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::out_of_range("missing parameter " + name);
    return it->second;
  }
  const TensorT<S>& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::out_of_range("missing parameter " + name);
    return it->second;
  }
  bool has(const std::string& name) const { return tensors.count(name) != 0; }

  size_t total_count() const {
    size_t n = 0;
    for (const auto& name : order) n += tensors.at(name).data.size();
    return n;
  }

  /// Same names and shapes, all values zero (gradient / moment buffers).
  StoreT zeros_like() const {
    StoreT out;
    for (const auto& name : order) out.add(name, tensors.at(name).dims);
    return out;
  }

  template <typename T>
  StoreT<T> cast() const {
    StoreT<T> out;
    for (const auto& name : order) {
      auto& dst = out.add(name, tensors.at(name).dims);
      const auto& src = tensors.at(name);
      for (size_t i = 0; i < src.data.size(); ++i) dst.data[i] = T(src.data[i]);
    }
    return out;
  }
};

/// Activation cache written by forward passes and consumed by backward,
/// keyed by layer-path strings ("enc0.res1.conv2.x", "mid.attn.A", ...).
template <typename S>
using TapeT = std::unordered_map<std::string, TensorT<S>>;

using Store = StoreT<float>;
using Tape = TapeT<float>;

}  // namespace iqtcfm::nn
