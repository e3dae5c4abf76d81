#ifndef PROTOMOCO_NN_HPP
#define PROTOMOCO_NN_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "protomoco/errors.hpp"
#include "protomoco/rng.hpp"
#include "protomoco/tensor.hpp"

namespace protomoco {

/// Named trainable weights with parallel gradient and momentum-velocity
/// buffers. Iteration order is the sorted name order, which keeps
/// serialization and updates deterministic.
template <typename Scalar>
class ParameterSet {
 public:
  struct Entry {
    Tensor<Scalar> weight;
    Tensor<Scalar> grad;
    Tensor<Scalar> velocity;
  };

  void add(const std::string& name, Tensor<Scalar> init) {
    if (entries_.count(name)) {
      throw ContractError("parameter '" + name + "' already registered");
    }
    Entry e;
    e.grad = Tensor<Scalar>(init.shape());
    e.velocity = Tensor<Scalar>(init.shape());
    e.weight = std::move(init);
    entries_.emplace(name, std::move(e));
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  Tensor<Scalar>& weight(const std::string& name) { return find(name).weight; }
  const Tensor<Scalar>& weight(const std::string& name) const { return find(name).weight; }
  Tensor<Scalar>& grad(const std::string& name) { return find(name).grad; }
  const Tensor<Scalar>& grad(const std::string& name) const { return find(name).grad; }
  Tensor<Scalar>& velocity(const std::string& name) { return find(name).velocity; }
  const Tensor<Scalar>& velocity(const std::string& name) const { return find(name).velocity; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
  }

  std::size_t count() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [k, v] : entries_) n += v.weight.size();
    return n;
  }

  void zero_grads() {
    for (auto& [k, v] : entries_) {
      for (auto& g : v.grad.storage()) g = Scalar(0);
    }
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  Entry& find(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }
  const Entry& find(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::map<std::string, Entry> entries_;
};

/// Classical SGD with momentum and coupled weight decay, plus a stepwise
/// learning-rate schedule (epoch, multiplier) applied multiplicatively.
struct SgdConfig {
  double learning_rate = 0.03;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<std::pair<int, double>> schedule;  // epochs strictly increasing
};

inline void validate(const SgdConfig& cfg) {
  if (!(cfg.learning_rate > 0)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (cfg.momentum < 0 || cfg.momentum >= 1) {
    throw ConfigError("momentum must lie in [0, 1)");
  }
  if (cfg.weight_decay < 0) {
    throw ConfigError("weight_decay must be non-negative");
  }
  int prev = -1;
  for (const auto& [epoch, mult] : cfg.schedule) {
    if (epoch <= prev) throw ConfigError("schedule epochs must be strictly increasing");
    if (!(mult > 0)) throw ConfigError("schedule multipliers must be positive");
    prev = epoch;
  }
}

/// Learning rate in force at the given epoch: base rate times the product of
/// all schedule multipliers whose epoch has been reached.
inline double lr_at_epoch(const SgdConfig& cfg, int epoch) {
  double lr = cfg.learning_rate;
  for (const auto& [e, mult] : cfg.schedule) {
    if (e <= epoch) lr *= mult;
  }
  return lr;
}

/// One SGD step over every parameter:
///   v <- momentum * v + (g + weight_decay * w)
///   w <- w - lr * v
/// Gradients are zeroed afterwards.
template <typename Scalar>
void sgd_step(ParameterSet<Scalar>& params, const SgdConfig& cfg, double lr) {
  const Scalar mom = static_cast<Scalar>(cfg.momentum);
  const Scalar wd = static_cast<Scalar>(cfg.weight_decay);
  const Scalar eta = static_cast<Scalar>(lr);
  for (auto& [name, e] : params) {
    Scalar* w = e.weight.data();
    Scalar* g = e.grad.data();
    Scalar* v = e.velocity.data();
    const std::size_t n = e.weight.size();
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = mom * v[i] + (g[i] + wd * w[i]);
      w[i] -= eta * v[i];
      g[i] = Scalar(0);
    }
  }
}

template <typename Scalar>
void sgd_step(ParameterSet<Scalar>& params, const SgdConfig& cfg) {
  sgd_step(params, cfg, cfg.learning_rate);
}

/// He-initialized tensor: zero-mean normal with variance 2 / fan_in,
/// deterministic for a given seed.
template <typename Scalar>
Tensor<Scalar> he_init(std::vector<int> shape, int fan_in, std::uint64_t seed) {
  if (fan_in <= 0) throw ContractError("he_init requires fan_in > 0");
  Tensor<Scalar> t(std::move(shape));
  SplitMix64 rng(seed);
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.storage()) v = static_cast<Scalar>(stddev * rng.normal());
  return t;
}

}  // namespace protomoco

#endif  // PROTOMOCO_NN_HPP
