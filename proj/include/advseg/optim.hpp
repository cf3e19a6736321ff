// SPDX-License-Identifier: Apache-2.0
//
// SGD with momentum, L2 weight decay, and a polynomial learning-rate decay.
// Partitions can be frozen per step: a frozen partition is skipped entirely,
// leaving both its parameters and its momentum buffers untouched.

#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "advseg/model.hpp"

namespace advseg {

struct OptimConfig {
  double base_lr = 0.007;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double poly_power = 0.9;

  void validate() const {
    if (base_lr <= 0.0) throw InvalidSpecError("OptimConfig.base_lr");
    if (momentum < 0.0 || momentum >= 1.0) throw InvalidSpecError("OptimConfig.momentum");
    if (weight_decay < 0.0) throw InvalidSpecError("OptimConfig.weight_decay");
    if (poly_power <= 0.0) throw InvalidSpecError("OptimConfig.poly_power");
  }
};

inline nlohmann::json optim_config_to_json(const OptimConfig& c) {
  return {{"base_lr", c.base_lr},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"poly_power", c.poly_power}};
}

inline OptimConfig optim_config_from_json(const nlohmann::json& j) {
  OptimConfig c;
  c.base_lr = j.value("base_lr", c.base_lr);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.poly_power = j.value("poly_power", c.poly_power);
  c.validate();
  return c;
}

/// lr(iter) = base * (1 - iter / max_iter)^power
inline double poly_lr(double base_lr, double power, int iter, int max_iter) {
  if (max_iter <= 0) return base_lr;
  if (iter >= max_iter) return 0.0;
  const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(max_iter);
  return base_lr * std::pow(frac, power);
}

template <typename S>
class SgdOptimizer {
 public:
  SgdOptimizer(const std::vector<NamedParam<S>>& params, OptimConfig cfg)
      : params_(params), cfg_(cfg) {
    cfg_.validate();
    velocity_.reserve(params_.size());
    for (const auto& p : params_)
      velocity_.push_back(MatX<S>::Zero(p.value->rows(), p.value->cols()));
  }

  /// One update at the given learning rate. frozen[partition] == true skips
  /// that partition outright: no parameter change, no momentum change.
  void step(double lr, const std::array<bool, kNumPartitions>& frozen = {}) {
    const S mu = static_cast<S>(cfg_.momentum);
    const S wd = static_cast<S>(cfg_.weight_decay);
    const S eta = static_cast<S>(lr);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& p = params_[i];
      if (frozen[static_cast<std::size_t>(p.partition)]) continue;
      MatX<S>& v = velocity_[i];
      v = mu * v + *p.grad + wd * (*p.value);
      *p.value -= eta * v;
    }
  }

  const OptimConfig& config() const { return cfg_; }

  /// Momentum buffers for checkpointing, one per parameter, same order.
  std::vector<std::pair<std::string, MatX<S>*>> tensor_table() {
    std::vector<std::pair<std::string, MatX<S>*>> t;
    for (std::size_t i = 0; i < params_.size(); ++i)
      t.emplace_back("optim.velocity." + params_[i].name, &velocity_[i]);
    return t;
  }

 private:
  std::vector<NamedParam<S>> params_;
  OptimConfig cfg_;
  std::vector<MatX<S>> velocity_;
};

}  // namespace advseg
