#pragma once

#include <cstdint>
#include <vector>

#include "puray/param_store.hpp"

namespace puray::ad {

struct AdamConfig {
  double lr0 = 0.005;
  double decay = 0.99;  // per-epoch multiplier
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  AdamState(ParamStore& params, AdamConfig cfg = {});

  void step();         // consumes gradients currently in the store
  void epoch_decay();  // lr *= decay

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::uint64_t step_count() const { return step_; }
  void set_step_count(std::uint64_t t) { step_ = t; }
  const AdamConfig& config() const { return cfg_; }

  std::vector<double>& first_moment(std::size_t i) { return m_[i]; }
  std::vector<double>& second_moment(std::size_t i) { return v_[i]; }
  const std::vector<double>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<double>& second_moment(std::size_t i) const { return v_[i]; }
  std::size_t moment_count() const { return m_.size(); }

 private:
  ParamStore& params_;
  AdamConfig cfg_;
  double lr_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace puray::ad
