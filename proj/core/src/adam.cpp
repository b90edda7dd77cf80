#include "puray/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace puray::ad {

AdamState::AdamState(ParamStore& params, AdamConfig cfg)
    : params_(params), cfg_(cfg), lr_(cfg.lr0) {
  m_.resize(params.size());
  v_.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i].assign(params.tensor(i).count(), 0.0);
    v_[i].assign(params.tensor(i).count(), 0.0);
  }
}

void AdamState::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& t = params_.tensor(pi);
    if (t.grad.size() != t.data.size()) {
      throw std::logic_error("AdamState::step: missing gradients for " + params_.name(pi));
    }
    std::vector<double>& m = m_[pi];
    std::vector<double>& v = v_[pi];
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const double g = t.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      t.data[i] -= lr_ * mh / (std::sqrt(vh) + cfg_.eps);
    }
  }
}

void AdamState::epoch_decay() { lr_ *= cfg_.decay; }

}  // namespace puray::ad
