#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "scopeqa/kernels/kernels.hpp"
#include "scopeqa/nn/tensor.hpp"

namespace scopeqa::nn {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moments are created on first step() and follow
// the parameter list order, which must stay fixed for the optimizer's life.
template <class T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>*> params, AdamConfig config)
      : params_(std::move(params)), config_(config) {
    for (Parameter<T>* p : params_) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }

  void zero_grad() {
    for (Parameter<T>* p : params_) p->zero_grad();
  }

  void step() {
    ++t_;
    kernels::AdamCoefficients c;
    c.lr = config_.lr;
    c.beta1 = config_.beta1;
    c.beta2 = config_.beta2;
    c.eps = config_.eps;
    c.bias1 = 1.0 - std::pow(config_.beta1, double(t_));
    c.bias2 = 1.0 - std::pow(config_.beta2, double(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter<T>& p = *params_[i];
      require(p.grad.shape() == p.value.shape() && m_[i].shape() == p.value.shape(),
              ErrorCode::kShape, "adam: gradient shape mismatch for " + p.name);
      kernels::adam_update(p.value.size(), c, p.grad.data(), m_[i].data(),
                           v_[i].data(), p.value.data());
    }
  }

  double lr() const { return config_.lr; }
  void set_lr(double lr) { config_.lr = lr; }
  std::int64_t steps() const { return t_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }

 private:
  std::vector<Parameter<T>*> params_;
  AdamConfig config_;
  std::vector<Tensor<T>> m_, v_;
  std::int64_t t_ = 0;
};

// Reduce-on-plateau: once the monitored loss has failed to improve by at
// least min_delta on `patience` consecutive checks, lr is multiplied by
// factor (never below min_lr) and the stall counter restarts.
struct PlateauSchedule {
  double factor = 0.5;
  int patience = 2;
  double min_delta = 1e-4;
  double min_lr = 1e-7;
};

class PlateauTracker {
 public:
  PlateauTracker(PlateauSchedule schedule, double lr) : s_(schedule), lr_(lr) {}

  // Feeds one loss value; returns the learning rate to use from now on.
  double update(double loss);

  double lr() const { return lr_; }
  int stalls() const { return stalls_; }

 private:
  PlateauSchedule s_;
  double lr_;
  double best_ = 0.0;
  bool have_best_ = false;
  int stalls_ = 0;
};

// Replays a whole loss history through a fresh tracker.
double plateau_update(const PlateauSchedule& schedule, double lr,
                      const std::vector<double>& history);

}  // namespace scopeqa::nn
