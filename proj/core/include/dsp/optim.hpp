#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "dsp/tensor.hpp"

namespace dsp {

/// Bias-corrected Adam. Moments are keyed by parameter identity and created
/// lazily as zeros; the step counter advances once per start_step().
template <class S>
class Adam {
 public:
  explicit Adam(S lr, S beta1 = S(0.9), S beta2 = S(0.999), S eps = S(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void set_lr(S lr) { lr_ = lr; }
  S lr() const { return lr_; }
  long step_count() const { return t_; }

  void start_step() { ++t_; }

  void update(std::int64_t key, TensorT<S>& param, const TensorT<S>& grad) {
    if (t_ == 0) throw std::logic_error("Adam::update before start_step");
    if (!param.same_shape(grad))
      throw std::invalid_argument("Adam gradient shape " + shape_str(grad.shape()) +
                                  " does not match parameter " + shape_str(param.shape()));
    if (!grad.all_finite())
      throw std::runtime_error("Adam: non-finite gradient for parameter key " +
                               std::to_string(key) + "; aborting step");
    Moments& mo = moments_[key];
    if (mo.m.empty()) {
      mo.m = TensorT<S>(param.shape());
      mo.v = TensorT<S>(param.shape());
    }
    const double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), t_);
    const double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), t_);
    for (std::int64_t i = 0; i < param.size(); ++i) {
      mo.m[i] = beta1_ * mo.m[i] + (S(1) - beta1_) * grad[i];
      mo.v[i] = beta2_ * mo.v[i] + (S(1) - beta2_) * grad[i] * grad[i];
      double mhat = mo.m[i] / bc1;
      double vhat = mo.v[i] / bc2;
      param[i] -= static_cast<S>(lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
  }

 private:
  struct Moments {
    TensorT<S> m, v;
  };
  std::unordered_map<std::int64_t, Moments> moments_;
  long t_ = 0;
  S lr_, beta1_, beta2_, eps_;
};

/// Reduce-on-plateau: halves the learning rate after `patience` consecutive
/// epochs without improvement of the monitored loss, floored at min_lr.
class PlateauScheduler {
 public:
  explicit PlateauScheduler(double lr0, double factor = 0.5, int patience = 50,
                            double min_lr = 1e-6)
      : lr_(lr0), factor_(factor), patience_(patience), min_lr_(min_lr) {}

  /// Call once per epoch with the monitored quantity; returns the current lr.
  double step(double epoch_loss) {
    if (epoch_loss < best_loss_) {
      best_loss_ = epoch_loss;
      since_improvement_ = 0;
    } else {
      ++since_improvement_;
      if (since_improvement_ >= patience_) {
        lr_ = std::max(lr_ * factor_, min_lr_);
        since_improvement_ = 0;
      }
    }
    return lr_;
  }

  double lr() const { return lr_; }
  double best_loss() const { return best_loss_; }

 private:
  double lr_;
  double factor_;
  int patience_;
  double min_lr_;
  double best_loss_ = std::numeric_limits<double>::infinity();
  int since_improvement_ = 0;
};

}  // namespace dsp
