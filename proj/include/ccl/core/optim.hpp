#ifndef CCL_CORE_OPTIM_HPP
#define CCL_CORE_OPTIM_HPP

#include <cmath>
#include <vector>

#include "ccl/core/layers.hpp"

namespace ccl {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments are kept in double regardless of T.
template <class T>
class Adam {
 public:
  Adam(ParameterList<T> params, AdamOptions options) : params_(std::move(params)), options_(options) {
    require(options.lr > 0, "learning rate must be positive");
    require(options.beta1 >= 0 && options.beta1 < 1 && options.beta2 >= 0 && options.beta2 < 1,
            "Adam betas must lie in [0, 1)");
    for (const auto& p : params_) {
      m_.emplace_back(p.var.value().size(), 0.0);
      v_.emplace_back(p.var.value().size(), 0.0);
    }
  }

  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }
  long steps() const { return step_; }

  void zero_grad() { zero_grads(params_); }

  /// Rescales all gradients so their global L2 norm is at most max_norm.
  /// Returns the norm before clipping.
  double clip_grad_norm(double max_norm) {
    double sq = 0.0;
    for (auto& p : params_)
      for (T g : p.var.grad().values()) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
      const T factor = static_cast<T>(max_norm / (norm + 1e-12));
      for (auto& p : params_)
        for (T& g : p.var.mutable_grad().values()) g *= factor;
    }
    return norm;
  }

  void step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& var = params_[k].var;
      const auto g = var.grad().values();
      auto w = var.mutable_value().values();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * gi;
        v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * gi * gi;
        const double update = options_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + options_.eps);
        w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
      }
    }
  }

 private:
  ParameterList<T> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long step_ = 0;
};

}  // namespace ccl

#endif  // CCL_CORE_OPTIM_HPP
