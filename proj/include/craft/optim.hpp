#pragma once

#include <cmath>
#include <vector>

#include "craft/params.hpp"

namespace craft::tc {

/// Cosine-annealed learning rate: base at step 0, zero at total_steps.
inline double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0 || step >= total_steps) return total_steps == 0 ? base_lr : 0.0;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return 0.5 * base_lr * (1.0 + std::cos(3.14159265358979323846 * t));
}

/// Adam with decoupled weight decay.
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    double max_grad_norm = 0.0;  // 0 disables clipping
  };

  AdamW() = default;
  explicit AdamW(Options opt) : opt_(opt) {}

  std::size_t steps() const { return t_; }

  /// L2 norm over all parameter gradients.
  static double grad_norm(const ParameterStore& store) {
    double s = 0.0;
    for (const auto& p : store.all())
      for (double g : p.tensor.grad()) s += g * g;
    return std::sqrt(s);
  }

  void step(ParameterStore& store, double lr) {
    auto& params = store.all();
    if (m_.size() != params.size()) {
      m_.clear();
      v_.clear();
      for (const auto& p : params) {
        m_.emplace_back(p.tensor.size(), 0.0);
        v_.emplace_back(p.tensor.size(), 0.0);
      }
    }
    double clip = 1.0;
    if (opt_.max_grad_norm > 0.0) {
      const double norm = grad_norm(store);
      if (norm > opt_.max_grad_norm) clip = opt_.max_grad_norm / norm;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto values = params[k].tensor.mutable_values();
      const auto grads = params[k].tensor.grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double g = grads.empty() ? 0.0 : grads[i] * clip;
        m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g;
        v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g * g;
        values[i] -= lr * opt_.weight_decay * values[i];
        values[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opt_.eps);
      }
    }
  }

  const std::vector<std::vector<double>>& first_moments() const { return m_; }

 private:
  Options opt_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace craft::tc
