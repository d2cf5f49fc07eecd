#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "craft/tensor.hpp"

namespace craft::tc {

struct GradCheckResult {
  double max_rel_error = 0.0;  // worst per-input relative error
  std::size_t worst_input = 0;
  std::size_t evaluations = 0;
};

/// Compares analytic gradients of a scalar function with central differences.
/// The error of each input is ||analytic - numeric|| / max(||analytic||,
/// ||numeric||); inputs whose gradients both vanish below `zero_floor` count as
/// exact.
inline GradCheckResult gradcheck(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double h = 1e-5,
                                 double zero_floor = 1e-10) {
  for (auto& t : inputs) t.zero_grad();
  backward(f());
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    auto g = t.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(t.size(), 0.0);
  }
  GradCheckResult res;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto vals = inputs[k].mutable_values();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double fp = f().item();
      vals[i] = orig - h;
      const double fm = f().item();
      vals[i] = orig;
      res.evaluations += 2;
      const double num = (fp - fm) / (2.0 * h);
      const double a = analytic[k][i];
      diff2 += (a - num) * (a - num);
      a2 += a * a;
      n2 += num * num;
    }
    const double denom = std::max(std::sqrt(a2), std::sqrt(n2));
    const double rel = denom < zero_floor ? 0.0 : std::sqrt(diff2) / denom;
    if (rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_input = k;
    }
  }
  for (auto& t : inputs) t.zero_grad();
  return res;
}

}  // namespace craft::tc
