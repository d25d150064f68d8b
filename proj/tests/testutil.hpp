#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dualtkg/tensor.hpp"

namespace dualtkg::testutil {

// Central-difference comparison of reverse-mode gradients for a scalar
// loss. `loss_fn` must be deterministic and closed over `inputs`; it is
// re-evaluated without a tape for the finite differences.
struct GradCheck {
  double max_err = 0.0;        // worst mixed relative/absolute error
  std::string worst;           // where it happened
  bool all_nonzero = true;     // every checked input got a non-trivial gradient somewhere
};

inline GradCheck check_gradients(const std::vector<Tensor>& inputs,
                                 const std::function<Tensor()>& loss_fn, double step = 1e-5) {
  GradCheck result;
  std::vector<std::vector<double>> analytic;
  {
    for (auto t : inputs) t.zero_grad();
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = loss_fn();
    backward(loss);
    for (const auto& t : inputs) {
      if (t.has_grad())
        analytic.push_back(t.grad());
      else
        analytic.push_back(std::vector<double>(static_cast<std::size_t>(t.numel()), 0.0));
    }
  }
  for (std::size_t pi = 0; pi < inputs.size(); ++pi) {
    Tensor t = inputs[pi];
    double* buf = t.mutable_data();
    bool any_nonzero = false;
    for (i64 i = 0; i < t.numel(); ++i) {
      const double saved = buf[i];
      buf[i] = saved + step;
      const double up = loss_fn().item();
      buf[i] = saved - step;
      const double down = loss_fn().item();
      buf[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double an = analytic[pi][static_cast<std::size_t>(i)];
      if (an != 0.0) any_nonzero = true;
      const double err = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
      if (err > result.max_err) {
        result.max_err = err;
        result.worst = "input " + std::to_string(pi) + " element " + std::to_string(i) +
                       ": analytic " + std::to_string(an) + " vs fd " + std::to_string(fd);
      }
    }
    if (!any_nonzero) result.all_nonzero = false;
  }
  return result;
}

inline bool approx(double a, double b, double tol = 1e-9) { return std::abs(a - b) <= tol; }

}  // namespace dualtkg::testutil
