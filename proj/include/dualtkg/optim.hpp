#pragma once

#include <cstdint>
#include <vector>

#include "dualtkg/params.hpp"
#include "dualtkg/tensor.hpp"

namespace dualtkg {

struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 1e-5;  // classic L2, added to the gradient
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;  // first moment
  std::vector<double> v;  // second moment
  i64 step = 0;
};

// One bias-corrected update of a single parameter buffer.
void adam_step(double* param, const double* grad, i64 n, AdamState& state, const AdamConfig& cfg);

// Drives adam_step over a registry; parameters without a gradient this
// round are skipped (their moments do not advance).
class Adam {
 public:
  Adam(const ParamRegistry& params, AdamConfig cfg);

  void step();
  void zero_grad();

  const AdamConfig& config() const { return cfg_; }
  const std::vector<AdamState>& states() const { return states_; }
  std::vector<AdamState>& states() { return states_; }

 private:
  const ParamRegistry* params_;
  AdamConfig cfg_;
  std::vector<AdamState> states_;
};

}  // namespace dualtkg
