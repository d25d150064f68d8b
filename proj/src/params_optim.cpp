#include <cmath>

#include "dualtkg/optim.hpp"
#include "dualtkg/params.hpp"

namespace dualtkg {

Tensor ParamRegistry::add(const std::string& name, Tensor t) {
  if (contains(name)) throw ConfigError("parameter registered twice: " + name);
  t.impl()->requires_grad = true;
  entries_.emplace_back(name, t);
  return t;
}

Tensor ParamRegistry::find(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw DataError("unknown parameter: " + name);
}

bool ParamRegistry::contains(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return true;
  return false;
}

i64 ParamRegistry::total_values() const {
  i64 n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

void ParamRegistry::zero_grads() {
  for (auto& [name, t] : entries_) t.impl()->grad.clear();
}

Tensor glorot(Shape shape, Rng& rng) {
  i64 fan_in = shape.size() >= 1 ? shape[0] : 1;
  i64 fan_out = shape.size() >= 2 ? shape[shape.size() - 1] : 1;
  if (shape.size() == 3) fan_in = shape[1] * shape[2];  // conv kernels [out,cin,k]
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return Tensor::uniform(std::move(shape), -bound, bound, rng);
}

void adam_step(double* param, const double* grad, i64 n, AdamState& state, const AdamConfig& cfg) {
  if (state.m.empty()) {
    state.m.assign(static_cast<std::size_t>(n), 0.0);
    state.v.assign(static_cast<std::size_t>(n), 0.0);
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (i64 i = 0; i < n; ++i) {
    const double g = grad[i] + cfg.weight_decay * param[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

Adam::Adam(const ParamRegistry& params, AdamConfig cfg)
    : params_(&params), cfg_(cfg), states_(params.size()) {}

void Adam::step() {
  const auto& entries = params_->entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto impl = entries[i].second.impl();
    if (impl->grad.empty()) continue;
    if (static_cast<i64>(impl->grad.size()) != impl->numel())
      throw ShapeError("adam: gradient shape mismatch for " + entries[i].first);
    adam_step(impl->data.data(), impl->grad.data(), impl->numel(), states_[i], cfg_);
  }
}

void Adam::zero_grad() {
  for (const auto& [name, t] : params_->entries()) t.impl()->grad.clear();
}

}  // namespace dualtkg
