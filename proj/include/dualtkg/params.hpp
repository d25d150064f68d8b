#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dualtkg/tensor.hpp"

namespace dualtkg {

// Named parameter store. Registration order is the canonical order used by
// the optimizer and the checkpoint writer, so it must be deterministic.
class ParamRegistry {
 public:
  Tensor add(const std::string& name, Tensor t);
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  Tensor find(const std::string& name) const;  // throws DataError when absent
  bool contains(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }
  i64 total_values() const;
  void zero_grads();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Glorot-uniform initialization for a [fan_in, fan_out]-ish weight.
Tensor glorot(Shape shape, Rng& rng);

}  // namespace dualtkg
