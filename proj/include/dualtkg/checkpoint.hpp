#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dualtkg/optim.hpp"
#include "dualtkg/params.hpp"
#include "dualtkg/tensor.hpp"

namespace dualtkg {

// Self-describing binary container: named parameter payloads (little-endian
// f64), optional optimizer state, and a free-form config blob. Round-trips
// bit-exactly.
struct Checkpoint {
  std::map<std::string, Tensor> params;  // insertion order is lost; lookup by name
  std::vector<std::string> order;        // original registry order
  std::optional<std::vector<AdamState>> adam_states;  // aligned with `order`
  std::string config_blob;
};

void save_checkpoint(const std::string& path, const ParamRegistry& params, const Adam* optimizer,
                     const std::string& config_blob);

Checkpoint load_checkpoint(const std::string& path);

// Copies loaded values into matching registry entries; every registry
// parameter must be present with an identical shape.
void restore_params(const ParamRegistry& params, const Checkpoint& ckpt);

}  // namespace dualtkg
