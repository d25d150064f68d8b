#pragma once

#include <utility>
#include <vector>

#include "dualtkg/graphs.hpp"
#include "dualtkg/nn.hpp"
#include "dualtkg/params.hpp"
#include "dualtkg/tensor.hpp"

namespace dualtkg {

struct EncoderConfig {
  i64 dim = 200;
  int invariance_layers = 2;
  int dynamics_layers = 2;
  double dropout = 0.2;
  bool relation_decomposition = true;  // off reuses the shared relation table in both views
  bool entity_decomposition = false;   // optional mirror of the relation mechanism
  bool time_encoding = true;           // off drops the interval feature from dynamics attention
  bool cosine_time = false;            // scalar cosine tag tiled across d instead of the vector form
  double attn_logit_clamp = 50.0;
};

// Query-conditioned graph attention over both views. Entities are updated
// layer by layer; relation tables pass through the stack unchanged.
class DualViewEncoders {
 public:
  DualViewEncoders(const EncoderConfig& cfg, ParamRegistry& reg, Rng& rng);

  struct Output {
    Tensor entities_inv, entities_dyn;   // [|E|, d]
    Tensor relations_inv, relations_dyn; // [2|R|, d]
  };

  Output encode(const ViewSubgraph& inv, const ViewSubgraph& dyn, const Tensor& entities,
                const Tensor& relations, bool training, Rng& rng, bool need_inv,
                bool need_dyn) const;

  // (1 + g(x)) .* x with view-specific g; identity when decomposition is off.
  std::pair<Tensor, Tensor> decompose_relations(const Tensor& relations, bool training,
                                                Rng& rng) const;

  // Interval encoding for dynamics edges: sqrt(1/d) cos(freq dt + phase)
  // per component (or the tiled scalar form under `cosine_time`).
  Tensor encode_intervals(const std::vector<i64>& deltas, bool must_be_positive = true) const;

  // Single attention layer, exposed for the dense-reference tests.
  // `attention_out`, when non-null, receives one coefficient per edge.
  Tensor layer(const ViewSubgraph& graph, const Tensor& entities, const Tensor& relations,
               const Tensor& interval_features, bool dynamics, int layer_index,
               std::vector<double>* attention_out = nullptr) const;

  const EncoderConfig& config() const { return cfg_; }

 private:
  struct LayerParams {
    Tensor attn_hidden;  // [3d or 4d, d]
    Tensor attn_score;   // [d, 1]
    Tensor msg_proj;     // [d, d]
    Tensor self_proj;    // [d, d]
  };

  EncoderConfig cfg_;
  GatedMlp gate_inv_, gate_dyn_;            // relation modulation networks
  GatedMlp entity_gate_inv_, entity_gate_dyn_;  // allocated only with entity_decomposition
  std::vector<LayerParams> inv_layers_, dyn_layers_;
  Tensor interval_freq_, interval_phase_;   // [d] vectors (vector form)
  Tensor cosine_freq_, cosine_phase_;       // scalars (cosine_time form)
};

}  // namespace dualtkg
