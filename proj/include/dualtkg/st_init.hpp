#pragma once

#include <vector>

#include "dualtkg/data.hpp"
#include "dualtkg/nn.hpp"
#include "dualtkg/params.hpp"
#include "dualtkg/tensor.hpp"

namespace dualtkg {

struct StInitConfig {
  i64 dim = 200;
  int gcn_layers = 2;
  int history_window = 3;  // snapshots consumed per query timestamp
};

// Evolves base entity/relation tables over the most recent snapshots before
// a query timestamp: per snapshot, entities get a cosine time tag, a
// snapshot-local multi-relational GCN pass, then a GRU update; relations are
// updated from pooled incident-entity context through their own GRU.
class SpatioTemporalInit {
 public:
  SpatioTemporalInit(const StInitConfig& cfg, i64 entity_count, i64 relation_count,
                     ParamRegistry& reg, Rng& rng);

  struct Evolved {
    Tensor entities;   // [|E|, d]
    Tensor relations;  // [2|R|, d]
    i64 timestamp = 0;
  };

  // window: ascending timestamps, all < t_q; empty window returns the base tables.
  Evolved evolve(const std::vector<const Snapshot*>& window, i64 t_q) const;

  // cos(freq * (t_q - t_i) + phase) tiled across the feature dimension,
  // concatenated to each row and projected back to d.
  Tensor temporal_tag(const Tensor& entities, i64 t_q, i64 t_i) const;

  // One full GCN stack over a single snapshot's facts.
  Tensor snapshot_gcn(const Snapshot& snap, const Tensor& entities, const Tensor& relations) const;

  // Subject/relation composition feeding GCN messages: conv over the
  // stacked pair, flattened and projected back to d.
  Tensor compose(const Tensor& subject_rows, const Tensor& relation_rows) const;

  const Tensor& base_entities() const { return base_entities_; }
  const Tensor& base_relations() const { return base_relations_; }
  const StInitConfig& config() const { return cfg_; }

 private:
  Tensor relation_context(const Snapshot& snap, const Tensor& entities) const;

  StInitConfig cfg_;
  i64 entity_count_, relation_count_;
  Tensor base_entities_, base_relations_;
  Tensor time_freq_, time_phase_;  // scalars
  Tensor time_proj_;               // [2d, d]
  Tensor compose_kernels_, compose_bias_, compose_proj_;
  std::vector<Tensor> msg_weight_, self_weight_;  // per GCN layer
  std::vector<Tensor> relation_update_;           // between GCN layers
  Tensor pool_proj_;                              // [2d, d]
  GruCell entity_gru_, relation_gru_;
};

}  // namespace dualtkg
