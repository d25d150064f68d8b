#include "dualtkg/st_init.hpp"

#include <algorithm>
#include <set>

namespace dualtkg {

SpatioTemporalInit::SpatioTemporalInit(const StInitConfig& cfg, i64 entity_count,
                                       i64 relation_count, ParamRegistry& reg, Rng& rng)
    : cfg_(cfg), entity_count_(entity_count), relation_count_(relation_count) {
  if (cfg.dim < 1 || cfg.gcn_layers < 1 || cfg.history_window < 1)
    throw ConfigError("st_init: dim, gcn_layers and history_window must be positive");
  const i64 d = cfg.dim;
  base_entities_ = reg.add("base.entities", glorot({entity_count, d}, rng));
  base_relations_ = reg.add("base.relations", glorot({relation_count, d}, rng));
  time_freq_ = reg.add("st.time_freq", Tensor::uniform({1}, 0.0, 1.0, rng));
  time_phase_ = reg.add("st.time_phase", Tensor::uniform({1}, 0.0, 1.0, rng));
  time_proj_ = reg.add("st.time_proj", glorot({2 * d, d}, rng));
  compose_kernels_ = reg.add("st.compose.kernels", glorot({2, 2, 3}, rng));
  compose_bias_ = reg.add("st.compose.bias", Tensor::zeros({2}));
  compose_proj_ = reg.add("st.compose.proj", glorot({2 * d, d}, rng));
  for (int l = 0; l < cfg.gcn_layers; ++l) {
    msg_weight_.push_back(reg.add("st.gcn" + std::to_string(l) + ".msg", glorot({d, d}, rng)));
    self_weight_.push_back(reg.add("st.gcn" + std::to_string(l) + ".self", glorot({d, d}, rng)));
    if (l + 1 < cfg.gcn_layers)
      relation_update_.push_back(
          reg.add("st.gcn" + std::to_string(l) + ".rel_update", glorot({d, d}, rng)));
  }
  pool_proj_ = reg.add("st.pool_proj", glorot({2 * d, d}, rng));
  entity_gru_ = GruCell::create("st.entity_gru", d, reg, rng);
  relation_gru_ = GruCell::create("st.relation_gru", d, reg, rng);
}

Tensor SpatioTemporalInit::temporal_tag(const Tensor& entities, i64 t_q, i64 t_i) const {
  const i64 offset = t_q - t_i;
  if (offset < 0) throw ConfigError("temporal_tag: negative time offset");
  Tensor phi =
      cos_op(add(mul(time_freq_, static_cast<double>(offset)), time_phase_));  // scalar
  Tensor block = broadcast_to(reshape(phi, {1, 1}), {entities.dim(0), cfg_.dim});
  return matmul(concat({entities, block}, 1), time_proj_);
}

Tensor SpatioTemporalInit::compose(const Tensor& subject_rows, const Tensor& relation_rows) const {
  const i64 n = subject_rows.dim(0);
  Tensor fmap = conv1d(stack_pair(subject_rows, relation_rows), compose_kernels_, compose_bias_);
  return matmul(reshape(fmap, {n, 2 * cfg_.dim}), compose_proj_);
}

Tensor SpatioTemporalInit::snapshot_gcn(const Snapshot& snap, const Tensor& entities,
                                        const Tensor& relations) const {
  Tensor ent = entities;
  Tensor rel = relations;
  // canonical edge order keeps the aggregation independent of fact order
  std::vector<Quadruple> facts = snap.facts;
  std::sort(facts.begin(), facts.end());
  std::vector<i64> subjects, rel_ids, objects;
  subjects.reserve(facts.size());
  rel_ids.reserve(facts.size());
  objects.reserve(facts.size());
  for (const auto& f : facts) {
    subjects.push_back(f.subject);
    rel_ids.push_back(f.relation);
    objects.push_back(f.object);
  }
  SegmentCsr by_object;
  if (!objects.empty()) by_object = SegmentCsr::group(objects, entity_count_);

  for (int l = 0; l < cfg_.gcn_layers; ++l) {
    Tensor self = matmul(ent, self_weight_[static_cast<std::size_t>(l)]);
    if (objects.empty()) {
      ent = rrelu_eval(self);
    } else {
      Tensor msg = matmul(compose(gather_rows(ent, subjects), gather_rows(rel, rel_ids)),
                          msg_weight_[static_cast<std::size_t>(l)]);
      // in-degree normalization comes out of the per-object mean
      ent = rrelu_eval(add(segment_mean(msg, by_object), self));
    }
    if (l + 1 < cfg_.gcn_layers)
      rel = rrelu_eval(matmul(rel, relation_update_[static_cast<std::size_t>(l)]));
  }
  return ent;
}

Tensor SpatioTemporalInit::relation_context(const Snapshot& snap, const Tensor& entities) const {
  // mean of entities incident to each relation in this snapshot (zero row
  // for relations absent from it), concatenated with the base embedding
  std::vector<std::set<i64>> incident(static_cast<std::size_t>(relation_count_));
  for (const auto& f : snap.facts) {
    incident[static_cast<std::size_t>(f.relation)].insert(f.subject);
    incident[static_cast<std::size_t>(f.relation)].insert(f.object);
  }
  SegmentCsr csr;
  csr.offsets.assign(static_cast<std::size_t>(relation_count_) + 1, 0);
  for (i64 r = 0; r < relation_count_; ++r) {
    const auto& ids = incident[static_cast<std::size_t>(r)];
    csr.offsets[static_cast<std::size_t>(r) + 1] =
        csr.offsets[static_cast<std::size_t>(r)] + static_cast<i64>(ids.size());
    csr.indices.insert(csr.indices.end(), ids.begin(), ids.end());
  }
  Tensor pooled = segment_mean(entities, csr);
  return matmul(concat({pooled, base_relations_}, 1), pool_proj_);
}

SpatioTemporalInit::Evolved SpatioTemporalInit::evolve(const std::vector<const Snapshot*>& window,
                                                       i64 t_q) const {
  Tensor ent = base_entities_;
  Tensor rel = base_relations_;
  for (const Snapshot* snap : window) {
    if (snap->timestamp >= t_q) throw DataError("evolve: window snapshot not before t_q");
    Tensor tagged = temporal_tag(ent, t_q, snap->timestamp);
    Tensor gcn_out = snapshot_gcn(*snap, tagged, rel);
    ent = entity_gru_.step(ent, gcn_out);
    rel = relation_gru_.step(rel, relation_context(*snap, ent));
  }
  return Evolved{ent, rel, t_q};
}

}  // namespace dualtkg
