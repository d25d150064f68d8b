#include "dualtkg/encoders.hpp"

#include <cmath>

namespace dualtkg {

DualViewEncoders::DualViewEncoders(const EncoderConfig& cfg, ParamRegistry& reg, Rng& rng)
    : cfg_(cfg) {
  if (cfg.dim < 1 || cfg.invariance_layers < 1 || cfg.dynamics_layers < 1)
    throw ConfigError("encoders: dim and layer counts must be positive");
  if (cfg.time_encoding && cfg.cosine_time)
    throw ConfigError("encoders: cosine_time replaces the vector interval encoding; drop time_encoding");
  const i64 d = cfg.dim;
  if (cfg.relation_decomposition) {
    gate_inv_ = GatedMlp::create("decomp.inv", d, d, d, cfg.dropout, reg, rng);
    gate_dyn_ = GatedMlp::create("decomp.dyn", d, d, d, cfg.dropout, reg, rng);
  }
  if (cfg.entity_decomposition) {
    entity_gate_inv_ = GatedMlp::create("decomp.ent_inv", d, d, d, cfg.dropout, reg, rng);
    entity_gate_dyn_ = GatedMlp::create("decomp.ent_dyn", d, d, d, cfg.dropout, reg, rng);
  }
  auto make_layers = [&](const char* view, int count, i64 attn_in) {
    std::vector<LayerParams> layers;
    for (int l = 0; l < count; ++l) {
      const std::string p = std::string(view) + std::to_string(l);
      layers.push_back(LayerParams{
          reg.add(p + ".attn_hidden", glorot({attn_in, d}, rng)),
          reg.add(p + ".attn_score", glorot({d, 1}, rng)),
          reg.add(p + ".msg_proj", glorot({d, d}, rng)),
          reg.add(p + ".self_proj", glorot({d, d}, rng)),
      });
    }
    return layers;
  };
  inv_layers_ = make_layers("hige", cfg.invariance_layers, 3 * d);
  const bool with_interval = cfg.time_encoding || cfg.cosine_time;
  dyn_layers_ = make_layers("edge", cfg.dynamics_layers, with_interval ? 4 * d : 3 * d);
  if (cfg.time_encoding) {
    interval_freq_ = reg.add("edge.interval_freq", Tensor::uniform({d}, 0.0, 1.0, rng));
    interval_phase_ = reg.add("edge.interval_phase", Tensor::uniform({d}, 0.0, 1.0, rng));
  }
  if (cfg.cosine_time) {
    cosine_freq_ = reg.add("edge.cosine_freq", Tensor::uniform({1}, 0.0, 1.0, rng));
    cosine_phase_ = reg.add("edge.cosine_phase", Tensor::uniform({1}, 0.0, 1.0, rng));
  }
}

std::pair<Tensor, Tensor> DualViewEncoders::decompose_relations(const Tensor& relations,
                                                                bool training, Rng& rng) const {
  if (!cfg_.relation_decomposition) return {relations, relations};
  Rng rng_inv = rng.fork(1), rng_dyn = rng.fork(2);
  Tensor inv = mul(add(gate_inv_(relations, training, rng_inv), 1.0), relations);
  Tensor dyn = mul(add(gate_dyn_(relations, training, rng_dyn), 1.0), relations);
  return {inv, dyn};
}

Tensor DualViewEncoders::encode_intervals(const std::vector<i64>& deltas,
                                          bool must_be_positive) const {
  const i64 n = static_cast<i64>(deltas.size());
  std::vector<double> dt(static_cast<std::size_t>(n));
  for (i64 i = 0; i < n; ++i) {
    if (must_be_positive && deltas[static_cast<std::size_t>(i)] <= 0)
      throw DataError("encode_intervals: non-positive time interval");
    dt[static_cast<std::size_t>(i)] = static_cast<double>(deltas[static_cast<std::size_t>(i)]);
  }
  Tensor column = Tensor::from({n, 1}, std::move(dt));
  if (cfg_.cosine_time) {
    Tensor phi = cos_op(add(mul(column, broadcast_to(reshape(cosine_freq_, {1, 1}), {n, 1})),
                            cosine_phase_));
    return broadcast_to(phi, {n, cfg_.dim});
  }
  Tensor angles = add(matmul(column, reshape(interval_freq_, {1, cfg_.dim})), interval_phase_);
  return mul(cos_op(angles), std::sqrt(1.0 / static_cast<double>(cfg_.dim)));
}

Tensor DualViewEncoders::layer(const ViewSubgraph& graph, const Tensor& entities,
                               const Tensor& relations, const Tensor& interval_features,
                               bool dynamics, int layer_index,
                               std::vector<double>* attention_out) const {
  const auto& params = dynamics ? dyn_layers_[static_cast<std::size_t>(layer_index)]
                                : inv_layers_[static_cast<std::size_t>(layer_index)];
  Tensor self = matmul(entities, params.self_proj);
  if (graph.empty()) return rrelu_eval(self);

  const i64 edge_count = static_cast<i64>(graph.edges.size());
  std::vector<i64> subjects, rel_ids, objects;
  subjects.reserve(graph.edges.size());
  rel_ids.reserve(graph.edges.size());
  objects.reserve(graph.edges.size());
  for (const auto& e : graph.edges) {
    subjects.push_back(e.subject);
    rel_ids.push_back(e.relation);
    objects.push_back(e.object);
  }
  Tensor src = gather_rows(entities, subjects);
  Tensor dst = gather_rows(entities, objects);
  Tensor rel = gather_rows(relations, rel_ids);

  std::vector<Tensor> pieces{src, rel, dst};
  if (interval_features.defined()) pieces.push_back(interval_features);
  Tensor scores = matmul(rrelu_eval(matmul(concat(pieces, 1), params.attn_hidden)),
                         params.attn_score);  // [E, 1]
  scores = clamp(scores, -cfg_.attn_logit_clamp, cfg_.attn_logit_clamp);

  // softmax over each object's in-edges, max-shifted for stability
  const auto seg_max = segment_max_values(scores, graph.in_adjacency);
  std::vector<double> shift(static_cast<std::size_t>(edge_count));
  for (i64 e = 0; e < edge_count; ++e)
    shift[static_cast<std::size_t>(e)] = seg_max[static_cast<std::size_t>(objects[static_cast<std::size_t>(e)])];
  Tensor exped = exp_op(sub(scores, Tensor::from({edge_count, 1}, std::move(shift))));
  Tensor denom = segment_sum(exped, graph.in_adjacency);  // [N, 1]
  Tensor attention = div(exped, gather_rows(denom, objects));
  if (attention_out)
    attention_out->assign(attention.data(), attention.data() + attention.numel());

  Tensor msg = matmul(tanh_op(add(src, rel)), params.msg_proj);
  Tensor aggregated = segment_sum(mul(msg, attention), graph.in_adjacency);
  return rrelu_eval(add(aggregated, self));
}

DualViewEncoders::Output DualViewEncoders::encode(const ViewSubgraph& inv, const ViewSubgraph& dyn,
                                                  const Tensor& entities, const Tensor& relations,
                                                  bool training, Rng& rng, bool need_inv,
                                                  bool need_dyn) const {
  Output out;
  auto [rel_inv, rel_dyn] = decompose_relations(relations, training, rng);
  out.relations_inv = rel_inv;
  out.relations_dyn = rel_dyn;

  if (need_inv) {
    Tensor state = entities;
    if (cfg_.entity_decomposition) {
      Rng r = rng.fork(3);
      state = mul(add(entity_gate_inv_(state, training, r), 1.0), state);
    }
    for (int l = 0; l < cfg_.invariance_layers; ++l)
      state = layer(inv, state, rel_inv, Tensor(), false, l);
    out.entities_inv = state;
  }
  if (need_dyn) {
    Tensor state = entities;
    if (cfg_.entity_decomposition) {
      Rng r = rng.fork(4);
      state = mul(add(entity_gate_dyn_(state, training, r), 1.0), state);
    }
    Tensor intervals;
    if ((cfg_.time_encoding || cfg_.cosine_time) && !dyn.empty()) {
      std::vector<i64> deltas;
      deltas.reserve(dyn.edges.size());
      for (const auto& e : dyn.edges) deltas.push_back(e.delta_t);
      intervals = encode_intervals(deltas);
    }
    for (int l = 0; l < cfg_.dynamics_layers; ++l)
      state = layer(dyn, state, rel_dyn, intervals, true, l);
    out.entities_dyn = state;
  }
  return out;
}

}  // namespace dualtkg
