#include "dualtkg/decode.hpp"

#include <numeric>

namespace dualtkg {

Decoders::Decoders(const DecodeConfig& cfg, ParamRegistry& reg, Rng& rng)
    : entity_inv_(ConvTransE::create("dec.entity_inv", cfg.dim, cfg.channels, cfg.kernel_width,
                                     cfg.dropout, reg, rng)),
      entity_dyn_(ConvTransE::create("dec.entity_dyn", cfg.dim, cfg.channels, cfg.kernel_width,
                                     cfg.dropout, reg, rng)),
      relation_(ConvTransE::create("dec.relation", cfg.dim, cfg.channels, cfg.kernel_width,
                                   cfg.dropout, reg, rng)),
      query_inv_(GatedMlp::create("query.inv", 2 * cfg.dim, cfg.dim, cfg.dim, cfg.dropout, reg, rng)),
      query_dyn_(GatedMlp::create("query.dyn", 2 * cfg.dim, cfg.dim, cfg.dim, cfg.dropout, reg, rng)) {}

Tensor Decoders::score_entities(const Tensor& subject_rows, const Tensor& relation_rows,
                                const Tensor& entity_table, bool dynamics_view, bool training,
                                Rng& rng) const {
  const ConvTransE& dec = dynamics_view ? entity_dyn_ : entity_inv_;
  return matmul_nt(dec.features(subject_rows, relation_rows, training, rng), entity_table);
}

Tensor Decoders::score_relations(const Tensor& subject_rows, const Tensor& object_rows,
                                 const Tensor& relation_table, bool training, Rng& rng) const {
  return matmul_nt(relation_.features(subject_rows, object_rows, training, rng), relation_table);
}

std::pair<Tensor, Tensor> Decoders::query_representations(const Tensor& subj_dyn,
                                                          const Tensor& rel_dyn,
                                                          const Tensor& subj_inv,
                                                          const Tensor& rel_inv, bool training,
                                                          Rng& rng) const {
  Rng rng_dyn = rng.fork(1), rng_inv = rng.fork(2);
  Tensor z_dyn = query_dyn_(concat({subj_dyn, rel_dyn}, 1), training, rng_dyn);
  Tensor z_inv = query_inv_(concat({subj_inv, rel_inv}, 1), training, rng_inv);
  return {z_dyn, z_inv};
}

Tensor contrastive_alignment(const Tensor& z_dyn, const Tensor& z_inv, double temperature) {
  if (temperature <= 0.0) throw ConfigError("contrastive_alignment: temperature must be positive");
  if (z_dyn.shape() != z_inv.shape() || z_dyn.rank() != 2)
    throw ShapeError("contrastive_alignment: query batches must both be [B,d]");
  const i64 batch = z_dyn.dim(0);
  Tensor nd = l2_normalize_rows(z_dyn);
  Tensor ni = l2_normalize_rows(z_inv);
  std::vector<i64> matched(static_cast<std::size_t>(batch));
  std::iota(matched.begin(), matched.end(), 0);
  Tensor dyn_to_inv = cross_entropy(mul(matmul_nt(nd, ni), 1.0 / temperature), matched);
  Tensor inv_to_dyn = cross_entropy(mul(matmul_nt(ni, nd), 1.0 / temperature), matched);
  return add(dyn_to_inv, inv_to_dyn);
}

Tensor fuse_scores(const Tensor& dynamics_scores, const Tensor& invariance_scores) {
  if (dynamics_scores.shape() != invariance_scores.shape())
    throw ShapeError("fuse_scores: score lengths differ");
  return add(dynamics_scores, invariance_scores);
}

LossTerms joint_loss(const Tensor& entity_ce, const Tensor& relation_ce, const Tensor& contrastive,
                     double alpha, double mu) {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("joint_loss: alpha must be in [0,1]");
  if (mu < 0.0) throw ConfigError("joint_loss: mu must be >= 0");
  LossTerms terms;
  Tensor total = mul(entity_ce, alpha);
  terms.entity_ce = entity_ce.item();
  if (relation_ce.defined()) {
    terms.relation_ce = relation_ce.item();
    total = add(total, mul(relation_ce, 1.0 - alpha));
  }
  terms.task = alpha * terms.entity_ce + (1.0 - alpha) * terms.relation_ce;
  if (contrastive.defined()) {
    terms.contrastive = contrastive.item();
    total = add(total, mul(contrastive, mu));
  }
  terms.total = total;
  return terms;
}

}  // namespace dualtkg
