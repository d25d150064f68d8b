#pragma once

#include <utility>
#include <vector>

#include "dualtkg/nn.hpp"
#include "dualtkg/params.hpp"
#include "dualtkg/tensor.hpp"

namespace dualtkg {

struct DecodeConfig {
  i64 dim = 200;
  i64 channels = 50;
  i64 kernel_width = 3;
  double dropout = 0.2;
};

// Per-view entity scorers, the relation-task scorer, and the query
// representation networks used by the contrastive objective.
class Decoders {
 public:
  Decoders(const DecodeConfig& cfg, ParamRegistry& reg, Rng& rng);

  // ConvTransE(e_s, r) dotted against every row of the view's entity table.
  Tensor score_entities(const Tensor& subject_rows, const Tensor& relation_rows,
                        const Tensor& entity_table, bool dynamics_view, bool training,
                        Rng& rng) const;

  // ConvTransE(e_s, e_o) dotted against the relation table.
  Tensor score_relations(const Tensor& subject_rows, const Tensor& object_rows,
                         const Tensor& relation_table, bool training, Rng& rng) const;

  // z = MLP([e_s || r]) per view, in dynamics-first order.
  std::pair<Tensor, Tensor> query_representations(const Tensor& subj_dyn, const Tensor& rel_dyn,
                                                  const Tensor& subj_inv, const Tensor& rel_inv,
                                                  bool training, Rng& rng) const;

 private:
  ConvTransE entity_inv_, entity_dyn_, relation_;
  GatedMlp query_inv_, query_dyn_;
};

// Symmetric InfoNCE over a timestamp batch: rows of z_dyn/z_inv are
// L2-normalized, matched pairs are positives, the rest of the batch the
// negatives. Zero for a batch of one.
Tensor contrastive_alignment(const Tensor& z_dyn, const Tensor& z_inv, double temperature);

// Elementwise sum of the two views' scores.
Tensor fuse_scores(const Tensor& dynamics_scores, const Tensor& invariance_scores);

struct LossTerms {
  double entity_ce = 0.0;
  double relation_ce = 0.0;
  double contrastive = 0.0;
  double task = 0.0;   // alpha-weighted cross-entropy combination
  Tensor total;        // scalar, on the active tape
};

// task = alpha*CE(entity) + (1-alpha)*CE(relation); total = task + mu*CoA.
// Undefined relation/contrastive inputs contribute zero.
LossTerms joint_loss(const Tensor& entity_ce, const Tensor& relation_ce,
                     const Tensor& contrastive, double alpha, double mu);

}  // namespace dualtkg
