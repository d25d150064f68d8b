#include "dualtkg/model.hpp"

#include <sstream>

namespace dualtkg {

VariantFlags VariantFlags::from_tag(const std::string& tag) {
  VariantFlags flags;
  std::stringstream ss(tag);
  std::string part;
  while (std::getline(ss, part, '+')) {
    if (part == "full" || part.empty()) {
      // defaults
    } else if (part == "no-dyn") {
      flags.use_dynamics = false;
      flags.use_contrastive = false;  // a single view leaves nothing to align
    } else if (part == "no-inv") {
      flags.use_invariance = false;
      flags.use_contrastive = false;
    } else if (part == "no-coa") {
      flags.use_contrastive = false;
    } else if (part == "no-red") {
      flags.relation_decomposition = false;
    } else if (part == "no-coa-red") {
      flags.use_contrastive = false;
      flags.relation_decomposition = false;
    } else if (part == "no-te") {
      flags.time_encoding = false;
    } else if (part == "cos-te") {
      flags.time_encoding = false;
      flags.cosine_time = true;
    } else if (part == "ent-decomp") {
      flags.entity_decomposition = true;
    } else if (part == "simple-dyn") {
      flags.simple_dynamics = true;
    } else {
      throw ConfigError("unknown variant tag: " + part);
    }
  }
  if (!flags.use_dynamics && !flags.use_invariance)
    throw ConfigError("variant disables both views");
  return flags;
}

EncoderConfig Model::encoder_config(const ModelConfig& cfg) {
  EncoderConfig ec;
  ec.dim = cfg.dim;
  ec.invariance_layers = cfg.invariance_layers;
  ec.dynamics_layers = cfg.dynamics_layers;
  ec.dropout = cfg.dropout;
  ec.relation_decomposition = cfg.variant.relation_decomposition;
  ec.entity_decomposition = cfg.variant.entity_decomposition;
  ec.time_encoding = cfg.variant.time_encoding;
  ec.cosine_time = cfg.variant.cosine_time;
  return ec;
}

Model::Model(const ModelConfig& cfg, i64 entity_count, i64 relation_count_augmented,
             std::uint64_t init_seed)
    : cfg_(cfg),
      entity_count_(entity_count),
      relation_count_(relation_count_augmented),
      init_rng_(init_seed),
      st_(StInitConfig{cfg.dim, cfg.gcn_layers, cfg.history_window}, entity_count,
          relation_count_augmented, params_, init_rng_),
      encoders_(encoder_config(cfg), params_, init_rng_),
      decoders_(DecodeConfig{cfg.dim, cfg.decoder_channels, cfg.decoder_kernel, cfg.dropout},
                params_, init_rng_) {
  if (cfg.alpha < 0.0 || cfg.alpha > 1.0) throw ConfigError("model: alpha must be in [0,1]");
  if (cfg.mu < 0.0) throw ConfigError("model: mu must be >= 0");
  if (cfg.temperature <= 0.0) throw ConfigError("model: temperature must be positive");
}

Model::Result Model::run(const Batch& batch, bool training, Rng rng, bool with_loss) const {
  const VariantFlags& variant = cfg_.variant;
  if (!batch.queries || batch.queries->entity_queries.empty())
    throw DataError("model: batch without entity queries");
  static const ViewSubgraph kEmptyGraph;
  const ViewSubgraph& inv = batch.invariance ? *batch.invariance : kEmptyGraph;
  const ViewSubgraph& dyn = batch.dynamics ? *batch.dynamics : kEmptyGraph;

  auto evolved = st_.evolve(batch.window, batch.t_q);
  Rng enc_rng = rng.fork(10);
  auto enc = encoders_.encode(inv, dyn, evolved.entities, evolved.relations, training, enc_rng,
                              variant.use_invariance, variant.use_dynamics);

  std::vector<i64> subjects, relations, golds;
  for (const auto& q : batch.queries->entity_queries) {
    subjects.push_back(q.subject);
    relations.push_back(q.relation);
    golds.push_back(q.gold_object);
  }

  Tensor logits_dyn, logits_inv;
  Tensor subj_dyn, rel_dyn, subj_inv, rel_inv;
  if (variant.use_dynamics) {
    subj_dyn = gather_rows(enc.entities_dyn, subjects);
    rel_dyn = gather_rows(enc.relations_dyn, relations);
    Rng r = rng.fork(20);
    logits_dyn = decoders_.score_entities(subj_dyn, rel_dyn, enc.entities_dyn, true, training, r);
  }
  if (variant.use_invariance) {
    subj_inv = gather_rows(enc.entities_inv, subjects);
    rel_inv = gather_rows(enc.relations_inv, relations);
    Rng r = rng.fork(21);
    logits_inv = decoders_.score_entities(subj_inv, rel_inv, enc.entities_inv, false, training, r);
  }
  Result result;
  if (variant.use_dynamics && variant.use_invariance)
    result.entity_logits = fuse_scores(logits_dyn, logits_inv);
  else
    result.entity_logits = variant.use_dynamics ? logits_dyn : logits_inv;

  if (!with_loss) return result;

  Tensor entity_ce = cross_entropy(result.entity_logits, golds);

  Tensor relation_ce;
  if (cfg_.alpha < 1.0) {
    // the auxiliary task scores against the view-fused tables
    Tensor ent_table, rel_table;
    if (variant.use_dynamics && variant.use_invariance) {
      ent_table = mul(add(enc.entities_dyn, enc.entities_inv), 0.5);
      rel_table = mul(add(enc.relations_dyn, enc.relations_inv), 0.5);
    } else if (variant.use_dynamics) {
      ent_table = enc.entities_dyn;
      rel_table = enc.relations_dyn;
    } else {
      ent_table = enc.entities_inv;
      rel_table = enc.relations_inv;
    }
    std::vector<i64> rq_subjects, rq_objects, rq_golds;
    for (const auto& q : batch.queries->relation_queries) {
      rq_subjects.push_back(q.subject);
      rq_objects.push_back(q.object);
      rq_golds.push_back(q.gold_relation);
    }
    if (!rq_subjects.empty()) {
      Rng r = rng.fork(22);
      Tensor rel_logits =
          decoders_.score_relations(gather_rows(ent_table, rq_subjects),
                                    gather_rows(ent_table, rq_objects), rel_table, training, r);
      relation_ce = cross_entropy(rel_logits, rq_golds);
    }
  }

  Tensor contrastive;
  if (variant.use_contrastive && cfg_.mu > 0.0 && variant.use_dynamics && variant.use_invariance) {
    Rng r = rng.fork(23);
    auto [z_dyn, z_inv] =
        decoders_.query_representations(subj_dyn, rel_dyn, subj_inv, rel_inv, training, r);
    contrastive = contrastive_alignment(z_dyn, z_inv, cfg_.temperature);
  }

  result.losses = joint_loss(entity_ce, relation_ce, contrastive, cfg_.alpha, cfg_.mu);
  return result;
}

}  // namespace dualtkg
