#pragma once

#include <string>
#include <vector>

#include "dualtkg/decode.hpp"
#include "dualtkg/encoders.hpp"
#include "dualtkg/graphs.hpp"
#include "dualtkg/st_init.hpp"

namespace dualtkg {

// Component toggles; ablation tags map onto these (compound tags join
// single tags with '+').
struct VariantFlags {
  bool use_dynamics = true;
  bool use_invariance = true;
  bool use_contrastive = true;
  bool relation_decomposition = true;
  bool time_encoding = true;
  bool cosine_time = false;
  bool entity_decomposition = false;
  bool simple_dynamics = false;

  static VariantFlags from_tag(const std::string& tag);
  bool operator==(const VariantFlags&) const = default;
};

struct ModelConfig {
  i64 dim = 200;
  int gcn_layers = 2;
  int history_window = 3;
  int invariance_layers = 2;
  int dynamics_layers = 2;
  i64 decoder_channels = 50;
  i64 decoder_kernel = 3;
  double dropout = 0.2;
  double alpha = 0.7;        // entity vs relation task balance
  double mu = 0.2;           // contrastive weight
  double temperature = 0.3;  // contrastive temperature
  VariantFlags variant;
};

class Model {
 public:
  Model(const ModelConfig& cfg, i64 entity_count, i64 relation_count_augmented,
        std::uint64_t init_seed);

  struct Batch {
    i64 t_q = 0;
    const QuerySet* queries = nullptr;
    std::vector<const Snapshot*> window;       // ascending, all < t_q
    const ViewSubgraph* invariance = nullptr;  // may be null when the view is off
    const ViewSubgraph* dynamics = nullptr;
  };

  struct Result {
    Tensor entity_logits;  // fused [B, |E|]
    LossTerms losses;      // populated when with_loss
  };

  // One query-timestamp forward pass. `rng` drives dropout; callers derive
  // it deterministically per (epoch, timestamp).
  Result run(const Batch& batch, bool training, Rng rng, bool with_loss) const;

  ParamRegistry& params() { return params_; }
  const ParamRegistry& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }
  Tensor base_entities() const { return st_.base_entities(); }
  i64 entity_count() const { return entity_count_; }
  i64 relation_count() const { return relation_count_; }

  const SpatioTemporalInit& st_init() const { return st_; }
  const DualViewEncoders& encoders() const { return encoders_; }
  const Decoders& decoders() const { return decoders_; }

 private:
  static EncoderConfig encoder_config(const ModelConfig& cfg);

  ModelConfig cfg_;
  i64 entity_count_, relation_count_;
  ParamRegistry params_;
  Rng init_rng_;
  SpatioTemporalInit st_;
  DualViewEncoders encoders_;
  Decoders decoders_;
};

}  // namespace dualtkg
