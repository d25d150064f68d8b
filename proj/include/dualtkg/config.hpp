#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dualtkg/model.hpp"
#include "dualtkg/rules.hpp"

namespace dualtkg {

// Flat key=value run configuration. Serialized verbatim into reports,
// manifests and checkpoints; precedence is defaults < preset < config file
// < environment < command-line flags.
struct RunConfig {
  std::string data_dir;
  i64 granularity = 1;
  std::string dataset_preset;  // icews14s | icews18 | icews05-15 | gdelt

  i64 dim = 200;
  int history_window = 3;
  int gcn_layers = 2;
  int gat_layers = 2;  // both view encoders
  i64 cap = 10;        // dynamics retrieval bound per query
  double alpha = 0.7;
  double mu = 0.2;
  double temperature = 0.3;
  double dropout = 0.2;
  i64 decoder_channels = 50;
  i64 decoder_kernel = 3;

  double lr = 1e-3;
  double weight_decay = 1e-5;
  int max_epochs = 50;
  int patience = 5;
  std::uint64_t seed = 42;
  std::string variant = "full";

  i64 num_walks = 200;
  i64 min_body_support = 2;
  i64 exhaustive_threshold = 10000;
  std::string rules_path;  // pre-mined rules; mined on demand when empty

  std::string out_dir = "runs/default";

  void validate() const;
  std::string to_kv() const;
  static RunConfig from_kv(const std::string& text);
  void set(const std::string& key, const std::string& value);
  void apply_file(const std::string& path);
  void apply_env();  // DUALTKG_DATA_DIR, DUALTKG_SEED
  void apply_preset(const std::string& name);

  ModelConfig model_config() const;
  MiningConfig mining_config() const;
};

// FNV-1a over a file's bytes; DataError when unreadable.
std::uint64_t file_checksum(const std::string& path);
// Combined checksum over the three split files and both id maps.
std::uint64_t dataset_checksum(const std::string& data_dir);

}  // namespace dualtkg
