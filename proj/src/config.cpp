#include "dualtkg/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace dualtkg {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

i64 parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const i64 v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer for " + key + ": '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for " + key + ": '" + value + "'");
  }
}

}  // namespace

void RunConfig::validate() const {
  if (dim < 1) throw ConfigError("config: dim must be >= 1");
  if (history_window < 1) throw ConfigError("config: history_window must be >= 1");
  if (gcn_layers < 1 || gat_layers < 1) throw ConfigError("config: layer counts must be >= 1");
  if (cap < 1) throw ConfigError("config: cap must be >= 1");
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("config: alpha must be in [0,1]");
  if (mu < 0.0) throw ConfigError("config: mu must be >= 0");
  if (temperature <= 0.0) throw ConfigError("config: temperature must be > 0");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("config: dropout must be in [0,1)");
  if (decoder_channels < 1 || decoder_kernel < 1 || decoder_kernel % 2 == 0)
    throw ConfigError("config: decoder needs >=1 channels and an odd kernel width");
  if (lr <= 0.0) throw ConfigError("config: lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("config: weight_decay must be >= 0");
  if (max_epochs < 1) throw ConfigError("config: max_epochs must be >= 1");
  if (patience < 0) throw ConfigError("config: patience must be >= 0");
  if (granularity < 1) throw ConfigError("config: granularity must be >= 1");
  if (num_walks < 1 || min_body_support < 1 || exhaustive_threshold < 0)
    throw ConfigError("config: bad mining parameters");
  VariantFlags::from_tag(variant);  // throws on unknown tags
}

std::string RunConfig::to_kv() const {
  std::ostringstream os;
  os << "alpha=" << fmt_double(alpha) << '\n'
     << "cap=" << cap << '\n'
     << "data_dir=" << data_dir << '\n'
     << "dataset_preset=" << dataset_preset << '\n'
     << "decoder_channels=" << decoder_channels << '\n'
     << "decoder_kernel=" << decoder_kernel << '\n'
     << "dim=" << dim << '\n'
     << "dropout=" << fmt_double(dropout) << '\n'
     << "exhaustive_threshold=" << exhaustive_threshold << '\n'
     << "gat_layers=" << gat_layers << '\n'
     << "gcn_layers=" << gcn_layers << '\n'
     << "granularity=" << granularity << '\n'
     << "history_window=" << history_window << '\n'
     << "lr=" << fmt_double(lr) << '\n'
     << "max_epochs=" << max_epochs << '\n'
     << "min_body_support=" << min_body_support << '\n'
     << "mu=" << fmt_double(mu) << '\n'
     << "num_walks=" << num_walks << '\n'
     << "out_dir=" << out_dir << '\n'
     << "patience=" << patience << '\n'
     << "rules_path=" << rules_path << '\n'
     << "seed=" << seed << '\n'
     << "temperature=" << fmt_double(temperature) << '\n'
     << "variant=" << variant << '\n'
     << "weight_decay=" << fmt_double(weight_decay) << '\n';
  return os.str();
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "alpha") alpha = parse_double(key, value);
  else if (key == "cap") cap = parse_int(key, value);
  else if (key == "data_dir") data_dir = value;
  else if (key == "dataset_preset") dataset_preset = value;
  else if (key == "decoder_channels") decoder_channels = parse_int(key, value);
  else if (key == "decoder_kernel") decoder_kernel = parse_int(key, value);
  else if (key == "dim") dim = parse_int(key, value);
  else if (key == "dropout") dropout = parse_double(key, value);
  else if (key == "exhaustive_threshold") exhaustive_threshold = parse_int(key, value);
  else if (key == "gat_layers") gat_layers = static_cast<int>(parse_int(key, value));
  else if (key == "gcn_layers") gcn_layers = static_cast<int>(parse_int(key, value));
  else if (key == "granularity") granularity = parse_int(key, value);
  else if (key == "history_window") history_window = static_cast<int>(parse_int(key, value));
  else if (key == "lr") lr = parse_double(key, value);
  else if (key == "max_epochs") max_epochs = static_cast<int>(parse_int(key, value));
  else if (key == "min_body_support") min_body_support = parse_int(key, value);
  else if (key == "mu") mu = parse_double(key, value);
  else if (key == "num_walks") num_walks = parse_int(key, value);
  else if (key == "out_dir") out_dir = value;
  else if (key == "patience") patience = static_cast<int>(parse_int(key, value));
  else if (key == "rules_path") rules_path = value;
  else if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "temperature") temperature = parse_double(key, value);
  else if (key == "variant") variant = value;
  else if (key == "weight_decay") weight_decay = parse_double(key, value);
  else throw ConfigError("config: unknown key '" + key + "'");
}

RunConfig RunConfig::from_kv(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config: malformed line '" + line + "'");
    cfg.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return cfg;
}

void RunConfig::apply_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config: malformed line '" + line + "'");
    set(line.substr(0, eq), line.substr(eq + 1));
  }
}

void RunConfig::apply_env() {
  if (const char* dir = std::getenv("DUALTKG_DATA_DIR"); dir && *dir) data_dir = dir;
  if (const char* sd = std::getenv("DUALTKG_SEED"); sd && *sd) set("seed", sd);
}

void RunConfig::apply_preset(const std::string& name) {
  dataset_preset = name;
  if (name == "icews14s") {
    cap = 10; mu = 0.2; temperature = 0.3; gat_layers = 3; granularity = 24;
  } else if (name == "icews18") {
    cap = 8; mu = 0.01; temperature = 0.03; gat_layers = 2; granularity = 24;
  } else if (name == "icews05-15") {
    cap = 10; mu = 0.15; temperature = 0.2; gat_layers = 2; granularity = 24;
  } else if (name == "gdelt") {
    cap = 8; mu = 0.3; temperature = 0.25; gat_layers = 2; granularity = 15;
  } else {
    throw ConfigError("config: unknown dataset preset '" + name + "'");
  }
}

ModelConfig RunConfig::model_config() const {
  ModelConfig mc;
  mc.dim = dim;
  mc.gcn_layers = gcn_layers;
  mc.history_window = history_window;
  mc.invariance_layers = gat_layers;
  mc.dynamics_layers = gat_layers;
  mc.decoder_channels = decoder_channels;
  mc.decoder_kernel = decoder_kernel;
  mc.dropout = dropout;
  mc.alpha = alpha;
  mc.mu = mu;
  mc.temperature = temperature;
  mc.variant = VariantFlags::from_tag(variant);
  return mc;
}

MiningConfig RunConfig::mining_config() const {
  return MiningConfig{num_walks, min_body_support, exhaustive_threshold};
}

std::uint64_t file_checksum(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checksum: cannot open " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[65536];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    const std::streamsize n = is.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!is) break;
  }
  return h;
}

std::uint64_t dataset_checksum(const std::string& data_dir) {
  namespace fs = std::filesystem;
  std::uint64_t h = 1469598103934665603ULL;
  for (const char* name :
       {"train.txt", "valid.txt", "test.txt", "entity2id.txt", "relation2id.txt"}) {
    const std::uint64_t part = file_checksum((fs::path(data_dir) / name).string());
    h ^= part + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return h;
}

}  // namespace dualtkg
