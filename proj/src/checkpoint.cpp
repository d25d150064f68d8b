#include "dualtkg/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

namespace dualtkg {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian; big-endian hosts are unsupported");

namespace {

constexpr char kMagic[8] = {'D', 'T', 'K', 'G', 'C', 'K', '0', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_string(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_doubles(std::ostream& os, const std::vector<double>& v) {
  put_u64(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw DataError("checkpoint: truncated file");
  return v;
}

std::string get_string(std::istream& is) {
  const auto n = get_u64(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw DataError("checkpoint: truncated string");
  return s;
}

std::vector<double> get_doubles(std::istream& is) {
  const auto n = get_u64(is);
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw DataError("checkpoint: truncated payload");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamRegistry& params, const Adam* optimizer,
                     const std::string& config_blob) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("checkpoint: cannot open for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  put_string(os, config_blob);
  put_u64(os, params.size());
  for (const auto& [name, t] : params.entries()) {
    put_string(os, name);
    put_u64(os, t.shape().size());
    for (i64 d : t.shape()) put_u64(os, static_cast<std::uint64_t>(d));
    put_doubles(os, t.impl()->data);
  }
  put_u64(os, optimizer ? 1 : 0);
  if (optimizer) {
    const auto& st = optimizer->states();
    put_u64(os, st.size());
    for (const auto& s : st) {
      put_u64(os, static_cast<std::uint64_t>(s.step));
      put_doubles(os, s.m);
      put_doubles(os, s.v);
    }
  }
  if (!os) throw DataError("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::string(magic, 8) != std::string(kMagic, 8))
    throw DataError("checkpoint: bad magic in " + path);
  Checkpoint ckpt;
  ckpt.config_blob = get_string(is);
  const auto count = get_u64(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = get_string(is);
    const auto rank = get_u64(is);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<i64>(get_u64(is));
    auto values = get_doubles(is);
    if (static_cast<i64>(values.size()) != shape_numel(shape))
      throw DataError("checkpoint: payload size mismatch for " + name);
    ckpt.order.push_back(name);
    ckpt.params.emplace(std::move(name), Tensor::from(std::move(shape), std::move(values)));
  }
  if (get_u64(is) == 1) {
    const auto n = get_u64(is);
    std::vector<AdamState> states(n);
    for (auto& s : states) {
      s.step = static_cast<i64>(get_u64(is));
      s.m = get_doubles(is);
      s.v = get_doubles(is);
    }
    ckpt.adam_states = std::move(states);
  }
  return ckpt;
}

void restore_params(const ParamRegistry& params, const Checkpoint& ckpt) {
  for (const auto& [name, t] : params.entries()) {
    auto it = ckpt.params.find(name);
    if (it == ckpt.params.end()) throw ShapeError("checkpoint: missing parameter " + name);
    if (it->second.shape() != t.shape())
      throw ShapeError("checkpoint: shape mismatch for " + name + ": have " +
                       shape_str(it->second.shape()) + ", model expects " + shape_str(t.shape()));
    t.impl()->data = it->second.impl()->data;
    t.impl()->grad.clear();
  }
}

}  // namespace dualtkg
