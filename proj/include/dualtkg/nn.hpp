#pragma once

#include <string>

#include "dualtkg/params.hpp"
#include "dualtkg/tensor.hpp"

namespace dualtkg {

constexpr double kLayerNormEps = 1e-5;

// Row-wise GRU: every row of the hidden matrix is an independent sequence
// element, all sharing one set of gate weights.
struct GruCell {
  Tensor input_update, hidden_update, bias_update;
  Tensor input_reset, hidden_reset, bias_reset;
  Tensor input_cand, hidden_cand, bias_cand;

  static GruCell create(const std::string& prefix, i64 dim, ParamRegistry& reg, Rng& rng);
  Tensor step(const Tensor& hidden, const Tensor& input) const;
};

// out_proj * Drop(GEGLU(LN(x))) with learnable LN affine.
struct GatedMlp {
  Tensor ln_gain, ln_bias;
  Tensor value_proj, gate_proj;  // [in, hidden]
  Tensor out_proj;               // [hidden, out]
  double dropout_rate = 0.0;

  static GatedMlp create(const std::string& prefix, i64 in, i64 hidden, i64 out, double dropout,
                         ParamRegistry& reg, Rng& rng);
  Tensor operator()(const Tensor& x, bool training, Rng& rng) const;
};

// Stacks two d-vectors per row into a 2xd map, convolves, projects back to
// an embedding-sized feature.
struct ConvTransE {
  Tensor kernels;    // [channels, 2, k]
  Tensor conv_bias;  // [channels]
  Tensor proj;       // [channels*d, d]
  Tensor proj_bias;  // [d]
  double dropout_rate = 0.0;

  static ConvTransE create(const std::string& prefix, i64 dim, i64 channels, i64 kernel_width,
                           double dropout, ParamRegistry& reg, Rng& rng);
  // first_rows, second_rows: [B, d] -> features [B, d]
  Tensor features(const Tensor& first_rows, const Tensor& second_rows, bool training,
                  Rng& rng) const;
};

// Stack two row matrices into [B, 2, d].
Tensor stack_pair(const Tensor& a, const Tensor& b);

// Rows scaled to unit L2 norm (eps-guarded).
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);

}  // namespace dualtkg
