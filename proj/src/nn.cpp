#include "dualtkg/nn.hpp"

namespace dualtkg {

GruCell GruCell::create(const std::string& prefix, i64 dim, ParamRegistry& reg, Rng& rng) {
  GruCell c;
  auto mat = [&](const char* name) { return reg.add(prefix + "." + name, glorot({dim, dim}, rng)); };
  auto vec = [&](const char* name) { return reg.add(prefix + "." + name, Tensor::zeros({dim})); };
  c.input_update = mat("input_update");
  c.hidden_update = mat("hidden_update");
  c.bias_update = vec("bias_update");
  c.input_reset = mat("input_reset");
  c.hidden_reset = mat("hidden_reset");
  c.bias_reset = vec("bias_reset");
  c.input_cand = mat("input_cand");
  c.hidden_cand = mat("hidden_cand");
  c.bias_cand = vec("bias_cand");
  return c;
}

Tensor GruCell::step(const Tensor& hidden, const Tensor& input) const {
  Tensor update = sigmoid(add(add(matmul(input, input_update), matmul(hidden, hidden_update)),
                              bias_update));
  Tensor reset =
      sigmoid(add(add(matmul(input, input_reset), matmul(hidden, hidden_reset)), bias_reset));
  Tensor cand = tanh_op(
      add(add(matmul(input, input_cand), matmul(mul(reset, hidden), hidden_cand)), bias_cand));
  // h' = (1 - z) .* h + z .* cand
  return add(mul(sub(Tensor::full({1}, 1.0), update), hidden), mul(update, cand));
}

GatedMlp GatedMlp::create(const std::string& prefix, i64 in, i64 hidden, i64 out, double dropout,
                          ParamRegistry& reg, Rng& rng) {
  GatedMlp m;
  m.ln_gain = reg.add(prefix + ".ln_gain", Tensor::full({in}, 1.0));
  m.ln_bias = reg.add(prefix + ".ln_bias", Tensor::zeros({in}));
  m.value_proj = reg.add(prefix + ".value_proj", glorot({in, hidden}, rng));
  m.gate_proj = reg.add(prefix + ".gate_proj", glorot({in, hidden}, rng));
  m.out_proj = reg.add(prefix + ".out_proj", glorot({hidden, out}, rng));
  m.dropout_rate = dropout;
  return m;
}

Tensor GatedMlp::operator()(const Tensor& x, bool training, Rng& rng) const {
  Tensor h = geglu(layer_norm(x, ln_gain, ln_bias, kLayerNormEps), value_proj, gate_proj);
  return matmul(dropout(h, dropout_rate, training, rng), out_proj);
}

ConvTransE ConvTransE::create(const std::string& prefix, i64 dim, i64 channels, i64 kernel_width,
                              double dropout, ParamRegistry& reg, Rng& rng) {
  ConvTransE d;
  d.kernels = reg.add(prefix + ".kernels", glorot({channels, 2, kernel_width}, rng));
  d.conv_bias = reg.add(prefix + ".conv_bias", Tensor::zeros({channels}));
  d.proj = reg.add(prefix + ".proj", glorot({channels * dim, dim}, rng));
  d.proj_bias = reg.add(prefix + ".proj_bias", Tensor::zeros({dim}));
  d.dropout_rate = dropout;
  return d;
}

Tensor ConvTransE::features(const Tensor& first_rows, const Tensor& second_rows, bool training,
                            Rng& rng) const {
  const i64 batch = first_rows.dim(0);
  const i64 dim = first_rows.dim(1);
  Tensor fmap = relu(conv1d(stack_pair(first_rows, second_rows), kernels, conv_bias));
  fmap = dropout(fmap, dropout_rate, training, rng);
  Tensor flat = reshape(fmap, {batch, kernels.dim(0) * dim});
  return relu(add(matmul(flat, proj), proj_bias));
}

Tensor stack_pair(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || a.shape() != b.shape()) throw ShapeError("stack_pair: expects equal [B,d]");
  const i64 batch = a.dim(0), dim = a.dim(1);
  return concat({reshape(a, {batch, 1, dim}), reshape(b, {batch, 1, dim})}, 1);
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  Tensor norms = sqrt_op(add(sum_axis(mul(x, x), 1, true), eps));
  return div(x, norms);
}

}  // namespace dualtkg
