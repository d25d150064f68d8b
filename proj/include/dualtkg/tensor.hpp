#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "dualtkg/errors.hpp"
#include "dualtkg/rng.hpp"

// Dense 64-bit tensors with tape-based reverse-mode differentiation.
// Ops record onto the thread's active Tape (if any input requires a
// gradient); without an active tape everything runs in plain inference
// mode. Tensors are immutable once created.

namespace dualtkg {

using i64 = std::int64_t;
using Shape = std::vector<i64>;

i64 shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until backward touches it
  bool requires_grad = false;
  Tape* producer = nullptr;

  i64 numel() const { return static_cast<i64>(data.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad = false);
  static Tensor normal(Shape shape, double mean, double stddev, Rng& rng, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int rank() const;
  i64 dim(int axis) const;
  i64 numel() const;
  const double* data() const;
  double* mutable_data();  // init-time only; never call on tensors already used by ops
  double item() const;
  double at(std::initializer_list<i64> idx) const;

  bool requires_grad() const;
  bool has_grad() const;
  const std::vector<double>& grad() const;  // throws if absent
  void zero_grad();

  Tensor detach() const;  // shares data, drops grad tracking

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }
  static Tensor wrap(std::shared_ptr<detail::TensorImpl> impl) { return Tensor(std::move(impl)); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Ordered record of executed operations; one backward pass per tape.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // RAII activation on the current thread. Scopes do not nest.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;
  };

  static Tape* current();

  void record(std::vector<std::shared_ptr<detail::TensorImpl>> parents,
              std::shared_ptr<detail::TensorImpl> output,
              std::function<void(detail::TensorImpl&)> backward);

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  friend void backward(const Tensor& loss);

 private:
  struct Node {
    std::vector<std::shared_ptr<detail::TensorImpl>> parents;
    std::shared_ptr<detail::TensorImpl> output;
    std::function<void(detail::TensorImpl&)> fn;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Accumulates gradients for every requires_grad tensor reachable from `loss`.
void backward(const Tensor& loss);

// Global forward-pass NaN/Inf validation (on by default).
void set_finite_checks(bool on);
bool finite_checks();

// ---- elementwise arithmetic (numpy-style broadcasting) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor mul(const Tensor& a, double b);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return mul(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]x[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k]x[n,k]^T -> [m,n]
Tensor transpose(const Tensor& a);                   // 2-d

// ---- shape ----
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor broadcast_to(const Tensor& a, const Shape& shape);
Tensor gather_rows(const Tensor& a, const std::vector<i64>& ids);

// ---- reductions ----
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor sum_axis(const Tensor& a, int axis, bool keepdim);

// ---- pointwise nonlinearities ----
enum class Act { RReluEval, Tanh, Gelu, Sigmoid, Relu };
Act act_from_name(const std::string& name);  // throws ConfigError on unknown tag
Tensor activate(Act tag, const Tensor& x);
Tensor relu(const Tensor& x);
Tensor rrelu_eval(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp_op(const Tensor& x);
Tensor log_op(const Tensor& x);
Tensor cos_op(const Tensor& x);
Tensor sqrt_op(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);

// Negative-side slope used by the deterministic RReLU evaluation form,
// the mid-point of the conventional [1/8, 1/3] slope range.
constexpr double kRReluEvalSlope = (1.0 / 8.0 + 1.0 / 3.0) / 2.0;

// ---- structured ops ----
Tensor softmax(const Tensor& x, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
Tensor geglu(const Tensor& x, const Tensor& w_value, const Tensor& w_gate);
// kernels [out,cin,k] with odd k; same padding (pass -1 to derive (k-1)/2)
Tensor conv1d(const Tensor& x, const Tensor& kernels, const Tensor& bias, i64 padding = -1);
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);
Tensor cross_entropy(const Tensor& logits, const std::vector<i64>& targets);

// ---- segment ops over row blocks ----
// Maps each segment to an ordered list of row indices.
struct SegmentCsr {
  std::vector<i64> offsets;  // size segments+1
  std::vector<i64> indices;
  i64 segments() const { return static_cast<i64>(offsets.size()) - 1; }
  i64 total() const { return static_cast<i64>(indices.size()); }
  static SegmentCsr group(const std::vector<i64>& segment_of, i64 segments);
};

Tensor segment_sum(const Tensor& rows, const SegmentCsr& csr);
Tensor segment_mean(const Tensor& rows, const SegmentCsr& csr);
// Per-segment max of a column vector; plain values, not differentiated.
std::vector<double> segment_max_values(const Tensor& scores, const SegmentCsr& csr);

}  // namespace dualtkg
