#include "dualtkg/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>

#include "dualtkg/kernels.hpp"

namespace dualtkg {

using detail::TensorImpl;

i64 shape_numel(const Shape& s) {
  i64 n = 1;
  for (i64 d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

namespace {

thread_local Tape* t_active_tape = nullptr;
std::atomic<bool> g_finite_checks{true};

std::shared_ptr<TensorImpl> make_impl(Shape shape, std::vector<double> data) {
  auto impl = std::make_shared<TensorImpl>();
  if (shape_numel(shape) != static_cast<i64>(data.size()))
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not match buffer size " +
                     std::to_string(data.size()));
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return impl;
}

void check_finite(const char* op, const TensorImpl& t) {
  for (double v : t.data) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
  }
}

using Parents = std::vector<std::shared_ptr<TensorImpl>>;
using BackFn = std::function<void(TensorImpl&)>;

Tensor finish(const char* op, std::shared_ptr<TensorImpl> out, Parents parents, BackFn fn) {
  if (finite_checks()) check_finite(op, *out);
  Tape* tape = Tape::current();
  if (tape) {
    bool need = false;
    for (const auto& p : parents)
      if (p && p->requires_grad) {
        need = true;
        break;
      }
    if (need) {
      out->requires_grad = true;
      out->producer = tape;
      tape->record(std::move(parents), out, std::move(fn));
    }
  }
  return Tensor::wrap(std::move(out));
}

std::vector<i64> row_major_strides(const Shape& s) {
  std::vector<i64> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

// Broadcast plan for binary elementwise ops, numpy alignment rules.
struct Bcast {
  Shape out;
  std::vector<i64> ostrides, sa, sb;
  i64 n = 0, an = 0, bn = 0;
  bool same = false, suffix_a = false, suffix_b = false;
};

Bcast plan_bcast(const char* op, const Shape& a, const Shape& b) {
  Bcast p;
  const int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
  const int r = std::max(ra, rb);
  p.out.resize(r);
  for (int i = 0; i < r; ++i) {
    const i64 ad = (i < r - ra) ? 1 : a[i - (r - ra)];
    const i64 bd = (i < r - rb) ? 1 : b[i - (r - rb)];
    if (ad != bd && ad != 1 && bd != 1)
      throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
    p.out[i] = std::max(ad, bd);
  }
  p.n = shape_numel(p.out);
  p.an = shape_numel(a);
  p.bn = shape_numel(b);
  p.same = (a == b);
  auto suffix = [&](const Shape& s, int rs) {
    for (int i = 0; i < rs; ++i)
      if (s[i] != p.out[r - rs + i]) return false;
    return true;
  };
  p.suffix_a = suffix(a, ra);
  p.suffix_b = suffix(b, rb);
  if (p.same || (p.suffix_a && p.suffix_b)) return p;
  p.ostrides = row_major_strides(p.out);
  const auto sta = row_major_strides(a);
  const auto stb = row_major_strides(b);
  p.sa.assign(r, 0);
  p.sb.assign(r, 0);
  for (int i = 0; i < r; ++i) {
    if (i >= r - ra && a[i - (r - ra)] != 1) p.sa[i] = sta[i - (r - ra)];
    if (i >= r - rb && b[i - (r - rb)] != 1) p.sb[i] = stb[i - (r - rb)];
  }
  return p;
}

inline i64 bcast_off_a(const Bcast& p, i64 flat) {
  i64 rem = flat, off = 0;
  for (std::size_t d = 0; d < p.ostrides.size(); ++d) {
    const i64 idx = rem / p.ostrides[d];
    rem %= p.ostrides[d];
    off += idx * p.sa[d];
  }
  return off;
}

inline i64 bcast_off_b(const Bcast& p, i64 flat) {
  i64 rem = flat, off = 0;
  for (std::size_t d = 0; d < p.ostrides.size(); ++d) {
    const i64 idx = rem / p.ostrides[d];
    rem %= p.ostrides[d];
    off += idx * p.sb[d];
  }
  return off;
}

// Walks all output elements, handing (flat, a_off, b_off) to fn.
template <typename F>
void bcast_walk(const Bcast& p, F&& fn) {
  if (p.same) {
    for (i64 i = 0; i < p.n; ++i) fn(i, i, i);
  } else if (p.suffix_a && p.suffix_b) {
    for (i64 i = 0; i < p.n; ++i) fn(i, i % p.an, i % p.bn);
  } else if (p.suffix_a) {
    for (i64 i = 0; i < p.n; ++i) fn(i, i % p.an, bcast_off_b(p, i));
  } else if (p.suffix_b) {
    for (i64 i = 0; i < p.n; ++i) fn(i, bcast_off_a(p, i), i % p.bn);
  } else {
    for (i64 i = 0; i < p.n; ++i) fn(i, bcast_off_a(p, i), bcast_off_b(p, i));
  }
}

enum class BinTag { Add, Sub, Mul, Div };

const char* bin_name(BinTag t) {
  switch (t) {
    case BinTag::Add: return "add";
    case BinTag::Sub: return "sub";
    case BinTag::Mul: return "mul";
    case BinTag::Div: return "div";
  }
  return "?";
}

}  // namespace

// ---------- Tensor ----------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> d(static_cast<std::size_t>(shape_numel(shape)), 0.0);
  auto impl = make_impl(std::move(shape), std::move(d));
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> d(static_cast<std::size_t>(shape_numel(shape)), value);
  auto impl = make_impl(std::move(shape), std::move(d));
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return full({1}, value, requires_grad); }

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  auto impl = make_impl(std::move(shape), std::move(values));
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad) {
  std::vector<double> d(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : d) v = rng.uniform(lo, hi);
  return from(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::normal(Shape shape, double mean, double stddev, Rng& rng, bool requires_grad) {
  std::vector<double> d(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : d) v = rng.normal(mean, stddev);
  return from(std::move(shape), std::move(d), requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }
int Tensor::rank() const { return static_cast<int>(impl_->shape.size()); }
i64 Tensor::dim(int axis) const { return impl_->shape.at(static_cast<std::size_t>(axis)); }
i64 Tensor::numel() const { return impl_->numel(); }
const double* Tensor::data() const { return impl_->data.data(); }
double* Tensor::mutable_data() { return impl_->data.data(); }

double Tensor::item() const {
  if (impl_->numel() != 1) throw ShapeError("item: tensor is not a scalar");
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<i64> idx) const {
  const auto st = row_major_strides(impl_->shape);
  if (idx.size() != st.size()) throw ShapeError("at: wrong index rank");
  i64 off = 0;
  std::size_t d = 0;
  for (i64 i : idx) off += i * st[d++];
  return impl_->data.at(static_cast<std::size_t>(off));
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw Error("grad: no gradient present");
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.clear();
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

// ---------- Tape ----------

Tape* Tape::current() { return t_active_tape; }

Tape::Scope::Scope(Tape& tape) {
  if (t_active_tape) throw Error("tape: scopes do not nest");
  if (tape.consumed_) throw Error("tape: cannot reactivate a consumed tape");
  t_active_tape = &tape;
}

Tape::Scope::~Scope() { t_active_tape = nullptr; }

void Tape::record(std::vector<std::shared_ptr<TensorImpl>> parents,
                  std::shared_ptr<TensorImpl> output, std::function<void(TensorImpl&)> backward) {
  if (consumed_) throw Error("tape: recording onto a consumed tape");
  nodes_.push_back(Node{std::move(parents), std::move(output), std::move(backward)});
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ShapeError("backward: undefined loss");
  auto impl = loss.impl();
  if (impl->numel() != 1) throw ShapeError("backward: loss must be a scalar");
  Tape* tape = impl->producer;
  if (tape == nullptr) throw Error("backward: loss was not produced on an active tape");
  if (tape->consumed_) throw Error("backward: tape already consumed; run a new forward pass");
  tape->consumed_ = true;
  impl->ensure_grad();
  impl->grad[0] = 1.0;
  for (auto it = tape->nodes_.rbegin(); it != tape->nodes_.rend(); ++it) {
    if (!it->output->grad.empty()) it->fn(*it->output);
  }
}

void set_finite_checks(bool on) { g_finite_checks.store(on, std::memory_order_relaxed); }
bool finite_checks() { return g_finite_checks.load(std::memory_order_relaxed); }

// ---------- elementwise ----------

namespace {

Tensor binary_op(BinTag tag, const Tensor& a, const Tensor& b) {
  const auto plan = plan_bcast(bin_name(tag), a.shape(), b.shape());
  std::vector<double> out(static_cast<std::size_t>(plan.n));
  const double* pa = a.data();
  const double* pb = b.data();
  switch (tag) {
    case BinTag::Add:
      bcast_walk(plan, [&](i64 i, i64 ai, i64 bi) { out[i] = pa[ai] + pb[bi]; });
      break;
    case BinTag::Sub:
      bcast_walk(plan, [&](i64 i, i64 ai, i64 bi) { out[i] = pa[ai] - pb[bi]; });
      break;
    case BinTag::Mul:
      bcast_walk(plan, [&](i64 i, i64 ai, i64 bi) { out[i] = pa[ai] * pb[bi]; });
      break;
    case BinTag::Div:
      bcast_walk(plan, [&](i64 i, i64 ai, i64 bi) {
        if (pb[bi] == 0.0) throw NumericError("div: division by zero");
        out[i] = pa[ai] / pb[bi];
      });
      break;
  }
  auto impl = make_impl(plan.out, std::move(out));
  auto ai = a.impl();
  auto bi = b.impl();
  return finish(bin_name(tag), impl, {ai, bi}, [tag, plan, ai, bi](TensorImpl& o) {
    const double* g = o.grad.data();
    const double* pa = ai->data.data();
    const double* pb = bi->data.data();
    const bool need_a = ai->requires_grad;
    const bool need_b = bi->requires_grad;
    if (need_a) ai->ensure_grad();
    if (need_b) bi->ensure_grad();
    double* ga = need_a ? ai->grad.data() : nullptr;
    double* gb = need_b ? bi->grad.data() : nullptr;
    switch (tag) {
      case BinTag::Add:
        bcast_walk(plan, [&](i64 i, i64 aoff, i64 boff) {
          if (ga) ga[aoff] += g[i];
          if (gb) gb[boff] += g[i];
        });
        break;
      case BinTag::Sub:
        bcast_walk(plan, [&](i64 i, i64 aoff, i64 boff) {
          if (ga) ga[aoff] += g[i];
          if (gb) gb[boff] -= g[i];
        });
        break;
      case BinTag::Mul:
        bcast_walk(plan, [&](i64 i, i64 aoff, i64 boff) {
          if (ga) ga[aoff] += g[i] * pb[boff];
          if (gb) gb[boff] += g[i] * pa[aoff];
        });
        break;
      case BinTag::Div:
        bcast_walk(plan, [&](i64 i, i64 aoff, i64 boff) {
          const double inv = 1.0 / pb[boff];
          if (ga) ga[aoff] += g[i] * inv;
          if (gb) gb[boff] -= g[i] * pa[aoff] * inv * inv;
        });
        break;
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(BinTag::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(BinTag::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(BinTag::Mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op(BinTag::Div, a, b); }

Tensor add(const Tensor& a, double s) {
  std::vector<double> out(a.impl()->data);
  for (auto& v : out) v += s;
  auto impl = make_impl(a.shape(), std::move(out));
  auto ai = a.impl();
  return finish("add_scalar", impl, {ai}, [ai](TensorImpl& o) {
    ai->ensure_grad();
    for (i64 i = 0; i < o.numel(); ++i) ai->grad[i] += o.grad[i];
  });
}

Tensor mul(const Tensor& a, double s) {
  std::vector<double> out(a.impl()->data);
  for (auto& v : out) v *= s;
  auto impl = make_impl(a.shape(), std::move(out));
  auto ai = a.impl();
  return finish("mul_scalar", impl, {ai}, [ai, s](TensorImpl& o) {
    ai->ensure_grad();
    for (i64 i = 0; i < o.numel(); ++i) ai->grad[i] += s * o.grad[i];
  });
}

Tensor neg(const Tensor& a) { return mul(a, -1.0); }

// ---------- linear algebra ----------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: expects rank-2 operands");
  const i64 m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  std::vector<double> out(static_cast<std::size_t>(m * n));
  kernels::matmul(a.data(), b.data(), out.data(), m, k, n);
  auto impl = make_impl({m, n}, std::move(out));
  auto ai = a.impl();
  auto bi = b.impl();
  return finish("matmul", impl, {ai, bi}, [ai, bi, m, k, n](TensorImpl& o) {
    if (ai->requires_grad) {
      ai->ensure_grad();
      kernels::matmul_nt_acc(o.grad.data(), bi->data.data(), ai->grad.data(), m, n, k);
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      kernels::matmul_tn_acc(ai->data.data(), o.grad.data(), bi->grad.data(), m, k, n);
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul_nt: expects rank-2 operands");
  const i64 m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k)
    throw ShapeError("matmul_nt: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()) + "^T");
  std::vector<double> out(static_cast<std::size_t>(m * n));
  kernels::matmul_nt(a.data(), b.data(), out.data(), m, k, n);
  auto impl = make_impl({m, n}, std::move(out));
  auto ai = a.impl();
  auto bi = b.impl();
  return finish("matmul_nt", impl, {ai, bi}, [ai, bi, m, k, n](TensorImpl& o) {
    if (ai->requires_grad) {
      // da[m,k] += dc[m,n] * b[n,k]
      ai->ensure_grad();
      std::vector<double> tmp(static_cast<std::size_t>(m * k));
      kernels::matmul(o.grad.data(), bi->data.data(), tmp.data(), m, n, k);
      for (i64 i = 0; i < m * k; ++i) ai->grad[i] += tmp[i];
    }
    if (bi->requires_grad) {
      // db[n,k] += dc^T[n,m] * a[m,k]
      bi->ensure_grad();
      kernels::matmul_tn_acc(o.grad.data(), ai->data.data(), bi->grad.data(), m, n, k);
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expects rank-2");
  const i64 m = a.dim(0), n = a.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m * n));
  const double* p = a.data();
  for (i64 i = 0; i < m; ++i)
    for (i64 j = 0; j < n; ++j) out[j * m + i] = p[i * n + j];
  auto impl = make_impl({n, m}, std::move(out));
  auto ai = a.impl();
  return finish("transpose", impl, {ai}, [ai, m, n](TensorImpl& o) {
    ai->ensure_grad();
    for (i64 j = 0; j < n; ++j)
      for (i64 i = 0; i < m; ++i) ai->grad[i * n + j] += o.grad[j * m + i];
  });
}

// ---------- shape ----------

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: element count mismatch " + shape_str(a.shape()) + " -> " +
                     shape_str(shape));
  auto impl = make_impl(std::move(shape), a.impl()->data);
  auto ai = a.impl();
  return finish("reshape", impl, {ai}, [ai](TensorImpl& o) {
    ai->ensure_grad();
    for (i64 i = 0; i < o.numel(); ++i) ai->grad[i] += o.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const int r = parts[0].rank();
  if (axis < 0 || axis >= r) throw ShapeError("concat: axis out of range");
  Shape out = parts[0].shape();
  i64 axis_total = 0;
  for (const auto& p : parts) {
    if (p.rank() != r) throw ShapeError("concat: rank mismatch");
    for (int d = 0; d < r; ++d)
      if (d != axis && p.dim(d) != out[static_cast<std::size_t>(d)])
        throw ShapeError("concat: shape mismatch at axis " + std::to_string(d));
    axis_total += p.dim(axis);
  }
  out[static_cast<std::size_t>(axis)] = axis_total;
  i64 outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= out[static_cast<std::size_t>(d)];
  for (int d = axis + 1; d < r; ++d) inner *= out[static_cast<std::size_t>(d)];

  std::vector<double> data(static_cast<std::size_t>(shape_numel(out)));
  const i64 out_row = axis_total * inner;
  i64 col_off = 0;
  for (const auto& p : parts) {
    const i64 w = p.dim(axis) * inner;
    const double* src = p.data();
    for (i64 ou = 0; ou < outer; ++ou)
      std::memcpy(data.data() + ou * out_row + col_off, src + ou * w, sizeof(double) * w);
    col_off += w;
  }
  auto impl = make_impl(out, std::move(data));
  Parents parents;
  std::vector<i64> widths;
  for (const auto& p : parts) {
    parents.push_back(p.impl());
    widths.push_back(p.dim(axis) * inner);
  }
  auto ps = parents;
  return finish("concat", impl, std::move(parents), [ps, widths, outer, out_row](TensorImpl& o) {
    i64 off = 0;
    for (std::size_t pi = 0; pi < ps.size(); ++pi) {
      const i64 w = widths[pi];
      if (ps[pi]->requires_grad) {
        ps[pi]->ensure_grad();
        for (i64 ou = 0; ou < outer; ++ou) {
          const double* g = o.grad.data() + ou * out_row + off;
          double* dst = ps[pi]->grad.data() + ou * w;
          for (i64 j = 0; j < w; ++j) dst[j] += g[j];
        }
      }
      off += w;
    }
  });
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  const auto plan = plan_bcast("broadcast_to", a.shape(), shape);
  if (plan.out != shape)
    throw ShapeError("broadcast_to: cannot broadcast " + shape_str(a.shape()) + " to " +
                     shape_str(shape));
  std::vector<double> out(static_cast<std::size_t>(plan.n));
  const double* pa = a.data();
  bcast_walk(plan, [&](i64 i, i64 ai, i64) { out[i] = pa[ai]; });
  auto impl = make_impl(shape, std::move(out));
  auto ai = a.impl();
  return finish("broadcast_to", impl, {ai}, [ai, plan](TensorImpl& o) {
    ai->ensure_grad();
    double* ga = ai->grad.data();
    const double* g = o.grad.data();
    bcast_walk(plan, [&](i64 i, i64 aoff, i64) { ga[aoff] += g[i]; });
  });
}

Tensor gather_rows(const Tensor& a, const std::vector<i64>& ids) {
  if (a.rank() < 1) throw ShapeError("gather_rows: rank-0 input");
  const i64 rows = a.dim(0);
  const i64 slice = a.numel() / std::max<i64>(rows, 1);
  for (i64 id : ids)
    if (id < 0 || id >= rows) throw DataError("gather_rows: index " + std::to_string(id) + " out of range");
  Shape out = a.shape();
  out[0] = static_cast<i64>(ids.size());
  std::vector<double> data(static_cast<std::size_t>(shape_numel(out)));
  kernels::gather_rows(a.data(), ids.data(), data.data(), static_cast<i64>(ids.size()), slice);
  auto impl = make_impl(std::move(out), std::move(data));
  auto ai = a.impl();
  return finish("gather_rows", impl, {ai}, [ai, ids, slice](TensorImpl& o) {
    ai->ensure_grad();
    kernels::scatter_add_rows(o.grad.data(), ids.data(), ai->grad.data(),
                              static_cast<i64>(ids.size()), slice);
  });
}

// ---------- reductions ----------

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  const double* p = a.data();
  for (i64 i = 0; i < a.numel(); ++i) s += p[i];
  auto impl = make_impl({1}, {s});
  auto ai = a.impl();
  return finish("sum_all", impl, {ai}, [ai](TensorImpl& o) {
    ai->ensure_grad();
    const double g = o.grad[0];
    for (auto& v : ai->grad) v += g;
  });
}

Tensor mean_all(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean_all: empty tensor");
  return mul(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum_axis(const Tensor& a, int axis, bool keepdim) {
  const int r = a.rank();
  if (axis < 0 || axis >= r) throw ShapeError("sum_axis: axis out of range");
  const i64 ax = a.dim(axis);
  i64 outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= a.dim(d);
  for (int d = axis + 1; d < r; ++d) inner *= a.dim(d);
  Shape out;
  for (int d = 0; d < r; ++d) {
    if (d == axis) {
      if (keepdim) out.push_back(1);
    } else {
      out.push_back(a.dim(d));
    }
  }
  if (out.empty()) out.push_back(1);
  std::vector<double> data(static_cast<std::size_t>(outer * inner), 0.0);
  const double* p = a.data();
  for (i64 ou = 0; ou < outer; ++ou)
    for (i64 k = 0; k < ax; ++k) {
      const double* src = p + (ou * ax + k) * inner;
      double* dst = data.data() + ou * inner;
      for (i64 in = 0; in < inner; ++in) dst[in] += src[in];
    }
  auto impl = make_impl(std::move(out), std::move(data));
  auto ai = a.impl();
  return finish("sum_axis", impl, {ai}, [ai, outer, ax, inner](TensorImpl& o) {
    ai->ensure_grad();
    for (i64 ou = 0; ou < outer; ++ou)
      for (i64 k = 0; k < ax; ++k) {
        const double* g = o.grad.data() + ou * inner;
        double* dst = ai->grad.data() + (ou * ax + k) * inner;
        for (i64 in = 0; in < inner; ++in) dst[in] += g[in];
      }
  });
}

// ---------- pointwise nonlinearities ----------

namespace {

Tensor unary_op(const char* name, const Tensor& a, double (*fwd)(double), double (*dfe)(double, double)) {
  std::vector<double> out(a.impl()->data.size());
  const double* p = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(p[i]);
  auto impl = make_impl(a.shape(), std::move(out));
  auto ai = a.impl();
  return finish(name, impl, {ai}, [ai, dfe](TensorImpl& o) {
    ai->ensure_grad();
    const double* x = ai->data.data();
    const double* y = o.data.data();
    const double* g = o.grad.data();
    double* ga = ai->grad.data();
    for (i64 i = 0; i < o.numel(); ++i) ga[i] += g[i] * dfe(x[i], y[i]);
  });
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x, +[](double v) { return v > 0.0 ? v : 0.0; },
      +[](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor rrelu_eval(const Tensor& x) {
  return unary_op(
      "rrelu_eval", x, +[](double v) { return v >= 0.0 ? v : kRReluEvalSlope * v; },
      +[](double v, double) { return v >= 0.0 ? 1.0 : kRReluEvalSlope; });
}

Tensor tanh_op(const Tensor& x) {
  return unary_op(
      "tanh", x, +[](double v) { return std::tanh(v); },
      +[](double, double y) { return 1.0 - y * y; });
}

Tensor gelu(const Tensor& x) {
  return unary_op(
      "gelu", x, +[](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      +[](double v, double) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x, +[](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      +[](double, double y) { return y * (1.0 - y); });
}

Tensor exp_op(const Tensor& x) {
  return unary_op(
      "exp", x, +[](double v) { return std::exp(v); }, +[](double, double y) { return y; });
}

Tensor log_op(const Tensor& x) {
  const double* p = x.data();
  for (i64 i = 0; i < x.numel(); ++i)
    if (p[i] <= 0.0) throw NumericError("log: non-positive input");
  return unary_op(
      "log", x, +[](double v) { return std::log(v); }, +[](double v, double) { return 1.0 / v; });
}

Tensor cos_op(const Tensor& x) {
  return unary_op(
      "cos", x, +[](double v) { return std::cos(v); },
      +[](double v, double) { return -std::sin(v); });
}

Tensor sqrt_op(const Tensor& x) {
  const double* p = x.data();
  for (i64 i = 0; i < x.numel(); ++i)
    if (p[i] < 0.0) throw NumericError("sqrt: negative input");
  return unary_op(
      "sqrt", x, +[](double v) { return std::sqrt(v); },
      +[](double, double y) { return 0.5 / y; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (lo > hi) throw ConfigError("clamp: lo > hi");
  std::vector<double> out(x.impl()->data.size());
  const double* p = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(p[i], lo), hi);
  auto impl = make_impl(x.shape(), std::move(out));
  auto ai = x.impl();
  return finish("clamp", impl, {ai}, [ai, lo, hi](TensorImpl& o) {
    ai->ensure_grad();
    const double* xv = ai->data.data();
    for (i64 i = 0; i < o.numel(); ++i)
      if (xv[i] > lo && xv[i] < hi) ai->grad[i] += o.grad[i];
  });
}

Act act_from_name(const std::string& name) {
  if (name == "rrelu-eval") return Act::RReluEval;
  if (name == "tanh") return Act::Tanh;
  if (name == "gelu") return Act::Gelu;
  if (name == "sigmoid") return Act::Sigmoid;
  if (name == "relu") return Act::Relu;
  throw ConfigError("unknown activation tag: " + name);
}

Tensor activate(Act tag, const Tensor& x) {
  switch (tag) {
    case Act::RReluEval: return rrelu_eval(x);
    case Act::Tanh: return tanh_op(x);
    case Act::Gelu: return gelu(x);
    case Act::Sigmoid: return sigmoid(x);
    case Act::Relu: return relu(x);
  }
  throw ConfigError("unknown activation tag");
}

// ---------- structured ops ----------

Tensor softmax(const Tensor& x, int axis) {
  const int r = x.rank();
  if (axis < 0 || axis >= r) throw ShapeError("softmax: axis out of range");
  const i64 ax = x.dim(axis);
  if (ax < 1) throw ShapeError("softmax: empty axis");
  i64 outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.dim(d);
  for (int d = axis + 1; d < r; ++d) inner *= x.dim(d);
  std::vector<double> out(x.impl()->data.size());
  const double* p = x.data();
  for (i64 ou = 0; ou < outer; ++ou)
    for (i64 in = 0; in < inner; ++in) {
      const i64 base = ou * ax * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (i64 k = 0; k < ax; ++k) mx = std::max(mx, p[base + k * inner]);
      double denom = 0.0;
      for (i64 k = 0; k < ax; ++k) {
        const double e = std::exp(p[base + k * inner] - mx);
        out[base + k * inner] = e;
        denom += e;
      }
      const double invd = 1.0 / denom;
      for (i64 k = 0; k < ax; ++k) out[base + k * inner] *= invd;
    }
  auto impl = make_impl(x.shape(), std::move(out));
  auto ai = x.impl();
  return finish("softmax", impl, {ai}, [ai, outer, ax, inner](TensorImpl& o) {
    ai->ensure_grad();
    const double* y = o.data.data();
    const double* g = o.grad.data();
    double* ga = ai->grad.data();
    for (i64 ou = 0; ou < outer; ++ou)
      for (i64 in = 0; in < inner; ++in) {
        const i64 base = ou * ax * inner + in;
        double dot = 0.0;
        for (i64 k = 0; k < ax; ++k) dot += g[base + k * inner] * y[base + k * inner];
        for (i64 k = 0; k < ax; ++k)
          ga[base + k * inner] += y[base + k * inner] * (g[base + k * inner] - dot);
      }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (eps <= 0.0) throw ConfigError("layer_norm: eps must be positive");
  const int r = x.rank();
  if (r < 1) throw ShapeError("layer_norm: rank-0 input");
  const i64 d = x.dim(r - 1);
  if (d < 1) throw ShapeError("layer_norm: last dimension < 1");
  if (gain.numel() != d || bias.numel() != d) throw ShapeError("layer_norm: affine shape mismatch");
  const i64 rows = x.numel() / d;
  std::vector<double> out(x.impl()->data.size());
  std::vector<double> mean(static_cast<std::size_t>(rows)), inv_std(static_cast<std::size_t>(rows));
  const double* p = x.data();
  const double* gw = gain.data();
  const double* bw = bias.data();
  for (i64 i = 0; i < rows; ++i) {
    const double* row = p + i * d;
    double mu = 0.0;
    for (i64 j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (i64 j = 0; j < d; ++j) {
      const double c = row[j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    mean[static_cast<std::size_t>(i)] = mu;
    inv_std[static_cast<std::size_t>(i)] = is;
    double* orow = out.data() + i * d;
    for (i64 j = 0; j < d; ++j) orow[j] = gw[j] * ((row[j] - mu) * is) + bw[j];
  }
  auto impl = make_impl(x.shape(), std::move(out));
  auto xi = x.impl();
  auto gi = gain.impl();
  auto bi = bias.impl();
  return finish("layer_norm", impl, {xi, gi, bi},
                [xi, gi, bi, rows, d, mean, inv_std](TensorImpl& o) {
                  const double* p = xi->data.data();
                  const double* gw = gi->data.data();
                  const double* g = o.grad.data();
                  if (xi->requires_grad) xi->ensure_grad();
                  if (gi->requires_grad) gi->ensure_grad();
                  if (bi->requires_grad) bi->ensure_grad();
                  for (i64 i = 0; i < rows; ++i) {
                    const double mu = mean[static_cast<std::size_t>(i)];
                    const double is = inv_std[static_cast<std::size_t>(i)];
                    const double* row = p + i * d;
                    const double* grow = g + i * d;
                    // dy w.r.t. normalized value
                    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                    for (i64 j = 0; j < d; ++j) {
                      const double xhat = (row[j] - mu) * is;
                      const double dxh = grow[j] * gw[j];
                      sum_dxhat += dxh;
                      sum_dxhat_xhat += dxh * xhat;
                      if (gi->requires_grad) gi->grad[j] += grow[j] * xhat;
                      if (bi->requires_grad) bi->grad[j] += grow[j];
                    }
                    if (xi->requires_grad) {
                      const double inv_d = 1.0 / static_cast<double>(d);
                      for (i64 j = 0; j < d; ++j) {
                        const double xhat = (row[j] - mu) * is;
                        const double dxh = grow[j] * gw[j];
                        xi->grad[i * d + j] +=
                            is * (dxh - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
                      }
                    }
                  }
                });
}

Tensor geglu(const Tensor& x, const Tensor& w_value, const Tensor& w_gate) {
  return mul(matmul(x, w_value), gelu(matmul(x, w_gate)));
}

Tensor conv1d(const Tensor& x, const Tensor& kernels, const Tensor& bias, i64 padding) {
  if (kernels.rank() != 3) throw ShapeError("conv1d: kernels must be [out,cin,k]");
  const bool batched = x.rank() == 3;
  if (!batched && x.rank() != 2) throw ShapeError("conv1d: input must be [cin,w] or [b,cin,w]");
  const i64 batch = batched ? x.dim(0) : 1;
  const i64 cin = batched ? x.dim(1) : x.dim(0);
  const i64 width = batched ? x.dim(2) : x.dim(1);
  const i64 cout = kernels.dim(0), kc = kernels.dim(1), ksize = kernels.dim(2);
  if (kc != cin) throw ShapeError("conv1d: kernel channel mismatch");
  if (ksize % 2 == 0) throw ShapeError("conv1d: even kernel width");
  if (padding < 0) padding = (ksize - 1) / 2;
  if (padding != (ksize - 1) / 2) throw ShapeError("conv1d: padding must be (k-1)/2");
  if (bias.defined() && bias.numel() != cout) throw ShapeError("conv1d: bias shape mismatch");

  std::vector<double> out(static_cast<std::size_t>(batch * cout * width));
  kernels::conv1d(x.data(), kernels.data(), bias.defined() ? bias.data() : nullptr, out.data(),
                  batch, cin, width, cout, ksize);
  Shape oshape = batched ? Shape{batch, cout, width} : Shape{cout, width};
  auto impl = make_impl(std::move(oshape), std::move(out));
  auto xi = x.impl();
  auto ki = kernels.impl();
  auto bimpl = bias.defined() ? bias.impl() : nullptr;
  Parents parents{xi, ki};
  if (bimpl) parents.push_back(bimpl);
  return finish("conv1d", impl, std::move(parents),
                [xi, ki, bimpl, batch, cin, width, cout, ksize](TensorImpl& o) {
                  if (xi->requires_grad) {
                    xi->ensure_grad();
                    kernels::conv1d_grad_x(o.grad.data(), ki->data.data(), xi->grad.data(), batch,
                                           cin, width, cout, ksize);
                  }
                  if (ki->requires_grad) {
                    ki->ensure_grad();
                    kernels::conv1d_grad_k(o.grad.data(), xi->data.data(), ki->grad.data(), batch,
                                           cin, width, cout, ksize);
                  }
                  if (bimpl && bimpl->requires_grad) {
                    bimpl->ensure_grad();
                    for (i64 b = 0; b < batch; ++b)
                      for (i64 oc = 0; oc < cout; ++oc) {
                        const double* g = o.grad.data() + (b * cout + oc) * width;
                        double s = 0.0;
                        for (i64 w = 0; w < width; ++w) s += g[w];
                        bimpl->grad[oc] += s;
                      }
                  }
                });
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must be in [0,1)");
  if (!training || rate == 0.0) return x;
  const double scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.impl()->data.size());
  std::vector<double> out(x.impl()->data.size());
  const double* p = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = rng.uniform() >= rate ? scale : 0.0;
    mask[i] = m;
    out[i] = p[i] * m;
  }
  auto impl = make_impl(x.shape(), std::move(out));
  auto xi = x.impl();
  return finish("dropout", impl, {xi}, [xi, mask = std::move(mask)](TensorImpl& o) {
    xi->ensure_grad();
    for (i64 i = 0; i < o.numel(); ++i) xi->grad[i] += o.grad[i] * mask[i];
  });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<i64>& targets) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be [batch,classes]");
  const i64 b = logits.dim(0), c = logits.dim(1);
  if (static_cast<i64>(targets.size()) != b) throw ShapeError("cross_entropy: target count mismatch");
  if (b < 1) throw ShapeError("cross_entropy: empty batch");
  for (i64 t : targets)
    if (t < 0 || t >= c) throw DataError("cross_entropy: target index out of range");
  const double* p = logits.data();
  std::vector<double> probs(static_cast<std::size_t>(b * c));
  double loss = 0.0;
  for (i64 i = 0; i < b; ++i) {
    const double* row = p + i * c;
    double mx = row[0];
    for (i64 j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (i64 j = 0; j < c; ++j) {
      const double e = std::exp(row[j] - mx);
      probs[static_cast<std::size_t>(i * c + j)] = e;
      denom += e;
    }
    const double inv = 1.0 / denom;
    for (i64 j = 0; j < c; ++j) probs[static_cast<std::size_t>(i * c + j)] *= inv;
    loss += std::log(denom) + mx - row[targets[static_cast<std::size_t>(i)]];
  }
  loss /= static_cast<double>(b);
  auto impl = make_impl({1}, {loss});
  auto li = logits.impl();
  return finish("cross_entropy", impl, {li},
                [li, probs = std::move(probs), targets, b, c](TensorImpl& o) {
                  li->ensure_grad();
                  const double g = o.grad[0] / static_cast<double>(b);
                  for (i64 i = 0; i < b; ++i)
                    for (i64 j = 0; j < c; ++j) {
                      double v = probs[static_cast<std::size_t>(i * c + j)];
                      if (j == targets[static_cast<std::size_t>(i)]) v -= 1.0;
                      li->grad[i * c + j] += g * v;
                    }
                });
}

// ---------- segment ops ----------

SegmentCsr SegmentCsr::group(const std::vector<i64>& segment_of, i64 segments) {
  SegmentCsr csr;
  csr.offsets.assign(static_cast<std::size_t>(segments) + 1, 0);
  for (i64 s : segment_of) {
    if (s < 0 || s >= segments) throw DataError("segment group: id out of range");
    ++csr.offsets[static_cast<std::size_t>(s) + 1];
  }
  for (std::size_t i = 1; i < csr.offsets.size(); ++i) csr.offsets[i] += csr.offsets[i - 1];
  csr.indices.resize(segment_of.size());
  std::vector<i64> cursor(csr.offsets.begin(), csr.offsets.end() - 1);
  for (std::size_t j = 0; j < segment_of.size(); ++j)
    csr.indices[static_cast<std::size_t>(cursor[static_cast<std::size_t>(segment_of[j])]++)] =
        static_cast<i64>(j);
  return csr;
}

namespace {

Tensor segment_reduce(const char* name, const Tensor& rows, const SegmentCsr& csr, bool mean) {
  if (rows.rank() < 1) throw ShapeError("segment reduce: rank-0 input");
  const i64 n = rows.dim(0);
  const i64 slice = rows.numel() / std::max<i64>(n, 1);
  for (i64 idx : csr.indices)
    if (idx < 0 || idx >= n) throw DataError("segment reduce: row index out of range");
  Shape out = rows.shape();
  out[0] = csr.segments();
  std::vector<double> data(static_cast<std::size_t>(shape_numel(out)));
  if (mean)
    kernels::segment_mean(rows.data(), csr.offsets.data(), csr.indices.data(), data.data(),
                          csr.segments(), slice);
  else
    kernels::segment_sum(rows.data(), csr.offsets.data(), csr.indices.data(), data.data(),
                         csr.segments(), slice);
  auto impl = make_impl(std::move(out), std::move(data));
  auto ri = rows.impl();
  // per-element segment id + weight for the backward scatter
  return finish(name, impl, {ri}, [ri, csr, slice, mean](TensorImpl& o) {
    ri->ensure_grad();
    const i64 total = csr.total();
    std::vector<double> contrib(static_cast<std::size_t>(total * slice));
    std::vector<i64> dest(static_cast<std::size_t>(total));
    for (i64 s = 0; s < csr.segments(); ++s) {
      const i64 lo = csr.offsets[static_cast<std::size_t>(s)];
      const i64 hi = csr.offsets[static_cast<std::size_t>(s) + 1];
      const double w = mean && hi > lo ? 1.0 / static_cast<double>(hi - lo) : 1.0;
      const double* g = o.grad.data() + s * slice;
      for (i64 j = lo; j < hi; ++j) {
        dest[static_cast<std::size_t>(j)] = csr.indices[static_cast<std::size_t>(j)];
        double* c = contrib.data() + j * slice;
        for (i64 dcol = 0; dcol < slice; ++dcol) c[dcol] = w * g[dcol];
      }
    }
    kernels::scatter_add_rows(contrib.data(), dest.data(), ri->grad.data(), total, slice);
  });
}

}  // namespace

Tensor segment_sum(const Tensor& rows, const SegmentCsr& csr) {
  return segment_reduce("segment_sum", rows, csr, false);
}

Tensor segment_mean(const Tensor& rows, const SegmentCsr& csr) {
  return segment_reduce("segment_mean", rows, csr, true);
}

std::vector<double> segment_max_values(const Tensor& scores, const SegmentCsr& csr) {
  const i64 n = scores.dim(0);
  const i64 slice = scores.numel() / std::max<i64>(n, 1);
  if (slice != 1) throw ShapeError("segment_max_values: expects a column of scores");
  std::vector<double> out(static_cast<std::size_t>(csr.segments()),
                          -std::numeric_limits<double>::infinity());
  const double* p = scores.data();
  for (i64 s = 0; s < csr.segments(); ++s) {
    for (i64 j = csr.offsets[static_cast<std::size_t>(s)];
         j < csr.offsets[static_cast<std::size_t>(s) + 1]; ++j)
      out[static_cast<std::size_t>(s)] =
          std::max(out[static_cast<std::size_t>(s)], p[csr.indices[static_cast<std::size_t>(j)]]);
  }
  return out;
}

}  // namespace dualtkg
