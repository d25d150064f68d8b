#include "dualtkg/kernels.hpp"

#include <atomic>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dualtkg::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

bool parallel_enabled() {
#ifdef _OPENMP
  return g_parallel.load(std::memory_order_relaxed);
#else
  return false;
#endif
}

void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

int worker_count() {
#ifdef _OPENMP
  return parallel_enabled() ? omp_get_max_threads() : 1;
#else
  return 1;
#endif
}

// Loop bodies are shared between the serial and OpenMP variants so the
// accumulation order (and therefore the bits) cannot drift apart.
namespace body {

inline void matmul_row(const double* a, const double* b, double* c, i64 i, i64 k, i64 n) {
  double* crow = c + i * n;
  for (i64 j = 0; j < n; ++j) crow[j] = 0.0;
  const double* arow = a + i * k;
  for (i64 p = 0; p < k; ++p) {
    const double av = arow[p];
    const double* brow = b + p * n;
    for (i64 j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

inline void matmul_tn_row(const double* a, const double* b, double* c, i64 col, i64 m, i64 k, i64 n) {
  // c[col,:] += sum_i a[i,col] * b[i,:]
  double* crow = c + col * n;
  for (i64 i = 0; i < m; ++i) {
    const double av = a[i * k + col];
    const double* brow = b + i * n;
    for (i64 j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

inline void matmul_nt_row(const double* a, const double* b, double* c, i64 i, i64 n, i64 p, bool acc) {
  const double* arow = a + i * n;
  double* crow = c + i * p;
  for (i64 q = 0; q < p; ++q) {
    const double* brow = b + q * n;
    double s = 0.0;
    for (i64 j = 0; j < n; ++j) s += arow[j] * brow[j];
    if (acc)
      crow[q] += s;
    else
      crow[q] = s;
  }
}

// y must already point at batch b's output block
inline void conv1d_cell(const double* x, const double* ker, const double* bias, double* y,
                        i64 b, i64 o, i64 cin, i64 width, i64 ksize) {
  const i64 pad = (ksize - 1) / 2;
  const double* xb = x + b * cin * width;
  double* out = y + o * width;
  for (i64 w = 0; w < width; ++w) {
    double s = bias ? bias[o] : 0.0;
    for (i64 c = 0; c < cin; ++c) {
      const double* xc = xb + c * width;
      const double* kc = ker + (o * cin + c) * ksize;
      for (i64 j = 0; j < ksize; ++j) {
        const i64 src = w + j - pad;
        if (src >= 0 && src < width) s += xc[src] * kc[j];
      }
    }
    out[w] = s;
  }
}

inline void conv1d_grad_x_cell(const double* dy, const double* ker, double* dx,
                               i64 b, i64 c, i64 cin, i64 width, i64 cout, i64 ksize) {
  const i64 pad = (ksize - 1) / 2;
  double* dxc = dx + (b * cin + c) * width;
  const double* dyb = dy + b * cout * width;
  for (i64 w = 0; w < width; ++w) {
    double s = 0.0;
    for (i64 o = 0; o < cout; ++o) {
      const double* dyo = dyb + o * width;
      const double* kc = ker + (o * cin + c) * ksize;
      for (i64 j = 0; j < ksize; ++j) {
        const i64 dst = w - j + pad;  // y position that consumed x[w] via tap j
        if (dst >= 0 && dst < width) s += dyo[dst] * kc[j];
      }
    }
    dxc[w] += s;
  }
}

inline void conv1d_grad_k_cell(const double* dy, const double* x, double* dk,
                               i64 o, i64 c, i64 batch, i64 cin, i64 width, i64 cout, i64 ksize) {
  const i64 pad = (ksize - 1) / 2;
  double* krow = dk + (o * cin + c) * ksize;
  for (i64 j = 0; j < ksize; ++j) {
    double s = 0.0;
    for (i64 b = 0; b < batch; ++b) {
      const double* dyo = dy + (b * cout + o) * width;
      const double* xc = x + (b * cin + c) * width;
      for (i64 w = 0; w < width; ++w) {
        const i64 src = w + j - pad;
        if (src >= 0 && src < width) s += dyo[w] * xc[src];
      }
    }
    krow[j] += s;
  }
}

inline void segment_sum_row(const double* rows, const i64* offsets, const i64* indices,
                            double* out, i64 s, i64 dim, bool mean) {
  double* orow = out + s * dim;
  for (i64 d = 0; d < dim; ++d) orow[d] = 0.0;
  const i64 lo = offsets[s], hi = offsets[s + 1];
  for (i64 j = lo; j < hi; ++j) {
    const double* r = rows + indices[j] * dim;
    for (i64 d = 0; d < dim; ++d) orow[d] += r[d];
  }
  if (mean && hi > lo) {
    const double inv = 1.0 / static_cast<double>(hi - lo);
    for (i64 d = 0; d < dim; ++d) orow[d] *= inv;
  }
}

}  // namespace body

namespace serial {

void matmul(const double* a, const double* b, double* c, i64 m, i64 k, i64 n) {
  for (i64 i = 0; i < m; ++i) body::matmul_row(a, b, c, i, k, n);
}

void matmul_tn_acc(const double* a, const double* b, double* c, i64 m, i64 k, i64 n) {
  for (i64 col = 0; col < k; ++col) body::matmul_tn_row(a, b, c, col, m, k, n);
}

void matmul_nt_acc(const double* a, const double* b, double* c, i64 m, i64 n, i64 p) {
  for (i64 i = 0; i < m; ++i) body::matmul_nt_row(a, b, c, i, n, p, true);
}

void matmul_nt(const double* a, const double* b, double* c, i64 m, i64 n, i64 p) {
  for (i64 i = 0; i < m; ++i) body::matmul_nt_row(a, b, c, i, n, p, false);
}

void conv1d(const double* x, const double* ker, const double* bias, double* y,
            i64 batch, i64 cin, i64 width, i64 cout, i64 ksize) {
  for (i64 b = 0; b < batch; ++b)
    for (i64 o = 0; o < cout; ++o)
      body::conv1d_cell(x, ker, bias, y + b * cout * width, b, o, cin, width, ksize);
}

void conv1d_grad_x(const double* dy, const double* ker, double* dx,
                   i64 batch, i64 cin, i64 width, i64 cout, i64 ksize) {
  for (i64 b = 0; b < batch; ++b)
    for (i64 c = 0; c < cin; ++c) body::conv1d_grad_x_cell(dy, ker, dx, b, c, cin, width, cout, ksize);
}

void conv1d_grad_k(const double* dy, const double* x, double* dk,
                   i64 batch, i64 cin, i64 width, i64 cout, i64 ksize) {
  for (i64 o = 0; o < cout; ++o)
    for (i64 c = 0; c < cin; ++c) body::conv1d_grad_k_cell(dy, x, dk, o, c, batch, cin, width, cout, ksize);
}

void segment_sum(const double* rows, const i64* offsets, const i64* indices,
                 double* out, i64 segments, i64 dim) {
  for (i64 s = 0; s < segments; ++s) body::segment_sum_row(rows, offsets, indices, out, s, dim, false);
}

void segment_mean(const double* rows, const i64* offsets, const i64* indices,
                  double* out, i64 segments, i64 dim) {
  for (i64 s = 0; s < segments; ++s) body::segment_sum_row(rows, offsets, indices, out, s, dim, true);
}

void gather_rows(const double* x, const i64* ids, double* y, i64 count, i64 dim) {
  for (i64 i = 0; i < count; ++i) std::memcpy(y + i * dim, x + ids[i] * dim, sizeof(double) * dim);
}

void scatter_add_rows(const double* dy, const i64* ids, double* dx, i64 count, i64 dim) {
  for (i64 i = 0; i < count; ++i) {
    const double* src = dy + i * dim;
    double* dst = dx + ids[i] * dim;
    for (i64 d = 0; d < dim; ++d) dst[d] += src[d];
  }
}

}  // namespace serial

namespace par {

void matmul(const double* a, const double* b, double* c, i64 m, i64 k, i64 n) {
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < m; ++i) body::matmul_row(a, b, c, i, k, n);
}

void matmul_tn_acc(const double* a, const double* b, double* c, i64 m, i64 k, i64 n) {
#pragma omp parallel for schedule(static)
  for (i64 col = 0; col < k; ++col) body::matmul_tn_row(a, b, c, col, m, k, n);
}

void matmul_nt_acc(const double* a, const double* b, double* c, i64 m, i64 n, i64 p) {
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < m; ++i) body::matmul_nt_row(a, b, c, i, n, p, true);
}

void matmul_nt(const double* a, const double* b, double* c, i64 m, i64 n, i64 p) {
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < m; ++i) body::matmul_nt_row(a, b, c, i, n, p, false);
}

void conv1d(const double* x, const double* ker, const double* bias, double* y,
            i64 batch, i64 cin, i64 width, i64 cout, i64 ksize) {
#pragma omp parallel for collapse(2) schedule(static)
  for (i64 b = 0; b < batch; ++b)
    for (i64 o = 0; o < cout; ++o)
      body::conv1d_cell(x, ker, bias, y + b * cout * width, b, o, cin, width, ksize);
}

void conv1d_grad_x(const double* dy, const double* ker, double* dx,
                   i64 batch, i64 cin, i64 width, i64 cout, i64 ksize) {
#pragma omp parallel for collapse(2) schedule(static)
  for (i64 b = 0; b < batch; ++b)
    for (i64 c = 0; c < cin; ++c) body::conv1d_grad_x_cell(dy, ker, dx, b, c, cin, width, cout, ksize);
}

void conv1d_grad_k(const double* dy, const double* x, double* dk,
                   i64 batch, i64 cin, i64 width, i64 cout, i64 ksize) {
#pragma omp parallel for collapse(2) schedule(static)
  for (i64 o = 0; o < cout; ++o)
    for (i64 c = 0; c < cin; ++c) body::conv1d_grad_k_cell(dy, x, dk, o, c, batch, cin, width, cout, ksize);
}

void segment_sum(const double* rows, const i64* offsets, const i64* indices,
                 double* out, i64 segments, i64 dim) {
#pragma omp parallel for schedule(static)
  for (i64 s = 0; s < segments; ++s) body::segment_sum_row(rows, offsets, indices, out, s, dim, false);
}

void segment_mean(const double* rows, const i64* offsets, const i64* indices,
                  double* out, i64 segments, i64 dim) {
#pragma omp parallel for schedule(static)
  for (i64 s = 0; s < segments; ++s) body::segment_sum_row(rows, offsets, indices, out, s, dim, true);
}

void gather_rows(const double* x, const i64* ids, double* y, i64 count, i64 dim) {
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < count; ++i) std::memcpy(y + i * dim, x + ids[i] * dim, sizeof(double) * dim);
}

void scatter_add_rows(const double* dy, const i64* ids, double* dx, i64 count, i64 dim) {
  // ids may repeat across rows, so parallelize over columns: each (row, col)
  // cell is then written by exactly one thread, in the serial row order.
#pragma omp parallel
  {
#ifdef _OPENMP
    const int nt = omp_get_num_threads();
    const int tid = omp_get_thread_num();
#else
    const int nt = 1, tid = 0;
#endif
    const i64 lo = dim * tid / nt;
    const i64 hi = dim * (tid + 1) / nt;
    if (hi > lo) {
      for (i64 i = 0; i < count; ++i) {
        const double* src = dy + i * dim;
        double* dst = dx + ids[i] * dim;
        for (i64 d = lo; d < hi; ++d) dst[d] += src[d];
      }
    }
  }
}

}  // namespace par

#define DUALTKG_DISPATCH(fn, ...) \
  do {                            \
    if (parallel_enabled())       \
      par::fn(__VA_ARGS__);       \
    else                          \
      serial::fn(__VA_ARGS__);    \
  } while (0)

void matmul(const double* a, const double* b, double* c, i64 m, i64 k, i64 n) {
  DUALTKG_DISPATCH(matmul, a, b, c, m, k, n);
}
void matmul_tn_acc(const double* a, const double* b, double* c, i64 m, i64 k, i64 n) {
  DUALTKG_DISPATCH(matmul_tn_acc, a, b, c, m, k, n);
}
void matmul_nt_acc(const double* a, const double* b, double* c, i64 m, i64 n, i64 p) {
  DUALTKG_DISPATCH(matmul_nt_acc, a, b, c, m, n, p);
}
void matmul_nt(const double* a, const double* b, double* c, i64 m, i64 n, i64 p) {
  DUALTKG_DISPATCH(matmul_nt, a, b, c, m, n, p);
}
void conv1d(const double* x, const double* ker, const double* bias, double* y,
            i64 batch, i64 cin, i64 width, i64 cout, i64 ksize) {
  DUALTKG_DISPATCH(conv1d, x, ker, bias, y, batch, cin, width, cout, ksize);
}
void conv1d_grad_x(const double* dy, const double* ker, double* dx,
                   i64 batch, i64 cin, i64 width, i64 cout, i64 ksize) {
  DUALTKG_DISPATCH(conv1d_grad_x, dy, ker, dx, batch, cin, width, cout, ksize);
}
void conv1d_grad_k(const double* dy, const double* x, double* dk,
                   i64 batch, i64 cin, i64 width, i64 cout, i64 ksize) {
  DUALTKG_DISPATCH(conv1d_grad_k, dy, x, dk, batch, cin, width, cout, ksize);
}
void segment_sum(const double* rows, const i64* offsets, const i64* indices,
                 double* out, i64 segments, i64 dim) {
  DUALTKG_DISPATCH(segment_sum, rows, offsets, indices, out, segments, dim);
}
void segment_mean(const double* rows, const i64* offsets, const i64* indices,
                  double* out, i64 segments, i64 dim) {
  DUALTKG_DISPATCH(segment_mean, rows, offsets, indices, out, segments, dim);
}
void gather_rows(const double* x, const i64* ids, double* y, i64 count, i64 dim) {
  DUALTKG_DISPATCH(gather_rows, x, ids, y, count, dim);
}
void scatter_add_rows(const double* dy, const i64* ids, double* dx, i64 count, i64 dim) {
  DUALTKG_DISPATCH(scatter_add_rows, dy, ids, dx, count, dim);
}

#undef DUALTKG_DISPATCH

}  // namespace dualtkg::kernels
