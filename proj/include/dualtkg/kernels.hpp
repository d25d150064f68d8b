#pragma once

#include <cstdint>
#include <vector>

// Dense inner-loop kernels. Every kernel has a serial reference
// implementation and an OpenMP one; the OpenMP variants parallelize only
// over independent output slices with serial accumulation order inside
// each slice, so both produce bit-identical results. `bench_kernels`
// compares their throughput, the test suite compares their outputs.

namespace dualtkg::kernels {

using i64 = std::int64_t;

bool parallel_enabled();
void set_parallel(bool on);
int worker_count();

namespace serial {

// c[m,n] = a[m,k] * b[k,n]
void matmul(const double* a, const double* b, double* c, i64 m, i64 k, i64 n);
// c[k,n] += a^T b  with a[m,k], b[m,n]
void matmul_tn_acc(const double* a, const double* b, double* c, i64 m, i64 k, i64 n);
// c[m,p] += a b^T  with a[m,n], b[p,n]
void matmul_nt_acc(const double* a, const double* b, double* c, i64 m, i64 n, i64 p);
// c[m,p] = a b^T   with a[m,n], b[p,n]
void matmul_nt(const double* a, const double* b, double* c, i64 m, i64 n, i64 p);

// Cross-correlation, same padding: y[b,o,w] = bias[o] + sum_{c,j} x[b,c,w+j-p] k[o,c,j]
void conv1d(const double* x, const double* ker, const double* bias, double* y,
            i64 batch, i64 cin, i64 width, i64 cout, i64 ksize);
void conv1d_grad_x(const double* dy, const double* ker, double* dx,
                   i64 batch, i64 cin, i64 width, i64 cout, i64 ksize);
void conv1d_grad_k(const double* dy, const double* x, double* dk,
                   i64 batch, i64 cin, i64 width, i64 cout, i64 ksize);

// out[s,:] = sum of rows[idx[j],:] for j in [off[s], off[s+1])
void segment_sum(const double* rows, const i64* offsets, const i64* indices,
                 double* out, i64 segments, i64 dim);
// out[s,:] = mean over the segment's rows, zero row when the segment is empty
void segment_mean(const double* rows, const i64* offsets, const i64* indices,
                  double* out, i64 segments, i64 dim);
// y[i,:] = x[ids[i],:]
void gather_rows(const double* x, const i64* ids, double* y, i64 count, i64 dim);
// dx[ids[i],:] += dy[i,:]   (ids may repeat)
void scatter_add_rows(const double* dy, const i64* ids, double* dx, i64 count, i64 dim);

}  // namespace serial

namespace par {

void matmul(const double* a, const double* b, double* c, i64 m, i64 k, i64 n);
void matmul_tn_acc(const double* a, const double* b, double* c, i64 m, i64 k, i64 n);
void matmul_nt_acc(const double* a, const double* b, double* c, i64 m, i64 n, i64 p);
void matmul_nt(const double* a, const double* b, double* c, i64 m, i64 n, i64 p);

void conv1d(const double* x, const double* ker, const double* bias, double* y,
            i64 batch, i64 cin, i64 width, i64 cout, i64 ksize);
void conv1d_grad_x(const double* dy, const double* ker, double* dx,
                   i64 batch, i64 cin, i64 width, i64 cout, i64 ksize);
void conv1d_grad_k(const double* dy, const double* x, double* dk,
                   i64 batch, i64 cin, i64 width, i64 cout, i64 ksize);

void segment_sum(const double* rows, const i64* offsets, const i64* indices,
                 double* out, i64 segments, i64 dim);
void segment_mean(const double* rows, const i64* offsets, const i64* indices,
                  double* out, i64 segments, i64 dim);
void gather_rows(const double* x, const i64* ids, double* y, i64 count, i64 dim);
void scatter_add_rows(const double* dy, const i64* ids, double* dx, i64 count, i64 dim);

}  // namespace par

// Dispatchers used by the tensor layer.
void matmul(const double* a, const double* b, double* c, i64 m, i64 k, i64 n);
void matmul_tn_acc(const double* a, const double* b, double* c, i64 m, i64 k, i64 n);
void matmul_nt_acc(const double* a, const double* b, double* c, i64 m, i64 n, i64 p);
void matmul_nt(const double* a, const double* b, double* c, i64 m, i64 n, i64 p);
void conv1d(const double* x, const double* ker, const double* bias, double* y,
            i64 batch, i64 cin, i64 width, i64 cout, i64 ksize);
void conv1d_grad_x(const double* dy, const double* ker, double* dx,
                   i64 batch, i64 cin, i64 width, i64 cout, i64 ksize);
void conv1d_grad_k(const double* dy, const double* x, double* dk,
                   i64 batch, i64 cin, i64 width, i64 cout, i64 ksize);
void segment_sum(const double* rows, const i64* offsets, const i64* indices,
                 double* out, i64 segments, i64 dim);
void segment_mean(const double* rows, const i64* offsets, const i64* indices,
                  double* out, i64 segments, i64 dim);
void gather_rows(const double* x, const i64* ids, double* y, i64 count, i64 dim);
void scatter_add_rows(const double* dy, const i64* ids, double* dx, i64 count, i64 dim);

}  // namespace dualtkg::kernels
