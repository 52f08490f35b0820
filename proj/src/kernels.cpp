#include "tseqgan/kernels.hpp"

#include <cmath>
#include <cstdint>
#include <limits>

#include <omp.h>

namespace tseqgan::kernels {

namespace {

// Row kernels shared by the serial and parallel drivers so that both use the
// identical accumulation order.

inline void gemm_nn_row(const double* a, const double* b, double* c, std::size_t i, std::size_t k,
                        std::size_t n) {
  const double* arow = a + i * k;
  double* crow = c + i * n;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = arow[p];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

inline void gemm_nt_row(const double* a, const double* b, double* c, std::size_t i, std::size_t n,
                        std::size_t k) {
  const double* arow = a + i * n;
  double* crow = c + i * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
    crow[p] += acc;
  }
}

// Row p of C = A^T B, i.e. sum over i of A[i, p] * B[i, :].
inline void gemm_tn_row(const double* a, const double* b, double* c, std::size_t p, std::size_t m,
                        std::size_t k, std::size_t n) {
  double* crow = c + p * n;
  for (std::size_t i = 0; i < m; ++i) {
    const double av = a[i * k + p];
    const double* brow = b + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

inline double sq_dist(const double* x, const double* y, std::size_t d) {
  double s = 0.0;
  for (std::size_t t = 0; t < d; ++t) {
    const double diff = x[t] - y[t];
    s += diff * diff;
  }
  return s;
}

inline double rbf_row(const double* x, std::size_t i, const double* y, std::size_t ny, std::size_t d,
                      double gamma, bool skip_diagonal) {
  const double* xi = x + i * d;
  double acc = 0.0;
  for (std::size_t j = 0; j < ny; ++j) {
    if (skip_diagonal && i == j) continue;
    acc += std::exp(-gamma * sq_dist(xi, y + j * d, d));
  }
  return acc;
}

inline void nearest_row(const double* points, std::size_t i, const double* centers, std::size_t k,
                        std::size_t d, int* labels, double* out) {
  const double* pi = points + i * d;
  double best = std::numeric_limits<double>::infinity();
  int arg = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double dist = sq_dist(pi, centers + c * d, d);
    if (dist < best) {
      best = dist;
      arg = static_cast<int>(c);
    }
  }
  labels[i] = arg;
  out[i] = best;
}

inline std::size_t pair_offset(std::size_t i, std::size_t n) {
  // Number of pairs (r, s), r < s, with r < i.
  return i * n - i * (i + 1) / 2;
}

inline void pairwise_row(const double* x, std::size_t i, std::size_t n, std::size_t d, double* out) {
  double* dst = out + pair_offset(i, n);
  for (std::size_t j = i + 1; j < n; ++j) *dst++ = sq_dist(x + i * d, x + j * d, d);
}

using Index = std::int64_t;

}  // namespace

namespace serial {

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) gemm_nn_row(a, b, c, i, k, n);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) gemm_nt_row(a, b, c, i, n, k);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) gemm_tn_row(a, b, c, p, m, k, n);
}

void rbf_row_sums(const double* x, std::size_t nx, const double* y, std::size_t ny, std::size_t d,
                  double gamma, bool skip_diagonal, double* row_sums) {
  for (std::size_t i = 0; i < nx; ++i) row_sums[i] = rbf_row(x, i, y, ny, d, gamma, skip_diagonal);
}

void nearest_center(const double* points, std::size_t n, const double* centers, std::size_t k,
                    std::size_t d, int* labels, double* sq_dist_out) {
  for (std::size_t i = 0; i < n; ++i) nearest_row(points, i, centers, k, d, labels, sq_dist_out);
}

void pairwise_sq_dists(const double* x, std::size_t n, std::size_t d, double* out) {
  for (std::size_t i = 0; i < n; ++i) pairwise_row(x, i, n, d, out);
}

}  // namespace serial

namespace parallel {

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(m); ++i) gemm_nn_row(a, b, c, static_cast<std::size_t>(i), k, n);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(m); ++i) gemm_nt_row(a, b, c, static_cast<std::size_t>(i), n, k);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (Index p = 0; p < static_cast<Index>(k); ++p) gemm_tn_row(a, b, c, static_cast<std::size_t>(p), m, k, n);
}

void rbf_row_sums(const double* x, std::size_t nx, const double* y, std::size_t ny, std::size_t d,
                  double gamma, bool skip_diagonal, double* row_sums) {
#pragma omp parallel for schedule(dynamic, 16)
  for (Index i = 0; i < static_cast<Index>(nx); ++i) {
    row_sums[i] = rbf_row(x, static_cast<std::size_t>(i), y, ny, d, gamma, skip_diagonal);
  }
}

void nearest_center(const double* points, std::size_t n, const double* centers, std::size_t k,
                    std::size_t d, int* labels, double* sq_dist_out) {
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(n); ++i) {
    nearest_row(points, static_cast<std::size_t>(i), centers, k, d, labels, sq_dist_out);
  }
}

void pairwise_sq_dists(const double* x, std::size_t n, std::size_t d, double* out) {
#pragma omp parallel for schedule(dynamic, 8)
  for (Index i = 0; i < static_cast<Index>(n); ++i) pairwise_row(x, static_cast<std::size_t>(i), n, d, out);
}

}  // namespace parallel

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  if (m * k * n >= kParallelThreshold && m > 1) {
    parallel::gemm_nn(a, b, c, m, k, n);
  } else {
    serial::gemm_nn(a, b, c, m, k, n);
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
  if (m * k * n >= kParallelThreshold && m > 1) {
    parallel::gemm_nt(a, b, c, m, n, k);
  } else {
    serial::gemm_nt(a, b, c, m, n, k);
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  if (m * k * n >= kParallelThreshold && k > 1) {
    parallel::gemm_tn(a, b, c, m, k, n);
  } else {
    serial::gemm_tn(a, b, c, m, k, n);
  }
}

void rbf_row_sums(const double* x, std::size_t nx, const double* y, std::size_t ny, std::size_t d,
                  double gamma, bool skip_diagonal, double* row_sums) {
  if (nx * ny * d >= kParallelThreshold) {
    parallel::rbf_row_sums(x, nx, y, ny, d, gamma, skip_diagonal, row_sums);
  } else {
    serial::rbf_row_sums(x, nx, y, ny, d, gamma, skip_diagonal, row_sums);
  }
}

void nearest_center(const double* points, std::size_t n, const double* centers, std::size_t k,
                    std::size_t d, int* labels, double* sq_dist_out) {
  if (n * k * d >= kParallelThreshold) {
    parallel::nearest_center(points, n, centers, k, d, labels, sq_dist_out);
  } else {
    serial::nearest_center(points, n, centers, k, d, labels, sq_dist_out);
  }
}

void pairwise_sq_dists(const double* x, std::size_t n, std::size_t d, double* out) {
  if (n * n * d >= kParallelThreshold) {
    parallel::pairwise_sq_dists(x, n, d, out);
  } else {
    serial::pairwise_sq_dists(x, n, d, out);
  }
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace tseqgan::kernels
