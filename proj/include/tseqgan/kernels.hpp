#pragma once

#include <cstddef>
#include <span>
#include <vector>

// Dense inner loops shared by autodiff, metrics and clustering. Every kernel
// has a serial reference in `kernels::serial` and an OpenMP version in
// `kernels::parallel`. Both visit each output element with the same
// accumulation order, so results are bit-identical regardless of the thread
// count; tests assert exact equality.
namespace tseqgan::kernels {

// Work (multiply-adds) below which the dispatching entry points stay serial.
inline constexpr std::size_t kParallelThreshold = std::size_t{1} << 16;

namespace serial {

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
// C[m x k] += A[m x n] * B[k x n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k);
// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

// Per-row sums of exp(-gamma * |x_i - y_j|^2); x is nx x d, y is ny x d.
// When skip_diagonal is set the i == j terms are left out.
void rbf_row_sums(const double* x, std::size_t nx, const double* y, std::size_t ny, std::size_t d,
                  double gamma, bool skip_diagonal, double* row_sums);

// Nearest-center assignment; returns squared distance of each point.
void nearest_center(const double* points, std::size_t n, const double* centers, std::size_t k,
                    std::size_t d, int* labels, double* sq_dist);

// Squared Euclidean distances for all pairs i < j, row-major pair order.
void pairwise_sq_dists(const double* x, std::size_t n, std::size_t d, double* out);

}  // namespace serial

namespace parallel {

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void rbf_row_sums(const double* x, std::size_t nx, const double* y, std::size_t ny, std::size_t d,
                  double gamma, bool skip_diagonal, double* row_sums);
void nearest_center(const double* points, std::size_t n, const double* centers, std::size_t k,
                    std::size_t d, int* labels, double* sq_dist);
void pairwise_sq_dists(const double* x, std::size_t n, std::size_t d, double* out);

}  // namespace parallel

// Dispatch on problem size.
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void rbf_row_sums(const double* x, std::size_t nx, const double* y, std::size_t ny, std::size_t d,
                  double gamma, bool skip_diagonal, double* row_sums);
void nearest_center(const double* points, std::size_t n, const double* centers, std::size_t k,
                    std::size_t d, int* labels, double* sq_dist);
void pairwise_sq_dists(const double* x, std::size_t n, std::size_t d, double* out);

int max_threads();

}  // namespace tseqgan::kernels
