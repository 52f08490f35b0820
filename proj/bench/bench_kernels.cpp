// Serial reference vs OpenMP kernels on shapes that occur in training and
// evaluation. Run with OMP_NUM_THREADS set to compare thread counts.
#include <benchmark/benchmark.h>

#include <vector>

#include "tseqgan/kernels.hpp"
#include "tseqgan/rng.hpp"

namespace k = tseqgan::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  tseqgan::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// Batch x 2H times 2H x 4H: the gate pre-activation of one timestep.
template <auto Fn>
void BM_gemm_nn(benchmark::State& state) {
  const std::size_t m = state.range(0), kk = 128, n = 256;
  const auto a = random_vec(m * kk, 1), b = random_vec(kk * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0);
    Fn(a.data(), b.data(), c.data(), m, kk, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * m * kk * n);
}

template <auto Fn>
void BM_gemm_tn(benchmark::State& state) {
  const std::size_t m = state.range(0), kk = 128, n = 256;
  const auto a = random_vec(m * kk, 1), b = random_vec(m * n, 2);
  std::vector<double> c(kk * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0);
    Fn(a.data(), b.data(), c.data(), m, kk, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * m * kk * n);
}

// MMD cross term on interval features (L - 1 = 20 dims).
template <auto Fn>
void BM_rbf(benchmark::State& state) {
  const std::size_t n = state.range(0), d = 20;
  const auto x = random_vec(n * d, 3), y = random_vec(n * d, 4);
  std::vector<double> sums(n);
  for (auto _ : state) {
    Fn(x.data(), n, y.data(), n, d, 0.01, false, sums.data());
    benchmark::DoNotOptimize(sums.data());
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}

// k-means assignment on hidden features (2H = 128 dims, 20 centers).
template <auto Fn>
void BM_nearest(benchmark::State& state) {
  const std::size_t n = state.range(0), kc = 20, d = 128;
  const auto p = random_vec(n * d, 5), c = random_vec(kc * d, 6);
  std::vector<int> labels(n);
  std::vector<double> dist(n);
  for (auto _ : state) {
    Fn(p.data(), n, c.data(), kc, d, labels.data(), dist.data());
    benchmark::DoNotOptimize(dist.data());
  }
  state.SetItemsProcessed(state.iterations() * n * kc);
}

template <auto Fn>
void BM_pairwise(benchmark::State& state) {
  const std::size_t n = state.range(0), d = 20;
  const auto x = random_vec(n * d, 7);
  std::vector<double> out(n * (n - 1) / 2);
  for (auto _ : state) {
    Fn(x.data(), n, d, out.data());
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * out.size());
}

}  // namespace

BENCHMARK(BM_gemm_nn<k::serial::gemm_nn>)->Name("gemm_nn/serial")->Arg(64)->Arg(512)->Arg(4096);
BENCHMARK(BM_gemm_nn<k::parallel::gemm_nn>)->Name("gemm_nn/parallel")->Arg(64)->Arg(512)->Arg(4096);
BENCHMARK(BM_gemm_tn<k::serial::gemm_tn>)->Name("gemm_tn/serial")->Arg(64)->Arg(512)->Arg(4096);
BENCHMARK(BM_gemm_tn<k::parallel::gemm_tn>)->Name("gemm_tn/parallel")->Arg(64)->Arg(512)->Arg(4096);
BENCHMARK(BM_rbf<k::serial::rbf_row_sums>)->Name("rbf_row_sums/serial")->Arg(1000)->Arg(4000);
BENCHMARK(BM_rbf<k::parallel::rbf_row_sums>)->Name("rbf_row_sums/parallel")->Arg(1000)->Arg(4000);
BENCHMARK(BM_nearest<k::serial::nearest_center>)->Name("nearest_center/serial")->Arg(10000);
BENCHMARK(BM_nearest<k::parallel::nearest_center>)->Name("nearest_center/parallel")->Arg(10000);
BENCHMARK(BM_pairwise<k::serial::pairwise_sq_dists>)->Name("pairwise_sq_dists/serial")->Arg(2000);
BENCHMARK(BM_pairwise<k::parallel::pairwise_sq_dists>)->Name("pairwise_sq_dists/parallel")->Arg(2000);

BENCHMARK_MAIN();
