// Serial reference kernels against their OpenMP counterparts.
//
//   ./bench_kernels --benchmark_filter=gemm
//   BGR_THREADS=4 ./bench_kernels

#include <benchmark/benchmark.h>

#include "bgr/kernels.hpp"
#include "bgr/mat.hpp"
#include "bgr/random.hpp"

namespace k = bgr::kernels;

namespace {

template <auto Gemm>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  bgr::Rng rng(n);
  const bgr::Mat a = rng.uniform_mat(n, n), b = rng.uniform_mat(n, n);
  bgr::Mat c(n, n);
  for (auto _ : state) {
    Gemm(a.data(), b.data(), c.data(), n, n, n);
    benchmark::DoNotOptimize(c.data().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

template <auto Softmax>
void BM_softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 4096;  // one row per class over a 64x64 raster
  bgr::Rng rng(rows);
  const bgr::Mat in = rng.uniform_mat(rows, cols, -5.0, 5.0);
  bgr::Mat out(rows, cols);
  for (auto _ : state) {
    Softmax(in.data(), out.data(), rows, cols);
    benchmark::DoNotOptimize(out.data().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows * cols));
}

template <auto Cosine>
void BM_cosine(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  bgr::Rng rng(n);
  const bgr::Mat a = rng.normal_mat(n, 64), b = rng.normal_mat(n, 64);
  bgr::Mat out(n, n);
  for (auto _ : state) {
    Cosine(a.data(), b.data(), out.data(), n, n, 64);
    benchmark::DoNotOptimize(out.data().data());
  }
}

}  // namespace

BENCHMARK(BM_gemm<k::serial::gemm>)->Name("gemm/serial")->RangeMultiplier(2)->Range(32, 512);
BENCHMARK(BM_gemm<k::omp::gemm>)->Name("gemm/omp")->RangeMultiplier(2)->Range(32, 512)->UseRealTime();
BENCHMARK(BM_gemm<k::serial::gemm_tn>)->Name("gemm_tn/serial")->Arg(256);
BENCHMARK(BM_gemm<k::omp::gemm_tn>)->Name("gemm_tn/omp")->Arg(256)->UseRealTime();
BENCHMARK(BM_gemm<k::serial::gemm_nt>)->Name("gemm_nt/serial")->Arg(256);
BENCHMARK(BM_gemm<k::omp::gemm_nt>)->Name("gemm_nt/omp")->Arg(256)->UseRealTime();
BENCHMARK(BM_softmax<k::serial::softmax_rows>)->Name("softmax_rows/serial")->Arg(16)->Arg(128);
BENCHMARK(BM_softmax<k::omp::softmax_rows>)->Name("softmax_rows/omp")->Arg(16)->Arg(128)->UseRealTime();
BENCHMARK(BM_cosine<k::serial::cosine_rows>)->Name("cosine_rows/serial")->Arg(256);
BENCHMARK(BM_cosine<k::omp::cosine_rows>)->Name("cosine_rows/omp")->Arg(256)->UseRealTime();

int main(int argc, char** argv) {
  k::apply_env_thread_cap();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
