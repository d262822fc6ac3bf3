#include <benchmark/benchmark.h>

#include <omp.h>

#include <random>

#include "dire/ddim.hpp"
#include "dire/epsnet.hpp"
#include "dire/nn/kernels.hpp"
#include "dire/residual.hpp"
#include "dire/rng.hpp"

using namespace dire;

namespace {

struct ConvCase {
  nn::ConvGeom g;
  nn::Act x;
  nn::AlignedVec<float> w, b;
};

ConvCase make_case(int cin, int cout, int n, int hw, int stride) {
  ConvCase c{{cin, cout, 3, stride, 1}, nn::Act(cin, n, hw, hw), {}, {}};
  std::mt19937_64 rng(1);
  std::normal_distribution<float> d(0.0f, 0.1f);
  for (float& v : c.x.v) v = d(rng);
  c.w.resize(static_cast<std::size_t>(cout) * c.g.patch());
  c.b.resize(cout);
  for (float& v : c.w) v = d(rng);
  for (float& v : c.b) v = d(rng);
  return c;
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({16, 16, 32, 32, 1})->Args({32, 32, 32, 16, 1})->Args({16, 32, 32, 32, 2});
}

void BM_ConvReference(benchmark::State& st) {
  const ConvCase c = make_case(st.range(0), st.range(1), st.range(2), st.range(3), st.range(4));
  for (auto _ : st) benchmark::DoNotOptimize(nn::conv2d_forward_reference<float>(c.g, c.x, c.w, c.b));
}
BENCHMARK(BM_ConvReference)->Apply(conv_args)->Unit(benchmark::kMillisecond);

void BM_ConvParallel(benchmark::State& st) {
  const ConvCase c = make_case(st.range(0), st.range(1), st.range(2), st.range(3), st.range(4));
  for (auto _ : st) benchmark::DoNotOptimize(nn::conv2d_forward<float>(c.g, c.x, c.w, c.b));
  st.counters["threads"] = omp_get_max_threads();
}
BENCHMARK(BM_ConvParallel)->Apply(conv_args)->Unit(benchmark::kMillisecond);

// Invert plus reconstruct at S=20 for a batch of 16 images.
void BM_DireBatch(benchmark::State& st) {
  const int jobs = static_cast<int>(st.range(0));
  EpsNetConfig cfg;
  cfg.base_width = 16;
  const EpsModel m = EpsModel::init(cfg, linear_schedule(200, 1e-4, 0.02), 3);
  const StepSequence seq = make_subsequence(200, 20);
  ImageBatch imgs;
  Rng rng(5);
  for (int i = 0; i < 16; ++i) imgs.push_back(clamp(standard_normal(cfg.image_shape(), rng), -1.0f, 1.0f));
  for (auto _ : st) benchmark::DoNotOptimize(compute_dire_batch(imgs, m, m.schedule(), seq, true, jobs));
  st.counters["jobs"] = jobs;
}
BENCHMARK(BM_DireBatch)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
