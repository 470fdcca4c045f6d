#include <benchmark/benchmark.h>

#include <random>

#include "cgmvae/autodiff.hpp"
#include "cgmvae/losses.hpp"
#include "cgmvae/metrics.hpp"
#include "cgmvae/model.hpp"
#include "cgmvae/rng.hpp"

using namespace cgmvae;

namespace {

std::vector<double> randn(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Roughly the scene shape: 294 features, 6 labels.
struct Problem {
  ModelParams params;
  Batch batch;
};

Problem make_problem(std::size_t batch_size) {
  ModelConfig c;
  c.input_dim = 294;
  c.num_labels = 6;
  c.embedding_dim = 512;
  c.latent_dim = 64;
  c.feature_hidden = {256, 512, 256};
  c.label_hidden = {256, 512};
  c.decoder_hidden = {512, 512};
  Problem p{ModelParams::initialize(c, 1), {}};
  p.batch.features = RealMatrix(batch_size, c.input_dim, randn(batch_size * c.input_dim, 2));
  p.batch.labels = LabelMatrix(batch_size, c.num_labels);
  std::mt19937_64 rng(3);
  for (std::size_t r = 0; r < batch_size; ++r) p.batch.labels(r, rng() % c.num_labels) = 1;
  for (std::size_t r = 0; r < batch_size; ++r) p.batch.rows.push_back(r);
  return p;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = randn(n * n, 1), b = randn(n * n, 2);
  for (auto _ : state) {
    ad::Tape t;
    auto c = ad::matmul(t.constant({n, n}, a), t.constant({n, n}, b));
    benchmark::DoNotOptimize(c.values().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(512);

static void BM_ObjectiveForward(benchmark::State& state) {
  const auto p = make_problem(static_cast<std::size_t>(state.range(0)));
  std::uint64_t step = 0;
  for (auto _ : state) {
    auto rng = make_rng(1, Stream::Sampling, ++step);
    ForwardMode eval;
    benchmark::DoNotOptimize(total_objective(p.batch, p.params, eval, rng).total);
  }
}
BENCHMARK(BM_ObjectiveForward)->Arg(32)->Arg(128);

static void BM_ObjectiveBackward(benchmark::State& state) {
  const auto p = make_problem(static_cast<std::size_t>(state.range(0)));
  std::uint64_t step = 0;
  for (auto _ : state) {
    ++step;
    auto sampling = make_rng(1, Stream::Sampling, step);
    auto dropout = make_rng(1, Stream::Dropout, step);
    ForwardMode mode{true, &dropout};
    ad::Tape tape;
    BoundModel m(tape, p.params, true);
    const auto obj = total_objective(m, p.batch, mode, sampling);
    tape.backward(obj.total);
    benchmark::DoNotOptimize(m.gradients());
  }
}
BENCHMARK(BM_ObjectiveBackward)->Arg(32)->Arg(128);

static void BM_Metrics(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t l = 14;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u;
  RealMatrix probs(n, l);
  LabelMatrix y(n, l);
  for (auto& v : probs.data) v = u(rng);
  for (auto& v : y.data) v = u(rng) < 0.3 ? 1 : 0;
  for (auto _ : state) benchmark::DoNotOptimize(compute_report(probs, y));
}
BENCHMARK(BM_Metrics)->Arg(241)->Arg(10000);

BENCHMARK_MAIN();
