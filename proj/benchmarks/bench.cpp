// Microbenchmarks for the training hot path: dense forward/backward,
// set summarization, and a full objective step.

#include <benchmark/benchmark.h>

#include <map>

#include "metavi/mlp.hpp"
#include "metavi/nets.hpp"
#include "metavi/objectives.hpp"
#include "metavi/rng.hpp"

using namespace metavi;

static void BM_Matmul(benchmark::State& state) {
  std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor a = Tensor::zeros(n, n);
  Tensor b = Tensor::zeros(n, n);
  for (double& v : a.data()) v = rng.normal();
  for (double& v : b.data()) v = rng.normal();
  for (auto _ : state) {
    Tape tape;
    Tensor c = matmul(tape, a, b);
    benchmark::DoNotOptimize(c.data().data());
  }
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

static void BM_MlpForwardBackward(benchmark::State& state) {
  std::size_t h = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  Mlp net = Mlp::make({20, h, h, 2}, Activation::relu, rng);
  Tensor x = Tensor::zeros(20, 20);
  for (double& v : x.data()) v = rng.normal();
  for (auto _ : state) {
    Tape tape;
    Tensor loss = mean_all(tape, square(tape, net.forward(tape, x)));
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_MlpForwardBackward)->Arg(10)->Arg(64)->Arg(256);

static void BM_SummaryPooling(benchmark::State& state) {
  std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  SummaryNet summary;
  summary.mlp = Mlp::make({2, 10, 10}, Activation::leaky_relu, rng);
  Tensor bundle = Tensor::zeros(n, 2);
  for (double& v : bundle.data()) v = rng.normal();
  for (auto _ : state) {
    Tape tape;
    Tensor s = summary.summarize(tape, bundle);
    benchmark::DoNotOptimize(s.data().data());
  }
}
BENCHMARK(BM_SummaryPooling)->Arg(20)->Arg(100)->Arg(1000);

static void BM_MetaObjectiveStep(benchmark::State& state) {
  Rng rng(4);
  MetaInferenceModel meta;
  meta.summary.mlp = Mlp::make({2, 10, 10}, Activation::leaky_relu, rng);
  meta.aggregator = Mlp::make({12, 10, 1}, Activation::relu, rng);
  meta.kind = PosteriorKind::bernoulli;
  meta.latent_dim = 1;
  GenerativeModel gen;
  gen.prior = {PosteriorKind::bernoulli, 1.0, 0.5};
  gen.likelihood = Family::make(FamilyTag::gaussian_fixed_var);
  gen.obs_dim = 2;
  gen.decoder = Mlp::make({1, 10, 10, 2}, Activation::relu, rng);

  MetaBatchEntry entry;
  entry.dataset_id = "d";
  entry.bundle = Tensor::zeros(20, 2);
  entry.x = Tensor::zeros(20, 2);
  for (double& v : entry.bundle.data()) v = rng.normal();
  for (double& v : entry.x.data()) v = rng.normal();
  std::map<std::string, const GenerativeModel*> gens{{"d", &gen}};

  for (auto _ : state) {
    Tape tape;
    LossBreakdown lb = meta_elbo(tape, meta, gens, {entry});
    Tensor loss = neg(tape, lb.total);
    tape.backward(loss);
    benchmark::DoNotOptimize(lb.value());
  }
}
BENCHMARK(BM_MetaObjectiveStep);

BENCHMARK_MAIN();
