#include <benchmark/benchmark.h>

#include <cstddef>
#include <span>
#include <vector>

#include "dpm/cohort.hpp"
#include "dpm/evaluation.hpp"
#include "dpm/model.hpp"
#include "dpm/rng.hpp"
#include "dpm/training.hpp"

namespace {

dpm::Cohort bench_cohort(std::size_t subjects, std::size_t visits) {
  return dpm::synthesize_cohort(subjects, visits, 6, 3, 0.3, 99);
}

dpm::Model bench_model(const dpm::Cohort& cohort, std::size_t hidden) {
  dpm::ModelDims dims;
  dims.d_mri = cohort.d_mri();
  dims.d_cog = cohort.d_cog();
  dims.hidden = hidden;
  dpm::Model model(dims);
  model.init_params(7);
  return model;
}

}  // namespace

static void BM_UnrollForward(benchmark::State& state) {
  const dpm::Cohort cohort = bench_cohort(1, 11);
  dpm::Model model = bench_model(cohort, static_cast<std::size_t>(state.range(0)));
  const dpm::TrainItem item = dpm::make_train_item(cohort.subjects[0], nullptr);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.unroll(item.input));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(item.input.steps()));
}
BENCHMARK(BM_UnrollForward)->Arg(16)->Arg(32)->Arg(64)->Arg(128);

static void BM_BatchLossAndGrad(benchmark::State& state) {
  const std::size_t subjects = static_cast<std::size_t>(state.range(0));
  const dpm::Cohort cohort = bench_cohort(subjects, 11);
  dpm::Model model = bench_model(cohort, 64);
  const dpm::RemovalPlan removal = dpm::plan_random_removal(cohort, 0.1, 11);
  std::vector<dpm::TrainItem> items;
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i)
    items.push_back(dpm::make_train_item(cohort.subjects[i], &removal.keep[i]));
  const dpm::LossWeights weights;
  const dpm::TrainConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        dpm::batch_loss_and_grad(model, std::span<const dpm::TrainItem>(items), weights, cfg));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(subjects));
}
BENCHMARK(BM_BatchLossAndGrad)->Arg(8)->Arg(32)->Arg(64);

static void BM_AdamStep(benchmark::State& state) {
  const dpm::Cohort cohort = bench_cohort(8, 11);
  dpm::Model model = bench_model(cohort, static_cast<std::size_t>(state.range(0)));
  const dpm::RemovalPlan removal = dpm::plan_random_removal(cohort, 0.1, 11);
  std::vector<dpm::TrainItem> items;
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i)
    items.push_back(dpm::make_train_item(cohort.subjects[i], &removal.keep[i]));
  // Populate gradients once; the step itself is what gets timed.
  dpm::batch_loss_and_grad(model, std::span<const dpm::TrainItem>(items), dpm::LossWeights{},
                           dpm::TrainConfig{});
  dpm::AdamState adam_state;
  const dpm::AdamConfig adam;
  for (auto _ : state) {
    dpm::adam_update(model.bundle(), adam_state, adam);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_AdamStep)->Arg(16)->Arg(64)->Arg(128);

static void BM_HandTillMauc(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  dpm::Rng rng(5);
  std::vector<dpm::Vec> probs;
  std::vector<int> labels;
  for (std::size_t i = 0; i < n; ++i) {
    dpm::Vec p(3);
    double sum = 0.0;
    for (double& v : p) { v = rng.uniform(0.05, 1.0); sum += v; }
    for (double& v : p) v /= sum;
    probs.push_back(std::move(p));
    labels.push_back(static_cast<int>(rng.integer(3)));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(dpm::hand_till_mauc(probs, labels, 3));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_HandTillMauc)->Range(256, 16384);

static void BM_SynthesizeCohort(benchmark::State& state) {
  const std::size_t subjects = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(dpm::synthesize_cohort(subjects, 11, 6, 3, 0.3, 99));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(subjects));
}
BENCHMARK(BM_SynthesizeCohort)->Arg(50)->Arg(200);

BENCHMARK_MAIN();
