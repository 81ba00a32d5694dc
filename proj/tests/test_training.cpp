#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

#include "dpm/checkpoint.hpp"
#include "dpm/gradcheck.hpp"
#include "dpm/pipeline.hpp"
#include "dpm/rng.hpp"
#include "dpm/training.hpp"

using namespace dpm;

namespace {

// Traces carrying only what the loss functions read.
std::vector<StepTrace> estimate_traces(const std::vector<Vec>& temporal, const std::vector<Vec>& cross,
                                       const std::vector<Vec>& fused) {
  std::vector<StepTrace> traces(temporal.size());
  for (std::size_t t = 0; t < temporal.size(); ++t) {
    traces[t].imp.temporal_est = temporal[t];
    traces[t].imp.cross_est = cross[t];
    traces[t].imp.fused_est = fused[t];
  }
  return traces;
}

Cohort normalized_synthetic(std::size_t n, std::size_t visits, std::size_t d_mri, std::size_t d_cog,
                            double missing, std::uint64_t seed) {
  Cohort c = synthesize_cohort(n, visits, d_mri, d_cog, missing, seed);
  apply_normalizer(c, fit_normalizer(c));
  return c;
}

}  // namespace

TEST_CASE("imputation loss: nothing hidden means zero") {
  DenseMatrix values(1, 1, 2.0), observed(1, 1, 1.0), keep(1, 1, 1.0);
  auto traces = estimate_traces({{1.0}}, {{3.0}}, {{2.0}});
  CHECK_EQ(loss_imputation(traces, values, observed, keep), 0.0);
}

TEST_CASE("imputation loss: one hidden entry by hand") {
  // Truth 2 with estimates 1, 3, 2 -> |1| + |1| + |0| = 2.
  DenseMatrix values(1, 1, 2.0), observed(1, 1, 1.0), keep(1, 1, 0.0);
  auto traces = estimate_traces({{1.0}}, {{3.0}}, {{2.0}});
  CHECK_EQ(loss_imputation(traces, values, observed, keep), 2.0);
}

TEST_CASE("imputation loss matches a scalar-loop oracle") {
  Rng rng(121);
  for (int it = 0; it < 50; ++it) {
    const std::size_t d = 1 + rng.integer(4), T = 1 + rng.integer(5);
    DenseMatrix values(d, T), observed(d, T), keep(d, T, 1.0);
    std::vector<Vec> temporal(T, Vec(d)), cross(T, Vec(d)), fused(T, Vec(d));
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t t = 0; t < T; ++t) {
        values(k, t) = rng.uniform(-2.0, 2.0);
        observed(k, t) = rng.uniform() < 0.7 ? 1.0 : 0.0;
        if (observed(k, t) != 0.0 && rng.uniform() < 0.4) keep(k, t) = 0.0;
        temporal[t][k] = rng.uniform(-2.0, 2.0);
        cross[t][k] = rng.uniform(-2.0, 2.0);
        fused[t][k] = rng.uniform(-2.0, 2.0);
      }
    auto traces = estimate_traces(temporal, cross, fused);

    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t t = 0; t < T; ++t)
        if (observed(k, t) != 0.0 && keep(k, t) == 0.0) {
          sum += std::abs(values(k, t) - temporal[t][k]) + std::abs(values(k, t) - cross[t][k]) +
                 std::abs(values(k, t) - fused[t][k]);
          ++count;
        }
    const double expect = count == 0 ? 0.0 : sum / static_cast<double>(count);
    CHECK(std::abs(loss_imputation(traces, values, observed, keep) - expect) < 1e-12);
    // Raw-sum variant.
    CHECK(std::abs(loss_imputation(traces, values, observed, keep, ImputationLossMode::removed_truth,
                                   false) -
                   sum) < 1e-12);
  }
}

TEST_CASE("forecast loss: perfect predictions and unobserved targets score zero") {
  const std::size_t d = 3, T = 3;
  DenseMatrix values(d, T), observed(d, T, 1.0);
  Rng rng(122);
  for (double& v : values.data) v = rng.uniform(-1.0, 1.0);
  std::vector<StepTrace> traces(T);
  for (std::size_t t = 0; t < T; ++t) {
    traces[t].pred.mri_next = {t + 1 < T ? values(0, t + 1) : 0.0, t + 1 < T ? values(1, t + 1) : 0.0};
    traces[t].pred.cog_next = {t + 1 < T ? values(2, t + 1) : 0.0};
  }
  CHECK_EQ(loss_forecast(traces, values, observed, 2), 0.0);

  DenseMatrix none(d, T, 0.0);
  CHECK_EQ(loss_forecast(traces, values, none, 2), 0.0);
}

TEST_CASE("forecast loss: one scored entry by hand") {
  // Truth 1 at the second visit, prediction 0.5 -> squared error 0.25.
  DenseMatrix values(2, 2), observed(2, 2, 0.0);
  values(0, 1) = 1.0;
  observed(0, 1) = 1.0;
  std::vector<StepTrace> traces(2);
  traces[0].pred.mri_next = {0.5};
  traces[0].pred.cog_next = {9.0};  // unobserved target, never scored
  traces[1].pred.mri_next = {0.0};
  traces[1].pred.cog_next = {0.0};
  CHECK_EQ(doctest::Approx(loss_forecast(traces, values, observed, 1)).epsilon(1e-14), 0.25);
}

TEST_CASE("forecast loss: single visit returns zero") {
  DenseMatrix values(2, 1, 1.0), observed(2, 1, 1.0);
  std::vector<StepTrace> traces(1);
  traces[0].pred.mri_next = {0.0};
  traces[0].pred.cog_next = {0.0};
  CHECK_EQ(loss_forecast(traces, values, observed, 1), 0.0);
}

TEST_CASE("focal loss: hand value at epsilon five") {
  std::vector<Vec> probs{{0.5, 0.25, 0.25}, {0.9, 0.05, 0.05}};
  std::vector<int> labels{0, 0};
  std::vector<std::uint8_t> seen{1, 1};  // final visit is never scored
  const double expect = std::pow(0.5, 5.0) * std::log(2.0);
  CHECK(std::abs(loss_focal(probs, labels, seen, 5.0) - expect) < 1e-12);
}

TEST_CASE("focal loss: epsilon zero equals cross-entropy") {
  Rng rng(123);
  for (int it = 0; it < 200; ++it) {
    const std::size_t T = 2 + rng.integer(5);
    std::vector<Vec> probs(T);
    std::vector<int> labels(T);
    std::vector<std::uint8_t> seen(T);
    for (std::size_t t = 0; t < T; ++t) {
      Vec logits{rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)};
      probs[t] = softmax(logits);
      labels[t] = static_cast<int>(rng.integer(3));
      seen[t] = rng.uniform() < 0.8 ? 1 : 0;
    }
    double ce = 0.0;
    std::size_t steps = 0;
    for (std::size_t t = 0; t + 1 < T; ++t)
      if (seen[t]) {
        ce -= std::log(probs[t][labels[t]]);
        ++steps;
      }
    if (steps == 0) continue;
    CHECK(std::abs(loss_focal(probs, labels, seen, 0.0) - ce / static_cast<double>(steps)) < 1e-12);
  }
}

TEST_CASE("focal loss: no observed labels means zero") {
  std::vector<Vec> probs{{0.5, 0.3, 0.2}, {0.5, 0.3, 0.2}};
  std::vector<int> labels{0, 1};
  std::vector<std::uint8_t> seen{0, 0};
  CHECK_EQ(loss_focal(probs, labels, seen, 5.0), 0.0);
}

TEST_CASE("focal term guards its domain") {
  CHECK_THROWS_AS(focal_term({0.5, 0.5}, 2, 1.0), ArgumentError);
  CHECK_THROWS_AS(focal_term({0.0, 1.0}, 0, 1.0), NumericError);
}

TEST_CASE("focal logit gradient matches finite differences") {
  Rng rng(124);
  for (int it = 0; it < 100; ++it) {
    Vec logits{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
    const int label = static_cast<int>(rng.integer(3));
    const double eps = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.5, 6.0);
    Vec grad = focal_logit_grad(softmax(logits), label, eps);
    for (std::size_t j = 0; j < 3; ++j) {
      Vec lo = logits, hi = logits;
      lo[j] -= 1e-6;
      hi[j] += 1e-6;
      const double fd = (focal_term(softmax(hi), label, eps) - focal_term(softmax(lo), label, eps)) / 2e-6;
      CHECK(std::abs(grad[j] - fd) < 1e-6);
    }
  }
}

TEST_CASE("total loss: weights and the l2 term") {
  LossWeights defaults;
  CHECK_EQ(defaults.alpha, 0.1);
  CHECK_EQ(defaults.zeta, 0.5);
  CHECK_EQ(defaults.xi, 0.5);
  CHECK_EQ(defaults.epsilon, 5.0);

  LossSums sums;
  sums.imputation = 3.0;
  sums.imputation_terms = 2;
  sums.mri = 4.0;
  sums.mri_terms = 4;
  sums.cog = 1.0;
  sums.cog_terms = 1;
  sums.focal = 0.7;
  sums.focal_steps = 7;

  LossWeights zero{0.0, 0.0, 0.0, 5.0};
  CHECK_EQ(loss_total(sums, zero, 0.0, nullptr, true).total, 0.0);

  LossWeights w{0.2, 0.3, 0.4, 5.0};
  LossBreakdown one = loss_total(sums, w, 0.0, nullptr, true);
  LossWeights w2{0.4, 0.6, 0.8, 5.0};
  LossBreakdown two = loss_total(sums, w2, 0.0, nullptr, true);
  CHECK(std::abs(two.total - 2.0 * one.total) < 1e-12);

  const double expect = 0.2 * 1.5 + 0.3 * (1.0 + 1.0) + 0.4 * 0.1;
  CHECK(std::abs(one.total - expect) < 1e-12);

  // l2 counts weight matrices only.
  ParamBundle bundle;
  bundle.add("w", 1, 2).value.data = {2.0, 1.0};
  bundle.add("b", 2, 1, false, /*regularize=*/false).value.data = {5.0, 5.0};
  LossBreakdown reg = loss_total(sums, zero, 0.01, &bundle, true);
  CHECK_EQ(doctest::Approx(reg.total).epsilon(1e-14), 0.01 * 5.0);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  ParamBundle bundle;
  ParamEntry& w = bundle.add("w", 2, 2);
  w.value.data = {1.0, -2.0, 3.0, 0.5};
  Vec before = w.value.data;
  AdamState state;
  adam_update(bundle, state, AdamConfig{});
  CHECK(w.value.data == before);
}

TEST_CASE("adam: first step moves each component by about the learning rate") {
  ParamBundle bundle;
  ParamEntry& w = bundle.add("w", 1, 3);
  w.value.data = {0.0, 1.0, -1.0};
  w.grad.data = {0.3, -4.0, 1e-3};
  AdamState state;
  AdamConfig cfg;
  cfg.learning_rate = 1e-3;
  adam_update(bundle, state, cfg);
  CHECK_EQ(doctest::Approx(w.value.data[0]).epsilon(1e-6), -1e-3);
  CHECK_EQ(doctest::Approx(w.value.data[1]).epsilon(1e-6), 1.0 + 1e-3);
  CHECK_EQ(doctest::Approx(w.value.data[2]).epsilon(1e-4), -1.0 - 1e-3);
}

TEST_CASE("adam: pinned diagonal stays zero under noisy updates") {
  ParamBundle bundle;
  ParamEntry& w = bundle.add("w", 4, 4, /*zero_diagonal=*/true);
  Rng rng(125);
  init_uniform(w.value, rng, 0.5);
  bundle.project_values();
  AdamState state;
  AdamConfig cfg;
  for (int step = 0; step < 100; ++step) {
    for (double& g : w.grad.data) g = rng.uniform(-1.0, 1.0);
    adam_update(bundle, state, cfg);
    for (std::size_t i = 0; i < 4; ++i) CHECK_EQ(w.value(i, i), 0.0);
  }
}

TEST_CASE("adam rejects non-finite gradients by name") {
  ParamBundle bundle;
  ParamEntry& w = bundle.add("bad_tensor", 1, 1);
  w.grad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  AdamState state;
  CHECK_THROWS_WITH_AS(adam_update(bundle, state, AdamConfig{}), doctest::Contains("bad_tensor"),
                       NumericError);
}

TEST_CASE("full composite loss gradient matches finite differences") {
  Cohort c = normalized_synthetic(2, 3, 3, 2, 0.25, 126);
  RemovalPlan plan = plan_random_removal(c, 0.25, 127);
  std::vector<TrainItem> items;
  for (std::size_t i = 0; i < c.subjects.size(); ++i)
    items.push_back(make_train_item(c.subjects[i], &plan.keep[i]));

  ModelDims dims{3, 2, 8, 3};
  Model model(dims);
  model.init_params(128);
  TrainConfig cfg;
  cfg.l2 = 1e-3;
  cfg.threads = 1;
  LossWeights weights;

  auto loss = [&] { return batch_loss(model, items, weights, cfg).total; };
  auto grads = [&] { batch_loss_and_grad(model, items, weights, cfg); };
  GradCheckReport report = finite_diff_check(model.bundle(), loss, grads, 1e-4, 1e-5,
                                             /*subsample=*/40, /*full_limit=*/120, 129);
  CHECK(report.passed);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("batch loss is invariant to the thread count") {
  Cohort c = normalized_synthetic(6, 5, 3, 2, 0.3, 130);
  RemovalPlan plan = plan_random_removal(c, 0.2, 131);
  std::vector<TrainItem> items;
  for (std::size_t i = 0; i < c.subjects.size(); ++i)
    items.push_back(make_train_item(c.subjects[i], &plan.keep[i]));

  ModelDims dims{3, 2, 8, 3};
  Model a(dims), b(dims);
  a.init_params(132);
  b.init_params(132);
  TrainConfig one, four;
  one.threads = 1;
  four.threads = 4;
  LossWeights weights;

  LossBreakdown la = batch_loss_and_grad(a, items, weights, one);
  LossBreakdown lb = batch_loss_and_grad(b, items, weights, four);
  CHECK_EQ(la.total, lb.total);
  for (std::size_t i = 0; i < a.bundle().size(); ++i)
    CHECK(a.bundle().entry(i).grad.data == b.bundle().entry(i).grad.data);
}

TEST_CASE("training: early stopping honors zero patience") {
  Cohort c = normalized_synthetic(20, 4, 2, 1, 0.2, 133);
  Cohort train = subset_cohort(c, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13});
  Cohort val = subset_cohort(c, {14, 15, 16, 17, 18, 19});

  TrainConfig cfg;
  cfg.hidden = 6;
  cfg.epochs = 50;
  cfg.batch_size = 8;
  cfg.patience = 0;
  cfg.seed = 134;
  ModelDims dims{2, 1, cfg.hidden, 3};
  Model model(dims);
  TrainResult result = train_model(model, train, val, cfg, LossWeights{});

  CHECK(result.epochs_run < 50);
  REQUIRE(!result.history.empty());
  // The run stops at the first epoch whose val mAUC fails to strictly beat
  // the running best; the snapshot flag may still be set there by the
  // equal-mAUC loss tie-break.
  double running_best = result.history.front().val_mauc;
  for (std::size_t i = 1; i + 1 < result.history.size(); ++i) {
    CHECK(result.history[i].val_mauc > running_best);
    CHECK(result.history[i].improved);
    running_best = result.history[i].val_mauc;
  }
  CHECK(result.history.back().val_mauc <= running_best);
}

TEST_CASE("training: same seed gives identical history and checkpoint") {
  Cohort c = normalized_synthetic(24, 5, 2, 2, 0.25, 135);
  std::vector<std::size_t> tr, va;
  for (std::size_t i = 0; i < 18; ++i) tr.push_back(i);
  for (std::size_t i = 18; i < 24; ++i) va.push_back(i);
  Cohort train = subset_cohort(c, tr), val = subset_cohort(c, va);

  TrainConfig cfg;
  cfg.hidden = 6;
  cfg.epochs = 4;
  cfg.batch_size = 8;
  cfg.seed = 136;
  ModelDims dims{2, 2, cfg.hidden, 3};

  Model m1(dims), m2(dims);
  TrainResult r1 = train_model(m1, train, val, cfg, LossWeights{});
  TrainResult r2 = train_model(m2, train, val, cfg, LossWeights{});

  REQUIRE_EQ(r1.history.size(), r2.history.size());
  for (std::size_t i = 0; i < r1.history.size(); ++i) {
    CHECK_EQ(r1.history[i].train_loss, r2.history[i].train_loss);
    CHECK_EQ(r1.history[i].val_mauc, r2.history[i].val_mauc);
  }
  CheckpointMeta meta;
  meta.config = cfg;
  CHECK_EQ(checkpoint_json(m1, meta), checkpoint_json(m2, meta));
}

TEST_CASE("training: loss decreases on a learnable cohort") {
  Cohort c = normalized_synthetic(30, 6, 3, 2, 0.2, 137);
  std::vector<std::size_t> tr, va;
  for (std::size_t i = 0; i < 24; ++i) tr.push_back(i);
  for (std::size_t i = 24; i < 30; ++i) va.push_back(i);
  Cohort train = subset_cohort(c, tr), val = subset_cohort(c, va);

  TrainConfig cfg;
  cfg.hidden = 8;
  cfg.epochs = 10;
  cfg.batch_size = 8;
  cfg.seed = 138;
  ModelDims dims{3, 2, cfg.hidden, 3};
  Model model(dims);
  TrainResult result = train_model(model, train, val, cfg, LossWeights{});

  // history[0] is the pre-training evaluation; epoch 1 holds the first real loss.
  REQUIRE(result.history.size() >= 3);
  CHECK(result.history.back().train_loss < result.history[1].train_loss);
}

TEST_CASE("training rejects empty splits") {
  Cohort c = normalized_synthetic(6, 4, 2, 1, 0.2, 139);
  Cohort empty;
  empty.features = c.features;
  TrainConfig cfg;
  cfg.hidden = 4;
  ModelDims dims{2, 1, 4, 3};
  Model model(dims);
  CHECK_THROWS_AS(train_model(model, empty, c, cfg, LossWeights{}), ConfigError);
  CHECK_THROWS_AS(train_model(model, c, empty, cfg, LossWeights{}), ConfigError);
}

TEST_CASE("checkpoint: save, load, save again is byte-identical") {
  ModelDims dims{3, 2, 7, 3};
  Model model(dims);
  model.init_params(140);
  CheckpointMeta meta;
  meta.config.hidden = 7;
  meta.config.seed = 140;
  meta.best_val_mauc = 0.875;
  meta.best_epoch = 12;
  meta.normalization.features = {{"mri_0", FeatureKind::mri, 1.0, 2.0},
                                 {"mri_1", FeatureKind::mri, -1.0, 4.0},
                                 {"mri_2", FeatureKind::mri, 0.0, 9.0},
                                 {"cog_0", FeatureKind::cog, 0.0, 30.0},
                                 {"cog_1", FeatureKind::cog, 0.0, 1.0}};

  const std::string text = checkpoint_json(model, meta);
  LoadedCheckpoint loaded = checkpoint_from_json(text);
  CHECK_EQ(checkpoint_json(loaded.model, loaded.meta), text);
  CHECK_EQ(loaded.meta.best_epoch, 12);
  CHECK_EQ(loaded.meta.config.hidden, 7);

  const std::string path = (std::filesystem::temp_directory_path() / "dpm_t_ckpt.json").string();
  save_checkpoint(model, meta, path);
  LoadedCheckpoint from_disk = load_checkpoint(path);
  CHECK_EQ(checkpoint_json(from_disk.model, from_disk.meta), text);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint: malformed and mismatched payloads are data errors") {
  CHECK_THROWS_AS(checkpoint_from_json("not json"), DataError);
  CHECK_THROWS_AS(checkpoint_from_json("{\"format_version\": 99}"), DataError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.json"), DataError);
}

TEST_CASE("cross-validation: fold count, aggregation, and determinism") {
  Cohort c = synthesize_cohort(40, 5, 2, 1, 0.2, 141);
  TrainConfig cfg;
  cfg.hidden = 4;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.seed = 142;
  EvalOptions eo;
  eo.removal_fraction = 0.1;
  eo.horizons = {1};
  eo.conversion = false;

  CrossValidationResult cv = cross_validate(c, 5, cfg, LossWeights{}, eo);
  REQUIRE_EQ(cv.folds.size(), 5);

  double mean = 0.0;
  for (const FoldOutcome& f : cv.folds) mean += f.report.classification.mauc;
  mean /= 5.0;
  CHECK(std::abs(cv.summary.mean_mauc - mean) < 1e-12);

  CrossValidationResult cv2 = cross_validate(c, 5, cfg, LossWeights{}, eo);
  for (std::size_t f = 0; f < 5; ++f)
    CHECK_EQ(cv.folds[f].report.classification.mauc, cv2.folds[f].report.classification.mauc);
  CHECK_THROWS_AS(cross_validate(c, 1, cfg, LossWeights{}, eo), ArgumentError);
}
