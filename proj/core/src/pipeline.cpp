#include <cmath>

#include "dpm/pipeline.hpp"

namespace dpm {

FoldOutcome run_fold(Model& model, const Cohort& raw, const FoldSplit& split, const TrainConfig& cfg,
                     const LossWeights& weights, const EvalOptions& eval_options, std::size_t fold) {
  FoldOutcome out;
  out.fold = fold;
  out.split = split;

  Cohort working = raw;
  out.normalization = fit_normalizer(subset_cohort(raw, split.train));
  apply_normalizer(working, out.normalization);

  const Cohort train_split = subset_cohort(working, split.train);
  const Cohort val_split = subset_cohort(working, split.val);
  out.train = train_model(model, train_split, val_split, cfg, weights);

  out.report = evaluate_model(model, gather_subjects(working, split.test), working, &out.normalization,
                              eval_options);
  out.report.fold = fold;
  out.report.split = "test";
  out.report.seed = cfg.seed;
  return out;
}

MetricSummary summarize_folds(const std::vector<FoldOutcome>& folds) {
  MetricSummary s;
  if (folds.empty()) return s;
  const double n = static_cast<double>(folds.size());
  const auto mean_std = [&](auto get, double& mean, double& sd) {
    mean = 0.0;
    for (const FoldOutcome& f : folds) mean += get(f);
    mean /= n;
    double var = 0.0;
    for (const FoldOutcome& f : folds) var += (get(f) - mean) * (get(f) - mean);
    sd = std::sqrt(var / n);
  };
  mean_std([](const FoldOutcome& f) { return f.report.classification.mauc; }, s.mean_mauc, s.std_mauc);
  mean_std([](const FoldOutcome& f) { return f.report.imp_mae; }, s.mean_imp_mae, s.std_imp_mae);
  mean_std([](const FoldOutcome& f) { return f.report.forecast_mri_mae; }, s.mean_mri_mae, s.std_mri_mae);
  mean_std([](const FoldOutcome& f) { return f.report.forecast_cog_rmse; }, s.mean_cog_rmse, s.std_cog_rmse);
  return s;
}

CrossValidationResult cross_validate(const Cohort& raw, std::size_t k, const TrainConfig& cfg,
                                     const LossWeights& weights, const EvalOptions& eval_options) {
  if (k < 2) throw ArgumentError("cross_validate: k must be at least 2");
  const std::vector<FoldSplit> splits = stratified_folds(raw, k, cfg.val_frac, cfg.test_frac, cfg.seed);

  CrossValidationResult out;
  ModelDims dims;
  dims.d_mri = raw.d_mri();
  dims.d_cog = raw.d_cog();
  dims.hidden = cfg.hidden;

  for (std::size_t f = 0; f < k; ++f) {
    Model model(dims);
    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = cfg.seed ^ (0x9E3779B97F4A7C15ull * (f + 1));
    out.folds.push_back(run_fold(model, raw, splits[f], fold_cfg, weights, eval_options, f));
  }
  out.summary = summarize_folds(out.folds);
  return out;
}

}  // namespace dpm
