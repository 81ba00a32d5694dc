#pragma once

#include <cstdint>
#include <vector>

#include "dpm/checkpoint.hpp"
#include "dpm/cohort.hpp"
#include "dpm/evaluation.hpp"
#include "dpm/training.hpp"

namespace dpm {

// One fully trained and scored split.
struct FoldOutcome {
  std::size_t fold = 0;
  FoldSplit split;
  NormalizationSpec normalization;
  TrainResult train;
  MetricReport report;  // test split
};

// Normalizes with statistics fitted on the training subjects, trains a fresh
// model, and scores the test subjects. The model is left holding the best
// parameters; `fold` only stamps provenance.
FoldOutcome run_fold(Model& model, const Cohort& raw, const FoldSplit& split, const TrainConfig& cfg,
                     const LossWeights& weights, const EvalOptions& eval_options, std::size_t fold);

struct MetricSummary {
  double mean_mauc = 0.0, std_mauc = 0.0;
  double mean_imp_mae = 0.0, std_imp_mae = 0.0;
  double mean_mri_mae = 0.0, std_mri_mae = 0.0;
  double mean_cog_rmse = 0.0, std_cog_rmse = 0.0;
};

struct CrossValidationResult {
  std::vector<FoldOutcome> folds;
  MetricSummary summary;
};

// Stratified k-fold experiment: independent (train, val, test) resamples,
// one model per fold, mean/std aggregation across folds.
CrossValidationResult cross_validate(const Cohort& raw, std::size_t k, const TrainConfig& cfg,
                                     const LossWeights& weights, const EvalOptions& eval_options);

MetricSummary summarize_folds(const std::vector<FoldOutcome>& folds);

}  // namespace dpm
