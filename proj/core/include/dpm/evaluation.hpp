#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dpm/cohort.hpp"
#include "dpm/model.hpp"

namespace dpm {

// Pointwise regression metrics over scored prediction/target pairs.
struct RegressionMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  double mre = 0.0;  // sum |err| / sum |target|
  std::size_t count = 0;
};

RegressionMetrics regression_metrics(const Vec& predictions, const Vec& targets);

// Multi-class ranking and argmax quality.
struct ClassificationMetrics {
  double mauc = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  Vec precision;            // per class, 0 when the class was never predicted
  Vec recall;               // per class, 0 when the class never occurs
  DenseMatrix confusion;    // confusion(actual, predicted)
  std::size_t count = 0;
};

// Pairwise multi-class AUC (average of one-vs-one AUCs, ties resolved by midranks).
// Class pairs with no representatives are skipped with a warning; fewer than two
// represented classes is an error.
double hand_till_mauc(const std::vector<Vec>& probs, const std::vector<int>& labels, int classes);

ClassificationMetrics classification_metrics(const std::vector<Vec>& probs, const std::vector<int>& labels,
                                             int classes);

// Correlation between a continuous value and a binary indicator; 0 when either
// side is degenerate.
double point_biserial(const Vec& values, const std::vector<std::uint8_t>& indicator);

// A per-visit status trajectory; `known[t]` marks usable entries.
struct StatusPath {
  Vec times;
  std::vector<int> status;
  std::vector<std::uint8_t> known;
};

struct ConversionMetrics {
  std::size_t converters = 0;  // truth: baseline non-AD subjects that reach AD
  std::size_t detected = 0;    // predicted to reach AD at any visit
  std::size_t missed = 0;
  double accuracy = 0.0;   // detected / converters
  double time_mae = 0.0;   // years, over detected converters only

  bool applicable() const { return converters > 0; }
};

ConversionMetrics conversion_metrics(const std::vector<StatusPath>& truth,
                                     const std::vector<StatusPath>& predicted);

// Recurrent-cell correlates of disease stage.
struct CellGroupReport {
  std::string name;
  std::size_t samples = 0;
  Vec correlation;                   // per unit, scaled by the group's coefficient std
  std::vector<std::size_t> ranked;   // unit ids, |correlation| descending
  std::vector<std::size_t> flagged;  // top share of `ranked`
};

struct CellAnalysis {
  CellGroupReport cn_mci;
  CellGroupReport mci_ad;
  std::vector<std::size_t> common;  // units flagged in both groups
};

// Correlates each cell-state unit with disease stage on two subject groups:
// CN/MCI subjects (indicator: at or past MCI) and MCI/AD subjects (indicator:
// AD). `per_subject` averages per-subject correlations instead of pooling steps.
CellAnalysis cell_state_analysis(const Model& model, const std::vector<const SubjectSequence*>& subjects,
                                 double top_fraction = 0.25, bool per_subject = false);

struct RelativeChangeCurves {
  DenseMatrix pred;   //D x T
  DenseMatrix truth;  // D x T
};

// Per-feature change of both curves relative to the given baseline values,
// r_t = (y_t - y_0)/y_0, then jointly scaled per feature so the largest
// |change| across the two curves is 1. Features with a (near-)zero baseline
// are zeroed out with a warning.
RelativeChangeCurves relative_change(const DenseMatrix& pred, const DenseMatrix& truth, const Vec& baseline);

enum class BaselineImputer { mean, forward, zero };

// Fills every entry with the baseline estimate; `visible` gates what forward
// filling may look at, `fallback_mean` is the per-feature training mean.
DenseMatrix baseline_impute(const DenseMatrix& values, const DenseMatrix& visible, BaselineImputer kind,
                            const Vec& fallback_mean);

// Per-feature means over visible entries (features with none fall back to 0).
Vec feature_means(const std::vector<const SubjectSequence*>& subjects, const std::vector<DenseMatrix>& keeps);

struct BaselineComparison {
  std::size_t entries = 0;
  double model_mae = 0.0;
  double mean_mae = 0.0;
  double forward_mae = 0.0;
  double zero_mae = 0.0;
};

// Hides a fraction of observed entries and scores the model's fused estimate
// against mean/forward/zero imputers on the hidden entries (normalized space).
BaselineComparison compare_imputation_baselines(const Model& model,
                                                const std::vector<const SubjectSequence*>& subjects,
                                                double removal_fraction, std::uint64_t seed);

// Predicted status trajectory over a subject's own visit grid, rolled out from
// the baseline visit alone.
StatusPath predict_status_path(const Model& model, const SubjectSequence& seq);

struct EvalOptions {
  double removal_fraction = 0.1;       // held-out share for imputation scoring
  std::uint64_t seed = 1;
  std::vector<std::size_t> horizons = {1, 5};
  bool rollout = true;
  bool conversion = true;
};

struct MetricReport {
  // Provenance.
  std::size_t fold = 0;
  std::string split;
  std::uint64_t seed = 0;

  std::size_t subjects = 0;
  std::size_t visits = 0;

  std::size_t imp_entries = 0;  // hidden observed entries scored
  double imp_mae = 0.0;
  double imp_rmse = 0.0;
  double imp_mre = 0.0;
  BaselineComparison baselines;

  std::vector<std::string> mri_features;
  Vec mri_mae;  // next-visit forecast, original units
  std::vector<std::string> cog_features;
  Vec cog_rmse;  // next-visit forecast, original units
  double forecast_mri_mae = 0.0;
  double forecast_cog_rmse = 0.0;
  std::size_t forecast_entries = 0;

  ClassificationMetrics classification;
  std::vector<std::pair<std::size_t, double>> rollout_mauc;  // (horizon, mauc)

  bool has_conversion = false;
  ConversionMetrics conversion;
};

// Scores a trained model on (already normalized) subjects. `normalization`
// maps forecasts back to original units; pass nullptr to report normalized
// units instead.
MetricReport evaluate_model(const Model& model, const std::vector<const SubjectSequence*>& subjects,
                            const Cohort& features_from, const NormalizationSpec* normalization,
                            const EvalOptions& options);

std::vector<const SubjectSequence*> gather_subjects(const Cohort& cohort, const std::vector<std::size_t>& indices);

}  // namespace dpm
