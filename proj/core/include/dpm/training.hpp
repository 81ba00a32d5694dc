#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dpm/cohort.hpp"
#include "dpm/model.hpp"

namespace dpm {

struct LossWeights {
  double alpha = 0.1;    // imputation term
  double zeta = 0.5;     // forecast terms (MRI and cognitive)
  double xi = 0.5;       // status term
  double epsilon = 5.0;  // focal exponent
};

// How the imputation loss selects entries and targets.
// removed_truth (default): score entries that were observed but artificially
// hidden, against their true values. literal_masked: score every entry the
// model did not see, against the observation vector with absent values as
// zero; kept for fidelity to the summed-mask formulation.
enum class ImputationLossMode { removed_truth, literal_masked };

struct TrainConfig {
  std::size_t hidden = 64;
  double learning_rate = 5e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 300;
  double l2 = 1e-4;
  std::uint64_t seed = 1;
  std::size_t patience = 30;
  double removal_fraction = 0.1;
  double val_frac = 0.1;
  double test_frac = 0.1;
  bool normalize_losses = true;  // divide each loss by its scored-entry count
  ImputationLossMode imputation_loss_mode = ImputationLossMode::removed_truth;
  std::size_t threads = 1;
};

// Raw sums and scored-entry counts, accumulated across subjects so that the
// single-subject loss functions and the batch path agree exactly.
struct LossSums {
  double imputation = 0.0;
  std::size_t imputation_terms = 0;
  double mri = 0.0;
  std::size_t mri_terms = 0;
  double cog = 0.0;
  std::size_t cog_terms = 0;
  double focal = 0.0;
  std::size_t focal_steps = 0;
};

struct LossBreakdown {
  double imputation = 0.0;
  double forecast_mri = 0.0;
  double forecast_cog = 0.0;
  double focal = 0.0;
  double l2 = 0.0;
  double total = 0.0;
  LossSums sums;
};

// Sum of absolute deviations of all three estimates at hidden entries,
// divided by the number of such entries when normalize is set.
double loss_imputation(const std::vector<StepTrace>& traces, const DenseMatrix& values,
                       const DenseMatrix& observed, const DenseMatrix& keep,
                       ImputationLossMode mode = ImputationLossMode::removed_truth,
                       bool normalize = true);

// Squared next-visit forecast error on observed targets; the MRI and
// cognitive parts are each divided by their own scored count when
// normalize is set, then summed.
double loss_forecast(const std::vector<StepTrace>& traces, const DenseMatrix& values,
                     const DenseMatrix& observed, std::size_t d_mri, bool normalize = true);

// Focal cross-entropy over label-observed steps, excluding the final visit;
// divided by the number of scored steps when normalize is set.
double loss_focal(const std::vector<Vec>& probs, const std::vector<int>& labels,
                  const std::vector<std::uint8_t>& label_observed, double epsilon,
                  bool normalize = true);

// -(1 - p_label)^epsilon * log(p_label)
double focal_term(const Vec& prob, int label, double epsilon);
// d(focal_term)/d(logits), through the softmax.
Vec focal_logit_grad(const Vec& prob, int label, double epsilon);

// Weighted combination of the accumulated sums plus the l2 penalty over
// weight matrices (biases excluded).
LossBreakdown loss_total(const LossSums& sums, const LossWeights& weights, double l2_coeff,
                         const ParamBundle* params, bool normalize);

// One subject prepared for training: the normalized sequence, the effective
// input view, and the removal keep mask (null when nothing is hidden).
struct TrainItem {
  const SubjectSequence* seq = nullptr;
  const DenseMatrix* keep = nullptr;
  SubjectInput input;
};

TrainItem make_train_item(const SubjectSequence& seq, const DenseMatrix* keep);

// Forward pass over the batch; traces_out, when given, receives one trace
// vector per item for reuse by the gradient pass.
LossBreakdown batch_loss(const Model& model, std::span<const TrainItem> items, const LossWeights& weights,
                         const TrainConfig& cfg, std::vector<std::vector<StepTrace>>* traces_out = nullptr);

// Forward, loss, and backpropagation; leaves dL/dtheta in the bundle
// gradients (per-subject buffers merged in item order, so the result does
// not depend on the thread count).
LossBreakdown batch_loss_and_grad(Model& model, std::span<const TrainItem> items,
                                  const LossWeights& weights, const TrainConfig& cfg);

struct AdamConfig {
  double learning_rate = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::size_t step_count = 0;
  std::vector<DenseMatrix> m, v;
};

// Bias-corrected Adam step from the bundle gradients, followed by
// constraint projection. Non-finite gradients raise NumericError naming
// the parameter.
void adam_update(ParamBundle& params, AdamState& state, const AdamConfig& cfg);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based; 0 is the pre-training evaluation
  double train_loss = 0.0;
  double val_mauc = 0.0;
  bool improved = false;  // this epoch's weights became the retained snapshot
};

struct TrainResult {
  double best_val_mauc = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::vector<EpochStats> history;
};

// Trains in place on pre-normalized splits: seeds the parameters, applies
// artificial removal to the training split, runs mini-batch epochs with
// early stopping on validation mAUC, and restores the best snapshot.
// Patience counts epochs without a strict mAUC gain; among epochs whose
// mAUC sits within a small band of the best, the snapshot keeps the one
// with the lowest validation loss (measured under a fixed removal plan so
// imputation quality counts).
TrainResult train_model(Model& model, const Cohort& train_split, const Cohort& val_split,
                        const TrainConfig& cfg, const LossWeights& weights);

}  // namespace dpm
