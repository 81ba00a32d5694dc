#pragma once

#include <cstdint>
#include <vector>

#include "dpm/cohort.hpp"
#include "dpm/encoder.hpp"
#include "dpm/heads.hpp"
#include "dpm/imputation.hpp"
#include "dpm/params.hpp"

namespace dpm {

struct ModelDims {
  std::size_t d_mri = 6;
  std::size_t d_cog = 3;
  std::size_t hidden = 64;
  std::size_t classes = 3;

  std::size_t d() const { return d_mri + d_cog; }
};

// What the model actually sees for one subject: values zeroed where the
// effective mask is 0, and delays computed from that same mask.
struct SubjectInput {
  std::vector<double> times;
  DenseMatrix x;      // D x T
  DenseMatrix mask;   // D x T, observed and not artificially hidden
  DenseMatrix delta;  // D x T

  std::size_t steps() const { return times.size(); }
};

// keep, when given, hides entries of the observation mask (artificial
// removal); the model's input mask becomes observed * keep.
SubjectInput make_subject_input(const SubjectSequence& seq, const DenseMatrix* keep = nullptr);

struct StepTrace {
  Vec x, mask, delta;  // copies of the step's input columns
  ImputationTrace imp;
  CellTrace cell;
  PredictionBundle pred;
};

// Per-step loss gradients fed into the backward pass; empty means zero.
struct StepSeeds {
  Vec d_mri;       // dL/d mri forecast made at this step
  Vec d_cog;       // dL/d cog forecast made at this step
  Vec d_logits;    // dL/d status logits at this step
  Vec d_temporal;  // dL/d temporal estimate
  Vec d_cross;     // dL/d cross estimate
  Vec d_fused;     // dL/d fused estimate
};

class Model {
 public:
  explicit Model(ModelDims dims);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelDims& dims() const { return dims_; }
  ParamBundle& bundle() { return bundle_; }
  const ParamBundle& bundle() const { return bundle_; }
  const ImputationParams& imputation() const { return imputation_; }
  const CellParams& cell() const { return cell_; }
  const HeadParams& heads() const { return heads_; }

  // Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases except
  // the forget-gate bias at 1; decay biases start at zero so decay is 1.
  void init_params(std::uint64_t seed);

  // Full forward pass for one subject from zero initial state.
  std::vector<StepTrace> unroll(const SubjectInput& input) const;

  // Backpropagation through time; accumulates into the sink.
  void backward(const SubjectInput& input, const std::vector<StepTrace>& traces,
                const std::vector<StepSeeds>& seeds, GradSink& sink) const;

 private:
  ModelDims dims_;
  ParamBundle bundle_;
  ImputationParams imputation_;
  CellParams cell_;
  HeadParams heads_;
};

// One synthetic future visit produced by recursive forecasting.
struct RolloutStep {
  double time;
  PredictionBundle forecast;  // mri_next/cog_next predict this visit's values
  Vec status_prob;            // status at this visit
  Vec completed;              // imputed feature vector routed into the cell
};

struct RolloutResult {
  std::vector<StepTrace> prefix;
  std::vector<RolloutStep> future;
};

// Encodes the observed prefix, then advances one synthetic visit per entry
// of `future_times`, feeding each step's forecasts back in as a
// fully-missing observation.
RolloutResult rollout_forecast(const Model& model, const SubjectInput& prefix,
                               const std::vector<double>& future_times);

// Same, with `horizon` visits spaced `interval` years apart.
RolloutResult rollout_forecast(const Model& model, const SubjectInput& prefix, std::size_t horizon,
                               double interval);

}  // namespace dpm
