#pragma once

#include <span>

#include "dpm/matrix.hpp"
#include "dpm/params.hpp"

namespace dpm {

// Linear heads over the hidden state: next-visit MRI forecast, next-visit
// cognitive forecast, and current-visit status probabilities.
struct HeadParams {
  ParamEntry* mri_w = nullptr;  // D_mri x H
  ParamEntry* mri_b = nullptr;
  ParamEntry* cog_w = nullptr;  // D_cog x H
  ParamEntry* cog_b = nullptr;
  ParamEntry* status_w = nullptr;  // K x H
  ParamEntry* status_b = nullptr;
};

struct PredictionBundle {
  Vec mri_next;       // forecast for the following visit
  Vec cog_next;       // forecast for the following visit
  Vec status_logits;  // K, retained for the backward pass
  Vec status_prob;    // K-simplex
};

PredictionBundle predict_outputs(const HeadParams& p, std::span<const double> hidden);

// Accumulates head parameter gradients and dL/dhidden. Empty seed vectors
// are treated as zero.
void heads_backward(const HeadParams& p, GradSink& sink, std::span<const double> hidden,
                    const Vec& d_mri, const Vec& d_cog, const Vec& d_logits, Vec& d_hidden);

}  // namespace dpm
