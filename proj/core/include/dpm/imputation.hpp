#pragma once

#include <span>
#include <utility>

#include "dpm/matrix.hpp"
#include "dpm/params.hpp"

namespace dpm {

// Views into the parameter bundle for the imputation stage.
// Biases are stored as n x 1 matrices.
struct ImputationParams {
  ParamEntry* temporal_w = nullptr;  // D x H, previous hidden state -> estimate
  ParamEntry* temporal_b = nullptr;  // D
  ParamEntry* cross_w = nullptr;     // D x D, zero diagonal
  ParamEntry* cross_b = nullptr;     // D
  ParamEntry* decay_w = nullptr;     // D x D
  ParamEntry* decay_b = nullptr;     // D
  ParamEntry* fuse_w = nullptr;      // D x 2D, consumes [decay ++ mask]
  ParamEntry* fuse_b = nullptr;      // D
};

// Intermediates for one step, retained for the backward pass.
struct ImputationTrace {
  Vec temporal_est;  // estimate from the previous hidden state
  Vec filled;        // observed values with temporal estimates substituted
  Vec cross_est;     // estimate from the other features at this step
  Vec decay_pre;     // pre-activation of the decay factor
  Vec decay;         // in (0,1], shrinks trust in stale context
  Vec fuse_in;       // [decay ++ mask], length 2D
  Vec fuse;          // in (0,1), convex weight on the cross estimate
  Vec fused_est;     // convex combination of the two estimates
  Vec completed;     // observed values with fused estimates substituted
};

// temporal_est = W h_prev + b; filled = x where observed, temporal_est elsewhere.
std::pair<Vec, Vec> temporal_estimate(const ImputationParams& p, std::span<const double> h_prev,
                                      std::span<const double> x, std::span<const double> mask);

// cross_est = W filled + b; the zero diagonal makes component d independent
// of filled[d]. Throws InternalError if the diagonal constraint is broken.
Vec multivariate_estimate(const ImputationParams& p, std::span<const double> filled);

// decay = exp(-max(0, W delta + b)); fuse = sigmoid(W [decay ++ mask] + b).
// Returns (decay, fuse); negative delays raise ArgumentError.
std::pair<Vec, Vec> fusion_weights(const ImputationParams& p, std::span<const double> delta,
                                   std::span<const double> mask);

// fused = fuse * cross_est + (1 - fuse) * temporal_est;
// completed = x where observed, fused elsewhere.
std::pair<Vec, Vec> impute_step(std::span<const double> x, std::span<const double> mask,
                                std::span<const double> temporal_est, std::span<const double> cross_est,
                                std::span<const double> fuse);

ImputationTrace impute_forward(const ImputationParams& p, std::span<const double> h_prev,
                               std::span<const double> x, std::span<const double> mask,
                               std::span<const double> delta);

// Direct loss gradients on the three estimates (empty means zero).
struct ImputationSeeds {
  Vec d_temporal;  // dL/d temporal_est
  Vec d_cross;     // dL/d cross_est
  Vec d_fused;     // dL/d fused_est
};

// Accumulates parameter gradients into the sink and dL/dh_prev into
// d_h_prev, given d_completed = dL/d completed plus optional seeds.
void impute_backward(const ImputationParams& p, GradSink& sink, const ImputationTrace& trace,
                     std::span<const double> h_prev, std::span<const double> mask,
                     std::span<const double> delta, std::span<const double> d_completed,
                     const ImputationSeeds* seeds, Vec& d_h_prev);

}  // namespace dpm
