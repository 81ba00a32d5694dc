#include "dpm/imputation.hpp"

#include <cmath>

namespace dpm {

namespace {

std::span<const double> bias(const ParamEntry* e) {
  return std::span<const double>(e->value.data);
}

}  // namespace

std::pair<Vec, Vec> temporal_estimate(const ImputationParams& p, std::span<const double> h_prev,
                                      std::span<const double> x, std::span<const double> mask) {
  if (x.size() != mask.size())
    throw ShapeError("temporal_estimate: x has length " + std::to_string(x.size()) + ", mask has length " +
                     std::to_string(mask.size()));
  Vec est = affine_map(p.temporal_w->value, h_prev, bias(p.temporal_b));
  if (est.size() != x.size())
    throw ShapeError("temporal_estimate: estimate has length " + std::to_string(est.size()) +
                     ", x has length " + std::to_string(x.size()));
  Vec filled(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) filled[i] = mask[i] != 0.0 ? x[i] : est[i];
  return {std::move(est), std::move(filled)};
}

Vec multivariate_estimate(const ImputationParams& p, std::span<const double> filled) {
  const DenseMatrix& w = p.cross_w->value;
  for (std::size_t i = 0; i < w.rows; ++i)
    if (w(i, i) != 0.0)
      throw InternalError("multivariate_estimate: diagonal of " + p.cross_w->name + " is not zero at " +
                          std::to_string(i));
  return affine_map(w, filled, bias(p.cross_b));
}

std::pair<Vec, Vec> fusion_weights(const ImputationParams& p, std::span<const double> delta,
                                   std::span<const double> mask) {
  for (double d : delta)
    if (d < 0.0) throw ArgumentError("fusion_weights: negative delay " + std::to_string(d));
  Vec pre = affine_map(p.decay_w->value, delta, bias(p.decay_b));
  Vec decay = elementwise_activation(pre, Activation::neg_relu_exp);

  Vec fuse_in(decay.size() + mask.size());
  std::copy(decay.begin(), decay.end(), fuse_in.begin());
  std::copy(mask.begin(), mask.end(), fuse_in.begin() + static_cast<std::ptrdiff_t>(decay.size()));
  Vec fuse = elementwise_activation(affine_map(p.fuse_w->value, fuse_in, bias(p.fuse_b)),
                                    Activation::sigmoid);
  return {std::move(decay), std::move(fuse)};
}

std::pair<Vec, Vec> impute_step(std::span<const double> x, std::span<const double> mask,
                                std::span<const double> temporal_est, std::span<const double> cross_est,
                                std::span<const double> fuse) {
  const std::size_t d = x.size();
  if (mask.size() != d || temporal_est.size() != d || cross_est.size() != d || fuse.size() != d)
    throw ShapeError("impute_step: inconsistent vector lengths");
  Vec fused(d), completed(d);
  for (std::size_t i = 0; i < d; ++i) {
    fused[i] = fuse[i] * cross_est[i] + (1.0 - fuse[i]) * temporal_est[i];
    completed[i] = mask[i] != 0.0 ? x[i] : fused[i];
  }
  return {std::move(fused), std::move(completed)};
}

ImputationTrace impute_forward(const ImputationParams& p, std::span<const double> h_prev,
                               std::span<const double> x, std::span<const double> mask,
                               std::span<const double> delta) {
  ImputationTrace tr;
  auto [est, filled] = temporal_estimate(p, h_prev, x, mask);
  tr.temporal_est = std::move(est);
  tr.filled = std::move(filled);
  tr.cross_est = multivariate_estimate(p, tr.filled);

  for (double d : delta)
    if (d < 0.0) throw ArgumentError("impute_forward: negative delay " + std::to_string(d));
  tr.decay_pre = affine_map(p.decay_w->value, delta, bias(p.decay_b));
  tr.decay = elementwise_activation(tr.decay_pre, Activation::neg_relu_exp);
  tr.fuse_in.resize(tr.decay.size() + mask.size());
  std::copy(tr.decay.begin(), tr.decay.end(), tr.fuse_in.begin());
  std::copy(mask.begin(), mask.end(), tr.fuse_in.begin() + static_cast<std::ptrdiff_t>(tr.decay.size()));
  tr.fuse = elementwise_activation(affine_map(p.fuse_w->value, tr.fuse_in, bias(p.fuse_b)),
                                   Activation::sigmoid);

  auto [fused, completed] = impute_step(x, mask, tr.temporal_est, tr.cross_est, tr.fuse);
  tr.fused_est = std::move(fused);
  tr.completed = std::move(completed);
  return tr;
}

void impute_backward(const ImputationParams& p, GradSink& sink, const ImputationTrace& trace,
                     std::span<const double> h_prev, std::span<const double> mask,
                     std::span<const double> delta, std::span<const double> d_completed,
                     const ImputationSeeds* seeds, Vec& d_h_prev) {
  const std::size_t d = trace.completed.size();

  Vec g_fused(d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    if (mask[i] == 0.0) g_fused[i] = d_completed[i];
  if (seeds && !seeds->d_fused.empty())
    for (std::size_t i = 0; i < d; ++i) g_fused[i] += seeds->d_fused[i];

  Vec g_fuse(d), g_cross(d), g_temporal(d);
  for (std::size_t i = 0; i < d; ++i) {
    g_fuse[i] = g_fused[i] * (trace.cross_est[i] - trace.temporal_est[i]);
    g_cross[i] = g_fused[i] * trace.fuse[i];
    g_temporal[i] = g_fused[i] * (1.0 - trace.fuse[i]);
  }
  if (seeds && !seeds->d_cross.empty())
    for (std::size_t i = 0; i < d; ++i) g_cross[i] += seeds->d_cross[i];
  if (seeds && !seeds->d_temporal.empty())
    for (std::size_t i = 0; i < d; ++i) g_temporal[i] += seeds->d_temporal[i];

  // fuse = sigmoid(W [decay ++ mask] + b)
  Vec g_fuse_pre(d);
  for (std::size_t i = 0; i < d; ++i) g_fuse_pre[i] = g_fuse[i] * trace.fuse[i] * (1.0 - trace.fuse[i]);
  Vec g_fuse_in(trace.fuse_in.size(), 0.0);
  affine_backward(p.fuse_w->value, trace.fuse_in, g_fuse_pre, sink[p.fuse_w->index],
                  sink[p.fuse_b->index].data, &g_fuse_in);

  // decay = exp(-max(0, W delta + b)); flat where the pre-activation is <= 0
  Vec g_decay_pre(d);
  for (std::size_t i = 0; i < d; ++i)
    g_decay_pre[i] = trace.decay_pre[i] > 0.0 ? -g_fuse_in[i] * trace.decay[i] : 0.0;
  affine_backward(p.decay_w->value, delta, g_decay_pre, sink[p.decay_w->index],
                  sink[p.decay_b->index].data, nullptr);

  // cross_est = W filled + b with pinned zero diagonal
  Vec g_filled(d, 0.0);
  affine_backward(p.cross_w->value, trace.filled, g_cross, sink[p.cross_w->index],
                  sink[p.cross_b->index].data, &g_filled);
  auto& cross_grad = sink[p.cross_w->index];
  for (std::size_t i = 0; i < cross_grad.rows; ++i) cross_grad(i, i) = 0.0;

  // filled = x where observed, temporal_est elsewhere
  for (std::size_t i = 0; i < d; ++i)
    if (mask[i] == 0.0) g_temporal[i] += g_filled[i];

  affine_backward(p.temporal_w->value, h_prev, g_temporal, sink[p.temporal_w->index],
                  sink[p.temporal_b->index].data, &d_h_prev);
}

}  // namespace dpm
