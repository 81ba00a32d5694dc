#include "dpm/heads.hpp"

namespace dpm {

namespace {

std::span<const double> bias(const ParamEntry* e) {
  return std::span<const double>(e->value.data);
}

}  // namespace

PredictionBundle predict_outputs(const HeadParams& p, std::span<const double> hidden) {
  if (!all_finite(hidden)) throw NumericError("predict_outputs: non-finite hidden state");
  PredictionBundle out;
  out.mri_next = affine_map(p.mri_w->value, hidden, bias(p.mri_b));
  out.cog_next = affine_map(p.cog_w->value, hidden, bias(p.cog_b));
  out.status_logits = affine_map(p.status_w->value, hidden, bias(p.status_b));
  out.status_prob = softmax(out.status_logits);
  return out;
}

void heads_backward(const HeadParams& p, GradSink& sink, std::span<const double> hidden,
                    const Vec& d_mri, const Vec& d_cog, const Vec& d_logits, Vec& d_hidden) {
  if (!d_mri.empty())
    affine_backward(p.mri_w->value, hidden, d_mri, sink[p.mri_w->index], sink[p.mri_b->index].data,
                    &d_hidden);
  if (!d_cog.empty())
    affine_backward(p.cog_w->value, hidden, d_cog, sink[p.cog_w->index], sink[p.cog_b->index].data,
                    &d_hidden);
  if (!d_logits.empty())
    affine_backward(p.status_w->value, hidden, d_logits, sink[p.status_w->index],
                    sink[p.status_b->index].data, &d_hidden);
}

}  // namespace dpm
