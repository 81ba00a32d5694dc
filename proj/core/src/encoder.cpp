#include "dpm/encoder.hpp"

#include <cmath>

namespace dpm {

namespace {

std::span<const double> bias(const ParamEntry* e) {
  return std::span<const double>(e->value.data);
}

}  // namespace

std::pair<Vec, Vec> hidden_decay(const CellParams& p, std::span<const double> delta) {
  for (double d : delta)
    if (d < 0.0) throw ArgumentError("hidden_decay: negative delay " + std::to_string(d));
  Vec pre = affine_map(p.decay_w->value, delta, bias(p.decay_b));
  Vec decay = elementwise_activation(pre, Activation::neg_relu_exp);
  return {std::move(pre), std::move(decay)};
}

Vec decay_hidden(std::span<const double> h_prev, std::span<const double> decay) {
  if (h_prev.size() != decay.size())
    throw ShapeError("decay_hidden: h_prev has length " + std::to_string(h_prev.size()) +
                     ", decay has length " + std::to_string(decay.size()));
  Vec out(h_prev.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = h_prev[i] * decay[i];
  return out;
}

CellTrace cell_step(const CellParams& p, const CellState& state_prev, std::span<const double> completed,
                    std::span<const double> mask, std::span<const double> decay_pre,
                    std::span<const double> decay) {
  const std::size_t h = state_prev.hidden.size();
  if (state_prev.cell.size() != h)
    throw ShapeError("cell_step: hidden has length " + std::to_string(h) + ", cell has length " +
                     std::to_string(state_prev.cell.size()));
  if (completed.size() != mask.size())
    throw ShapeError("cell_step: completed has length " + std::to_string(completed.size()) +
                     ", mask has length " + std::to_string(mask.size()));

  CellTrace tr;
  tr.decay_pre.assign(decay_pre.begin(), decay_pre.end());
  tr.decay.assign(decay.begin(), decay.end());
  tr.decayed_hidden = decay_hidden(state_prev.hidden, decay);

  tr.joint.resize(h + completed.size() + mask.size());
  std::copy(tr.decayed_hidden.begin(), tr.decayed_hidden.end(), tr.joint.begin());
  std::copy(completed.begin(), completed.end(), tr.joint.begin() + static_cast<std::ptrdiff_t>(h));
  std::copy(mask.begin(), mask.end(),
            tr.joint.begin() + static_cast<std::ptrdiff_t>(h + completed.size()));

  tr.forget_gate = elementwise_activation(affine_map(p.forget_w->value, tr.joint, bias(p.forget_b)),
                                          Activation::sigmoid);
  tr.input_gate = elementwise_activation(affine_map(p.input_w->value, tr.joint, bias(p.input_b)),
                                         Activation::sigmoid);
  tr.candidate = elementwise_activation(affine_map(p.cand_w->value, tr.joint, bias(p.cand_b)),
                                        Activation::tanh);
  tr.output_gate = elementwise_activation(affine_map(p.output_w->value, tr.joint, bias(p.output_b)),
                                          Activation::sigmoid);

  tr.cell.resize(h);
  tr.cell_tanh.resize(h);
  tr.hidden.resize(h);
  for (std::size_t i = 0; i < h; ++i) {
    tr.cell[i] = tr.forget_gate[i] * state_prev.cell[i] + tr.input_gate[i] * tr.candidate[i];
    tr.cell_tanh[i] = std::tanh(tr.cell[i]);
    tr.hidden[i] = tr.output_gate[i] * tr.cell_tanh[i];
  }
  return tr;
}

void cell_backward(const CellParams& p, GradSink& sink, const CellTrace& trace, const CellState& state_prev,
                   std::span<const double> delta, const Vec& d_hidden, Vec& d_cell, Vec& d_h_prev,
                   Vec& d_completed) {
  const std::size_t h = trace.hidden.size();
  const std::size_t d = d_completed.size();

  Vec g_out(h), g_cell(h);
  for (std::size_t i = 0; i < h; ++i) {
    g_out[i] = d_hidden[i] * trace.cell_tanh[i];
    g_cell[i] = d_cell[i] + d_hidden[i] * trace.output_gate[i] * (1.0 - trace.cell_tanh[i] * trace.cell_tanh[i]);
  }

  Vec gz_forget(h), gz_input(h), gz_cand(h), gz_output(h);
  for (std::size_t i = 0; i < h; ++i) {
    const double f = trace.forget_gate[i], in = trace.input_gate[i];
    const double cd = trace.candidate[i], o = trace.output_gate[i];
    gz_forget[i] = g_cell[i] * state_prev.cell[i] * f * (1.0 - f);
    gz_input[i] = g_cell[i] * cd * in * (1.0 - in);
    gz_cand[i] = g_cell[i] * in * (1.0 - cd * cd);
    gz_output[i] = g_out[i] * o * (1.0 - o);
    d_cell[i] = g_cell[i] * f;  // dL/dc_{t-1}
  }

  Vec g_joint(trace.joint.size(), 0.0);
  affine_backward(p.forget_w->value, trace.joint, gz_forget, sink[p.forget_w->index],
                  sink[p.forget_b->index].data, &g_joint);
  affine_backward(p.input_w->value, trace.joint, gz_input, sink[p.input_w->index],
                  sink[p.input_b->index].data, &g_joint);
  affine_backward(p.cand_w->value, trace.joint, gz_cand, sink[p.cand_w->index],
                  sink[p.cand_b->index].data, &g_joint);
  affine_backward(p.output_w->value, trace.joint, gz_output, sink[p.output_w->index],
                  sink[p.output_b->index].data, &g_joint);

  // joint = [decayed_hidden ++ completed ++ mask]; the mask is data.
  for (std::size_t i = 0; i < d; ++i) d_completed[i] += g_joint[h + i];

  Vec g_decay(h), g_decay_pre(h);
  for (std::size_t i = 0; i < h; ++i) {
    d_h_prev[i] += g_joint[i] * trace.decay[i];
    g_decay[i] = g_joint[i] * state_prev.hidden[i];
    g_decay_pre[i] = trace.decay_pre[i] > 0.0 ? -g_decay[i] * trace.decay[i] : 0.0;
  }
  affine_backward(p.decay_w->value, delta, g_decay_pre, sink[p.decay_w->index],
                  sink[p.decay_b->index].data, nullptr);
}

}  // namespace dpm
