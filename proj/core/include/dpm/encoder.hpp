#pragma once

#include <span>
#include <utility>

#include "dpm/matrix.hpp"
#include "dpm/params.hpp"

namespace dpm {

// LSTM cell over [decayed hidden ++ completed observation ++ mask], plus a
// decay head that maps per-feature delays onto the hidden dimension.
struct CellParams {
  ParamEntry* forget_w = nullptr;  // H x (H + 2D)
  ParamEntry* forget_b = nullptr;  // H
  ParamEntry* input_w = nullptr;
  ParamEntry* input_b = nullptr;
  ParamEntry* cand_w = nullptr;
  ParamEntry* cand_b = nullptr;
  ParamEntry* output_w = nullptr;
  ParamEntry* output_b = nullptr;
  ParamEntry* decay_w = nullptr;  // H x D, delays -> hidden decay
  ParamEntry* decay_b = nullptr;  // H
};

struct CellState {
  Vec hidden;  // H
  Vec cell;    // H
};

struct CellTrace {
  Vec decay_pre;       // pre-activation of the hidden decay
  Vec decay;           // in (0,1]^H
  Vec decayed_hidden;  // h_prev shrunk by decay
  Vec joint;           // [decayed_hidden ++ completed ++ mask]
  Vec forget_gate, input_gate, candidate, output_gate;
  Vec cell;       // c_t
  Vec cell_tanh;  // tanh(c_t)
  Vec hidden;     // h_t
};

// (decay_pre, decay) on the hidden dimension from the per-feature delays.
std::pair<Vec, Vec> hidden_decay(const CellParams& p, std::span<const double> delta);

// Elementwise product h_prev * decay.
Vec decay_hidden(std::span<const double> h_prev, std::span<const double> decay);

// One LSTM step. decay is the hidden-dimension decay vector applied to
// state_prev.hidden before gating.
CellTrace cell_step(const CellParams& p, const CellState& state_prev, std::span<const double> completed,
                    std::span<const double> mask, std::span<const double> decay_pre,
                    std::span<const double> decay);

// Backward through one step. d_hidden/d_cell carry dL/dh_t and dL/dc_t in;
// on return d_cell holds dL/dc_{t-1}, and dL/dh_{t-1} and dL/dcompleted
// are accumulated into d_h_prev and d_completed.
void cell_backward(const CellParams& p, GradSink& sink, const CellTrace& trace, const CellState& state_prev,
                   std::span<const double> delta, const Vec& d_hidden, Vec& d_cell, Vec& d_h_prev,
                   Vec& d_completed);

}  // namespace dpm
