#include "dpm/model.hpp"

#include <cmath>

namespace dpm {

Model::Model(ModelDims dims) : dims_(dims) {
  const std::size_t d = dims_.d(), h = dims_.hidden, k = dims_.classes;
  if (dims_.d_mri == 0 || dims_.d_cog == 0 || h == 0 || k < 2)
    throw ArgumentError("Model: dimensions must be positive with at least 2 classes");

  imputation_.temporal_w = &bundle_.add("imputation.temporal.weight", d, h);
  imputation_.temporal_b = &bundle_.add("imputation.temporal.bias", d, 1, false, false);
  imputation_.cross_w = &bundle_.add("imputation.cross.weight", d, d, true);
  imputation_.cross_b = &bundle_.add("imputation.cross.bias", d, 1, false, false);
  imputation_.decay_w = &bundle_.add("imputation.decay.weight", d, d);
  imputation_.decay_b = &bundle_.add("imputation.decay.bias", d, 1, false, false);
  imputation_.fuse_w = &bundle_.add("imputation.fuse.weight", d, 2 * d);
  imputation_.fuse_b = &bundle_.add("imputation.fuse.bias", d, 1, false, false);

  const std::size_t joint = h + 2 * d;
  cell_.forget_w = &bundle_.add("encoder.forget.weight", h, joint);
  cell_.forget_b = &bundle_.add("encoder.forget.bias", h, 1, false, false);
  cell_.input_w = &bundle_.add("encoder.input.weight", h, joint);
  cell_.input_b = &bundle_.add("encoder.input.bias", h, 1, false, false);
  cell_.cand_w = &bundle_.add("encoder.cand.weight", h, joint);
  cell_.cand_b = &bundle_.add("encoder.cand.bias", h, 1, false, false);
  cell_.output_w = &bundle_.add("encoder.output.weight", h, joint);
  cell_.output_b = &bundle_.add("encoder.output.bias", h, 1, false, false);
  cell_.decay_w = &bundle_.add("encoder.decay.weight", h, d);
  cell_.decay_b = &bundle_.add("encoder.decay.bias", h, 1, false, false);

  heads_.mri_w = &bundle_.add("heads.mri.weight", dims_.d_mri, h);
  heads_.mri_b = &bundle_.add("heads.mri.bias", dims_.d_mri, 1, false, false);
  heads_.cog_w = &bundle_.add("heads.cog.weight", dims_.d_cog, h);
  heads_.cog_b = &bundle_.add("heads.cog.bias", dims_.d_cog, 1, false, false);
  heads_.status_w = &bundle_.add("heads.status.weight", k, h);
  heads_.status_b = &bundle_.add("heads.status.bias", k, 1, false, false);
}

void Model::init_params(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = 0; i < bundle_.size(); ++i) {
    ParamEntry& e = bundle_.entry(i);
    if (e.value.cols == 1) {
      e.value.fill(e.name == "encoder.forget.bias" ? 1.0 : 0.0);
    } else {
      init_uniform(e.value, rng, 1.0 / std::sqrt(static_cast<double>(e.value.cols)));
    }
  }
  bundle_.project_values();
}

SubjectInput make_subject_input(const SubjectSequence& seq, const DenseMatrix* keep) {
  const std::size_t d = seq.values.rows, t_count = seq.visits();
  if (keep != nullptr && (keep->rows != d || keep->cols != t_count))
    throw ShapeError("make_subject_input: keep mask is " + shape_string(*keep) + ", values are " +
                     shape_string(seq.values));

  SubjectInput in;
  in.times = seq.times;
  in.x = DenseMatrix(d, t_count);
  in.mask = DenseMatrix(d, t_count);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t t = 0; t < t_count; ++t) {
      const bool visible = seq.observed(i, t) != 0.0 && (keep == nullptr || (*keep)(i, t) != 0.0);
      if (visible) {
        in.mask(i, t) = 1.0;
        in.x(i, t) = seq.values(i, t);
      }
    }
  }
  in.delta = compute_delay_tensor(in.times, in.mask);
  return in;
}

std::vector<StepTrace> Model::unroll(const SubjectInput& input) const {
  const std::size_t d = dims_.d(), h = dims_.hidden, t_count = input.steps();
  if (t_count == 0) throw ArgumentError("unroll: empty input");
  if (input.x.rows != d || input.mask.rows != d || input.delta.rows != d || input.x.cols != t_count ||
      input.mask.cols != t_count || input.delta.cols != t_count)
    throw ShapeError("unroll: input matrices are " + shape_string(input.x) + "/" + shape_string(input.mask) +
                     "/" + shape_string(input.delta) + ", expected " + std::to_string(d) + "x" +
                     std::to_string(t_count));

  std::vector<StepTrace> traces;
  traces.reserve(t_count);
  CellState state{Vec(h, 0.0), Vec(h, 0.0)};
  for (std::size_t t = 0; t < t_count; ++t) {
    StepTrace tr;
    tr.x = input.x.column(t);
    tr.mask = input.mask.column(t);
    tr.delta = input.delta.column(t);
    tr.imp = impute_forward(imputation_, state.hidden, tr.x, tr.mask, tr.delta);
    auto [decay_pre, decay] = hidden_decay(cell_, tr.delta);
    tr.cell = cell_step(cell_, state, tr.imp.completed, tr.mask, decay_pre, decay);
    tr.pred = predict_outputs(heads_, tr.cell.hidden);
    state.hidden = tr.cell.hidden;
    state.cell = tr.cell.cell;
    traces.push_back(std::move(tr));
  }
  return traces;
}

void Model::backward(const SubjectInput& input, const std::vector<StepTrace>& traces,
                     const std::vector<StepSeeds>& seeds, GradSink& sink) const {
  const std::size_t t_count = traces.size();
  if (seeds.size() != t_count)
    throw InternalError("backward: " + std::to_string(seeds.size()) + " seed sets for " +
                        std::to_string(t_count) + " steps");
  if (sink.size() != bundle_.size())
    throw InternalError("backward: gradient sink does not match the parameter bundle");
  const std::size_t d = dims_.d(), h = dims_.hidden;

  Vec d_hidden(h, 0.0), d_cell(h, 0.0);
  const Vec zeros_h(h, 0.0);
  for (std::size_t ti = t_count; ti-- > 0;) {
    const StepTrace& tr = traces[ti];
    heads_backward(heads_, sink, tr.cell.hidden, seeds[ti].d_mri, seeds[ti].d_cog, seeds[ti].d_logits,
                   d_hidden);

    CellState prev;
    prev.hidden = ti > 0 ? traces[ti - 1].cell.hidden : zeros_h;
    prev.cell = ti > 0 ? traces[ti - 1].cell.cell : zeros_h;

    Vec d_h_prev(h, 0.0), d_completed(d, 0.0);
    cell_backward(cell_, sink, tr.cell, prev, tr.delta, d_hidden, d_cell, d_h_prev, d_completed);

    ImputationSeeds iseeds{seeds[ti].d_temporal, seeds[ti].d_cross, seeds[ti].d_fused};
    impute_backward(imputation_, sink, tr.imp, prev.hidden, tr.mask, tr.delta, d_completed, &iseeds,
                    d_h_prev);

    d_hidden = std::move(d_h_prev);
  }
}

RolloutResult rollout_forecast(const Model& model, const SubjectInput& prefix,
                               const std::vector<double>& future_times) {
  if (prefix.steps() == 0) throw ArgumentError("rollout_forecast: prefix has no visits");
  double last_time = prefix.times.back();
  for (double t : future_times)
    if (t <= last_time)
      throw ArgumentError("rollout_forecast: future times must increase past the prefix");
    else
      last_time = t;

  RolloutResult out;
  out.prefix = model.unroll(prefix);

  const std::size_t d = model.dims().d(), d_mri = model.dims().d_mri;
  CellState state{out.prefix.back().cell.hidden, out.prefix.back().cell.cell};
  Vec delay = prefix.delta.column(prefix.steps() - 1);
  Vec prev_mask = prefix.mask.column(prefix.steps() - 1);
  const Vec no_mask(d, 0.0);
  double time = prefix.times.back();
  PredictionBundle forecast = out.prefix.back().pred;

  for (double next_time : future_times) {
    const double interval = next_time - time;
    time = next_time;
    for (std::size_t i = 0; i < d; ++i)
      delay[i] = interval + (prev_mask[i] == 0.0 ? delay[i] : 0.0);
    prev_mask = no_mask;

    // The visit is fully unobserved, so the imputation stage substitutes the
    // model's own estimates; the fed-back forecast never enters the math.
    Vec fed(d);
    for (std::size_t i = 0; i < d_mri; ++i) fed[i] = forecast.mri_next[i];
    for (std::size_t i = d_mri; i < d; ++i) fed[i] = forecast.cog_next[i - d_mri];

    ImputationTrace imp = impute_forward(model.imputation(), state.hidden, fed, no_mask, delay);
    auto [decay_pre, decay] = hidden_decay(model.cell(), delay);
    CellTrace ct = cell_step(model.cell(), state, imp.completed, no_mask, decay_pre, decay);
    PredictionBundle next = predict_outputs(model.heads(), ct.hidden);

    RolloutStep step;
    step.time = time;
    step.forecast = forecast;           // made from the state before this visit
    step.status_prob = next.status_prob;  // status at this visit
    step.completed = imp.completed;
    out.future.push_back(std::move(step));

    state.hidden = ct.hidden;
    state.cell = ct.cell;
    forecast = next;
  }
  return out;
}

RolloutResult rollout_forecast(const Model& model, const SubjectInput& prefix, std::size_t horizon,
                               double interval) {
  if (interval <= 0.0) throw ArgumentError("rollout_forecast: interval must be positive");
  if (prefix.steps() == 0) throw ArgumentError("rollout_forecast: prefix has no visits");
  std::vector<double> future_times(horizon);
  double time = prefix.times.back();
  for (std::size_t j = 0; j < horizon; ++j) future_times[j] = time += interval;
  return rollout_forecast(model, prefix, future_times);
}

}  // namespace dpm
