#include <algorithm>
#include <cmath>

#include "dpm/evaluation.hpp"
#include "dpm/log.hpp"
#include "dpm/rng.hpp"

namespace dpm {

std::vector<const SubjectSequence*> gather_subjects(const Cohort& cohort, const std::vector<std::size_t>& indices) {
  std::vector<const SubjectSequence*> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= cohort.subjects.size())
      throw ArgumentError("gather_subjects: index " + std::to_string(i) + " out of range");
    out.push_back(&cohort.subjects[i]);
  }
  return out;
}

namespace {

SubjectInput truncate_input(const SubjectInput& full, std::size_t n) {
  SubjectInput out;
  out.times.assign(full.times.begin(), full.times.begin() + static_cast<std::ptrdiff_t>(n));
  out.x = DenseMatrix(full.x.rows, n);
  out.mask = DenseMatrix(full.mask.rows, n);
  out.delta = DenseMatrix(full.delta.rows, n);
  for (std::size_t t = 0; t < n; ++t) {
    out.x.set_column(t, full.x.column(t));
    out.mask.set_column(t, full.mask.column(t));
    out.delta.set_column(t, full.delta.column(t));
  }
  return out;
}

int argmax_status(const Vec& prob) {
  return static_cast<int>(std::max_element(prob.begin(), prob.end()) - prob.begin());
}

// Random keep masks over observed entries, mirroring training-time removal.
std::vector<DenseMatrix> removal_keeps(const std::vector<const SubjectSequence*>& subjects, double fraction,
                                       std::uint64_t seed) {
  if (fraction < 0.0 || fraction >= 1.0)
    throw ArgumentError("removal_keeps: fraction must lie in [0, 1)");
  struct Pos {
    std::size_t s, d, t;
  };
  std::vector<Pos> positions;
  std::vector<DenseMatrix> keeps;
  keeps.reserve(subjects.size());
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    const SubjectSequence& seq = *subjects[s];
    DenseMatrix keep(seq.observed.rows, seq.observed.cols);
    keep.fill(1.0);
    keeps.push_back(std::move(keep));
    for (std::size_t d = 0; d < seq.observed.rows; ++d)
      for (std::size_t t = 0; t < seq.observed.cols; ++t)
        if (seq.observed(d, t) != 0.0) positions.push_back({s, d, t});
  }
  Rng rng(seed);
  rng.shuffle(positions);
  const std::size_t hide = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(positions.size())));
  for (std::size_t i = 0; i < hide; ++i) keeps[positions[i].s](positions[i].d, positions[i].t) = 0.0;
  return keeps;
}

struct ImputationEval {
  Vec preds, targets;  // model estimates on hidden entries
  BaselineComparison cmp;
};

ImputationEval run_imputation_eval(const Model& model, const std::vector<const SubjectSequence*>& subjects,
                                   double fraction, std::uint64_t seed) {
  ImputationEval out;
  const std::vector<DenseMatrix> keeps = removal_keeps(subjects, fraction, seed);
  const Vec means = feature_means(subjects, keeps);

  double model_sum = 0.0, mean_sum = 0.0, forward_sum = 0.0, zero_sum = 0.0;
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    const SubjectSequence& seq = *subjects[s];
    bool any_hidden = false;
    for (std::size_t i = 0; i < seq.observed.data.size() && !any_hidden; ++i)
      any_hidden = seq.observed.data[i] != 0.0 && keeps[s].data[i] == 0.0;
    if (!any_hidden) continue;

    const SubjectInput input = make_subject_input(seq, &keeps[s]);
    const std::vector<StepTrace> traces = model.unroll(input);
    const DenseMatrix mean_fill = baseline_impute(seq.values, input.mask, BaselineImputer::mean, means);
    const DenseMatrix forward_fill = baseline_impute(seq.values, input.mask, BaselineImputer::forward, means);
    for (std::size_t d = 0; d < seq.values.rows; ++d)
      for (std::size_t t = 0; t < seq.values.cols; ++t) {
        if (seq.observed(d, t) == 0.0 || keeps[s](d, t) != 0.0) continue;
        const double target = seq.values(d, t);
        out.preds.push_back(traces[t].imp.fused_est[d]);
        out.targets.push_back(target);
        model_sum += std::abs(traces[t].imp.fused_est[d] - target);
        mean_sum += std::abs(mean_fill(d, t) - target);
        forward_sum += std::abs(forward_fill(d, t) - target);
        zero_sum += std::abs(target);
      }
  }
  out.cmp.entries = out.preds.size();
  if (out.cmp.entries == 0) {
    log_warn("imputation scoring: no entries were hidden, nothing to compare");
    return out;
  }
  const double n = static_cast<double>(out.cmp.entries);
  out.cmp.model_mae = model_sum / n;
  out.cmp.mean_mae = mean_sum / n;
  out.cmp.forward_mae = forward_sum / n;
  out.cmp.zero_mae = zero_sum / n;
  return out;
}

// mAUC with a chance-level fallback when the labels are degenerate.
double safe_mauc(const std::vector<Vec>& probs, const std::vector<int>& labels, int classes,
                 const char* what) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(classes), 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  int present = 0;
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] > 0) ++present;
  if (labels.empty() || present < 2) {
    log_warn(std::string(what) + ": degenerate label set, reporting chance-level ranking");
    return 0.5;
  }
  return hand_till_mauc(probs, labels, classes);
}

}  // namespace

BaselineComparison compare_imputation_baselines(const Model& model,
                                                const std::vector<const SubjectSequence*>& subjects,
                                                double removal_fraction, std::uint64_t seed) {
  if (subjects.empty()) throw ArgumentError("compare_imputation_baselines: no subjects");
  return run_imputation_eval(model, subjects, removal_fraction, seed).cmp;
}

StatusPath predict_status_path(const Model& model, const SubjectSequence& seq) {
  const SubjectInput full = make_subject_input(seq);
  StatusPath path;
  path.times = seq.times;
  path.status.resize(seq.visits());
  path.known.assign(seq.visits(), 1);

  const SubjectInput prefix = truncate_input(full, 1);
  const std::vector<double> future_times(seq.times.begin() + 1, seq.times.end());
  if (future_times.empty()) {
    path.status[0] = argmax_status(model.unroll(prefix).back().pred.status_prob);
    return path;
  }
  const RolloutResult rolled = rollout_forecast(model, prefix, future_times);
  path.status[0] = argmax_status(rolled.prefix.back().pred.status_prob);
  for (std::size_t j = 0; j < rolled.future.size(); ++j)
    path.status[j + 1] = argmax_status(rolled.future[j].status_prob);
  return path;
}

CellAnalysis cell_state_analysis(const Model& model, const std::vector<const SubjectSequence*>& subjects,
                                 double top_fraction, bool per_subject) {
  if (top_fraction <= 0.0 || top_fraction > 1.0)
    throw ArgumentError("cell_state_analysis: top_fraction must lie in (0, 1]");
  const std::size_t h = model.dims().hidden;

  struct Group {
    const char* name;
    std::vector<Vec> samples;          // pooled cell states
    std::vector<std::uint8_t> stages;  // pooled indicator
    std::vector<Vec> subject_corr;     // per-subject correlations
  };
  Group groups[2] = {{"cn_mci", {}, {}, {}}, {"mci_ad", {}, {}, {}}};

  for (const SubjectSequence* sp : subjects) {
    const SubjectSequence& seq = *sp;
    bool has[kNumClasses] = {false, false, false};
    for (std::size_t t = 0; t < seq.visits(); ++t)
      if (seq.label_observed[t]) has[seq.labels[t]] = true;
    int g;
    if (has[kStatusCN] && has[kStatusMCI] && !has[kStatusAD])
      g = 0;
    else if (has[kStatusMCI] && has[kStatusAD] && !has[kStatusCN])
      g = 1;
    else
      continue;

    const std::vector<StepTrace> traces = model.unroll(make_subject_input(seq));
    std::vector<Vec> cells;
    std::vector<std::uint8_t> stages;
    for (std::size_t t = 0; t < seq.visits(); ++t) {
      if (!seq.label_observed[t]) continue;
      cells.push_back(traces[t].cell.cell);
      stages.push_back(g == 0 ? static_cast<std::uint8_t>(seq.labels[t] >= kStatusMCI)
                              : static_cast<std::uint8_t>(seq.labels[t] == kStatusAD));
    }
    if (per_subject) {
      bool mixed = false;
      for (std::size_t i = 1; i < stages.size() && !mixed; ++i) mixed = stages[i] != stages[0];
      if (!mixed) continue;  // a single-stage record carries no contrast
      Vec corr(h);
      Vec unit(cells.size());
      for (std::size_t u = 0; u < h; ++u) {
        for (std::size_t i = 0; i < cells.size(); ++i) unit[i] = cells[i][u];
        corr[u] = point_biserial(unit, stages);
      }
      groups[g].subject_corr.push_back(std::move(corr));
    } else {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        groups[g].samples.push_back(std::move(cells[i]));
        groups[g].stages.push_back(stages[i]);
      }
    }
  }

  const std::size_t flag_count =
      std::min(h, static_cast<std::size_t>(std::llround(top_fraction * static_cast<double>(h))));
  CellAnalysis out;
  for (int g = 0; g < 2; ++g) {
    CellGroupReport& rep = (g == 0) ? out.cn_mci : out.mci_ad;
    rep.name = groups[g].name;
    rep.correlation.assign(h, 0.0);
    if (per_subject) {
      rep.samples = groups[g].subject_corr.size();
      for (const Vec& corr : groups[g].subject_corr)
        for (std::size_t u = 0; u < h; ++u) rep.correlation[u] += corr[u];
      if (rep.samples > 0)
        for (std::size_t u = 0; u < h; ++u) rep.correlation[u] /= static_cast<double>(rep.samples);
    } else {
      rep.samples = groups[g].samples.size();
      Vec unit(groups[g].samples.size());
      for (std::size_t u = 0; u < h; ++u) {
        for (std::size_t i = 0; i < groups[g].samples.size(); ++i) unit[i] = groups[g].samples[i][u];
        rep.correlation[u] = point_biserial(unit, groups[g].stages);
      }
    }
    // Scale by the spread of the group's coefficients so magnitudes are
    // comparable across groups; pure scaling, the ranking is unaffected.
    if (h > 1) {
      double mean = 0.0;
      for (double r : rep.correlation) mean += r;
      mean /= static_cast<double>(h);
      double var = 0.0;
      for (double r : rep.correlation) var += (r - mean) * (r - mean);
      const double sd = std::sqrt(var / static_cast<double>(h - 1));
      if (sd > 0.0)
        for (double& r : rep.correlation) r /= sd;
    }

    rep.ranked.resize(h);
    for (std::size_t u = 0; u < h; ++u) rep.ranked[u] = u;
    std::stable_sort(rep.ranked.begin(), rep.ranked.end(), [&](std::size_t a, std::size_t b) {
      return std::abs(rep.correlation[a]) > std::abs(rep.correlation[b]);
    });
    if (rep.samples == 0) {
      log_warn(std::string("cell_state_analysis: no usable subjects for group ") + rep.name);
    } else {
      rep.flagged.assign(rep.ranked.begin(), rep.ranked.begin() + static_cast<std::ptrdiff_t>(flag_count));
      std::sort(rep.flagged.begin(), rep.flagged.end());
    }
  }
  std::set_intersection(out.cn_mci.flagged.begin(), out.cn_mci.flagged.end(), out.mci_ad.flagged.begin(),
                        out.mci_ad.flagged.end(), std::back_inserter(out.common));
  return out;
}

MetricReport evaluate_model(const Model& model, const std::vector<const SubjectSequence*>& subjects,
                            const Cohort& features_from, const NormalizationSpec* normalization,
                            const EvalOptions& options) {
  if (subjects.empty()) throw ArgumentError("evaluate_model: no subjects");
  const std::size_t d = model.dims().d(), d_mri = model.dims().d_mri;
  if (features_from.d() != d) throw ShapeError("evaluate_model: cohort feature count does not match the model");

  MetricReport rep;
  rep.subjects = subjects.size();
  for (const SubjectSequence* s : subjects) rep.visits += s->visits();
  for (std::size_t i = 0; i < d; ++i) {
    if (i < d_mri)
      rep.mri_features.push_back(features_from.features[i].name);
    else
      rep.cog_features.push_back(features_from.features[i].name);
  }

  // Imputation quality on artificially hidden observed entries.
  if (options.removal_fraction > 0.0) {
    const ImputationEval imp = run_imputation_eval(model, subjects, options.removal_fraction, options.seed);
    rep.baselines = imp.cmp;
    rep.imp_entries = imp.cmp.entries;
    if (rep.imp_entries > 0) {
      rep.imp_mae = imp.cmp.model_mae;
      double sq = 0.0, abs_t = 0.0, abs_e = 0.0;
      for (std::size_t i = 0; i < imp.preds.size(); ++i) {
        const double e = imp.preds[i] - imp.targets[i];
        sq += e * e;
        abs_e += std::abs(e);
        abs_t += std::abs(imp.targets[i]);
      }
      rep.imp_rmse = std::sqrt(sq / static_cast<double>(imp.preds.size()));
      rep.imp_mre = abs_t > 0.0 ? abs_e / abs_t : 0.0;
    }
  }

  // Next-visit forecasts (original units when a normalization is supplied)
  // and per-visit status, both from the fully observed sequences.
  rep.mri_mae.assign(d_mri, 0.0);
  rep.cog_rmse.assign(d - d_mri, 0.0);
  std::vector<std::size_t> mri_counts(d_mri, 0), cog_counts(d - d_mri, 0);
  double mri_abs = 0.0, cog_sq = 0.0;
  std::size_t mri_n = 0, cog_n = 0;
  std::vector<Vec> probs;
  std::vector<int> labels;
  for (const SubjectSequence* sp : subjects) {
    const SubjectSequence& seq = *sp;
    const std::vector<StepTrace> traces = model.unroll(make_subject_input(seq));
    for (std::size_t t = 0; t + 1 < seq.visits(); ++t) {
      for (std::size_t i = 0; i < d; ++i) {
        if (seq.observed(i, t + 1) == 0.0) continue;
        double est = i < d_mri ? traces[t].pred.mri_next[i] : traces[t].pred.cog_next[i - d_mri];
        double target = seq.values(i, t + 1);
        if (normalization != nullptr) {
          est = normalization->to_raw(i, est, seq.icv);
          target = normalization->to_raw(i, target, seq.icv);
        }
        const double e = est - target;
        if (i < d_mri) {
          rep.mri_mae[i] += std::abs(e);
          ++mri_counts[i];
          mri_abs += std::abs(e);
          ++mri_n;
        } else {
          rep.cog_rmse[i - d_mri] += e * e;
          ++cog_counts[i - d_mri];
          cog_sq += e * e;
          ++cog_n;
        }
      }
      // Status is scored on the steps the training loss scores.
      if (seq.label_observed[t]) {
        probs.push_back(traces[t].pred.status_prob);
        labels.push_back(seq.labels[t]);
      }
    }
  }
  for (std::size_t i = 0; i < d_mri; ++i)
    rep.mri_mae[i] = mri_counts[i] > 0 ? rep.mri_mae[i] / static_cast<double>(mri_counts[i]) : 0.0;
  for (std::size_t i = 0; i < d - d_mri; ++i)
    rep.cog_rmse[i] = cog_counts[i] > 0 ? std::sqrt(rep.cog_rmse[i] / static_cast<double>(cog_counts[i])) : 0.0;
  rep.forecast_mri_mae = mri_n > 0 ? mri_abs / static_cast<double>(mri_n) : 0.0;
  rep.forecast_cog_rmse = cog_n > 0 ? std::sqrt(cog_sq / static_cast<double>(cog_n)) : 0.0;
  rep.forecast_entries = mri_n + cog_n;

  if (!probs.empty()) {
    rep.classification = classification_metrics(probs, labels, static_cast<int>(model.dims().classes));
  } else {
    log_warn("evaluate_model: no labeled steps to score");
  }

  // Recursive forecasting: status at the final visit, rolled out from a
  // prefix that stops `horizon` visits short.
  if (options.rollout) {
    for (std::size_t horizon : options.horizons) {
      std::vector<Vec> hp;
      std::vector<int> hl;
      for (const SubjectSequence* sp : subjects) {
        const SubjectSequence& seq = *sp;
        if (seq.visits() <= horizon || !seq.label_observed[seq.visits() - 1]) continue;
        const SubjectInput full = make_subject_input(seq);
        const SubjectInput prefix = truncate_input(full, seq.visits() - horizon);
        const std::vector<double> future(seq.times.end() - static_cast<std::ptrdiff_t>(horizon), seq.times.end());
        const RolloutResult rolled = rollout_forecast(model, prefix, future);
        hp.push_back(rolled.future.back().status_prob);
        hl.push_back(seq.labels[seq.visits() - 1]);
      }
      if (hp.empty()) {
        log_warn("evaluate_model: no subjects usable at rollout horizon " + std::to_string(horizon));
        continue;
      }
      rep.rollout_mauc.emplace_back(
          horizon, safe_mauc(hp, hl, static_cast<int>(model.dims().classes), "rollout ranking"));
    }
  }

  if (options.conversion) {
    std::vector<StatusPath> truth, predicted;
    for (const SubjectSequence* sp : subjects) {
      StatusPath tp;
      tp.times = sp->times;
      tp.status = sp->labels;
      tp.known = sp->label_observed;
      truth.push_back(std::move(tp));
      predicted.push_back(predict_status_path(model, *sp));
    }
    rep.conversion = conversion_metrics(truth, predicted);
    rep.has_conversion = true;
  }
  return rep;
}

}  // namespace dpm
