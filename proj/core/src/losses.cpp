#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>

#include "dpm/log.hpp"
#include "dpm/training.hpp"

namespace dpm {

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Block-partitioned parallel loop; results must be written to per-index
// slots so the outcome is independent of the thread count.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body) {
  if (threads > n) threads = n;
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::mutex mu;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    const std::size_t begin = n * w / threads, end = n * (w + 1) / threads;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

void merge_sums(LossSums& into, const LossSums& part) {
  into.imputation += part.imputation;
  into.imputation_terms += part.imputation_terms;
  into.mri += part.mri;
  into.mri_terms += part.mri_terms;
  into.cog += part.cog;
  into.cog_terms += part.cog_terms;
  into.focal += part.focal;
  into.focal_steps += part.focal_steps;
}

void accumulate_imputation(LossSums& sums, const std::vector<StepTrace>& traces, const DenseMatrix& values,
                           const DenseMatrix& observed, const DenseMatrix& keep, ImputationLossMode mode) {
  const std::size_t d = values.rows, t_count = values.cols;
  for (std::size_t t = 0; t < t_count; ++t) {
    const auto& imp = traces[t].imp;
    for (std::size_t i = 0; i < d; ++i) {
      const bool obs = observed(i, t) != 0.0;
      const bool kept = keep(i, t) != 0.0;
      double target = 0.0;
      if (mode == ImputationLossMode::removed_truth) {
        if (!obs || kept) continue;
        target = values(i, t);
      } else {
        if (obs && kept) continue;  // entry was visible to the model
        target = obs ? values(i, t) : 0.0;
      }
      sums.imputation += std::abs(target - imp.temporal_est[i]) + std::abs(target - imp.cross_est[i]) +
                         std::abs(target - imp.fused_est[i]);
      ++sums.imputation_terms;
    }
  }
}

void accumulate_forecast(LossSums& sums, const std::vector<StepTrace>& traces, const DenseMatrix& values,
                         const DenseMatrix& observed, std::size_t d_mri) {
  const std::size_t d = values.rows, t_count = values.cols;
  for (std::size_t t = 0; t + 1 < t_count; ++t) {
    const auto& pred = traces[t].pred;
    for (std::size_t i = 0; i < d; ++i) {
      if (observed(i, t + 1) == 0.0) continue;
      const double est = i < d_mri ? pred.mri_next[i] : pred.cog_next[i - d_mri];
      const double e = est - values(i, t + 1);
      if (i < d_mri) {
        sums.mri += e * e;
        ++sums.mri_terms;
      } else {
        sums.cog += e * e;
        ++sums.cog_terms;
      }
    }
  }
}

void accumulate_focal(LossSums& sums, const std::vector<StepTrace>& traces, const std::vector<int>& labels,
                      const std::vector<std::uint8_t>& label_observed, double epsilon) {
  for (std::size_t t = 0; t + 1 < traces.size(); ++t) {
    if (!label_observed[t]) continue;
    sums.focal += focal_term(traces[t].pred.status_prob, labels[t], epsilon);
    ++sums.focal_steps;
  }
}

double finalize(double sum, std::size_t n, bool normalize) {
  if (!normalize) return sum;
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace

double focal_term(const Vec& prob, int label, double epsilon) {
  if (label < 0 || static_cast<std::size_t>(label) >= prob.size())
    throw ArgumentError("focal_term: label " + std::to_string(label) + " out of range");
  const double p = prob[static_cast<std::size_t>(label)];
  if (!(p > 0.0) || !(p <= 1.0)) throw NumericError("focal_term: probability " + std::to_string(p) + " outside (0,1]");
  return -std::pow(1.0 - p, epsilon) * std::log(p);
}

Vec focal_logit_grad(const Vec& prob, int label, double epsilon) {
  const std::size_t k = prob.size();
  const double p = prob[static_cast<std::size_t>(label)];
  const double om = 1.0 - p;
  // d/dp of -(1-p)^eps log p; the modulating term vanishes as p -> 1.
  const double t1 = (epsilon > 0.0 && om > 0.0) ? epsilon * std::pow(om, epsilon - 1.0) * std::log(p) : 0.0;
  const double dldp = t1 - std::pow(om, epsilon) / p;
  Vec grad(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double dp = p * ((static_cast<int>(j) == label ? 1.0 : 0.0) - prob[j]);
    grad[j] = dldp * dp;
  }
  return grad;
}

double loss_imputation(const std::vector<StepTrace>& traces, const DenseMatrix& values,
                       const DenseMatrix& observed, const DenseMatrix& keep, ImputationLossMode mode,
                       bool normalize) {
  if (traces.size() != values.cols)
    throw ShapeError("loss_imputation: " + std::to_string(traces.size()) + " traces for " +
                     std::to_string(values.cols) + " visits");
  LossSums sums;
  accumulate_imputation(sums, traces, values, observed, keep, mode);
  return finalize(sums.imputation, sums.imputation_terms, normalize);
}

double loss_forecast(const std::vector<StepTrace>& traces, const DenseMatrix& values,
                     const DenseMatrix& observed, std::size_t d_mri, bool normalize) {
  if (traces.size() != values.cols)
    throw ShapeError("loss_forecast: " + std::to_string(traces.size()) + " traces for " +
                     std::to_string(values.cols) + " visits");
  if (traces.size() < 2) {
    log_warn("loss_forecast: sequence has a single visit, nothing to score");
    return 0.0;
  }
  LossSums sums;
  accumulate_forecast(sums, traces, values, observed, d_mri);
  return finalize(sums.mri, sums.mri_terms, normalize) + finalize(sums.cog, sums.cog_terms, normalize);
}

double loss_focal(const std::vector<Vec>& probs, const std::vector<int>& labels,
                  const std::vector<std::uint8_t>& label_observed, double epsilon, bool normalize) {
  if (probs.size() != labels.size() || probs.size() != label_observed.size())
    throw ShapeError("loss_focal: probs/labels/mask lengths disagree");
  LossSums sums;
  for (std::size_t t = 0; t + 1 < probs.size(); ++t) {
    if (!label_observed[t]) continue;
    sums.focal += focal_term(probs[t], labels[t], epsilon);
    ++sums.focal_steps;
  }
  return finalize(sums.focal, sums.focal_steps, normalize);
}

LossBreakdown loss_total(const LossSums& sums, const LossWeights& weights, double l2_coeff,
                         const ParamBundle* params, bool normalize) {
  LossBreakdown out;
  out.sums = sums;
  out.imputation = finalize(sums.imputation, sums.imputation_terms, normalize);
  out.forecast_mri = finalize(sums.mri, sums.mri_terms, normalize);
  out.forecast_cog = finalize(sums.cog, sums.cog_terms, normalize);
  out.focal = finalize(sums.focal, sums.focal_steps, normalize);
  out.l2 = (l2_coeff > 0.0 && params != nullptr) ? l2_coeff * params->squared_weight_norm() : 0.0;
  out.total = weights.alpha * out.imputation + weights.zeta * (out.forecast_mri + out.forecast_cog) +
              weights.xi * out.focal + out.l2;
  return out;
}

TrainItem make_train_item(const SubjectSequence& seq, const DenseMatrix* keep) {
  TrainItem item;
  item.seq = &seq;
  item.keep = keep;
  item.input = make_subject_input(seq, keep);
  return item;
}

LossBreakdown batch_loss(const Model& model, std::span<const TrainItem> items, const LossWeights& weights,
                         const TrainConfig& cfg, std::vector<std::vector<StepTrace>>* traces_out) {
  // Per-item partials merged in item order, so the totals do not depend on
  // how the items were distributed over threads.
  std::vector<LossSums> partial(items.size());
  std::vector<std::vector<StepTrace>> local;
  std::vector<std::vector<StepTrace>>& traces = traces_out != nullptr ? *traces_out : local;
  traces.assign(items.size(), {});

  parallel_for(items.size(), cfg.threads, [&](std::size_t n) {
    const TrainItem& item = items[n];
    traces[n] = model.unroll(item.input);
    accumulate_imputation(partial[n], traces[n], item.seq->values, item.seq->observed,
                          item.keep != nullptr ? *item.keep : item.seq->observed, cfg.imputation_loss_mode);
    accumulate_forecast(partial[n], traces[n], item.seq->values, item.seq->observed, model.dims().d_mri);
    accumulate_focal(partial[n], traces[n], item.seq->labels, item.seq->label_observed, weights.epsilon);
  });

  LossSums sums;
  for (const LossSums& p : partial) merge_sums(sums, p);
  return loss_total(sums, weights, cfg.l2, &model.bundle(), cfg.normalize_losses);
}

LossBreakdown batch_loss_and_grad(Model& model, std::span<const TrainItem> items,
                                  const LossWeights& weights, const TrainConfig& cfg) {
  std::vector<std::vector<StepTrace>> traces;
  const LossBreakdown breakdown = batch_loss(model, items, weights, cfg, &traces);
  const LossSums& sums = breakdown.sums;

  const bool norm = cfg.normalize_losses;
  const auto coeff = [norm](double w, std::size_t n) {
    if (!norm) return w;
    return n > 0 ? w / static_cast<double>(n) : 0.0;
  };
  const double c_imp = coeff(weights.alpha, sums.imputation_terms);
  const double c_mri = coeff(weights.zeta, sums.mri_terms);
  const double c_cog = coeff(weights.zeta, sums.cog_terms);
  const double c_focal = coeff(weights.xi, sums.focal_steps);

  ParamBundle& bundle = model.bundle();
  bundle.zero_grads();
  const std::size_t d = model.dims().d(), d_mri = model.dims().d_mri;

  std::vector<GradSink> sinks(items.size());
  parallel_for(items.size(), cfg.threads, [&](std::size_t n) {
    const TrainItem& item = items[n];
    GradSink sink = bundle.make_grad_sink();
    const std::size_t t_count = item.input.steps();
    std::vector<StepSeeds> seeds(t_count);
    for (std::size_t t = 0; t < t_count; ++t) {
      const StepTrace& tr = traces[n][t];
      StepSeeds& s = seeds[t];

      if (t + 1 < t_count && (c_mri != 0.0 || c_cog != 0.0)) {
        s.d_mri.assign(d_mri, 0.0);
        s.d_cog.assign(d - d_mri, 0.0);
        for (std::size_t i = 0; i < d; ++i) {
          if (item.seq->observed(i, t + 1) == 0.0) continue;
          const double target = item.seq->values(i, t + 1);
          if (i < d_mri)
            s.d_mri[i] = 2.0 * c_mri * (tr.pred.mri_next[i] - target);
          else
            s.d_cog[i - d_mri] = 2.0 * c_cog * (tr.pred.cog_next[i - d_mri] - target);
        }
      }

      if (t + 1 < t_count && item.seq->label_observed[t] && c_focal != 0.0) {
        s.d_logits = focal_logit_grad(tr.pred.status_prob, item.seq->labels[t], weights.epsilon);
        for (double& g : s.d_logits) g *= c_focal;
      }

      if (c_imp != 0.0) {
        for (std::size_t i = 0; i < d; ++i) {
          const bool obs = item.seq->observed(i, t) != 0.0;
          const bool kept = item.keep != nullptr ? (*item.keep)(i, t) != 0.0 : obs;
          double target = 0.0;
          if (cfg.imputation_loss_mode == ImputationLossMode::removed_truth) {
            if (!obs || kept) continue;
            target = item.seq->values(i, t);
          } else {
            if (obs && kept) continue;
            target = obs ? item.seq->values(i, t) : 0.0;
          }
          if (s.d_temporal.empty()) {
            s.d_temporal.assign(d, 0.0);
            s.d_cross.assign(d, 0.0);
            s.d_fused.assign(d, 0.0);
          }
          s.d_temporal[i] = c_imp * sign(tr.imp.temporal_est[i] - target);
          s.d_cross[i] = c_imp * sign(tr.imp.cross_est[i] - target);
          s.d_fused[i] = c_imp * sign(tr.imp.fused_est[i] - target);
        }
      }
    }
    model.backward(item.input, traces[n], seeds, sink);
    sinks[n] = std::move(sink);
  });
  for (const GradSink& sink : sinks) bundle.accumulate_grads(sink);

  if (cfg.l2 > 0.0) {
    for (std::size_t k = 0; k < bundle.size(); ++k) {
      ParamEntry& e = bundle.entry(k);
      if (!e.regularize) continue;
      for (std::size_t i = 0; i < e.value.data.size(); ++i)
        e.grad.data[i] += 2.0 * cfg.l2 * e.value.data[i];
    }
  }
  bundle.project_grads();
  return breakdown;
}

}  // namespace dpm
