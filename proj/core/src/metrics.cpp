#include <algorithm>
#include <cmath>
#include <numeric>

#include "dpm/evaluation.hpp"
#include "dpm/log.hpp"

namespace dpm {

RegressionMetrics regression_metrics(const Vec& predictions, const Vec& targets) {
  if (predictions.size() != targets.size())
    throw ShapeError("regression_metrics: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(targets.size()) + " targets");
  if (predictions.empty()) throw ArgumentError("regression_metrics: nothing to score");
  double abs_sum = 0.0, sq_sum = 0.0, target_abs_sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double e = predictions[i] - targets[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
    target_abs_sum += std::abs(targets[i]);
  }
  const double n = static_cast<double>(predictions.size());
  if (target_abs_sum == 0.0) throw NumericError("regression_metrics: all targets are zero, relative error undefined");
  RegressionMetrics out;
  out.count = predictions.size();
  out.mae = abs_sum / n;
  out.rmse = std::sqrt(sq_sum / n);
  out.mre = abs_sum / target_abs_sum;
  return out;
}

namespace {

// Ranks of `scores` (1-based), equal runs replaced by their midrank.
Vec midranks(const Vec& scores) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  Vec ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mid;
    i = j + 1;
  }
  return ranks;
}

// P(score of a class-a instance > score of a class-b instance), by ranks.
double one_vs_one_auc(const std::vector<Vec>& probs, const std::vector<int>& labels, int a, int b) {
  Vec scores;
  std::vector<char> is_a;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != a && labels[i] != b) continue;
    scores.push_back(probs[i][static_cast<std::size_t>(a)]);
    is_a.push_back(labels[i] == a);
  }
  const Vec ranks = midranks(scores);
  double rank_sum = 0.0;
  std::size_t n_a = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (is_a[i]) {
      rank_sum += ranks[i];
      ++n_a;
    }
  const std::size_t n_b = scores.size() - n_a;
  return (rank_sum - 0.5 * static_cast<double>(n_a) * static_cast<double>(n_a + 1)) /
         (static_cast<double>(n_a) * static_cast<double>(n_b));
}

}  // namespace

double hand_till_mauc(const std::vector<Vec>& probs, const std::vector<int>& labels, int classes) {
  if (probs.size() != labels.size()) throw ShapeError("hand_till_mauc: probs/labels lengths disagree");
  if (classes < 2) throw ArgumentError("hand_till_mauc: need at least two classes");
  std::vector<std::size_t> counts(static_cast<std::size_t>(classes), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= classes) throw ArgumentError("hand_till_mauc: label " + std::to_string(y) + " out of range");
    if (probs[i].size() != static_cast<std::size_t>(classes))
      throw ShapeError("hand_till_mauc: probability vector has wrong length");
    ++counts[static_cast<std::size_t>(y)];
  }
  int present = 0;
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] > 0) ++present;
  if (present < 2) throw ArgumentError("hand_till_mauc: fewer than two classes are represented");

  double sum = 0.0;
  std::size_t scored = 0;
  for (int a = 0; a < classes; ++a)
    for (int b = a + 1; b < classes; ++b) {
      if (counts[static_cast<std::size_t>(a)] == 0 || counts[static_cast<std::size_t>(b)] == 0) {
        log_warn(std::string("hand_till_mauc: no instances for pair (") + std::to_string(a) + "," +
                 std::to_string(b) + "), skipping");
        continue;
      }
      sum += 0.5 * (one_vs_one_auc(probs, labels, a, b) + one_vs_one_auc(probs, labels, b, a));
      ++scored;
    }
  return sum / static_cast<double>(scored);
}

ClassificationMetrics classification_metrics(const std::vector<Vec>& probs, const std::vector<int>& labels,
                                             int classes) {
  if (probs.size() != labels.size()) throw ShapeError("classification_metrics: probs/labels lengths disagree");
  if (probs.empty()) throw ArgumentError("classification_metrics: nothing to score");
  const std::size_t k = static_cast<std::size_t>(classes);

  ClassificationMetrics out;
  out.count = probs.size();
  out.confusion = DenseMatrix(k, k);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const std::size_t pred = static_cast<std::size_t>(
        std::max_element(probs[i].begin(), probs[i].end()) - probs[i].begin());
    out.confusion(static_cast<std::size_t>(labels[i]), pred) += 1.0;
  }

  out.precision.assign(k, 0.0);
  out.recall.assign(k, 0.0);
  double prec_sum = 0.0, rec_sum = 0.0;
  std::size_t supported = 0;
  for (std::size_t c = 0; c < k; ++c) {
    double row = 0.0, col = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      row += out.confusion(c, j);
      col += out.confusion(j, c);
    }
    out.precision[c] = col > 0.0 ? out.confusion(c, c) / col : 0.0;
    out.recall[c] = row > 0.0 ? out.confusion(c, c) / row : 0.0;
    if (row > 0.0) {  // macro averages run over classes that actually occur
      prec_sum += out.precision[c];
      rec_sum += out.recall[c];
      ++supported;
    }
  }
  out.macro_precision = supported > 0 ? prec_sum / static_cast<double>(supported) : 0.0;
  out.macro_recall = supported > 0 ? rec_sum / static_cast<double>(supported) : 0.0;

  if (supported >= 2) {
    out.mauc = hand_till_mauc(probs, labels, classes);
  } else {
    log_warn("classification_metrics: single represented class, reporting chance-level ranking");
    out.mauc = 0.5;
  }
  return out;
}

double point_biserial(const Vec& values, const std::vector<std::uint8_t>& indicator) {
  if (values.size() != indicator.size()) throw ShapeError("point_biserial: values/indicator lengths disagree");
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  std::size_t n1 = 0;
  double mean = 0.0, mean1 = 0.0, mean0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean += values[i];
    if (indicator[i]) {
      mean1 += values[i];
      ++n1;
    } else {
      mean0 += values[i];
    }
  }
  const std::size_t n0 = n - n1;
  if (n1 == 0 || n0 == 0) return 0.0;
  mean /= static_cast<double>(n);
  mean1 /= static_cast<double>(n1);
  mean0 /= static_cast<double>(n0);
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  if (var <= 0.0) return 0.0;
  return (mean1 - mean0) / std::sqrt(var) *
         std::sqrt(static_cast<double>(n1) * static_cast<double>(n0) / (static_cast<double>(n) * static_cast<double>(n)));
}

ConversionMetrics conversion_metrics(const std::vector<StatusPath>& truth,
                                     const std::vector<StatusPath>& predicted) {
  if (truth.size() != predicted.size()) throw ShapeError("conversion_metrics: path counts disagree");
  ConversionMetrics out;
  double time_err_sum = 0.0;
  for (std::size_t s = 0; s < truth.size(); ++s) {
    const StatusPath& tp = truth[s];
    // True converters: baseline status known and short of AD, AD reached later.
    std::size_t first_known = tp.known.size();
    for (std::size_t t = 0; t < tp.known.size(); ++t)
      if (tp.known[t]) {
        first_known = t;
        break;
      }
    if (first_known == tp.known.size() || tp.status[first_known] == kStatusAD) continue;
    double true_time = 0.0;
    bool converts = false;
    for (std::size_t t = first_known; t < tp.known.size(); ++t)
      if (tp.known[t] && tp.status[t] == kStatusAD) {
        true_time = tp.times[t];
        converts = true;
        break;
      }
    if (!converts) continue;
    ++out.converters;

    const StatusPath& pp = predicted[s];
    bool detected = false;
    for (std::size_t t = 0; t < pp.known.size(); ++t)
      if (pp.known[t] && pp.status[t] == kStatusAD) {
        time_err_sum += std::abs(pp.times[t] - true_time);
        detected = true;
        break;
      }
    if (detected)
      ++out.detected;
    else
      ++out.missed;  // counted against detection, excluded from the time error
  }
  if (out.converters > 0) out.accuracy = static_cast<double>(out.detected) / static_cast<double>(out.converters);
  if (out.detected > 0) out.time_mae = time_err_sum / static_cast<double>(out.detected);
  return out;
}

RelativeChangeCurves relative_change(const DenseMatrix& pred, const DenseMatrix& truth, const Vec& baseline) {
  if (pred.rows != truth.rows || pred.cols != truth.cols)
    throw ShapeError("relative_change: curve shapes disagree");
  if (baseline.size() != pred.rows) throw ShapeError("relative_change: wrong baseline length");
  if (pred.cols == 0) throw ArgumentError("relative_change: no visits");
  RelativeChangeCurves out{DenseMatrix(pred.rows, pred.cols), DenseMatrix(pred.rows, pred.cols)};
  for (std::size_t d = 0; d < pred.rows; ++d) {
    const double base = baseline[d];
    if (std::abs(base) < 1e-12) {
      log_warn("relative_change: feature " + std::to_string(d) + " has a zero baseline, leaving its rows at zero");
      continue;
    }
    double max_abs = 0.0;
    for (std::size_t t = 0; t < pred.cols; ++t) {
      out.pred(d, t) = (pred(d, t) - base) / base;
      out.truth(d, t) = (truth(d, t) - base) / base;
      max_abs = std::max({max_abs, std::abs(out.pred(d, t)), std::abs(out.truth(d, t))});
    }
    if (max_abs > 0.0)
      for (std::size_t t = 0; t < pred.cols; ++t) {
        out.pred(d, t) /= max_abs;
        out.truth(d, t) /= max_abs;
      }
  }
  return out;
}

DenseMatrix baseline_impute(const DenseMatrix& values, const DenseMatrix& visible, BaselineImputer kind,
                            const Vec& fallback_mean) {
  if (values.rows != visible.rows || values.cols != visible.cols)
    throw ShapeError("baseline_impute: values/visibility shapes disagree");
  if (fallback_mean.size() != values.rows) throw ShapeError("baseline_impute: wrong mean vector length");
  DenseMatrix out(values.rows, values.cols);
  for (std::size_t d = 0; d < values.rows; ++d)
    for (std::size_t t = 0; t < values.cols; ++t) {
      switch (kind) {
        case BaselineImputer::zero:
          out(d, t) = 0.0;
          break;
        case BaselineImputer::mean:
          out(d, t) = fallback_mean[d];
          break;
        case BaselineImputer::forward: {
          double v = fallback_mean[d];
          for (std::size_t p = t; p-- > 0;)
            if (visible(d, p) != 0.0) {
              v = values(d, p);
              break;
            }
          out(d, t) = v;
          break;
        }
      }
    }
  return out;
}

Vec feature_means(const std::vector<const SubjectSequence*>& subjects, const std::vector<DenseMatrix>& keeps) {
  if (subjects.empty()) throw ArgumentError("feature_means: no subjects");
  if (!keeps.empty() && keeps.size() != subjects.size())
    throw ShapeError("feature_means: keep masks do not align with subjects");
  const std::size_t d = subjects.front()->values.rows;
  Vec sums(d, 0.0);
  std::vector<std::size_t> counts(d, 0);
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    const SubjectSequence& seq = *subjects[s];
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t t = 0; t < seq.values.cols; ++t) {
        if (seq.observed(i, t) == 0.0) continue;
        if (!keeps.empty() && keeps[s](i, t) == 0.0) continue;
        sums[i] += seq.values(i, t);
        ++counts[i];
      }
  }
  for (std::size_t i = 0; i < d; ++i) sums[i] = counts[i] > 0 ? sums[i] / static_cast<double>(counts[i]) : 0.0;
  return sums;
}

}  // namespace dpm
