#include "dpm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dpm/rng.hpp"

namespace dpm {

GradCheckReport finite_diff_check(ParamBundle& params, const std::function<double()>& loss,
                                  const std::function<void()>& compute_grads, double rel_tol,
                                  double step, std::size_t subsample, std::size_t full_limit,
                                  std::uint64_t seed) {
  const double l0 = loss();
  const double l1 = loss();
  if (l0 != l1)
    throw NumericError("finite_diff_check: objective is not deterministic (" + std::to_string(l0) +
                       " vs " + std::to_string(l1) + ")");

  compute_grads();
  std::vector<DenseMatrix> analytic;
  analytic.reserve(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) analytic.push_back(params.entry(k).grad);

  GradCheckReport report;
  report.tolerance = rel_tol;

  for (std::size_t k = 0; k < params.size(); ++k) {
    ParamEntry& e = params.entry(k);
    const std::size_t n = e.value.size();

    std::vector<std::size_t> positions;
    if (subsample == 0 || n <= full_limit) {
      positions.resize(n);
      for (std::size_t i = 0; i < n; ++i) positions[i] = i;
    } else {
      Rng rng(seed ^ (0x9E3779B97F4A7C15ull * (k + 1)));
      std::vector<std::size_t> all(n);
      for (std::size_t i = 0; i < n; ++i) all[i] = i;
      rng.shuffle(all);
      positions.assign(all.begin(), all.begin() + std::min(subsample, n));
      std::sort(positions.begin(), positions.end());
    }

    GradCheckEntry entry;
    entry.name = e.name;
    for (std::size_t pos : positions) {
      if (e.zero_diagonal) {
        std::size_t i = pos / e.value.cols, j = pos % e.value.cols;
        if (i == j) continue;
      }
      const double saved = e.value.data[pos];
      e.value.data[pos] = saved + step;
      const double lp = loss();
      e.value.data[pos] = saved - step;
      const double lm = loss();
      e.value.data[pos] = saved;

      const double numeric = (lp - lm) / (2.0 * step);
      const double exact = analytic[k].data[pos];
      const double denom = std::max({std::abs(numeric), std::abs(exact), 1e-8});
      const double rel = std::abs(numeric - exact) / denom;
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
      ++entry.checked;
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.per_param.push_back(std::move(entry));
  }

  report.passed = report.max_rel_err <= rel_tol;
  return report;
}

}  // namespace dpm
