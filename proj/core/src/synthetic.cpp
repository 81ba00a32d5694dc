#include <cstdio>

#include "dpm/cohort.hpp"
#include "dpm/rng.hpp"

namespace dpm {

namespace {

// Severity thresholds separating CN / MCI / AD.
constexpr double kStageOne = 0.38;
constexpr double kStageTwo = 0.70;

int severity_label(double sev) {
  if (sev < kStageOne) return kStatusCN;
  if (sev < kStageTwo) return kStatusMCI;
  return kStatusAD;
}

}  // namespace

Cohort synthesize_cohort(std::size_t n_subjects, std::size_t visits, std::size_t d_mri,
                         std::size_t d_cog, double missing_frac, std::uint64_t seed) {
  if (n_subjects == 0 || visits == 0 || d_mri == 0 || d_cog == 0)
    throw ArgumentError("synthesize_cohort: all counts must be positive");
  if (missing_frac < 0.0 || missing_frac >= 1.0)
    throw ArgumentError("synthesize_cohort: missing_frac must lie in [0,1)");

  const std::size_t d = d_mri + d_cog;
  Cohort cohort;
  cohort.features.reserve(d);
  char name[32];
  for (std::size_t k = 0; k < d_mri; ++k) {
    std::snprintf(name, sizeof(name), "mri_%zu", k);
    cohort.features.push_back({name, FeatureKind::mri});
  }
  for (std::size_t k = 0; k < d_cog; ++k) {
    std::snprintf(name, sizeof(name), "cog_%zu", k);
    cohort.features.push_back({name, FeatureKind::cog});
  }

  // Channel responses to severity: the first MRI channel grows as disease
  // progresses, the remaining MRI channels shrink, the first cognitive
  // score declines and the rest climb.
  std::vector<double> slope(d), base(d);
  for (std::size_t k = 0; k < d_mri; ++k) {
    slope[k] = k == 0 ? 0.50 : -(0.25 + 0.05 * static_cast<double>((k - 1) % 6));
    base[k] = 1.0 + 0.15 * static_cast<double>(k);
  }
  for (std::size_t k = 0; k < d_cog; ++k) {
    const std::size_t j = d_mri + k;
    slope[j] = k == 0 ? -0.55 : 0.50 + 0.04 * static_cast<double>(k);
    base[j] = k == 0 ? 0.95 : 0.10;
  }

  Rng master(seed);
  for (std::size_t i = 0; i < n_subjects; ++i) {
    Rng rng(master.fork());
    const int cls = static_cast<int>(i % 3);

    double sev0 = 0.0, rate = 0.0;
    switch (cls) {
      case kStatusCN:
        sev0 = rng.uniform(0.05, 0.30);
        rate = rng.uniform(0.004, 0.020);
        break;
      case kStatusMCI:
        sev0 = rng.uniform(0.40, 0.62);
        rate = rng.uniform(0.015, 0.055);
        break;
      default:
        sev0 = rng.uniform(0.72, 0.88);
        rate = rng.uniform(0.010, 0.040);
        break;
    }

    std::vector<double> offset(d);
    for (std::size_t k = 0; k < d; ++k)
      offset[k] = rng.gaussian(0.0, k < d_mri ? 0.05 : 0.03);

    SubjectSequence seq;
    std::snprintf(name, sizeof(name), "S%04zu", i);
    seq.id = name;
    seq.times.resize(visits);
    seq.values = DenseMatrix(d, visits);
    seq.observed = DenseMatrix(d, visits);
    seq.truth = DenseMatrix(d, visits);
    seq.labels.assign(visits, 0);
    seq.label_observed.assign(visits, 0);

    for (std::size_t t = 0; t < visits; ++t) {
      seq.times[t] = static_cast<double>(t);
      const double sev = sev0 + rate * static_cast<double>(t);
      seq.labels[t] = severity_label(sev);
      seq.label_observed[t] = (t == 0 || rng.uniform() >= missing_frac / 2.0) ? 1 : 0;
      for (std::size_t k = 0; k < d; ++k) {
        const double value = base[k] + slope[k] * sev + offset[k] + rng.gaussian(0.0, 0.02);
        seq.truth(k, t) = value;
        if (rng.uniform() >= missing_frac) {
          seq.values(k, t) = value;
          seq.observed(k, t) = 1.0;
        }
      }
    }
    cohort.subjects.push_back(std::move(seq));
  }
  return cohort;
}

}  // namespace dpm
