#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dpm/params.hpp"

namespace dpm {

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> per_param;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// Central-difference check of analytic gradients against the scalar loss.
//
// loss() must evaluate the objective at the bundle's current values without
// touching gradients; compute_grads() must fill entry.grad for that same
// objective. Two loss() calls are compared first and a NumericError is
// raised if they differ, since finite differences are meaningless under a
// nondeterministic objective. Pinned entries (the zero diagonal of flagged
// matrices) are skipped: they are projected out of the model, so the
// objective is flat in them only by construction.
//
// subsample = 0 checks every scalar; otherwise entries larger than
// full_limit are spot-checked at subsample random positions.
GradCheckReport finite_diff_check(ParamBundle& params, const std::function<double()>& loss,
                                  const std::function<void()>& compute_grads, double rel_tol,
                                  double step = 1e-5, std::size_t subsample = 0,
                                  std::size_t full_limit = 200, std::uint64_t seed = 7);

}  // namespace dpm
