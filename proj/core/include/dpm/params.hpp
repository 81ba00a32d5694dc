#pragma once

#include <cstddef>
#include <deque>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dpm/matrix.hpp"
#include "dpm/rng.hpp"

namespace dpm {

// One named parameter tensor with its gradient buffer.
// zero_diagonal pins the diagonal of a square matrix to zero: projected
// after every optimizer step and excluded from gradient flow.
// regularize marks the entry as a weight matrix for the l2 penalty;
// bias vectors leave it off.
struct ParamEntry {
  std::string name;
  std::size_t index = 0;
  DenseMatrix value;
  DenseMatrix grad;
  bool zero_diagonal = false;
  bool regularize = true;
};

// Per-subject gradient buffer, aligned with ParamBundle entry order.
using GradSink = std::vector<DenseMatrix>;

// Ordered collection of parameter tensors addressed by name.
// Entry addresses are stable for the lifetime of the bundle, so modules
// may hold ParamEntry pointers as views.
class ParamBundle {
 public:
  ParamEntry& add(std::string name, std::size_t rows, std::size_t cols,
                  bool zero_diagonal = false, bool regularize = true);

  ParamEntry& at(std::string_view name);
  const ParamEntry& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  ParamEntry& entry(std::size_t i) { return entries_[i]; }
  const ParamEntry& entry(std::size_t i) const { return entries_[i]; }

  std::size_t scalar_count() const;

  void zero_grads();

  // Zero the pinned diagonals of flagged values (after optimizer steps).
  void project_values();
  // Zero the pinned diagonals of flagged gradient buffers.
  void project_grads();

  GradSink make_grad_sink() const;
  // grads += sink, entry by entry in bundle order.
  void accumulate_grads(const GradSink& sink);

  std::vector<DenseMatrix> snapshot_values() const;
  void restore_values(const std::vector<DenseMatrix>& values);

  // Sum of squared entries of every regularized value matrix.
  double squared_weight_norm() const;

 private:
  std::deque<ParamEntry> entries_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

// Fill with uniform(-scale, scale) draws.
void init_uniform(DenseMatrix& m, Rng& rng, double scale);

}  // namespace dpm
