#include "dpm/params.hpp"

namespace dpm {

ParamEntry& ParamBundle::add(std::string name, std::size_t rows, std::size_t cols,
                             bool zero_diagonal, bool regularize) {
  if (by_name_.count(name) != 0) throw ArgumentError("ParamBundle::add: duplicate name " + name);
  if (rows == 0 || cols == 0) throw ShapeError("ParamBundle::add: empty shape for " + name);
  if (zero_diagonal && rows != cols)
    throw ShapeError("ParamBundle::add: zero_diagonal needs a square matrix, " + name + " is " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  ParamEntry e;
  e.name = std::move(name);
  e.index = entries_.size();
  e.value = DenseMatrix(rows, cols);
  e.grad = DenseMatrix(rows, cols);
  e.zero_diagonal = zero_diagonal;
  e.regularize = regularize;
  entries_.push_back(std::move(e));
  by_name_[entries_.back().name] = entries_.back().index;
  return entries_.back();
}

ParamEntry& ParamBundle::at(std::string_view name) {
  auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) throw ArgumentError("ParamBundle::at: no parameter named " + std::string(name));
  return entries_[it->second];
}

const ParamEntry& ParamBundle::at(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) throw ArgumentError("ParamBundle::at: no parameter named " + std::string(name));
  return entries_[it->second];
}

bool ParamBundle::contains(std::string_view name) const {
  return by_name_.count(std::string(name)) != 0;
}

std::size_t ParamBundle::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

void ParamBundle::zero_grads() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

void ParamBundle::project_values() {
  for (auto& e : entries_) {
    if (!e.zero_diagonal) continue;
    for (std::size_t i = 0; i < e.value.rows; ++i) e.value(i, i) = 0.0;
  }
}

void ParamBundle::project_grads() {
  for (auto& e : entries_) {
    if (!e.zero_diagonal) continue;
    for (std::size_t i = 0; i < e.grad.rows; ++i) e.grad(i, i) = 0.0;
  }
}

GradSink ParamBundle::make_grad_sink() const {
  GradSink sink;
  sink.reserve(entries_.size());
  for (const auto& e : entries_) sink.emplace_back(e.value.rows, e.value.cols);
  return sink;
}

void ParamBundle::accumulate_grads(const GradSink& sink) {
  if (sink.size() != entries_.size())
    throw ShapeError("accumulate_grads: sink has " + std::to_string(sink.size()) + " entries, bundle has " +
                     std::to_string(entries_.size()));
  for (std::size_t k = 0; k < sink.size(); ++k) {
    auto& g = entries_[k].grad;
    const auto& s = sink[k];
    if (s.rows != g.rows || s.cols != g.cols)
      throw ShapeError("accumulate_grads: entry " + entries_[k].name + " shape mismatch");
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += s.data[i];
  }
}

std::vector<DenseMatrix> ParamBundle::snapshot_values() const {
  std::vector<DenseMatrix> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.value);
  return out;
}

void ParamBundle::restore_values(const std::vector<DenseMatrix>& values) {
  if (values.size() != entries_.size())
    throw ShapeError("restore_values: got " + std::to_string(values.size()) + " tensors, bundle has " +
                     std::to_string(entries_.size()));
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (values[k].rows != entries_[k].value.rows || values[k].cols != entries_[k].value.cols)
      throw ShapeError("restore_values: entry " + entries_[k].name + " shape mismatch");
    entries_[k].value = values[k];
  }
}

double ParamBundle::squared_weight_norm() const {
  double s = 0.0;
  for (const auto& e : entries_) {
    if (!e.regularize) continue;
    for (double v : e.value.data) s += v * v;
  }
  return s;
}

void init_uniform(DenseMatrix& m, Rng& rng, double scale) {
  for (double& v : m.data) v = rng.uniform(-scale, scale);
}

}  // namespace dpm
