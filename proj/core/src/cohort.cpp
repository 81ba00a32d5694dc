#include "dpm/cohort.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "dpm/log.hpp"
#include "dpm/rng.hpp"

#include "json.hpp"

namespace dpm {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_double(const std::string& s, std::size_t line_no, const std::string& what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw DataError("line " + std::to_string(line_no) + ": cannot parse " + what + " value '" + s + "'");
  return v;
}

struct RawRow {
  std::size_t line_no;
  double time;
  std::optional<int> label;
  std::optional<double> icv;
  std::vector<std::optional<double>> feats;  // canonical feature order
};

}  // namespace

int parse_status(const std::string& s) {
  if (s == "CN") return kStatusCN;
  if (s == "MCI") return kStatusMCI;
  if (s == "AD") return kStatusAD;
  throw DataError("unknown clinical status '" + s + "'");
}

const char* status_name(int status) {
  switch (status) {
    case kStatusCN: return "CN";
    case kStatusMCI: return "MCI";
    case kStatusAD: return "AD";
  }
  throw ArgumentError("status_name: invalid status " + std::to_string(status));
}

std::optional<int> SubjectSequence::baseline_label() const {
  if (!label_observed.empty() && label_observed[0]) return labels[0];
  return std::nullopt;
}

std::size_t Cohort::d_mri() const {
  std::size_t n = 0;
  for (const auto& f : features)
    if (f.kind == FeatureKind::mri) ++n;
  return n;
}

std::size_t Cohort::d_cog() const { return features.size() - d_mri(); }

Cohort load_cohort_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open cohort file " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  const auto header = split_csv_line(line);

  std::size_t subject_col = header.size(), time_col = header.size(), label_col = header.size();
  std::size_t icv_col = header.size();
  std::vector<std::pair<std::size_t, FeatureInfo>> file_features;  // column -> info
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h == schema.subject_col) subject_col = c;
    else if (h == schema.time_col) time_col = c;
    else if (h == schema.label_col) label_col = c;
    else if (h == schema.icv_col) icv_col = c;
    else if (h.rfind("mri_", 0) == 0) file_features.push_back({c, {h, FeatureKind::mri}});
    else if (h.rfind("cog_", 0) == 0) file_features.push_back({c, {h, FeatureKind::cog}});
    else throw DataError(path + ": unrecognized column '" + h + "'");
  }
  if (subject_col == header.size() || time_col == header.size() || label_col == header.size())
    throw DataError(path + ": header must contain " + schema.subject_col + ", " + schema.time_col +
                    ", " + schema.label_col);
  if (file_features.empty()) throw DataError(path + ": no feature columns (mri_* or cog_*)");

  Cohort cohort;
  std::vector<std::size_t> feature_cols;  // canonical order: mri block, then cog block
  for (auto kind : {FeatureKind::mri, FeatureKind::cog})
    for (const auto& [col, info] : file_features)
      if (info.kind == kind) {
        feature_cols.push_back(col);
        cohort.features.push_back(info);
      }

  std::vector<std::string> subject_order;
  std::map<std::string, std::vector<RawRow>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw DataError(path + ": line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
    const std::string& sid = fields[subject_col];
    if (sid.empty()) throw DataError(path + ": line " + std::to_string(line_no) + ": empty subject_id");

    RawRow row;
    row.line_no = line_no;
    row.time = parse_double(fields[time_col], line_no, "time") * schema.time_scale;
    if (!fields[label_col].empty()) {
      try {
        row.label = parse_status(fields[label_col]);
      } catch (const DataError& e) {
        throw DataError(path + ": line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    if (icv_col < header.size() && !fields[icv_col].empty())
      row.icv = parse_double(fields[icv_col], line_no, "icv");
    row.feats.reserve(feature_cols.size());
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      const std::string& cell = fields[feature_cols[k]];
      if (cell.empty())
        row.feats.push_back(std::nullopt);
      else
        row.feats.push_back(parse_double(cell, line_no, cohort.features[k].name));
    }
    if (rows.find(sid) == rows.end()) subject_order.push_back(sid);
    rows[sid].push_back(std::move(row));
  }

  const std::size_t d = cohort.features.size();
  for (const auto& sid : subject_order) {
    auto& rs = rows[sid];
    std::stable_sort(rs.begin(), rs.end(), [](const RawRow& a, const RawRow& b) { return a.time < b.time; });
    for (std::size_t t = 1; t < rs.size(); ++t)
      if (!(rs[t].time > rs[t - 1].time))
        throw DataError(path + ": subject " + sid + ": duplicate or non-increasing time at line " +
                        std::to_string(rs[t].line_no));
    if (rs.size() < schema.min_visits) {
      ++cohort.dropped_short_subjects;
      continue;
    }

    SubjectSequence seq;
    seq.id = sid;
    const std::size_t T = rs.size();
    seq.times.resize(T);
    seq.values = DenseMatrix(d, T);
    seq.observed = DenseMatrix(d, T);
    seq.labels.assign(T, 0);
    seq.label_observed.assign(T, 0);
    for (std::size_t t = 0; t < T; ++t) {
      seq.times[t] = rs[t].time;
      if (rs[t].label) {
        seq.labels[t] = *rs[t].label;
        seq.label_observed[t] = 1;
      }
      if (rs[t].icv && !seq.icv) seq.icv = rs[t].icv;
      for (std::size_t k = 0; k < d; ++k) {
        if (rs[t].feats[k]) {
          seq.values(k, t) = *rs[t].feats[k];
          seq.observed(k, t) = 1.0;
        }
      }
    }
    cohort.subjects.push_back(std::move(seq));
  }

  if (cohort.dropped_short_subjects > 0)
    log_info("load_cohort_csv: dropped " + std::to_string(cohort.dropped_short_subjects) +
             " subject(s) with fewer than " + std::to_string(schema.min_visits) + " visits");
  return cohort;
}

void write_cohort_csv(const Cohort& cohort, const std::string& path, bool truth) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");

  bool any_icv = false;
  for (const auto& s : cohort.subjects) any_icv |= s.icv.has_value();

  out << "subject_id,time_years,label";
  if (any_icv) out << ",icv";
  for (const auto& f : cohort.features) out << "," << f.name;
  out << "\n";

  for (const auto& s : cohort.subjects) {
    if (truth && !s.has_truth()) throw ArgumentError("write_cohort_csv: subject " + s.id + " has no truth matrix");
    for (std::size_t t = 0; t < s.visits(); ++t) {
      out << s.id << "," << format_double(s.times[t]) << ",";
      if (s.label_observed[t]) out << status_name(s.labels[t]);
      if (any_icv) {
        out << ",";
        if (s.icv) out << format_double(*s.icv);
      }
      for (std::size_t k = 0; k < cohort.d(); ++k) {
        out << ",";
        if (truth)
          out << format_double(s.truth(k, t));
        else if (s.observed(k, t) != 0.0)
          out << format_double(s.values(k, t));
      }
      out << "\n";
    }
  }
}

double NormalizationSpec::to_normalized(std::size_t d, double raw, std::optional<double> icv) const {
  const FeatureScale& f = features.at(d);
  double v = raw;
  if (f.kind == FeatureKind::mri && use_icv) {
    if (!icv) throw DataError("normalization: MRI feature " + f.name + " needs an icv value");
    v /= *icv;
  }
  const double unit = (v - f.lo) / (f.hi - f.lo);
  return f.kind == FeatureKind::mri ? 2.0 * unit - 1.0 : unit;
}

double NormalizationSpec::to_raw(std::size_t d, double normalized, std::optional<double> icv) const {
  const FeatureScale& f = features.at(d);
  const double unit = f.kind == FeatureKind::mri ? (normalized + 1.0) / 2.0 : normalized;
  double v = f.lo + unit * (f.hi - f.lo);
  if (f.kind == FeatureKind::mri && use_icv) {
    if (!icv) throw DataError("normalization: MRI feature " + f.name + " needs an icv value");
    v *= *icv;
  }
  return v;
}

NormalizationSpec fit_normalizer(const Cohort& train_split) {
  NormalizationSpec spec;
  for (const auto& s : train_split.subjects) spec.use_icv |= s.icv.has_value();

  const std::size_t d = train_split.d();
  spec.features.resize(d);
  std::vector<bool> seen(d, false);
  for (std::size_t k = 0; k < d; ++k) {
    spec.features[k].name = train_split.features[k].name;
    spec.features[k].kind = train_split.features[k].kind;
  }
  for (const auto& s : train_split.subjects) {
    for (std::size_t k = 0; k < d; ++k) {
      for (std::size_t t = 0; t < s.visits(); ++t) {
        if (s.observed(k, t) == 0.0) continue;
        double v = s.values(k, t);
        if (spec.features[k].kind == FeatureKind::mri && spec.use_icv) {
          if (!s.icv) throw DataError("normalization: subject " + s.id + " has no icv value");
          v /= *s.icv;
        }
        if (!seen[k]) {
          spec.features[k].lo = spec.features[k].hi = v;
          seen[k] = true;
        } else {
          spec.features[k].lo = std::min(spec.features[k].lo, v);
          spec.features[k].hi = std::max(spec.features[k].hi, v);
        }
      }
    }
  }
  for (std::size_t k = 0; k < d; ++k) {
    if (!seen[k]) throw DataError("normalization: feature " + spec.features[k].name + " has no observed values");
    if (!(spec.features[k].hi > spec.features[k].lo))
      throw DataError("normalization: feature " + spec.features[k].name + " is degenerate (max == min)");
  }
  return spec;
}

namespace {

void transform_cohort(Cohort& cohort, const NormalizationSpec& spec, bool forward) {
  if (spec.features.size() != cohort.d())
    throw ShapeError("normalization: spec has " + std::to_string(spec.features.size()) +
                     " features, cohort has " + std::to_string(cohort.d()));
  for (auto& s : cohort.subjects) {
    for (std::size_t k = 0; k < cohort.d(); ++k) {
      for (std::size_t t = 0; t < s.visits(); ++t) {
        if (s.observed(k, t) != 0.0) {
          s.values(k, t) = forward ? spec.to_normalized(k, s.values(k, t), s.icv)
                                   : spec.to_raw(k, s.values(k, t), s.icv);
        }
        if (s.has_truth()) {
          s.truth(k, t) = forward ? spec.to_normalized(k, s.truth(k, t), s.icv)
                                  : spec.to_raw(k, s.truth(k, t), s.icv);
        }
      }
    }
  }
}

}  // namespace

void apply_normalizer(Cohort& cohort, const NormalizationSpec& spec) { transform_cohort(cohort, spec, true); }
void invert_normalizer(Cohort& cohort, const NormalizationSpec& spec) { transform_cohort(cohort, spec, false); }

std::string normalization_to_json(const NormalizationSpec& spec) {
  nlohmann::json j;
  j["use_icv"] = spec.use_icv;
  j["features"] = nlohmann::json::array();
  for (const auto& f : spec.features) {
    j["features"].push_back({{"name", f.name},
                             {"kind", f.kind == FeatureKind::mri ? "mri" : "cog"},
                             {"lo", f.lo},
                             {"hi", f.hi}});
  }
  return j.dump(2);
}

NormalizationSpec normalization_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  NormalizationSpec spec;
  spec.use_icv = j.at("use_icv").get<bool>();
  for (const auto& f : j.at("features")) {
    FeatureScale fs;
    fs.name = f.at("name").get<std::string>();
    const std::string kind = f.at("kind").get<std::string>();
    if (kind == "mri") fs.kind = FeatureKind::mri;
    else if (kind == "cog") fs.kind = FeatureKind::cog;
    else throw DataError("normalization: unknown feature kind '" + kind + "'");
    fs.lo = f.at("lo").get<double>();
    fs.hi = f.at("hi").get<double>();
    spec.features.push_back(std::move(fs));
  }
  return spec;
}

std::string cohort_manifest_json(const Cohort& cohort, const NormalizationSpec* spec) {
  nlohmann::json j;
  j["subjects"] = cohort.subjects.size();
  j["dropped_short_subjects"] = cohort.dropped_short_subjects;
  j["features"] = nlohmann::json::array();
  for (const auto& f : cohort.features)
    j["features"].push_back({{"name", f.name}, {"kind", f.kind == FeatureKind::mri ? "mri" : "cog"}});

  std::size_t observed = 0, total = 0;
  std::size_t label_counts[kNumClasses] = {0, 0, 0};
  for (const auto& s : cohort.subjects) {
    total += s.values.size();
    for (double m : s.observed.data) observed += m != 0.0 ? 1 : 0;
    for (std::size_t t = 0; t < s.visits(); ++t)
      if (s.label_observed[t]) ++label_counts[s.labels[t]];
  }
  j["observed_fraction"] = total > 0 ? static_cast<double>(observed) / static_cast<double>(total) : 0.0;
  for (int c = 0; c < kNumClasses; ++c) j["label_visits"][status_name(c)] = label_counts[c];
  if (spec != nullptr) j["normalization"] = nlohmann::json::parse(normalization_to_json(*spec));
  return j.dump(2);
}

DenseMatrix compute_delay_tensor(const std::vector<double>& times, const DenseMatrix& observed) {
  const std::size_t T = times.size();
  if (T == 0) throw ArgumentError("compute_delay_tensor: empty time vector");
  if (observed.cols != T)
    throw ShapeError("compute_delay_tensor: mask is " + shape_string(observed) + ", times has length " +
                     std::to_string(T));
  for (std::size_t t = 1; t < T; ++t)
    if (!(times[t] > times[t - 1])) throw DataError("compute_delay_tensor: times not strictly increasing");

  DenseMatrix delay(observed.rows, T);
  for (std::size_t d = 0; d < observed.rows; ++d) {
    delay(d, 0) = 1.0;
    for (std::size_t t = 1; t < T; ++t) {
      delay(d, t) = times[t] - times[t - 1];
      if (observed(d, t - 1) == 0.0) delay(d, t) += delay(d, t - 1);
    }
  }
  return delay;
}

DenseMatrix compute_delay_tensor(const SubjectSequence& seq) {
  return compute_delay_tensor(seq.times, seq.observed);
}

RemovalPlan plan_random_removal(const Cohort& cohort, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction >= 1.0)
    throw ArgumentError("plan_random_removal: fraction must lie in [0,1), got " + std::to_string(fraction));

  RemovalPlan plan;
  plan.fraction = fraction;
  plan.seed = seed;
  plan.keep.reserve(cohort.subjects.size());

  struct Pos {
    std::size_t subject, d, t;
  };
  std::vector<Pos> observed;
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    const auto& s = cohort.subjects[i];
    DenseMatrix keep(s.observed.rows, s.observed.cols);
    keep.fill(1.0);  // 1 everywhere; only hidden observed entries drop to 0
    plan.keep.push_back(std::move(keep));
    for (std::size_t d = 0; d < s.observed.rows; ++d)
      for (std::size_t t = 0; t < s.observed.cols; ++t)
        if (s.observed(d, t) != 0.0) observed.push_back({i, d, t});
  }
  plan.observed_entries = observed.size();

  const auto n_hide =
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(observed.size())));
  Rng rng(seed);
  rng.shuffle(observed);
  for (std::size_t k = 0; k < n_hide; ++k) plan.keep[observed[k].subject](observed[k].d, observed[k].t) = 0.0;
  plan.hidden_entries = n_hide;
  return plan;
}

Cohort subset_cohort(const Cohort& cohort, const std::vector<std::size_t>& indices) {
  Cohort out;
  out.features = cohort.features;
  out.subjects.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= cohort.subjects.size())
      throw ArgumentError("subset_cohort: index " + std::to_string(i) + " out of range");
    out.subjects.push_back(cohort.subjects[i]);
  }
  return out;
}

std::vector<FoldSplit> stratified_folds(const Cohort& cohort, std::size_t k, double val_frac,
                                        double test_frac, std::uint64_t seed) {
  if (k < 2) throw ArgumentError("stratified_folds: k must be at least 2");
  if (val_frac < 0.0 || test_frac < 0.0 || val_frac + test_frac >= 1.0)
    throw ArgumentError("stratified_folds: fractions must be non-negative with val+test < 1");

  std::vector<std::vector<std::size_t>> by_class(kNumClasses);
  std::vector<std::size_t> unstratifiable;
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    if (auto b = cohort.subjects[i].baseline_label())
      by_class[static_cast<std::size_t>(*b)].push_back(i);
    else
      unstratifiable.push_back(i);
  }
  for (int c = 0; c < kNumClasses; ++c) {
    if (!by_class[c].empty() && by_class[c].size() < k)
      log_warn("stratified_folds: class " + std::string(status_name(c)) + " has only " +
               std::to_string(by_class[c].size()) + " subjects for k=" + std::to_string(k) +
               "; splits are best-effort");
  }
  if (!unstratifiable.empty())
    log_info("stratified_folds: " + std::to_string(unstratifiable.size()) +
             " subject(s) without a baseline label assigned to training only");

  std::vector<FoldSplit> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    Rng rng(seed ^ (0x9E3779B97F4A7C15ull * (f + 1)));
    FoldSplit& fold = folds[f];
    fold.train = unstratifiable;
    for (int c = 0; c < kNumClasses; ++c) {
      auto idx = by_class[c];
      rng.shuffle(idx);
      const std::size_t n = idx.size();
      std::size_t n_val = static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(n)));
      std::size_t n_test = static_cast<std::size_t>(std::llround(test_frac * static_cast<double>(n)));
      while (n_val + n_test > n) (n_val > n_test ? n_val : n_test) -= 1;
      for (std::size_t i = 0; i < n; ++i) {
        if (i < n_val) fold.val.push_back(idx[i]);
        else if (i < n_val + n_test) fold.test.push_back(idx[i]);
        else fold.train.push_back(idx[i]);
      }
    }
    std::sort(fold.train.begin(), fold.train.end());
    std::sort(fold.val.begin(), fold.val.end());
    std::sort(fold.test.begin(), fold.test.end());
  }
  return folds;
}

}  // namespace dpm
