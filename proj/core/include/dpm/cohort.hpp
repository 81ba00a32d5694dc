#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dpm/matrix.hpp"

namespace dpm {

// Clinical status classes, ordered by disease stage.
inline constexpr int kStatusCN = 0;
inline constexpr int kStatusMCI = 1;
inline constexpr int kStatusAD = 2;
inline constexpr int kNumClasses = 3;

int parse_status(const std::string& s);
const char* status_name(int status);

enum class FeatureKind { mri, cog };

struct FeatureInfo {
  std::string name;
  FeatureKind kind;
};

// One subject's longitudinal record. values/observed are D x T with the
// MRI block first, then the cognitive block; observed(d,t)=0 means the
// value is absent and values(d,t) is meaningless (kept at 0).
struct SubjectSequence {
  std::string id;
  std::vector<double> times;                 // strictly increasing, in years
  DenseMatrix values;                        // D x T
  DenseMatrix observed;                      // D x T, entries in {0,1}
  std::vector<int> labels;                   // length T, valid where label_observed
  std::vector<std::uint8_t> label_observed;  // length T
  std::optional<double> icv;
  DenseMatrix truth;                         // D x T complete values; synthetic cohorts only

  std::size_t visits() const { return times.size(); }
  bool has_truth() const { return truth.rows > 0; }
  // Baseline clinical status, or nullopt when the first visit's label is absent.
  std::optional<int> baseline_label() const;
};

struct Cohort {
  std::vector<FeatureInfo> features;  // MRI block first, then cognitive block
  std::vector<SubjectSequence> subjects;
  std::size_t dropped_short_subjects = 0;  // excluded at load for too few visits

  std::size_t d() const { return features.size(); }
  std::size_t d_mri() const;
  std::size_t d_cog() const;
};

struct CsvSchema {
  std::string subject_col = "subject_id";
  std::string time_col = "time_years";
  std::string label_col = "label";
  std::string icv_col = "icv";
  std::size_t min_visits = 3;
  double time_scale = 1.0;  // multiplies the time column on ingest
};

// Loads a UTF-8, comma-separated cohort file. Blank cells are missing.
// Feature columns must be prefixed mri_ or cog_; they are reordered into
// the canonical MRI-then-cognitive layout, stable within each block.
Cohort load_cohort_csv(const std::string& path, const CsvSchema& schema = {});

// Writes the canonical CSV layout. With truth=true, emits the complete
// ground-truth values of a synthetic cohort instead of the masked ones
// (the mask columns still describe what an observer would have seen).
void write_cohort_csv(const Cohort& cohort, const std::string& path, bool truth = false);

struct FeatureScale {
  std::string name;
  FeatureKind kind;
  double lo = 0.0;
  double hi = 0.0;
};

// Feature-wise linear map fitted on a training split. MRI features are
// divided by the subject's ICV first (when use_icv), then mapped so the
// fitted min lands on -1 and max on +1; cognitive features map onto [0,1].
struct NormalizationSpec {
  bool use_icv = false;
  std::vector<FeatureScale> features;

  double to_normalized(std::size_t d, double raw, std::optional<double> icv) const;
  double to_raw(std::size_t d, double normalized, std::optional<double> icv) const;
};

NormalizationSpec fit_normalizer(const Cohort& train_split);
// In-place transforms over observed entries (and truth matrices when present).
void apply_normalizer(Cohort& cohort, const NormalizationSpec& spec);
void invert_normalizer(Cohort& cohort, const NormalizationSpec& spec);

std::string cohort_manifest_json(const Cohort& cohort, const NormalizationSpec* spec);
NormalizationSpec normalization_from_json(const std::string& json_text);
std::string normalization_to_json(const NormalizationSpec& spec);

// Elapsed time since each feature was last observed:
// delay(d,0) = 1; delay(d,t) = s(t)-s(t-1), plus delay(d,t-1) when the
// feature was missing at t-1. Equivalent closed form: s(t)-s(t*) for the
// most recent observed t*<t, or s(t)-s(0)+1 when there is none.
DenseMatrix compute_delay_tensor(const std::vector<double>& times, const DenseMatrix& observed);
DenseMatrix compute_delay_tensor(const SubjectSequence& seq);

// Artificial removal of observed entries for imputation training and
// scoring. keep(d,t)=0 marks an entry hidden from the model; only
// originally observed entries are ever marked.
struct RemovalPlan {
  double fraction = 0.0;
  std::uint64_t seed = 0;
  std::vector<DenseMatrix> keep;  // aligned with cohort.subjects
  std::size_t observed_entries = 0;
  std::size_t hidden_entries = 0;
};

RemovalPlan plan_random_removal(const Cohort& cohort, double fraction, std::uint64_t seed);

struct FoldSplit {
  std::vector<std::size_t> train, val, test;  // indices into cohort.subjects
};

// Copy of the selected subjects, features unchanged.
Cohort subset_cohort(const Cohort& cohort, const std::vector<std::size_t>& indices);

// k independent stratified (train, val, test) partitions keyed on the
// baseline label. Subjects without an observed baseline label always land
// in training. A class with fewer subjects than k triggers a warning and a
// best-effort split.
std::vector<FoldSplit> stratified_folds(const Cohort& cohort, std::size_t k, double val_frac,
                                        double test_frac, std::uint64_t seed);

// Three-class synthetic cohort driven by a latent severity that drifts
// linearly per subject. One MRI-like channel grows with severity, the rest
// shrink; cognitive channels are monotone in severity; labels follow fixed
// severity thresholds and never reverse. The complete pre-masking values
// are retained in each subject's truth matrix.
Cohort synthesize_cohort(std::size_t n_subjects, std::size_t visits, std::size_t d_mri,
                         std::size_t d_cog, double missing_frac, std::uint64_t seed);

}  // namespace dpm
