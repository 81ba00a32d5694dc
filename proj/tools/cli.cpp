#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "dpm/checkpoint.hpp"
#include "dpm/log.hpp"
#include "json.hpp"

namespace dpm::cli {

namespace {

using nlohmann::json;

// Thrown when parsing already printed everything (e.g. --help).
struct ExitRequest {
  int code;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw DataError("failed writing '" + path + "'");
}

std::string drop_extension(const std::string& path) {
  std::filesystem::path p(path);
  p.replace_extension();
  return p.string();
}

// Report files are written as <stem>.json and <stem>.csv.
std::string report_stem(const std::string& out) {
  std::filesystem::path p(out);
  const std::string ext = p.extension().string();
  if (ext == ".json" || ext == ".csv") return drop_extension(out);
  return out;
}

ImputationLossMode mode_from_string(const std::string& s) {
  if (s == "removed_truth") return ImputationLossMode::removed_truth;
  if (s == "literal_masked") return ImputationLossMode::literal_masked;
  throw ConfigError("imputation_loss_mode: expected removed_truth or literal_masked, got '" + s + "'");
}

const char* mode_to_string(ImputationLossMode m) {
  return m == ImputationLossMode::removed_truth ? "removed_truth" : "literal_masked";
}

json config_json(const RunConfig& cfg) {
  json j;
  j["data"] = cfg.data;
  j["checkpoint"] = cfg.checkpoint;
  j["out"] = cfg.out;
  j["truth_out"] = cfg.truth_out;
  j["history_out"] = cfg.history_out;
  j["report_out"] = cfg.report_out;
  j["subjects"] = cfg.subjects;
  j["visits"] = cfg.visits;
  j["d_mri"] = cfg.d_mri;
  j["d_cog"] = cfg.d_cog;
  j["missing"] = cfg.missing;
  j["hidden"] = cfg.train.hidden;
  j["learning_rate"] = cfg.train.learning_rate;
  j["batch_size"] = cfg.train.batch_size;
  j["epochs"] = cfg.train.epochs;
  j["l2"] = cfg.train.l2;
  j["seed"] = cfg.train.seed;
  j["patience"] = cfg.train.patience;
  j["removal_fraction"] = cfg.train.removal_fraction;
  j["val_frac"] = cfg.train.val_frac;
  j["test_frac"] = cfg.train.test_frac;
  j["normalize_losses"] = cfg.train.normalize_losses;
  j["imputation_loss_mode"] = mode_to_string(cfg.train.imputation_loss_mode);
  j["threads"] = cfg.train.threads;
  j["alpha"] = cfg.weights.alpha;
  j["zeta"] = cfg.weights.zeta;
  j["xi"] = cfg.weights.xi;
  j["epsilon"] = cfg.weights.epsilon;
  j["folds"] = cfg.folds;
  j["cv"] = cfg.cv;
  j["split"] = cfg.split;
  j["horizon"] = cfg.horizon;
  j["interval"] = cfg.interval;
  j["per_subject"] = cfg.per_subject;
  j["top_fraction"] = cfg.top_fraction;
  return j;
}

// Reproducibility sidecar next to every artifact: resolved settings, never
// timestamps.
void write_sidecar(const RunConfig& cfg, const std::string& artifact, const json& extra = json::object()) {
  json j;
  j["command"] = cfg.command;
  j["seed"] = cfg.train.seed;
  j["config"] = config_json(cfg);
  for (const auto& [key, value] : extra.items()) j[key] = value;
  write_text(artifact + ".meta.json", j.dump(2) + "\n");
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file '" + path + "': expected a flat JSON object");

  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "data") cfg.data = value.get<std::string>();
      else if (key == "checkpoint") cfg.checkpoint = value.get<std::string>();
      else if (key == "out") cfg.out = value.get<std::string>();
      else if (key == "truth_out") cfg.truth_out = value.get<std::string>();
      else if (key == "history_out") cfg.history_out = value.get<std::string>();
      else if (key == "report_out") cfg.report_out = value.get<std::string>();
      else if (key == "subjects") cfg.subjects = value.get<std::size_t>();
      else if (key == "visits") cfg.visits = value.get<std::size_t>();
      else if (key == "d_mri") cfg.d_mri = value.get<std::size_t>();
      else if (key == "d_cog") cfg.d_cog = value.get<std::size_t>();
      else if (key == "missing") cfg.missing = value.get<double>();
      else if (key == "hidden") cfg.train.hidden = value.get<std::size_t>();
      else if (key == "learning_rate") cfg.train.learning_rate = value.get<double>();
      else if (key == "batch_size") cfg.train.batch_size = value.get<std::size_t>();
      else if (key == "epochs") cfg.train.epochs = value.get<std::size_t>();
      else if (key == "l2") cfg.train.l2 = value.get<double>();
      else if (key == "seed") cfg.train.seed = value.get<std::uint64_t>();
      else if (key == "patience") cfg.train.patience = value.get<std::size_t>();
      else if (key == "removal_fraction") cfg.train.removal_fraction = value.get<double>();
      else if (key == "val_frac") cfg.train.val_frac = value.get<double>();
      else if (key == "test_frac") cfg.train.test_frac = value.get<double>();
      else if (key == "normalize_losses") cfg.train.normalize_losses = value.get<bool>();
      else if (key == "imputation_loss_mode") cfg.train.imputation_loss_mode = mode_from_string(value.get<std::string>());
      else if (key == "threads") cfg.train.threads = value.get<std::size_t>();
      else if (key == "alpha") cfg.weights.alpha = value.get<double>();
      else if (key == "zeta") cfg.weights.zeta = value.get<double>();
      else if (key == "xi") cfg.weights.xi = value.get<double>();
      else if (key == "epsilon") cfg.weights.epsilon = value.get<double>();
      else if (key == "folds") cfg.folds = value.get<std::size_t>();
      else if (key == "cv") cfg.cv = value.get<bool>();
      else if (key == "split") cfg.split = value.get<std::string>();
      else if (key == "horizon") cfg.horizon = value.get<std::size_t>();
      else if (key == "interval") cfg.interval = value.get<double>();
      else if (key == "per_subject") cfg.per_subject = value.get<bool>();
      else if (key == "top_fraction") cfg.top_fraction = value.get<double>();
      else throw ConfigError("config file: unknown key '" + key + "'");
    } catch (const json::exception&) {
      throw ConfigError("config file: invalid value for key '" + key + "'");
    }
  }
}

void validate(const RunConfig& cfg) {
  const auto bad = [](const std::string& key, const std::string& why) {
    throw ConfigError(key + ": " + why);
  };
  if (cfg.missing < 0.0 || cfg.missing >= 1.0) bad("missing", "must lie in [0, 1)");
  if (cfg.train.removal_fraction < 0.0 || cfg.train.removal_fraction >= 1.0)
    bad("removal_fraction", "must lie in [0, 1)");
  if (cfg.train.val_frac < 0.0 || cfg.train.test_frac < 0.0 ||
      cfg.train.val_frac + cfg.train.test_frac >= 1.0)
    bad("val_frac/test_frac", "must be non-negative and sum below 1");
  if (cfg.train.hidden == 0) bad("hidden", "must be positive");
  if (cfg.train.batch_size == 0) bad("batch_size", "must be positive");
  if (cfg.train.learning_rate <= 0.0) bad("learning_rate", "must be positive");
  if (cfg.train.l2 < 0.0) bad("l2", "must be non-negative");
  if (cfg.train.threads == 0) bad("threads", "must be positive");
  if (cfg.weights.alpha < 0.0 || cfg.weights.zeta < 0.0 || cfg.weights.xi < 0.0)
    bad("alpha/zeta/xi", "must be non-negative");
  if (cfg.weights.epsilon < 0.0) bad("epsilon", "must be non-negative");
  if (cfg.folds < 2) bad("folds", "must be at least 2");
  if (cfg.subjects == 0 || cfg.visits == 0 || cfg.d_mri == 0 || cfg.d_cog == 0)
    bad("subjects/visits/d_mri/d_cog", "must be positive");
  if (cfg.horizon == 0) bad("horizon", "must be positive");
  if (cfg.interval <= 0.0) bad("interval", "must be positive");
  if (cfg.top_fraction <= 0.0 || cfg.top_fraction > 1.0) bad("top_fraction", "must lie in (0, 1]");
  if (cfg.split != "train" && cfg.split != "val" && cfg.split != "test" && cfg.split != "all")
    bad("split", "must be one of train, val, test, all");
}

json metric_report_to_json(const MetricReport& rep) {
  json j;
  j["provenance"] = json{{"fold", rep.fold}, {"split", rep.split}, {"seed", rep.seed}};
  j["subjects"] = rep.subjects;
  j["visits"] = rep.visits;
  j["imputation"] = json{{"entries", rep.imp_entries},
                         {"mae", rep.imp_mae},
                         {"mre", rep.imp_mre},
                         {"rmse", rep.imp_rmse},
                         {"baselines", json{{"model", rep.baselines.model_mae},
                                            {"mean", rep.baselines.mean_mae},
                                            {"forward", rep.baselines.forward_mae},
                                            {"zero", rep.baselines.zero_mae}}}};
  j["forecast"] = json{{"entries", rep.forecast_entries},
                       {"mri_features", rep.mri_features},
                       {"mri_mae", rep.mri_mae},
                       {"mri_mae_pooled", rep.forecast_mri_mae},
                       {"cog_features", rep.cog_features},
                       {"cog_rmse", rep.cog_rmse},
                       {"cog_rmse_pooled", rep.forecast_cog_rmse}};
  json confusion = json::array();
  for (std::size_t r = 0; r < rep.classification.confusion.rows; ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < rep.classification.confusion.cols; ++c)
      row.push_back(rep.classification.confusion(r, c));
    confusion.push_back(std::move(row));
  }
  j["classification"] = json{{"steps", rep.classification.count},
                             {"mauc", rep.classification.mauc},
                             {"macro_precision", rep.classification.macro_precision},
                             {"macro_recall", rep.classification.macro_recall},
                             {"precision", rep.classification.precision},
                             {"recall", rep.classification.recall},
                             {"confusion", std::move(confusion)}};
  json rollout = json::array();
  for (const auto& [horizon, mauc] : rep.rollout_mauc)
    rollout.push_back(json{{"horizon", horizon}, {"mauc", mauc}});
  j["rollout"] = std::move(rollout);
  if (rep.has_conversion) {
    json c;
    c["applicable"] = rep.conversion.applicable();
    c["converters"] = rep.conversion.converters;
    c["detected"] = rep.conversion.detected;
    c["missed"] = rep.conversion.missed;
    if (rep.conversion.applicable()) {
      c["accuracy"] = rep.conversion.accuracy;
      c["time_mae_years"] = rep.conversion.time_mae;
    }
    j["conversion"] = std::move(c);
  }
  return j;
}

// One row per report plus optional mean/std rows over the numeric columns.
std::string reports_csv(const std::vector<const MetricReport*>& reports, bool with_summary) {
  std::vector<std::size_t> horizons;
  for (const auto& [h, mauc] : reports.front()->rollout_mauc) horizons.push_back(h);

  std::string text = "fold,split,seed,subjects,visits,imp_entries,imp_mae,imp_mre,imp_rmse,"
                     "baseline_mean_mae,baseline_forward_mae,baseline_zero_mae,"
                     "forecast_mri_mae,forecast_cog_rmse,mauc,macro_precision,macro_recall,"
                     "conversion_accuracy,conversion_time_mae_years";
  for (std::size_t h : horizons) text += ",rollout_mauc_h" + std::to_string(h);
  text += "\n";

  // Numeric cells per row, in column order after fold/split/seed; nullopt
  // renders as an empty cell.
  const auto numeric_cells = [&](const MetricReport& r) {
    std::vector<std::optional<double>> cells = {
        static_cast<double>(r.subjects), static_cast<double>(r.visits),
        static_cast<double>(r.imp_entries), r.imp_mae, r.imp_mre, r.imp_rmse,
        r.baselines.mean_mae, r.baselines.forward_mae, r.baselines.zero_mae,
        r.forecast_mri_mae, r.forecast_cog_rmse, r.classification.mauc,
        r.classification.macro_precision, r.classification.macro_recall};
    if (r.has_conversion && r.conversion.applicable()) {
      cells.push_back(r.conversion.accuracy);
      cells.push_back(r.conversion.time_mae);
    } else {
      cells.push_back(std::nullopt);
      cells.push_back(std::nullopt);
    }
    for (std::size_t h : horizons) {
      std::optional<double> found;
      for (const auto& [rh, mauc] : r.rollout_mauc)
        if (rh == h) found = mauc;
      cells.push_back(found);
    }
    return cells;
  };

  std::vector<std::vector<std::optional<double>>> rows;
  for (const MetricReport* r : reports) {
    rows.push_back(numeric_cells(*r));
    text += std::to_string(r->fold) + "," + r->split + "," + std::to_string(r->seed);
    for (const auto& cell : rows.back()) text += "," + (cell ? format_double(*cell) : std::string());
    text += "\n";
  }

  if (with_summary && !rows.empty()) {
    const std::size_t cols = rows.front().size();
    const double n = static_cast<double>(rows.size());
    std::vector<std::optional<double>> mean(cols), sd(cols);
    for (std::size_t c = 0; c < cols; ++c) {
      bool all = true;
      double m = 0.0;
      for (const auto& row : rows) {
        if (!row[c]) { all = false; break; }
        m += *row[c];
      }
      if (!all) continue;
      m /= n;
      double var = 0.0;
      for (const auto& row : rows) var += (*row[c] - m) * (*row[c] - m);
      mean[c] = m;
      sd[c] = std::sqrt(var / n);
    }
    const auto emit = [&](const char* name, const std::vector<std::optional<double>>& cells) {
      text += std::string(name) + ",,";
      for (const auto& cell : cells) text += "," + (cell ? format_double(*cell) : std::string());
      text += "\n";
    };
    emit("mean", mean);
    emit("std", sd);
  }
  return text;
}

void write_report_files(const RunConfig& cfg, const MetricReport& rep, const std::string& stem) {
  write_text(stem + ".json", metric_report_to_json(rep).dump(2) + "\n");
  write_text(stem + ".csv", reports_csv({&rep}, false));
  write_sidecar(cfg, stem + ".json");
}

std::string history_csv(const TrainResult& result) {
  std::string text = "epoch,train_loss,val_mauc,improved\n";
  for (const EpochStats& e : result.history)
    text += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," + format_double(e.val_mauc) +
            "," + (e.improved ? "1" : "0") + "\n";
  return text;
}

void check_features_match(const Cohort& cohort, const NormalizationSpec& spec) {
  if (cohort.d() != spec.features.size())
    throw DataError("cohort has " + std::to_string(cohort.d()) + " features, checkpoint expects " +
                    std::to_string(spec.features.size()));
  for (std::size_t i = 0; i < spec.features.size(); ++i) {
    if (cohort.features[i].name != spec.features[i].name || cohort.features[i].kind != spec.features[i].kind)
      throw DataError("feature mismatch at column " + std::to_string(i) + ": cohort has '" +
                      cohort.features[i].name + "', checkpoint expects '" + spec.features[i].name + "'");
  }
}

// Shared prologue for commands that score an existing checkpoint.
LoadedCheckpoint load_and_normalize(const RunConfig& cfg, Cohort& cohort) {
  LoadedCheckpoint lc = load_checkpoint(cfg.checkpoint);
  cohort = load_cohort_csv(cfg.data);
  check_features_match(cohort, lc.meta.normalization);
  apply_normalizer(cohort, lc.meta.normalization);
  return lc;
}

EvalOptions eval_options_from(const RunConfig& cfg) {
  EvalOptions eo;
  eo.removal_fraction = cfg.train.removal_fraction;
  eo.seed = cfg.train.seed;
  return eo;
}

int run_synth(const RunConfig& cfg) {
  const Cohort cohort =
      synthesize_cohort(cfg.subjects, cfg.visits, cfg.d_mri, cfg.d_cog, cfg.missing, cfg.train.seed);
  write_cohort_csv(cohort, cfg.out);
  const std::string truth = cfg.truth_out.empty() ? drop_extension(cfg.out) + ".truth.csv" : cfg.truth_out;
  write_cohort_csv(cohort, truth, true);
  write_sidecar(cfg, cfg.out,
                json{{"truth_csv", truth}, {"cohort", json::parse(cohort_manifest_json(cohort, nullptr))}});
  std::cout << "synth: wrote " << cohort.subjects.size() << " subjects, " << cohort.d() << " features to "
            << cfg.out << "\n";
  return 0;
}

int run_train(const RunConfig& cfg) {
  const Cohort cohort = load_cohort_csv(cfg.data);
  const EvalOptions eo = eval_options_from(cfg);

  if (cfg.cv) {
    const CrossValidationResult cv = cross_validate(cohort, cfg.folds, cfg.train, cfg.weights, eo);
    const std::string stem = report_stem(cfg.out);
    json j;
    j["folds"] = json::array();
    std::vector<const MetricReport*> reports;
    for (const FoldOutcome& f : cv.folds) {
      json fj = metric_report_to_json(f.report);
      fj["best_val_mauc"] = f.train.best_val_mauc;
      fj["best_epoch"] = f.train.best_epoch;
      fj["epochs_run"] = f.train.epochs_run;
      j["folds"].push_back(std::move(fj));
      reports.push_back(&f.report);
    }
    j["summary"] = json{{"mean_mauc", cv.summary.mean_mauc},
                        {"std_mauc", cv.summary.std_mauc},
                        {"mean_imp_mae", cv.summary.mean_imp_mae},
                        {"std_imp_mae", cv.summary.std_imp_mae},
                        {"mean_mri_mae", cv.summary.mean_mri_mae},
                        {"std_mri_mae", cv.summary.std_mri_mae},
                        {"mean_cog_rmse", cv.summary.mean_cog_rmse},
                        {"std_cog_rmse", cv.summary.std_cog_rmse}};
    write_text(stem + ".json", j.dump(2) + "\n");
    write_text(stem + ".csv", reports_csv(reports, true));
    write_sidecar(cfg, stem + ".json");
    std::cout << "cross-validation: mAUC " << cv.summary.mean_mauc << " +/- " << cv.summary.std_mauc
              << ", imputation MAE " << cv.summary.mean_imp_mae << " +/- " << cv.summary.std_imp_mae
              << " over " << cfg.folds << " folds\n";
    return 0;
  }

  const std::vector<FoldSplit> splits = stratified_folds(cohort, std::max<std::size_t>(cfg.folds, 2),
                                                         cfg.train.val_frac, cfg.train.test_frac,
                                                         cfg.train.seed);
  ModelDims dims;
  dims.d_mri = cohort.d_mri();
  dims.d_cog = cohort.d_cog();
  dims.hidden = cfg.train.hidden;
  Model model(dims);

  const FoldOutcome outcome = run_fold(model, cohort, splits.front(), cfg.train, cfg.weights, eo, 0);

  CheckpointMeta meta;
  meta.config = cfg.train;
  meta.weights = cfg.weights;
  meta.normalization = outcome.normalization;
  meta.best_val_mauc = outcome.train.best_val_mauc;
  meta.best_epoch = outcome.train.best_epoch;
  save_checkpoint(model, meta, cfg.out);

  const std::string history_path =
      cfg.history_out.empty() ? drop_extension(cfg.out) + ".history.csv" : cfg.history_out;
  write_text(history_path, history_csv(outcome.train));

  const std::string stem =
      cfg.report_out.empty() ? drop_extension(cfg.out) + ".report" : report_stem(cfg.report_out);
  write_report_files(cfg, outcome.report, stem);
  write_sidecar(cfg, cfg.out, json{{"history_csv", history_path}, {"report_stem", stem}});

  std::cout << "train: best val mAUC " << outcome.train.best_val_mauc << " at epoch "
            << outcome.train.best_epoch << " (" << outcome.train.epochs_run << " run); test mAUC "
            << outcome.report.classification.mauc << "\n";
  return 0;
}

int run_eval(const RunConfig& cfg) {
  Cohort cohort;
  const LoadedCheckpoint lc = load_and_normalize(cfg, cohort);

  std::vector<std::size_t> indices;
  if (cfg.split == "all") {
    indices.resize(cohort.subjects.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  } else {
    // The same deterministic partition the training command derives.
    const std::vector<FoldSplit> splits =
        stratified_folds(cohort, std::max<std::size_t>(cfg.folds, 2), lc.meta.config.val_frac,
                         lc.meta.config.test_frac, lc.meta.config.seed);
    const FoldSplit& split = splits.front();
    indices = cfg.split == "train" ? split.train : (cfg.split == "val" ? split.val : split.test);
  }
  if (indices.empty()) throw DataError("eval: selected split '" + cfg.split + "' is empty");

  MetricReport rep = evaluate_model(lc.model, gather_subjects(cohort, indices), cohort,
                                    &lc.meta.normalization, eval_options_from(cfg));
  rep.split = cfg.split;
  rep.seed = cfg.train.seed;
  write_report_files(cfg, rep, report_stem(cfg.out));

  std::cout << "eval[" << cfg.split << "]: mAUC " << rep.classification.mauc << ", imputation MAE "
            << rep.imp_mae << " over " << rep.subjects << " subjects\n";
  return 0;
}

int run_forecast(const RunConfig& cfg) {
  Cohort cohort;
  const LoadedCheckpoint lc = load_and_normalize(cfg, cohort);
  const std::size_t d = cohort.d(), d_mri = cohort.d_mri();

  std::string text = "subject_id,step,time_years,p_cn,p_mci,p_ad";
  for (const FeatureInfo& f : cohort.features) text += "," + f.name;
  text += "\n";

  for (const SubjectSequence& seq : cohort.subjects) {
    const RolloutResult rolled =
        rollout_forecast(lc.model, make_subject_input(seq), cfg.horizon, cfg.interval);
    for (std::size_t j = 0; j < rolled.future.size(); ++j) {
      const RolloutStep& step = rolled.future[j];
      text += seq.id + "," + std::to_string(j + 1) + "," + format_double(step.time);
      for (int k = 0; k < kNumClasses; ++k) text += "," + format_double(step.status_prob[k]);
      for (std::size_t i = 0; i < d; ++i) {
        const double value = i < d_mri ? step.forecast.mri_next[i] : step.forecast.cog_next[i - d_mri];
        text += "," + format_double(lc.meta.normalization.to_raw(i, value, seq.icv));
      }
      text += "\n";
    }
  }
  write_text(cfg.out, text);
  write_sidecar(cfg, cfg.out);
  std::cout << "forecast: " << cfg.horizon << " visits x " << cohort.subjects.size() << " subjects to "
            << cfg.out << "\n";
  return 0;
}

int run_analyze_cells(const RunConfig& cfg) {
  Cohort cohort;
  const LoadedCheckpoint lc = load_and_normalize(cfg, cohort);

  std::vector<const SubjectSequence*> subjects;
  for (const SubjectSequence& s : cohort.subjects) subjects.push_back(&s);
  const CellAnalysis analysis =
      cell_state_analysis(lc.model, subjects, cfg.top_fraction, cfg.per_subject);

  std::string text = "group,rank,unit,coefficient,flagged\n";
  for (const CellGroupReport* group : {&analysis.cn_mci, &analysis.mci_ad}) {
    for (std::size_t r = 0; r < group->ranked.size(); ++r) {
      const std::size_t unit = group->ranked[r];
      const bool flagged =
          std::find(group->flagged.begin(), group->flagged.end(), unit) != group->flagged.end();
      text += group->name + "," + std::to_string(r + 1) + "," + std::to_string(unit) + "," +
              format_double(group->correlation[unit]) + "," + (flagged ? "1" : "0") + "\n";
    }
  }
  write_text(cfg.out, text);
  write_sidecar(cfg, cfg.out,
                json{{"common_units", analysis.common},
                     {"samples", json{{"cn_mci", analysis.cn_mci.samples}, {"mci_ad", analysis.mci_ad.samples}}}});
  std::cout << "analyze-cells: flagged " << analysis.cn_mci.flagged.size() << " + "
            << analysis.mci_ad.flagged.size() << " units, " << analysis.common.size() << " common\n";
  return 0;
}

int run_compare_baselines(const RunConfig& cfg) {
  Cohort cohort;
  const LoadedCheckpoint lc = load_and_normalize(cfg, cohort);

  std::vector<const SubjectSequence*> subjects;
  for (const SubjectSequence& s : cohort.subjects) subjects.push_back(&s);
  const BaselineComparison cmp =
      compare_imputation_baselines(lc.model, subjects, cfg.train.removal_fraction, cfg.train.seed);

  std::string text = "method,mae,entries\n";
  const std::string n = std::to_string(cmp.entries);
  text += "model," + format_double(cmp.model_mae) + "," + n + "\n";
  text += "mean," + format_double(cmp.mean_mae) + "," + n + "\n";
  text += "forward," + format_double(cmp.forward_mae) + "," + n + "\n";
  text += "zero," + format_double(cmp.zero_mae) + "," + n + "\n";
  write_text(cfg.out, text);
  write_sidecar(cfg, cfg.out);
  std::cout << "compare-baselines: model " << cmp.model_mae << ", mean " << cmp.mean_mae << ", forward "
            << cmp.forward_mae << ", zero " << cmp.zero_mae << " over " << cmp.entries << " entries\n";
  return 0;
}

}  // namespace

RunConfig parse_config(const std::vector<std::string>& args) {
  RunConfig cfg;

  // The config file seeds the defaults, so explicit flags win.
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) cfg.config_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) cfg.config_path = args[i].substr(9);
  }
  if (!cfg.config_path.empty()) apply_config_file(cfg, cfg.config_path);

  CLI::App app{"Longitudinal disease-progression modeling: imputation, forecasting, and staging"};
  app.require_subcommand(1);
  app.add_option("--config", cfg.config_path, "flat JSON file with defaults for any option");
  app.add_option("--seed", cfg.train.seed, "master random seed");
  app.add_option("--threads", cfg.train.threads, "worker threads for batched passes");

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic three-class cohort");
  synth->add_option("--out", cfg.out, "cohort CSV path")->required();
  synth->add_option("--truth-out", cfg.truth_out, "complete-values CSV path");
  synth->add_option("--subjects", cfg.subjects, "number of subjects");
  synth->add_option("--visits", cfg.visits, "visits per subject");
  synth->add_option("--mri", cfg.d_mri, "MRI-like feature count");
  synth->add_option("--cog", cfg.d_cog, "cognitive feature count");
  synth->add_option("--missing", cfg.missing, "missing-entry fraction");

  std::string mode_flag;
  bool raw_sums = false;
  CLI::App* train = app.add_subcommand("train", "train a model and write a checkpoint");
  train->add_option("--data", cfg.data, "cohort CSV path")->required();
  train->add_option("--out", cfg.out, "checkpoint path (report stem with --cv)")->required();
  train->add_option("--history", cfg.history_out, "per-epoch history CSV path");
  train->add_option("--report", cfg.report_out, "metric report stem");
  train->add_flag("--cv", cfg.cv, "run the full cross-validation harness instead of one split");
  train->add_option("--folds", cfg.folds, "stratified fold count");
  train->add_option("--hidden", cfg.train.hidden, "recurrent state width");
  train->add_option("--lr", cfg.train.learning_rate, "learning rate");
  train->add_option("--batch", cfg.train.batch_size, "mini-batch size");
  train->add_option("--epochs", cfg.train.epochs, "epoch cap");
  train->add_option("--l2", cfg.train.l2, "weight-decay coefficient");
  train->add_option("--patience", cfg.train.patience, "epochs without improvement before stopping");
  train->add_option("--removal", cfg.train.removal_fraction, "fraction of observed entries hidden");
  train->add_option("--val-frac", cfg.train.val_frac, "validation fraction per class");
  train->add_option("--test-frac", cfg.train.test_frac, "test fraction per class");
  train->add_flag("--raw-sums", raw_sums, "use raw loss sums instead of per-count normalization");
  train->add_option("--imputation-loss", mode_flag, "removed_truth or literal_masked");
  train->add_option("--alpha", cfg.weights.alpha, "imputation loss weight");
  train->add_option("--zeta", cfg.weights.zeta, "forecast loss weight");
  train->add_option("--xi", cfg.weights.xi, "status loss weight");
  train->add_option("--epsilon", cfg.weights.epsilon, "focal exponent");

  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on a cohort split");
  eval->add_option("--data", cfg.data, "cohort CSV path")->required();
  eval->add_option("--checkpoint", cfg.checkpoint, "checkpoint path")->required();
  eval->add_option("--out", cfg.out, "report stem (.json and .csv are written)")->required();
  eval->add_option("--split", cfg.split, "train, val, test, or all");
  eval->add_option("--folds", cfg.folds, "fold count used to re-derive the split");
  eval->add_option("--removal", cfg.train.removal_fraction, "held-out fraction for imputation scoring");

  CLI::App* forecast = app.add_subcommand("forecast", "recursive multi-visit forecasts per subject");
  forecast->add_option("--data", cfg.data, "cohort CSV path")->required();
  forecast->add_option("--checkpoint", cfg.checkpoint, "checkpoint path")->required();
  forecast->add_option("--out", cfg.out, "forecast CSV path")->required();
  forecast->add_option("--horizon", cfg.horizon, "future visits per subject");
  forecast->add_option("--interval", cfg.interval, "years between future visits");

  CLI::App* cells = app.add_subcommand("analyze-cells", "stage correlates of recurrent cell units");
  cells->add_option("--data", cfg.data, "cohort CSV path")->required();
  cells->add_option("--checkpoint", cfg.checkpoint, "checkpoint path")->required();
  cells->add_option("--out", cfg.out, "ranking CSV path")->required();
  cells->add_flag("--per-subject", cfg.per_subject, "average per-subject correlations instead of pooling");
  cells->add_option("--top", cfg.top_fraction, "flagged share of units");

  CLI::App* compare = app.add_subcommand("compare-baselines", "model vs mean/forward/zero imputers");
  compare->add_option("--data", cfg.data, "cohort CSV path")->required();
  compare->add_option("--checkpoint", cfg.checkpoint, "checkpoint path")->required();
  compare->add_option("--out", cfg.out, "comparison CSV path")->required();
  compare->add_option("--removal", cfg.train.removal_fraction, "held-out fraction of observed entries");

  for (CLI::App* sub : {synth, train, eval, forecast, cells, compare}) sub->fallthrough();

  std::vector<const char*> argv;
  argv.push_back("dpm");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    throw ExitRequest{code == 0 ? 0 : 2};
  }

  cfg.command = app.get_subcommands().front()->get_name();
  if (raw_sums) cfg.train.normalize_losses = false;
  if (!mode_flag.empty()) cfg.train.imputation_loss_mode = mode_from_string(mode_flag);
  validate(cfg);
  return cfg;
}

int run_command(const RunConfig& cfg) {
  if (cfg.command == "synth") return run_synth(cfg);
  if (cfg.command == "train") return run_train(cfg);
  if (cfg.command == "eval") return run_eval(cfg);
  if (cfg.command == "forecast") return run_forecast(cfg);
  if (cfg.command == "analyze-cells") return run_analyze_cells(cfg);
  if (cfg.command == "compare-baselines") return run_compare_baselines(cfg);
  throw InternalError("unhandled command '" + cfg.command + "'");
}

int dispatch(const std::vector<std::string>& args) {
  try {
    return run_command(parse_config(args));
  } catch (const ExitRequest& e) {
    return e.code;
  } catch (const ConfigError& e) {
    std::cerr << "[error] " << e.what() << "\n";
    return 2;
  } catch (const ArgumentError& e) {
    std::cerr << "[error] " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "[error] " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "[error] " << e.what() << "\n";
    return 3;
  }
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args);
}

}  // namespace dpm::cli
