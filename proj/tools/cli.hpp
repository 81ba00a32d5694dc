#pragma once

#include <string>
#include <vector>

#include "dpm/evaluation.hpp"
#include "dpm/pipeline.hpp"
#include "dpm/training.hpp"

namespace dpm::cli {

// Resolved settings for one command; flag > config file > default.
struct RunConfig {
  std::string command;
  std::string config_path;

  std::string data;
  std::string checkpoint;
  std::string out;
  std::string truth_out;    // synth: complete-values CSV
  std::string history_out;  // train: per-epoch CSV
  std::string report_out;   // train: metric report stem

  // synth
  std::size_t subjects = 200;
  std::size_t visits = 11;
  std::size_t d_mri = 6;
  std::size_t d_cog = 3;
  double missing = 0.3;

  TrainConfig train;
  LossWeights weights;
  std::size_t folds = 5;
  bool cv = false;

  std::string split = "test";  // eval: train | val | test | all

  // forecast
  std::size_t horizon = 5;
  double interval = 1.0;

  // analyze-cells
  bool per_subject = false;
  double top_fraction = 0.25;
};

// Parses argv (without the binary name). Throws ConfigError for bad values
// or unknown config-file keys; CLI11 errors surface as usage errors.
RunConfig parse_config(const std::vector<std::string>& args);

// Executes a parsed command; returns the process exit code.
int run_command(const RunConfig& cfg);

// parse + run + exception-to-exit-code mapping:
// 0 ok, 1 I/O, 2 usage/config, 3 invariant violation.
int dispatch(const std::vector<std::string>& args);
int dispatch(int argc, const char* const* argv);

}  // namespace dpm::cli
