#pragma once

#include <string>

#include "dpm/cohort.hpp"
#include "dpm/model.hpp"
#include "dpm/training.hpp"

namespace dpm {

// Everything next to the parameters that is needed to reuse them.
struct CheckpointMeta {
  int format_version = 1;
  TrainConfig config;
  LossWeights weights;
  NormalizationSpec normalization;
  double best_val_mauc = 0.0;
  std::size_t best_epoch = 0;
};

// Versioned JSON with sorted keys and shortest round-trip doubles, so equal
// models serialize to identical bytes.
std::string checkpoint_json(const Model& model, const CheckpointMeta& meta);

void save_checkpoint(const Model& model, const CheckpointMeta& meta, const std::string& path);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  Model model;
};

LoadedCheckpoint load_checkpoint(const std::string& path);
LoadedCheckpoint checkpoint_from_json(const std::string& text);

}  // namespace dpm
