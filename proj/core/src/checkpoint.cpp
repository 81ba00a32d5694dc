#include <fstream>
#include <sstream>

#include "dpm/checkpoint.hpp"
#include "json.hpp"

namespace dpm {

namespace {

using nlohmann::json;

const char* mode_name(ImputationLossMode mode) {
  return mode == ImputationLossMode::removed_truth ? "removed_truth" : "literal_masked";
}

ImputationLossMode mode_from_name(const std::string& name) {
  if (name == "removed_truth") return ImputationLossMode::removed_truth;
  if (name == "literal_masked") return ImputationLossMode::literal_masked;
  throw DataError("checkpoint: unknown imputation loss mode '" + name + "'");
}

json config_to_json(const TrainConfig& c) {
  return json{{"hidden", c.hidden},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"l2", c.l2},
              {"seed", c.seed},
              {"patience", c.patience},
              {"removal_fraction", c.removal_fraction},
              {"val_frac", c.val_frac},
              {"test_frac", c.test_frac},
              {"normalize_losses", c.normalize_losses},
              {"imputation_loss_mode", mode_name(c.imputation_loss_mode)},
              {"threads", c.threads}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.hidden = j.at("hidden").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.l2 = j.at("l2").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.patience = j.at("patience").get<std::size_t>();
  c.removal_fraction = j.at("removal_fraction").get<double>();
  c.val_frac = j.at("val_frac").get<double>();
  c.test_frac = j.at("test_frac").get<double>();
  c.normalize_losses = j.at("normalize_losses").get<bool>();
  c.imputation_loss_mode = mode_from_name(j.at("imputation_loss_mode").get<std::string>());
  c.threads = j.at("threads").get<std::size_t>();
  return c;
}

json weights_to_json(const LossWeights& w) {
  return json{{"alpha", w.alpha}, {"zeta", w.zeta}, {"xi", w.xi}, {"epsilon", w.epsilon}};
}

LossWeights weights_from_json(const json& j) {
  LossWeights w;
  w.alpha = j.at("alpha").get<double>();
  w.zeta = j.at("zeta").get<double>();
  w.xi = j.at("xi").get<double>();
  w.epsilon = j.at("epsilon").get<double>();
  return w;
}

}  // namespace

std::string checkpoint_json(const Model& model, const CheckpointMeta& meta) {
  json j;
  j["format_version"] = meta.format_version;
  j["dims"] = json{{"d_mri", model.dims().d_mri},
                   {"d_cog", model.dims().d_cog},
                   {"hidden", model.dims().hidden},
                   {"classes", model.dims().classes}};
  j["config"] = config_to_json(meta.config);
  j["loss_weights"] = weights_to_json(meta.weights);
  j["normalization"] = json::parse(normalization_to_json(meta.normalization));
  j["best_val_mauc"] = meta.best_val_mauc;
  j["best_epoch"] = meta.best_epoch;

  json params = json::object();
  const ParamBundle& bundle = model.bundle();
  for (std::size_t i = 0; i < bundle.size(); ++i) {
    const ParamEntry& e = bundle.entry(i);
    params[e.name] = json{{"shape", {e.value.rows, e.value.cols}}, {"values", e.value.data}};
  }
  j["params"] = std::move(params);
  return j.dump(2) + "\n";
}

void save_checkpoint(const Model& model, const CheckpointMeta& meta, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << checkpoint_json(model, meta);
  if (!out) throw DataError("failed writing '" + path + "'");
}

LoadedCheckpoint checkpoint_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: malformed JSON: ") + e.what());
  }
  try {
    const int version = j.at("format_version").get<int>();
    if (version != 1)
      throw DataError("checkpoint: unsupported format_version " + std::to_string(version));

    ModelDims dims;
    dims.d_mri = j.at("dims").at("d_mri").get<std::size_t>();
    dims.d_cog = j.at("dims").at("d_cog").get<std::size_t>();
    dims.hidden = j.at("dims").at("hidden").get<std::size_t>();
    dims.classes = j.at("dims").at("classes").get<std::size_t>();

    LoadedCheckpoint out{CheckpointMeta{}, Model(dims)};
    out.meta.format_version = version;
    out.meta.config = config_from_json(j.at("config"));
    out.meta.weights = weights_from_json(j.at("loss_weights"));
    out.meta.normalization = normalization_from_json(j.at("normalization").dump());
    out.meta.best_val_mauc = j.at("best_val_mauc").get<double>();
    out.meta.best_epoch = j.at("best_epoch").get<std::size_t>();

    const json& params = j.at("params");
    ParamBundle& bundle = out.model.bundle();
    for (std::size_t i = 0; i < bundle.size(); ++i) {
      ParamEntry& e = bundle.entry(i);
      if (!params.contains(e.name)) throw DataError("checkpoint: missing parameter '" + e.name + "'");
      const json& p = params.at(e.name);
      const auto shape = p.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2 || shape[0] != e.value.rows || shape[1] != e.value.cols)
        throw DataError("checkpoint: parameter '" + e.name + "' has the wrong shape");
      const auto values = p.at("values").get<std::vector<double>>();
      if (values.size() != e.value.data.size())
        throw DataError("checkpoint: parameter '" + e.name + "' has the wrong value count");
      e.value.data = values;
    }
    if (params.size() != bundle.size()) throw DataError("checkpoint: unexpected extra parameters");
    out.model.bundle().project_values();
    return out;
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: missing or invalid field: ") + e.what());
  }
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str());
}

}  // namespace dpm
