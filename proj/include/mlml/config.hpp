#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "mlml/dataset.hpp"
#include "mlml/eval.hpp"
#include "mlml/model.hpp"
#include "mlml/trainer.hpp"

namespace mlml {

struct EvalOptions {
  /// Seeds k-means.
  std::uint64_t seed = 1;
  std::vector<int> recall_ks = {std::begin(kRecallKs), std::end(kRecallKs)};
  bool classification = true;
  double probe_l2 = 1e-4;
};

struct PathsConfig {
  std::filesystem::path data_dir = "data";
  /// Defaults to $MLML_RUN_DIR, else "runs/latest".
  std::filesystem::path run_dir;
};

/// Everything a run needs, as one JSON document with the sections
/// "synthetic", "encoder", "train", "eval" and "paths".
struct RunConfig {
  SyntheticSpec synthetic = SyntheticSpec::default_spec();
  /// input_dim is taken from the dataset at train time.
  EncoderConfig encoder;
  TrainConfig train;
  EvalOptions eval;
  PathsConfig paths;
};

/// Environment variable naming the default run directory.
inline constexpr const char* kRunDirEnv = "MLML_RUN_DIR";

/// Defaults with the run directory resolved from the environment.
RunConfig default_run_config();

/// Starts from default_run_config() and applies the keys present in `j`.
/// Unknown sections or keys throw ConfigError naming the dotted key; so do
/// values of the wrong type. A manifest written by `train` or `gen-data` is
/// accepted too: its "config" member is used.
RunConfig parse_run_config(const nlohmann::json& j);

/// Reads and parses a JSON config file. Throws ConfigError.
nlohmann::json read_config_file(const std::filesystem::path& path);

/// Full echo of every section, prototypes included, so the config can be
/// replayed on its own.
nlohmann::json to_json(const RunConfig& c);
nlohmann::json to_json(const SyntheticSpec& s);

}  // namespace mlml
