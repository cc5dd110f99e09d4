#include "mlml/config.hpp"

#include <cstdlib>
#include <fstream>
#include <string>

#include "mlml/error.hpp"

namespace mlml {

using nlohmann::json;

namespace {

template <class T>
void read_key(const json& value, const std::string& key, T& out) {
  try {
    value.get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

void require_object(const json& j, const std::string& key) {
  if (!j.is_object()) throw ConfigError(key + ": expected an object");
}

void apply_synthetic(const json& j, SyntheticSpec& s) {
  require_object(j, "synthetic");
  std::uint64_t prototype_seed = 7;
  bool reshape = false;
  for (const auto& [key, value] : j.items()) {
    const std::string k = "synthetic." + key;
    if (key == "label_count") {
      read_key(value, k, s.label_count);
      reshape = true;
    } else if (key == "feature_dim") {
      read_key(value, k, s.feature_dim);
      reshape = true;
    } else if (key == "prototype_seed") {
      read_key(value, k, prototype_seed);
      reshape = true;
    } else if (key == "noise_sigma") {
      read_key(value, k, s.noise_sigma);
    } else if (key == "train_size") {
      read_key(value, k, s.train_size);
    } else if (key == "validation_size") {
      read_key(value, k, s.validation_size);
    } else if (key == "test_size") {
      read_key(value, k, s.test_size);
    } else if (key == "seed") {
      read_key(value, k, s.seed);
    } else if (key != "cooccurrence" && key != "prototypes") {
      throw ConfigError("unknown key " + k);
    }
  }
  if (reshape && !j.contains("prototypes")) {
    if (s.label_count < 1) throw ConfigError("synthetic.label_count must be >= 1");
    s.prototypes = random_prototypes(s.label_count, s.feature_dim, prototype_seed);
  }
  if (j.contains("prototypes")) read_key(j.at("prototypes"), "synthetic.prototypes", s.prototypes);
  if (j.contains("cooccurrence")) {
    std::vector<std::vector<double>> rows;
    read_key(j.at("cooccurrence"), "synthetic.cooccurrence", rows);
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    Matrix c(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != cols)
        throw ConfigError("synthetic.cooccurrence[" + std::to_string(r) + "] has " +
                          std::to_string(rows[r].size()) + " entries, expected " +
                          std::to_string(cols));
      std::copy(rows[r].begin(), rows[r].end(), c.row(r).begin());
    }
    s.cooccurrence = std::move(c);
  }
}

void apply_eval(const json& j, EvalOptions& o) {
  require_object(j, "eval");
  for (const auto& [key, value] : j.items()) {
    const std::string k = "eval." + key;
    if (key == "seed") read_key(value, k, o.seed);
    else if (key == "recall_ks") read_key(value, k, o.recall_ks);
    else if (key == "classification") read_key(value, k, o.classification);
    else if (key == "probe_l2") read_key(value, k, o.probe_l2);
    else throw ConfigError("unknown key " + k);
  }
  for (int k : o.recall_ks)
    if (k < 1) throw ConfigError("eval.recall_ks entries must be >= 1");
  if (!(o.probe_l2 >= 0.0)) throw ConfigError("eval.probe_l2 must be >= 0");
}

void apply_paths(const json& j, PathsConfig& p) {
  require_object(j, "paths");
  for (const auto& [key, value] : j.items()) {
    std::string s;
    read_key(value, "paths." + key, s);
    if (key == "data_dir") p.data_dir = s;
    else if (key == "run_dir") p.run_dir = s;
    else throw ConfigError("unknown key paths." + key);
  }
}

}  // namespace

RunConfig default_run_config() {
  RunConfig c;
  const char* env = std::getenv(kRunDirEnv);
  c.paths.run_dir = (env && *env) ? std::filesystem::path(env) : "runs/latest";
  return c;
}

RunConfig parse_run_config(const json& input) {
  const json& j = (input.is_object() && input.contains("config") &&
                   input.value("kind", "") == "mlml-manifest")
                      ? input.at("config")
                      : input;
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  RunConfig c = default_run_config();
  for (const auto& [key, value] : j.items()) {
    if (key == "synthetic") apply_synthetic(value, c.synthetic);
    else if (key == "encoder") from_json(value, c.encoder);
    else if (key == "train") from_json(value, c.train);
    else if (key == "eval") apply_eval(value, c.eval);
    else if (key == "paths") apply_paths(value, c.paths);
    else throw ConfigError("unknown key " + key);
  }
  c.synthetic.validate();
  c.train.validate();
  return c;
}

json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
}

json to_json(const SyntheticSpec& s) {
  std::vector<std::vector<double>> cooc(s.cooccurrence.rows());
  for (std::size_t r = 0; r < s.cooccurrence.rows(); ++r)
    cooc[r].assign(s.cooccurrence.row(r).begin(), s.cooccurrence.row(r).end());
  return json{{"label_count", s.label_count},
              {"feature_dim", s.feature_dim},
              {"noise_sigma", s.noise_sigma},
              {"cooccurrence", cooc},
              {"prototypes", s.prototypes},
              {"train_size", s.train_size},
              {"validation_size", s.validation_size},
              {"test_size", s.test_size},
              {"seed", s.seed}};
}

json to_json(const RunConfig& c) {
  json encoder = c.encoder;
  json train = c.train;
  return json{{"synthetic", to_json(c.synthetic)},
              {"encoder", std::move(encoder)},
              {"train", std::move(train)},
              {"eval",
               {{"seed", c.eval.seed},
                {"recall_ks", c.eval.recall_ks},
                {"classification", c.eval.classification},
                {"probe_l2", c.eval.probe_l2}}},
              {"paths",
               {{"data_dir", c.paths.data_dir.generic_string()},
                {"run_dir", c.paths.run_dir.generic_string()}}}};
}

}  // namespace mlml
