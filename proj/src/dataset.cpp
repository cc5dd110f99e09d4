#include "mlml/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <set>
#include <string>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "mlml/error.hpp"

namespace mlml {

using nlohmann::json;

LabelSet LabelSet::make(std::vector<int> labels, int label_count) {
  std::sort(labels.begin(), labels.end());
  if (std::adjacent_find(labels.begin(), labels.end()) != labels.end())
    throw ContractError("label set contains a duplicate index");
  for (int k : labels) {
    if (k < 0 || k >= label_count)
      throw ContractError("label index " + std::to_string(k) +
                          " outside [0, " + std::to_string(label_count) + ")");
  }
  LabelSet out;
  out.labels_ = std::move(labels);
  return out;
}

bool LabelSet::contains(int label) const noexcept {
  return std::binary_search(labels_.begin(), labels_.end(), label);
}

bool LabelSet::intersects(const LabelSet& other) const noexcept {
  return intersection_size(other) > 0;
}

std::size_t LabelSet::intersection_size(const LabelSet& other) const noexcept {
  std::size_t n = 0;
  auto a = labels_.begin();
  auto b = other.labels_.begin();
  while (a != labels_.end() && b != other.labels_.end()) {
    if (*a < *b) {
      ++a;
    } else if (*b < *a) {
      ++b;
    } else {
      ++n;
      ++a;
      ++b;
    }
  }
  return n;
}

std::size_t LabelSet::union_size(const LabelSet& other) const noexcept {
  return size() + other.size() - intersection_size(other);
}

std::string LabelSet::to_string(char sep) const {
  std::string s;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(labels_[i]);
  }
  return s;
}

LabelSet label_complement(const LabelSet& ls, int label_count) {
  std::vector<int> rest;
  for (int k = 0; k < label_count; ++k)
    if (!ls.contains(k)) rest.push_back(k);
  return LabelSet::make(std::move(rest), label_count);
}

Dataset::Dataset(std::vector<Example> examples, int label_count)
    : examples_(std::move(examples)), label_count_(label_count) {
  if (label_count_ < 1) throw FormatError("dataset label count must be >= 1");
  by_label_.assign(label_count_, {});
  by_only_label_.assign(label_count_, {});
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    const Example& ex = examples_[i];
    if (!ids.insert(ex.id).second)
      throw FormatError("record " + ex.id + ": duplicate id");
    if (i == 0) {
      feature_dim_ = ex.features.size();
    } else if (ex.features.size() != feature_dim_) {
      throw FormatError("record " + ex.id + ": feature length " +
                        std::to_string(ex.features.size()) + ", expected " +
                        std::to_string(feature_dim_));
    }
    for (double v : ex.features)
      if (!std::isfinite(v))
        throw FormatError("record " + ex.id + ": non-finite feature");
    if (ex.labels.empty())
      throw FormatError("record " + ex.id + ": empty label set");
    for (int k : ex.labels) {
      if (k < 0 || k >= label_count_)
        throw FormatError("record " + ex.id + ": label index " +
                          std::to_string(k) + " outside [0, " +
                          std::to_string(label_count_) + ")");
      by_label_[k].push_back(i);
    }
    if (ex.labels.size() == 1) by_only_label_[ex.labels.front()].push_back(i);
  }
}

std::span<const std::size_t> Dataset::with_label(int label) const {
  if (label < 0 || label >= label_count_)
    throw ContractError("label " + std::to_string(label) + " out of range");
  return by_label_[label];
}

std::span<const std::size_t> Dataset::with_only_label(int label) const {
  if (label < 0 || label >= label_count_)
    throw ContractError("label " + std::to_string(label) + " out of range");
  return by_only_label_[label];
}

void Dataset::require_all_labels_present() const {
  for (int k = 0; k < label_count_; ++k)
    if (by_label_[k].empty())
      throw SamplingError("label " + std::to_string(k) + " has no examples");
}

Matrix Dataset::feature_matrix() const {
  Matrix m(examples_.size(), feature_dim_);
  for (std::size_t i = 0; i < examples_.size(); ++i)
    std::copy(examples_[i].features.begin(), examples_[i].features.end(),
              m.row(i).begin());
  return m;
}

std::vector<LabelSet> Dataset::label_sets() const {
  std::vector<LabelSet> out;
  out.reserve(examples_.size());
  for (const auto& ex : examples_) out.push_back(ex.labels);
  return out;
}

std::vector<std::vector<double>> random_prototypes(int label_count, std::size_t dim,
                                                   std::uint64_t seed, double norm) {
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(label_count),
                                       std::vector<double>(dim));
  for (auto& p : out) {
    for (double& v : p) v = gauss(rng);
    const double n = norm2(p);
    for (double& v : p) v *= norm / n;
  }
  return out;
}

SyntheticSpec SyntheticSpec::default_spec(std::uint64_t seed,
                                          std::uint64_t prototype_seed) {
  SyntheticSpec spec;
  spec.seed = seed;
  spec.label_count = 5;
  spec.feature_dim = 32;

  // In 32 dimensions random directions are close to orthogonal, so label
  // sets differing by one label sit ~3 apart.
  spec.prototypes = random_prototypes(spec.label_count, spec.feature_dim, prototype_seed);

  // 0 normal, 1 cardiomegaly, 2 medical device, 3 pleural effusion,
  // 4 pneumothorax.
  spec.cooccurrence = Matrix{
      {0.35, 0.00, 0.00, 0.00, 0.00},
      {0.00, 0.25, 0.25, 0.30, 0.05},
      {0.00, 0.25, 0.40, 0.25, 0.20},
      {0.00, 0.30, 0.25, 0.25, 0.15},
      {0.00, 0.05, 0.20, 0.15, 0.10},
  };
  return spec;
}

void SyntheticSpec::validate() const {
  const auto l = static_cast<std::size_t>(label_count);
  if (label_count < 1) throw ConfigError("synthetic.label_count must be >= 1");
  if (feature_dim < 1) throw ConfigError("synthetic.feature_dim must be >= 1");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
    throw ConfigError("synthetic.noise_sigma must be finite and >= 0");
  if (prototypes.size() != l)
    throw ConfigError("synthetic.prototypes: expected " + std::to_string(l) +
                      " rows, got " + std::to_string(prototypes.size()));
  for (std::size_t k = 0; k < l; ++k) {
    if (prototypes[k].size() != feature_dim)
      throw ConfigError("synthetic.prototypes[" + std::to_string(k) +
                        "]: dimension " + std::to_string(prototypes[k].size()) +
                        " != feature_dim " + std::to_string(feature_dim));
    for (double v : prototypes[k])
      if (!std::isfinite(v))
        throw ConfigError("synthetic.prototypes[" + std::to_string(k) +
                          "]: non-finite entry");
  }
  if (cooccurrence.rows() != l || cooccurrence.cols() != l)
    throw ConfigError("synthetic.cooccurrence must be " + std::to_string(l) +
                      "x" + std::to_string(l));
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = 0; j < l; ++j) {
      const double c = cooccurrence(i, j);
      const std::string key = "synthetic.cooccurrence[" + std::to_string(i) +
                              "][" + std::to_string(j) + "]";
      if (!(c >= 0.0 && c <= 1.0)) throw ConfigError(key + " not in [0,1]");
      if (c != cooccurrence(j, i)) throw ConfigError(key + " breaks symmetry");
      if (i != j && (i == kNormalLabel || j == kNormalLabel) && c != 0.0)
        throw ConfigError(key + ": the normal label is exclusive");
    }
  }
  if (cooccurrence(0, 0) < 1.0) {
    double w = 0.0;
    for (std::size_t k = 1; k < l; ++k) w += cooccurrence(k, k);
    if (!(w > 0.0))
      throw ConfigError(
          "synthetic.cooccurrence: abnormal diagonal weights sum to zero");
  }
  if (train_size == 0) throw ConfigError("synthetic.train_size must be >= 1");
}

LabelSet draw_label_set(const SyntheticSpec& spec, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int l = spec.label_count;
  if (l == 1 || unit(rng) < spec.cooccurrence(0, 0))
    return LabelSet::make({kNormalLabel}, l);

  double total = 0.0;
  for (int k = 1; k < l; ++k) total += spec.cooccurrence(k, k);
  double u = unit(rng) * total;
  int seed_label = l - 1;
  for (int k = 1; k < l; ++k) {
    if (u < spec.cooccurrence(k, k)) {
      seed_label = k;
      break;
    }
    u -= spec.cooccurrence(k, k);
  }

  std::vector<bool> active(l, false);
  active[seed_label] = true;
  std::deque<int> frontier{seed_label};
  while (!frontier.empty()) {
    const int i = frontier.front();
    frontier.pop_front();
    for (int j = 1; j < l; ++j) {
      if (active[j]) continue;
      const double c = spec.cooccurrence(i, j);
      if (c > 0.0 && unit(rng) < c) {
        active[j] = true;
        frontier.push_back(j);
      }
    }
  }
  std::vector<int> labels;
  for (int k = 1; k < l; ++k)
    if (active[k]) labels.push_back(k);
  return LabelSet::make(std::move(labels), l);
}

namespace {

Dataset generate_split(const SyntheticSpec& spec, Rng& rng, std::size_t n,
                       const std::string& prefix) {
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Example> examples;
  examples.reserve(n);
  char id[64];
  for (std::size_t i = 0; i < n; ++i) {
    Example ex;
    std::snprintf(id, sizeof id, "%s-%06zu", prefix.c_str(), i);
    ex.id = id;
    ex.labels = draw_label_set(spec, rng);
    ex.features.assign(spec.feature_dim, 0.0);
    for (int k : ex.labels)
      for (std::size_t d = 0; d < spec.feature_dim; ++d)
        ex.features[d] += spec.prototypes[k][d];
    if (spec.noise_sigma > 0.0)
      for (double& v : ex.features) v += spec.noise_sigma * noise(rng);
    examples.push_back(std::move(ex));
  }
  return Dataset(std::move(examples), spec.label_count);
}

}  // namespace

Splits generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Splits s;
  s.train = generate_split(spec, rng, spec.train_size, "train");
  s.validation = generate_split(spec, rng, spec.validation_size, "val");
  s.test = generate_split(spec, rng, spec.test_size, "test");
  return s;
}

void save_jsonl(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  for (const auto& ex : ds.examples()) {
    json rec;
    rec["id"] = ex.id;
    rec["features"] = ex.features;
    rec["labels"] = std::vector<int>(ex.labels.begin(), ex.labels.end());
    out << rec.dump() << '\n';
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

Dataset load_jsonl(const std::filesystem::path& path, int label_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<Example> examples;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(lineno);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(where + ": " + e.what());
    }
    if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string())
      throw FormatError(where + ": record has no string id");
    Example ex;
    ex.id = rec["id"].get<std::string>();
    const std::string who = "record " + ex.id;
    try {
      if (!rec.contains("features") || !rec["features"].is_array())
        throw FormatError(who + ": missing features array");
      if (!rec.contains("labels") || !rec["labels"].is_array())
        throw FormatError(who + ": missing labels array");
      ex.features = rec["features"].get<std::vector<double>>();
      auto labels = rec["labels"].get<std::vector<int>>();
      if (labels.empty()) throw FormatError(who + ": empty label set");
      for (int k : labels)
        if (k < 0 || k >= label_count)
          throw FormatError(who + ": label index " + std::to_string(k) +
                            " outside [0, " + std::to_string(label_count) + ")");
      ex.labels = LabelSet::make(std::move(labels), label_count);
    } catch (const json::exception& e) {
      throw FormatError(who + ": " + e.what());
    } catch (const ContractError& e) {
      throw FormatError(who + ": " + e.what());
    }
    if (examples.empty()) {
      width = ex.features.size();
    } else if (ex.features.size() != width) {
      throw FormatError(who + ": feature length " +
                        std::to_string(ex.features.size()) + ", expected " +
                        std::to_string(width));
    }
    examples.push_back(std::move(ex));
  }
  return Dataset(std::move(examples), label_count);
}

}  // namespace mlml
