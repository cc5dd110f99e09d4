#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mlml/numeric.hpp"

namespace mlml {

/// Index of the mutually exclusive "normal" label.
inline constexpr int kNormalLabel = 0;

/// Sorted, duplicate-free set of label indices.
class LabelSet {
 public:
  LabelSet() = default;

  /// Sorts and validates. Throws ContractError on duplicates or indices
  /// outside [0, label_count). Empty sets are allowed here; datasets reject
  /// them.
  static LabelSet make(std::vector<int> labels, int label_count);

  bool empty() const noexcept { return labels_.empty(); }
  std::size_t size() const noexcept { return labels_.size(); }
  bool contains(int label) const noexcept;
  bool intersects(const LabelSet& other) const noexcept;
  std::size_t intersection_size(const LabelSet& other) const noexcept;
  std::size_t union_size(const LabelSet& other) const noexcept;

  std::span<const int> labels() const noexcept { return labels_; }
  auto begin() const noexcept { return labels_.begin(); }
  auto end() const noexcept { return labels_.end(); }
  int front() const { return labels_.front(); }

  /// "1;3" style rendering used by the CSV exports.
  std::string to_string(char sep = ';') const;

  friend bool operator==(const LabelSet&, const LabelSet&) = default;
  friend auto operator<=>(const LabelSet&, const LabelSet&) = default;

 private:
  std::vector<int> labels_;
};

/// Labels in [0, label_count) that are not in `ls`.
LabelSet label_complement(const LabelSet& ls, int label_count);

struct Example {
  std::string id;
  std::vector<double> features;
  LabelSet labels;

  friend bool operator==(const Example&, const Example&) = default;
};

/// Immutable collection of examples with per-label lookup tables.
class Dataset {
 public:
  Dataset() = default;
  /// Validates constant feature width, finite features, non-empty label sets
  /// within range, and unique ids. Throws FormatError naming the offending id.
  Dataset(std::vector<Example> examples, int label_count);

  std::size_t size() const noexcept { return examples_.size(); }
  bool empty() const noexcept { return examples_.empty(); }
  int label_count() const noexcept { return label_count_; }
  std::size_t feature_dim() const noexcept { return feature_dim_; }

  const Example& operator[](std::size_t i) const { return examples_[i]; }
  std::span<const Example> examples() const noexcept { return examples_; }

  /// Positions of every example carrying `label`.
  std::span<const std::size_t> with_label(int label) const;
  /// Positions of examples whose label set is exactly {label}.
  std::span<const std::size_t> with_only_label(int label) const;

  /// Throws SamplingError naming the first label with no example.
  void require_all_labels_present() const;

  /// Row-major n × w feature matrix.
  Matrix feature_matrix() const;
  std::vector<LabelSet> label_sets() const;

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.label_count_ == b.label_count_ && a.examples_ == b.examples_;
  }

 private:
  std::vector<Example> examples_;
  int label_count_ = 0;
  std::size_t feature_dim_ = 0;
  std::vector<std::vector<std::size_t>> by_label_;
  std::vector<std::vector<std::size_t>> by_only_label_;
};

struct Splits {
  Dataset train;
  Dataset validation;
  Dataset test;
};

/// Parameters for the synthetic multi-label generator.
///
/// Label sets are drawn as follows. With probability `cooccurrence(0,0)` the
/// example is normal and gets {0}. Otherwise a seed label k >= 1 is chosen
/// with probability proportional to `cooccurrence(k,k)`; then, breadth-first
/// from the seed, every newly added label i adds each absent abnormal label j
/// with probability `cooccurrence(i,j)`. A table entry of 1 therefore forces
/// j whenever i is present. Features are the sum of the active labels'
/// prototypes plus isotropic Gaussian noise.
struct SyntheticSpec {
  int label_count = 5;
  std::size_t feature_dim = 32;
  std::vector<std::vector<double>> prototypes;  // label_count × feature_dim
  double noise_sigma = 0.6;
  Matrix cooccurrence;  // label_count × label_count, symmetric
  std::size_t train_size = 2000;
  std::size_t validation_size = 500;
  std::size_t test_size = 500;
  std::uint64_t seed = 1;

  /// Desk-scale default: l=5, w=32, 2000/500/500, prototypes drawn from
  /// `prototype_seed`.
  static SyntheticSpec default_spec(std::uint64_t seed = 1,
                                    std::uint64_t prototype_seed = 7);

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// `label_count` Gaussian directions in `dim` dimensions, each scaled to `norm`.
std::vector<std::vector<double>> random_prototypes(int label_count, std::size_t dim,
                                                   std::uint64_t seed, double norm = 3.0);

/// Deterministic given spec.seed. Ids are "train-000000", "val-000000",
/// "test-000000".
Splits generate_synthetic(const SyntheticSpec& spec);

/// Draws one label set by the SyntheticSpec co-occurrence process.
LabelSet draw_label_set(const SyntheticSpec& spec, Rng& rng);

/// One JSON object per line: {"id": str, "features": [..], "labels": [..]}.
void save_jsonl(const Dataset& ds, const std::filesystem::path& path);
/// Throws FormatError naming the record id (or line number when the id is
/// unreadable).
Dataset load_jsonl(const std::filesystem::path& path, int label_count);

}  // namespace mlml
