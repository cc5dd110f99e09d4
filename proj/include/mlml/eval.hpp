#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "mlml/dataset.hpp"
#include "mlml/numeric.hpp"

namespace mlml {

/// Cluster assignment by position; ids are in [0, k).
struct Partition {
  std::vector<int> assignment;
  int k = 0;
};

/// Ground-truth partition: one cluster per distinct label set, numbered in
/// lexicographic order of the sets.
Partition partition_by_label_set(std::span<const LabelSet> labels);

struct KMeansResult {
  Partition partition;
  /// Sum of squared distances after each assignment step.
  std::vector<double> objective_history;
  int iterations = 0;
};

/// Lloyd iterations from k-means++ seeding until the assignment stops
/// changing or `max_iterations` is reached. An emptied cluster is re-seeded at
/// the point farthest from its current centroid. Throws ContractError if
/// k < 1 or k > n.
KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed,
                    int max_iterations = 100);

/// 2·I(pred; truth) / (H(pred) + H(truth)); 1 when both entropies are zero.
/// Throws ContractError when sizes differ.
double nmi(const Partition& pred, const Partition& truth);

/// Fraction of queries whose K nearest neighbours (Euclidean, self excluded,
/// ties by position) include one sharing a label. Throws ContractError if
/// K < 1 or n < K + 1.
double recall_at_k(const Matrix& embeddings, std::span<const LabelSet> labels, int k);

/// Recall@K for several K with one neighbour ranking per query.
std::map<int, double> recall_at_ks(const Matrix& embeddings,
                                   std::span<const LabelSet> labels,
                                   std::span<const int> ks);

struct ClassificationMetrics {
  double precision = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

ClassificationMetrics classification_metrics(std::span<const int> truth,
                                             std::span<const int> predicted);

struct LogisticOptions {
  double l2 = 1e-4;
  double tolerance = 1e-7;
  int max_iterations = 20000;
};

/// L2-regularized logistic regression on standardized features, fitted by
/// full-batch gradient descent, scored at threshold 0.5 on the test set.
/// Labels are 0/1. Throws ContractError when the training labels hold one class.
ClassificationMetrics logistic_probe(const Matrix& train_x, std::span<const int> train_y,
                                     const Matrix& test_x, std::span<const int> test_y,
                                     const LogisticOptions& opts = {});

/// 1 for any label set other than {normal}.
std::vector<int> abnormal_targets(std::span<const LabelSet> labels);

struct Projection {
  Matrix coords;  // n × 2
  std::vector<double> explained_variance_ratio;  // two entries
  bool degenerate = false;
};

/// Top two principal components of the centred rows, each loading vector
/// signed so its first non-zero entry is positive. Zero-variance input yields
/// all-zero coordinates with `degenerate` set. Throws ContractError if n < 2.
Projection project_2d(const Matrix& points);

struct MetricsReport {
  double nmi = 0.0;
  int clusters = 0;
  std::map<int, double> recall_at;
  ClassificationMetrics classification;
  bool has_classification = false;
};

nlohmann::json to_json(const MetricsReport& r);

/// Standard K values reported for retrieval.
inline constexpr int kRecallKs[] = {1, 2, 4, 8};

/// Clustering NMI of `embeddings` against the label-set partition, with k set
/// to the number of distinct label sets.
double clustering_nmi(const Matrix& embeddings, std::span<const LabelSet> labels,
                      std::uint64_t seed, KMeansResult* details = nullptr);

}  // namespace mlml
