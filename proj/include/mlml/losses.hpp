#pragma once

// Metric-learning losses on unit-norm embeddings, each returning its value and
// the analytic gradient with respect to every input embedding.

#include <cstddef>
#include <span>
#include <vector>

#include "mlml/dataset.hpp"
#include "mlml/numeric.hpp"
#include "mlml/sampler.hpp"

namespace mlml {

/// Below this distance the gradient of d(u,v) uses the guard instead of d.
inline constexpr double kDistanceEpsilon = 1e-8;

struct LossConfig {
  double margin = 0.2;
  double distance_epsilon = kDistanceEpsilon;

  /// Throws ContractError unless margin > 0.
  void validate() const;
};

/// Loss value plus one gradient row per input embedding. Row order is
/// documented on each function.
struct LossOutput {
  double value = 0.0;
  Matrix grads;
};

/// Embeddings for an AnchorGroup: the anchor, then p positive rows and n
/// negative rows in the group's order.
struct GroupEmbedding {
  std::vector<double> anchor;
  Matrix positives;
  Matrix negatives;
};

/// Euclidean distance.
double dist(std::span<const double> u, std::span<const double> v);

/// max(0, d(a,x+) - d(a,x-) + α). Rows: anchor, positive, negative.
LossOutput triplet_loss(std::span<const double> a, std::span<const double> pos,
                        std::span<const double> neg, const LossConfig& cfg);

/// Mean of the p·n hinged triplet terms. Rows: anchor, positives, negatives.
/// Throws DegenerateGroupError when p or n is zero.
LossOutput group_loss(const AnchorGroup& g, const GroupEmbedding& emb,
                      const LossConfig& cfg);

struct MaxNegative {
  double value = 0.0;
  std::size_t index = 0;
};

/// max_j [α - d(a, x-_j)] with the first maximizing index.
MaxNegative max_negative(std::span<const double> a, const Matrix& negatives,
                         const LossConfig& cfg);

/// log Σ_j exp(α - d(a, x-_j)), evaluated with a max shift. Rows: anchor,
/// negatives.
LossOutput smooth_max_negative(std::span<const double> a, const Matrix& negatives,
                               const LossConfig& cfg);

/// Jaccard distance (|A∪B| - |A∩B|) / |A∪B|. Throws ContractError on an empty
/// argument.
double overlap_tau(const LabelSet& a, const LabelSet& b);

/// (1/p) Σ_i max(0, d(a, x+_i) - α τ_i + smooth_max_negative), with τ_i taken
/// from the group. Rows: anchor, positives, negatives.
LossOutput ml2_loss(const AnchorGroup& g, const GroupEmbedding& emb,
                    const LossConfig& cfg);

/// ml2_loss with τ = (|L(anchor)| - 1) / |L(anchor)| for every positive.
/// Throws ContractError unless the group has single-label positives drawn
/// from distinct anchor labels.
LossOutput ml2plus_loss(const AnchorGroup& g, const GroupEmbedding& emb,
                        const LossConfig& cfg);

/// same: d²; different: max(0, α - d)². Rows: x1, x2.
LossOutput contrastive_loss(std::span<const double> x1, std::span<const double> x2,
                            bool same, const LossConfig& cfg);

/// A mined group together with the embedding rows it kept.
struct MinedGroup {
  AnchorGroup group;
  GroupEmbedding embedding;
};

/// Keeps the k members with the largest per-term contribution: d(a,x+_i) - α τ_i
/// for positives and α - d(a,x-_j) for negatives. Ties go to the lower label
/// slot. The result may have an empty positive or negative set when k is small.
/// Throws ContractError if k < 1 or k > p + n.
MinedGroup hard_class_mine(const AnchorGroup& g, const GroupEmbedding& emb,
                           const LossConfig& cfg, std::size_t k);

/// Mean negative log-likelihood over l binary heads. `log_probs` is l × 2
/// with column 0 = "present", column 1 = "absent". Gradient rows are with
/// respect to the heads' logits: (softmax - one_hot) / l. Throws ContractError
/// if a row is not a log-softmax pair (exp-sum off by more than 1e-9).
LossOutput pretrain_loss(const Matrix& log_probs, const LabelSet& y, int label_count);

/// Loss the trainer applies to a sampled group under the given regime.
LossOutput regime_group_loss(Regime regime, const AnchorGroup& g,
                             const GroupEmbedding& emb, const LossConfig& cfg);

}  // namespace mlml
