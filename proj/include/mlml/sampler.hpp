#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "mlml/dataset.hpp"
#include "mlml/numeric.hpp"

namespace mlml {

/// How anchors are expanded into training tuples.
enum class Regime { kContrastive, kTriplet, kML2, kML2Plus };

std::string_view regime_name(Regime r);
/// Accepts "contrastive", "triplet", "ml2", "ml2plus". Throws ConfigError.
Regime parse_regime(std::string_view name);

/// One anchor with its positive and negative sets.
///
/// Members are positions into the dataset the group was drawn from. Label
/// sets are copied in so a group can be scored without the dataset. `*_slot`
/// records the label each member was drawn for, which hard class mining uses.
struct AnchorGroup {
  std::size_t anchor = 0;
  LabelSet anchor_labels;
  std::vector<std::size_t> positives;
  std::vector<LabelSet> positive_labels;
  std::vector<int> positive_slots;
  std::vector<std::size_t> negatives;
  std::vector<LabelSet> negative_labels;
  std::vector<int> negative_slots;
  /// overlap_tau(anchor, positives[i]) for ML2; (p-1)/p for ML2+.
  std::vector<double> tau;

  std::size_t p() const noexcept { return positives.size(); }
  std::size_t n() const noexcept { return negatives.size(); }

  friend bool operator==(const AnchorGroup&, const AnchorGroup&) = default;
};

struct PairSample {
  std::size_t first = 0;
  std::size_t second = 0;
  bool same = false;

  friend bool operator==(const PairSample&, const PairSample&) = default;
};

struct TripletSample {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;

  friend bool operator==(const TripletSample&, const TripletSample&) = default;
};

/// One optimization step's worth of samples. Exactly one of the containers
/// is populated, according to `regime`.
struct MiniBatch {
  Regime regime = Regime::kML2;
  std::vector<std::size_t> anchors;
  std::vector<AnchorGroup> groups;     // ML2, ML2+
  std::vector<TripletSample> triplets; // triplet
  std::vector<PairSample> pairs;       // contrastive: one positive and one negative pair per anchor

  friend bool operator==(const MiniBatch&, const MiniBatch&) = default;
};

/// Attempts made to redraw a slot before the anchor is given up.
inline constexpr int kMaxRedraws = 100;

/// Draws one example per label (anchor excluded, no repeats) and partitions
/// the draws by the shared-label test. Throws SamplingError naming a label
/// with no candidate, and DegenerateGroupError when n = 0 or redraws run out.
AnchorGroup sample_group_ml2(const Dataset& ds, std::size_t anchor, Rng& rng);

/// Positives are single-label examples, one per anchor label; negatives are
/// one draw per complementary label from examples sharing no anchor label.
/// Throws SamplingError naming a label with no single-label candidate, and
/// DegenerateGroupError when n = 0 or a negative slot cannot be filled.
AnchorGroup sample_group_ml2plus(const Dataset& ds, std::size_t anchor, Rng& rng);

/// Draws `batch_size` anchors uniformly without replacement and expands each
/// one. Degenerate anchors are replaced by further draws. Throws
/// SamplingError if batch_size is 0, exceeds the dataset, or the anchor pool
/// runs dry.
MiniBatch build_minibatch(const Dataset& ds, std::size_t batch_size,
                          Regime regime, Rng& rng);

/// Throws ContractError unless every positive is single-label, the positive
/// labels are distinct anchor labels, and τ = (p-1)/p.
void require_ml2plus_group(const AnchorGroup& g);

}  // namespace mlml
