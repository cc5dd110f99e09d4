#include "mlml/sampler.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "mlml/error.hpp"
#include "mlml/losses.hpp"

namespace mlml {

std::string_view regime_name(Regime r) {
  switch (r) {
    case Regime::kContrastive: return "contrastive";
    case Regime::kTriplet: return "triplet";
    case Regime::kML2: return "ml2";
    case Regime::kML2Plus: return "ml2plus";
  }
  return "unknown";
}

Regime parse_regime(std::string_view name) {
  if (name == "contrastive") return Regime::kContrastive;
  if (name == "triplet") return Regime::kTriplet;
  if (name == "ml2") return Regime::kML2;
  if (name == "ml2plus" || name == "ml2+") return Regime::kML2Plus;
  throw ConfigError("unknown loss regime: " + std::string(name));
}

namespace {

bool taken(const std::vector<std::size_t>& used, std::size_t i) {
  return std::find(used.begin(), used.end(), i) != used.end();
}

// Uniform draw from `pool`, skipping the anchor, anything already used, and
// anything the predicate rejects. Returns false after kMaxRedraws misses.
template <class Accept>
bool draw_from(std::span<const std::size_t> pool, std::size_t anchor,
               const std::vector<std::size_t>& used, Rng& rng, Accept accept,
               std::size_t& out) {
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    const std::size_t i = pool[uniform_index(rng, pool.size())];
    if (i == anchor || taken(used, i) || !accept(i)) continue;
    out = i;
    return true;
  }
  return false;
}

void require_candidates(std::span<const std::size_t> pool, std::size_t anchor,
                        int label, std::string_view what) {
  const bool only_anchor = pool.size() == 1 && pool[0] == anchor;
  if (pool.empty() || only_anchor)
    throw SamplingError("label " + std::to_string(label) + " has no " +
                        std::string(what) + " other than the anchor");
}

}  // namespace

AnchorGroup sample_group_ml2(const Dataset& ds, std::size_t anchor, Rng& rng) {
  const LabelSet& al = ds[anchor].labels;
  for (int k = 0; k < ds.label_count(); ++k)
    require_candidates(ds.with_label(k), anchor, k, "candidate");

  AnchorGroup g;
  g.anchor = anchor;
  g.anchor_labels = al;
  std::vector<std::size_t> used;
  for (int k = 0; k < ds.label_count(); ++k) {
    std::size_t pick = 0;
    if (!draw_from(ds.with_label(k), anchor, used, rng,
                   [](std::size_t) { return true; }, pick))
      throw DegenerateGroupError("could not draw a distinct example for label " +
                                 std::to_string(k));
    used.push_back(pick);
    const LabelSet& pl = ds[pick].labels;
    if (pl.intersects(al)) {
      g.positives.push_back(pick);
      g.positive_labels.push_back(pl);
      g.positive_slots.push_back(k);
      g.tau.push_back(overlap_tau(al, pl));
    } else {
      g.negatives.push_back(pick);
      g.negative_labels.push_back(pl);
      g.negative_slots.push_back(k);
    }
  }
  if (g.negatives.empty())
    throw DegenerateGroupError("anchor " + ds[anchor].id + " has no negatives");
  return g;
}

AnchorGroup sample_group_ml2plus(const Dataset& ds, std::size_t anchor,
                                 Rng& rng) {
  const LabelSet& al = ds[anchor].labels;
  for (int k : al)
    require_candidates(ds.with_only_label(k), anchor, k, "single-label candidate");

  AnchorGroup g;
  g.anchor = anchor;
  g.anchor_labels = al;
  std::vector<std::size_t> used;
  for (int k : al) {
    std::size_t pick = 0;
    if (!draw_from(ds.with_only_label(k), anchor, used, rng,
                   [](std::size_t) { return true; }, pick))
      throw DegenerateGroupError("could not draw a single-label example for label " +
                                 std::to_string(k));
    used.push_back(pick);
    g.positives.push_back(pick);
    g.positive_labels.push_back(ds[pick].labels);
    g.positive_slots.push_back(k);
  }
  const LabelSet rest = label_complement(al, ds.label_count());
  if (rest.empty())
    throw DegenerateGroupError("anchor " + ds[anchor].id + " carries every label");
  for (int k : rest) {
    std::size_t pick = 0;
    auto disjoint = [&](std::size_t i) { return !ds[i].labels.intersects(al); };
    if (!draw_from(ds.with_label(k), anchor, used, rng, disjoint, pick))
      throw DegenerateGroupError("no negative sharing no label with anchor " +
                                 ds[anchor].id + " for label " + std::to_string(k));
    used.push_back(pick);
    g.negatives.push_back(pick);
    g.negative_labels.push_back(ds[pick].labels);
    g.negative_slots.push_back(k);
  }
  const double p = static_cast<double>(g.p());
  g.tau.assign(g.p(), (p - 1.0) / p);
  return g;
}

namespace {

// Positive: shares a label with the anchor. Drawn by picking one of the
// anchor's labels and then an example carrying it.
bool draw_positive(const Dataset& ds, std::size_t anchor, Rng& rng,
                   std::size_t& out) {
  const LabelSet& al = ds[anchor].labels;
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    const int k = al.labels()[uniform_index(rng, al.size())];
    auto pool = ds.with_label(k);
    const std::size_t i = pool[uniform_index(rng, pool.size())];
    if (i != anchor) {
      out = i;
      return true;
    }
  }
  return false;
}

bool draw_negative(const Dataset& ds, std::size_t anchor, Rng& rng,
                   std::size_t& out) {
  const LabelSet& al = ds[anchor].labels;
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    const std::size_t i = uniform_index(rng, ds.size());
    if (!ds[i].labels.intersects(al)) {
      out = i;
      return true;
    }
  }
  return false;
}

}  // namespace

MiniBatch build_minibatch(const Dataset& ds, std::size_t batch_size,
                          Regime regime, Rng& rng) {
  if (batch_size == 0) throw SamplingError("batch size must be >= 1");
  if (batch_size > ds.size())
    throw SamplingError("batch size " + std::to_string(batch_size) +
                        " exceeds split size " + std::to_string(ds.size()));

  MiniBatch batch;
  batch.regime = regime;
  // Partial Fisher-Yates: the pool front holds anchors already drawn.
  std::vector<std::size_t> pool(ds.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::size_t drawn = 0;
  std::size_t accepted = 0;
  while (accepted < batch_size) {
    if (drawn == pool.size())
      throw SamplingError("anchor pool exhausted after " + std::to_string(accepted) +
                          " valid groups");
    const std::size_t j = drawn + uniform_index(rng, pool.size() - drawn);
    std::swap(pool[drawn], pool[j]);
    const std::size_t anchor = pool[drawn++];

    switch (regime) {
      case Regime::kML2:
      case Regime::kML2Plus: {
        try {
          batch.groups.push_back(regime == Regime::kML2
                                     ? sample_group_ml2(ds, anchor, rng)
                                     : sample_group_ml2plus(ds, anchor, rng));
        } catch (const DegenerateGroupError&) {
          continue;
        }
        break;
      }
      case Regime::kTriplet: {
        std::size_t pos = 0, neg = 0;
        if (!draw_positive(ds, anchor, rng, pos) ||
            !draw_negative(ds, anchor, rng, neg))
          continue;
        batch.triplets.push_back({anchor, pos, neg});
        break;
      }
      case Regime::kContrastive: {
        std::size_t pos = 0, neg = 0;
        if (!draw_positive(ds, anchor, rng, pos) ||
            !draw_negative(ds, anchor, rng, neg))
          continue;
        batch.pairs.push_back({anchor, pos, true});
        batch.pairs.push_back({anchor, neg, false});
        break;
      }
    }
    batch.anchors.push_back(anchor);
    ++accepted;
  }
  return batch;
}

void require_ml2plus_group(const AnchorGroup& g) {
  if (g.positive_labels.size() != g.p() || g.tau.size() != g.p())
    throw ContractError("ML2+ group: positive metadata size mismatch");
  std::vector<int> seen;
  for (const auto& pl : g.positive_labels) {
    if (pl.size() != 1)
      throw ContractError("ML2+ group: positive with " + std::to_string(pl.size()) +
                          " labels");
    const int k = pl.front();
    if (!g.anchor_labels.contains(k))
      throw ContractError("ML2+ group: positive label " + std::to_string(k) +
                          " not carried by the anchor");
    if (std::find(seen.begin(), seen.end(), k) != seen.end())
      throw ContractError("ML2+ group: two positives for label " + std::to_string(k));
    seen.push_back(k);
  }
  // Measured against the anchor's label count so that mined groups, which
  // keep only some positives, still validate.
  const double p = static_cast<double>(g.anchor_labels.size());
  for (double t : g.tau)
    if (t != (p - 1.0) / p) throw ContractError("ML2+ group: tau is not (p-1)/p");
}

}  // namespace mlml
