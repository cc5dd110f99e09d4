#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "mlml/dataset.hpp"
#include "mlml/error.hpp"
#include "mlml/losses.hpp"
#include "mlml/sampler.hpp"
#include "test_support.hpp"

namespace mlml {
namespace {

Dataset tiny(std::vector<std::vector<int>> label_sets, int l = 5) {
  std::vector<Example> ex;
  for (std::size_t i = 0; i < label_sets.size(); ++i)
    ex.push_back({"e" + std::to_string(i), {static_cast<double>(i)},
                  LabelSet::make(label_sets[i], l)});
  return Dataset(std::move(ex), l);
}

const Dataset& small_synthetic() {
  static const Dataset ds = [] {
    auto spec = SyntheticSpec::default_spec(12);
    spec.train_size = 400;
    return generate_synthetic(spec).train;
  }();
  return ds;
}

void expect_no_duplicates(const AnchorGroup& g) {
  std::set<std::size_t> seen{g.anchor};
  for (auto i : g.positives) EXPECT_TRUE(seen.insert(i).second) << "duplicate " << i;
  for (auto i : g.negatives) EXPECT_TRUE(seen.insert(i).second) << "duplicate " << i;
}

TEST(Regime, ParseAndName) {
  for (auto r : {Regime::kContrastive, Regime::kTriplet, Regime::kML2, Regime::kML2Plus})
    EXPECT_EQ(parse_regime(regime_name(r)), r);
  EXPECT_EQ(parse_regime("ml2+"), Regime::kML2Plus);
  EXPECT_THROW(parse_regime("lifted"), ConfigError);
}

TEST(SampleML2, TinyDatasetSplitsTwoThree) {
  const Dataset ds = tiny({{1, 2}, {0}, {0}, {1}, {1}, {2}, {2}, {3}, {3}, {4}, {4}});
  Rng rng(1);
  const auto g = sample_group_ml2(ds, 0, rng);
  EXPECT_EQ(g.p(), 2u);
  EXPECT_EQ(g.n(), 3u);
  EXPECT_EQ(g.positive_slots, (std::vector<int>{1, 2}));
  EXPECT_EQ(g.negative_slots, (std::vector<int>{0, 3, 4}));
  for (double t : g.tau) EXPECT_EQ(t, 0.5);
}

TEST(SampleML2, RepresentativeSharingALabelCountsAsPositive) {
  // The only example carrying label 3 also carries the anchor's label 1. When
  // the label-1 draw takes it first, the label-3 slot cannot be refilled.
  const Dataset ds = tiny({{1}, {1}, {0}, {2}, {1, 3}, {4}});
  int built = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    AnchorGroup g;
    try {
      g = sample_group_ml2(ds, 0, rng);
    } catch (const DegenerateGroupError&) {
      continue;
    }
    ++built;
    EXPECT_EQ(g.p() + g.n(), 5u);
    EXPECT_NE(std::find(g.positive_slots.begin(), g.positive_slots.end(), 3),
              g.positive_slots.end());
  }
  EXPECT_GT(built, 0);
}

TEST(SampleML2, AllSharedIsDegenerate) {
  // Every draw shares label 1 with the anchor, so there are no negatives.
  const Dataset ds = tiny({{0, 1}, {0, 1}, {1, 2}, {1, 2}, {0, 1}}, 3);
  Rng rng(3);
  EXPECT_THROW(sample_group_ml2(ds, 0, rng), DegenerateGroupError);
}

TEST(SampleML2, MissingLabelIsNamed) {
  const Dataset ds = tiny({{1}, {0}, {1}, {2}, {3}});  // label 4 absent
  Rng rng(4);
  try {
    sample_group_ml2(ds, 0, rng);
    FAIL() << "expected SamplingError";
  } catch (const SamplingError& e) {
    EXPECT_NE(std::string(e.what()).find("label 4"), std::string::npos) << e.what();
  }
}

TEST(SampleML2, InvariantsOverAnEpoch) {
  const Dataset& ds = small_synthetic();
  Rng rng(5);
  std::size_t built = 0;
  for (std::size_t a = 0; a < ds.size(); ++a) {
    AnchorGroup g;
    try {
      g = sample_group_ml2(ds, a, rng);
    } catch (const DegenerateGroupError&) {
      continue;
    }
    ++built;
    EXPECT_EQ(g.p() + g.n(), 5u);
    ASSERT_EQ(g.tau.size(), g.p());
    for (std::size_t i = 0; i < g.p(); ++i) {
      EXPECT_TRUE(ds[g.positives[i]].labels.intersects(ds[a].labels));
      EXPECT_EQ(g.tau[i], testing::jaccard_oracle(ds[a].labels, ds[g.positives[i]].labels));
      EXPECT_TRUE(ds[g.positives[i]].labels.contains(g.positive_slots[i]));
    }
    for (std::size_t j = 0; j < g.n(); ++j) {
      EXPECT_FALSE(ds[g.negatives[j]].labels.intersects(ds[a].labels));
      EXPECT_TRUE(ds[g.negatives[j]].labels.contains(g.negative_slots[j]));
    }
    expect_no_duplicates(g);
  }
  EXPECT_GT(built, ds.size() * 9 / 10);
}

TEST(SampleML2Plus, ThreeLabelAnchor) {
  const Dataset ds =
      tiny({{1, 2, 3}, {0}, {0}, {1}, {1}, {2}, {2}, {3}, {3}, {4}, {4}, {0}, {1, 2}});
  Rng rng(6);
  const auto g = sample_group_ml2plus(ds, 0, rng);
  EXPECT_EQ(g.p(), 3u);
  EXPECT_EQ(g.n(), 2u);
  for (double t : g.tau) EXPECT_EQ(t, 2.0 / 3.0);
  for (auto i : g.positives) EXPECT_EQ(ds[i].labels.size(), 1u);
  EXPECT_NO_THROW(require_ml2plus_group(g));
}

TEST(SampleML2Plus, SingleLabelAnchorHasZeroTau) {
  const Dataset ds = tiny({{2}, {0}, {1}, {2}, {2, 3}, {3}, {4}});
  Rng rng(7);
  const auto g = sample_group_ml2plus(ds, 0, rng);
  ASSERT_EQ(g.p(), 1u);
  EXPECT_EQ(ds[g.positives[0]].labels, LabelSet::make({2}, 5));
  EXPECT_EQ(g.tau[0], 0.0);
}

TEST(SampleML2Plus, MissingSingleLabelCandidateIsNamed) {
  const Dataset ds = tiny({{1, 3}, {0}, {1}, {2}, {1, 3}, {4}});
  Rng rng(8);
  try {
    sample_group_ml2plus(ds, 0, rng);
    FAIL() << "expected SamplingError";
  } catch (const SamplingError& e) {
    EXPECT_NE(std::string(e.what()).find("label 3"), std::string::npos) << e.what();
  }
}

TEST(SampleML2Plus, InvariantsOverAnEpoch) {
  const Dataset& ds = small_synthetic();
  Rng rng(9);
  std::size_t built = 0;
  for (std::size_t a = 0; a < ds.size(); ++a) {
    AnchorGroup g;
    try {
      g = sample_group_ml2plus(ds, a, rng);
    } catch (const DegenerateGroupError&) {
      continue;
    }
    ++built;
    const auto& al = ds[a].labels;
    EXPECT_EQ(g.p() + g.n(), 5u);
    EXPECT_EQ(g.p(), al.size());
    const double p = static_cast<double>(g.p());
    for (double t : g.tau) EXPECT_EQ(t, (p - 1.0) / p);
    for (std::size_t i = 0; i < g.p(); ++i)
      EXPECT_EQ(ds[g.positives[i]].labels, LabelSet::make({g.positive_slots[i]}, 5));
    for (std::size_t j = 0; j < g.n(); ++j) {
      EXPECT_FALSE(ds[g.negatives[j]].labels.intersects(al));
      for (int k : al) EXPECT_FALSE(ds[g.negatives[j]].labels.contains(k));
    }
    expect_no_duplicates(g);
    EXPECT_NO_THROW(require_ml2plus_group(g));
  }
  EXPECT_GT(built, ds.size() * 9 / 10);
}

TEST(RequireML2PlusGroup, RejectsMalformedGroups) {
  Rng rng(10);
  auto rg = testing::random_ml2plus_group(rng, 5, 4);
  EXPECT_NO_THROW(require_ml2plus_group(rg.group));
  auto bad = rg.group;
  bad.tau[0] += 1e-3;
  EXPECT_THROW(require_ml2plus_group(bad), ContractError);
  bad = rg.group;
  bad.positive_labels[0] = LabelSet::make({0, 1}, 5);
  EXPECT_THROW(require_ml2plus_group(bad), ContractError);
}

TEST(BuildMinibatch, SizeErrors) {
  const Dataset& ds = small_synthetic();
  Rng rng(11);
  EXPECT_THROW(build_minibatch(ds, 0, Regime::kML2, rng), SamplingError);
  EXPECT_THROW(build_minibatch(ds, ds.size() + 1, Regime::kML2, rng), SamplingError);
  const auto one = build_minibatch(ds, 1, Regime::kML2Plus, rng);
  EXPECT_EQ(one.groups.size(), 1u);
  EXPECT_EQ(one.anchors.size(), 1u);
}

TEST(BuildMinibatch, DeterministicReplay) {
  const Dataset& ds = small_synthetic();
  for (auto regime : {Regime::kContrastive, Regime::kTriplet, Regime::kML2, Regime::kML2Plus}) {
    Rng a(42), b(42);
    for (int step = 0; step < 20; ++step)
      EXPECT_EQ(build_minibatch(ds, 10, regime, a), build_minibatch(ds, 10, regime, b));
  }
}

TEST(BuildMinibatch, AnchorsDistinctWithinBatch) {
  const Dataset& ds = small_synthetic();
  Rng rng(13);
  for (int step = 0; step < 50; ++step) {
    const auto batch = build_minibatch(ds, 36, Regime::kTriplet, rng);
    std::set<std::size_t> s(batch.anchors.begin(), batch.anchors.end());
    EXPECT_EQ(s.size(), 36u);
  }
}

TEST(BuildMinibatch, TripletAndPairRules) {
  const Dataset& ds = small_synthetic();
  Rng rng(14);
  for (int step = 0; step < 40; ++step) {
    const auto tb = build_minibatch(ds, 10, Regime::kTriplet, rng);
    ASSERT_EQ(tb.triplets.size(), 10u);
    for (const auto& t : tb.triplets) {
      EXPECT_NE(t.anchor, t.positive);
      EXPECT_TRUE(ds[t.positive].labels.intersects(ds[t.anchor].labels));
      EXPECT_FALSE(ds[t.negative].labels.intersects(ds[t.anchor].labels));
    }
    const auto cb = build_minibatch(ds, 10, Regime::kContrastive, rng);
    ASSERT_EQ(cb.pairs.size(), 20u);
    for (const auto& p : cb.pairs) {
      EXPECT_NE(p.first, p.second);
      EXPECT_EQ(p.same, ds[p.first].labels.intersects(ds[p.second].labels));
    }
  }
}

TEST(BuildMinibatch, DegenerateAnchorsAreReplaced) {
  // Anchor 0 carries every label, so its ML2+ group has no negatives.
  const Dataset ds = tiny({{0, 1, 2, 3, 4}, {0}, {0}, {1}, {1}, {2}, {2}, {3}, {3}, {4}, {4}});
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const auto batch = build_minibatch(ds, 10, Regime::kML2Plus, rng);
    EXPECT_EQ(batch.groups.size(), 10u);
    for (const auto& g : batch.groups) EXPECT_NE(g.anchor, 0u);
  }
  Rng rng(0);
  EXPECT_THROW(build_minibatch(ds, 11, Regime::kML2Plus, rng), SamplingError);
}

}  // namespace
}  // namespace mlml
