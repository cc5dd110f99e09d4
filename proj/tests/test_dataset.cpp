#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include <gtest/gtest.h>

#include "mlml/dataset.hpp"
#include "mlml/error.hpp"
#include "test_support.hpp"

namespace mlml {
namespace {

namespace fs = std::filesystem;

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mlml_test_dataset";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary | std::ios::trunc) << text;
}

template <class Fn>
std::string error_of(Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

TEST(LabelSet, SortsAndValidates) {
  const auto s = LabelSet::make({3, 1}, 5);
  EXPECT_EQ(std::vector<int>(s.begin(), s.end()), (std::vector<int>{1, 3}));
  EXPECT_THROW(LabelSet::make({1, 1}, 5), ContractError);
  EXPECT_THROW(LabelSet::make({5}, 5), ContractError);
  EXPECT_THROW(LabelSet::make({-1}, 5), ContractError);
  EXPECT_EQ(s.to_string(), "1;3");
}

TEST(LabelSet, SetAlgebra) {
  const auto a = LabelSet::make({1, 2, 3}, 5);
  const auto b = LabelSet::make({2, 4}, 5);
  EXPECT_TRUE(a.intersects(b));
  EXPECT_EQ(a.intersection_size(b), 1u);
  EXPECT_EQ(a.union_size(b), 4u);
  EXPECT_FALSE(a.intersects(LabelSet::make({0, 4}, 5)));
}

TEST(LabelComplement, Examples) {
  EXPECT_EQ(label_complement(LabelSet::make({0}, 5), 5), LabelSet::make({1, 2, 3, 4}, 5));
  EXPECT_TRUE(label_complement(LabelSet::make({0, 1, 2}, 3), 3).empty());
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const auto s = testing::random_label_set(rng, 7);
    const auto c = label_complement(s, 7);
    EXPECT_FALSE(s.intersects(c));
    EXPECT_EQ(s.size() + c.size(), 7u);
    EXPECT_EQ(label_complement(c, 7), s);
  }
}

Example ex(std::string id, std::vector<double> f, std::vector<int> labels, int l = 3) {
  return {std::move(id), std::move(f), LabelSet::make(std::move(labels), l)};
}

TEST(Dataset, IndexesLabels) {
  const Dataset ds({ex("a", {0, 1}, {0}), ex("b", {1, 1}, {1, 2}), ex("c", {2, 1}, {1})}, 3);
  EXPECT_EQ(ds.feature_dim(), 2u);
  const auto w1 = ds.with_label(1);
  EXPECT_EQ(std::vector<std::size_t>(w1.begin(), w1.end()), (std::vector<std::size_t>{1, 2}));
  const auto o1 = ds.with_only_label(1);
  EXPECT_EQ(std::vector<std::size_t>(o1.begin(), o1.end()), (std::vector<std::size_t>{2}));
  EXPECT_TRUE(ds.with_only_label(2).empty());
  EXPECT_NO_THROW(ds.require_all_labels_present());
}

TEST(Dataset, MissingLabelNamed) {
  const Dataset ds({ex("a", {0}, {0}), ex("b", {1}, {1})}, 3);
  const auto msg = error_of([&] { ds.require_all_labels_present(); });
  EXPECT_NE(msg.find("2"), std::string::npos) << msg;
  EXPECT_THROW(ds.require_all_labels_present(), SamplingError);
}

TEST(Dataset, ValidationNamesRecord) {
  EXPECT_NE(error_of([] { Dataset({ex("a", {0, 1}, {0}), ex("bad", {1}, {1})}, 3); })
                .find("bad"),
            std::string::npos);
  EXPECT_THROW(Dataset({ex("a", {0}, {0}), ex("a", {1}, {1})}, 3), FormatError);
  EXPECT_THROW(Dataset({ex("nan", {NAN}, {0})}, 3), FormatError);
  EXPECT_THROW(Dataset({Example{"empty", {1.0}, LabelSet{}}}, 3), FormatError);
  EXPECT_THROW(Dataset({ex("wide", {1.0}, {2}, 3)}, 2), FormatError);
}

TEST(SyntheticSpec, DefaultIsValid) {
  const auto spec = SyntheticSpec::default_spec();
  EXPECT_NO_THROW(spec.validate());
  EXPECT_EQ(spec.label_count, 5);
  EXPECT_EQ(spec.feature_dim, 32u);
  EXPECT_EQ(spec.train_size, 2000u);
  EXPECT_EQ(spec.validation_size, 500u);
  EXPECT_EQ(spec.test_size, 500u);
}

TEST(SyntheticSpec, RejectsBadTablesNamingTheKey) {
  auto spec = SyntheticSpec::default_spec();
  spec.cooccurrence(1, 2) = 1.5;
  EXPECT_NE(error_of([&] { spec.validate(); }).find("synthetic.cooccurrence[1][2]"),
            std::string::npos);

  spec = SyntheticSpec::default_spec();
  spec.cooccurrence(1, 2) = 0.9;  // (2,1) stays 0.25
  EXPECT_THROW(spec.validate(), ConfigError);

  spec = SyntheticSpec::default_spec();
  spec.cooccurrence(0, 3) = spec.cooccurrence(3, 0) = 0.1;
  EXPECT_NE(error_of([&] { spec.validate(); }).find("cooccurrence[0][3]"), std::string::npos);

  spec = SyntheticSpec::default_spec();
  spec.prototypes[2].pop_back();
  EXPECT_NE(error_of([&] { spec.validate(); }).find("synthetic.prototypes"), std::string::npos);
}

TEST(GenerateSynthetic, SizesIdsAndDeterminism) {
  auto spec = SyntheticSpec::default_spec(4);
  spec.train_size = 300;
  spec.validation_size = 50;
  spec.test_size = 40;
  const Splits a = generate_synthetic(spec);
  const Splits b = generate_synthetic(spec);
  EXPECT_EQ(a.train.size(), 300u);
  EXPECT_EQ(a.validation.size(), 50u);
  EXPECT_EQ(a.test.size(), 40u);
  EXPECT_EQ(a.train[0].id, "train-000000");
  EXPECT_EQ(a.validation[0].id, "val-000000");
  EXPECT_EQ(a.test[39].id, "test-000039");
  EXPECT_TRUE(a.train == b.train && a.validation == b.validation && a.test == b.test);
  spec.seed = 5;
  EXPECT_FALSE(generate_synthetic(spec).train == a.train);
}

TEST(GenerateSynthetic, ZeroNoiseGivesPrototypeSums) {
  auto spec = SyntheticSpec::default_spec(2);
  spec.noise_sigma = 0.0;
  spec.train_size = 200;
  const Splits s = generate_synthetic(spec);
  for (const auto& e : s.train.examples()) {
    for (std::size_t d = 0; d < spec.feature_dim; ++d) {
      double want = 0.0;
      for (int k : e.labels) want += spec.prototypes[static_cast<std::size_t>(k)][d];
      EXPECT_DOUBLE_EQ(e.features[d], want);
    }
  }
}

TEST(GenerateSynthetic, ForcedCooccurrenceAlwaysHolds) {
  auto spec = SyntheticSpec::default_spec(9);
  spec.cooccurrence(2, 3) = spec.cooccurrence(3, 2) = 1.0;
  spec.train_size = 3000;
  const Splits s = generate_synthetic(spec);
  std::size_t with2 = 0;
  for (const auto& e : s.train.examples()) {
    if (!e.labels.contains(2)) continue;
    ++with2;
    EXPECT_TRUE(e.labels.contains(3)) << e.id;
  }
  EXPECT_GT(with2, 100u);
}

TEST(GenerateSynthetic, NormalIsExclusive) {
  const Splits s = generate_synthetic(SyntheticSpec::default_spec(3));
  for (const auto& e : s.train.examples())
    if (e.labels.contains(kNormalLabel)) EXPECT_EQ(e.labels.size(), 1u) << e.id;
}

TEST(ExactLabelDistribution, SumsToOne) {
  const auto dist = testing::exact_label_distribution(SyntheticSpec::default_spec().cooccurrence);
  double total = 0.0;
  for (const auto& [labels, p] : dist) total += p;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

// Every label-set frequency and every label marginal must sit within three
// standard errors of the enumerated probabilities.
TEST(DrawLabelSet, MatchesExactEnumeration) {
  const auto spec = SyntheticSpec::default_spec();
  const auto dist = testing::exact_label_distribution(spec.cooccurrence);
  const int n = 10000;
  Rng rng(2024);
  std::map<std::vector<int>, int> counts;
  std::vector<int> marginal(5, 0);
  for (int t = 0; t < n; ++t) {
    const auto s = draw_label_set(spec, rng);
    counts[std::vector<int>(s.begin(), s.end())]++;
    for (int k : s) marginal[static_cast<std::size_t>(k)]++;
  }
  for (const auto& [labels, c] : counts) EXPECT_TRUE(dist.count(labels)) << "impossible set drawn";
  for (const auto& [labels, p] : dist) {
    const double se = std::sqrt(p * (1.0 - p) / n);
    const double freq = static_cast<double>(counts[labels]) / n;
    EXPECT_LE(std::abs(freq - p), 3.0 * se + 1e-12);
  }
  for (int k = 0; k < 5; ++k) {
    double p = 0.0;
    for (const auto& [labels, q] : dist)
      if (std::find(labels.begin(), labels.end(), k) != labels.end()) p += q;
    const double se = std::sqrt(p * (1.0 - p) / n);
    EXPECT_LE(std::abs(static_cast<double>(marginal[static_cast<std::size_t>(k)]) / n - p),
              3.0 * se)
        << "label " << k;
  }
}

TEST(GenerateSynthetic, NearestPrototypeRecoversSingleLabels) {
  auto spec = SyntheticSpec::default_spec(8);
  spec.noise_sigma = 0.3;
  const Splits s = generate_synthetic(spec);
  std::size_t total = 0, right = 0;
  for (const auto& e : s.train.examples()) {
    if (e.labels.size() != 1) continue;
    ++total;
    int best = -1;
    double best_d = 1e300;
    for (int k = 0; k < spec.label_count; ++k) {
      const double d = testing::euclid(e.features, spec.prototypes[static_cast<std::size_t>(k)]);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    right += best == e.labels.front();
  }
  ASSERT_GT(total, 500u);
  EXPECT_GE(static_cast<double>(right) / static_cast<double>(total), 0.99);
}

TEST(Jsonl, RoundTrip) {
  auto spec = SyntheticSpec::default_spec(6);
  spec.train_size = 100;
  const Splits s = generate_synthetic(spec);
  const auto path = temp_file("round.jsonl");
  save_jsonl(s.train, path);
  EXPECT_TRUE(load_jsonl(path, 5) == s.train);
}

TEST(Jsonl, RejectsBadRecords) {
  const auto path = temp_file("bad.jsonl");
  write_text(path, R"({"id":"r1","features":[1,2],"labels":[0]})"
                   "\n"
                   R"({"id":"r2","features":[1,2],"labels":[]})"
                   "\n");
  auto msg = error_of([&] { load_jsonl(path, 5); });
  EXPECT_NE(msg.find("r2"), std::string::npos) << msg;
  EXPECT_THROW(load_jsonl(path, 5), FormatError);

  write_text(path, R"({"id":"r1","features":[1,2],"labels":[5]})"
                   "\n");
  msg = error_of([&] { load_jsonl(path, 5); });
  EXPECT_NE(msg.find("r1"), std::string::npos) << msg;

  write_text(path, R"({"id":"r1","features":[1,2],"labels":[0]})"
                   "\n"
                   R"({"id":"r9","features":[1],"labels":[1]})"
                   "\n");
  msg = error_of([&] { load_jsonl(path, 5); });
  EXPECT_NE(msg.find("r9"), std::string::npos) << msg;

  write_text(path, "{not json\n");
  EXPECT_THROW(load_jsonl(path, 5), FormatError);
  EXPECT_THROW(load_jsonl(temp_file("does-not-exist.jsonl"), 5), FormatError);
}

}  // namespace
}  // namespace mlml
