#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "mlml/error.hpp"
#include "mlml/losses.hpp"
#include "mlml/model.hpp"
#include "test_support.hpp"

namespace mlml {
namespace {

namespace fs = std::filesystem;

EncoderConfig small_config(int heads = 0) {
  EncoderConfig c;
  c.input_dim = 6;
  c.hidden = {8, 7};
  c.embedding_dim = 5;
  c.head_count = heads;
  c.seed = 3;
  return c;
}

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "mlml_test_model";
  fs::create_directories(dir);
  return dir / name;
}

TEST(EncoderConfig, Validation) {
  EXPECT_NO_THROW(small_config().validate());
  auto c = small_config();
  c.input_dim = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.embedding_dim = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.hidden = {8, 0};
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.head_count = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(EncoderConfig, JsonRoundTripAndStrictKeys) {
  const auto c = small_config(4);
  nlohmann::json j = c;
  const auto back = j.get<EncoderConfig>();
  EXPECT_EQ(back.input_dim, c.input_dim);
  EXPECT_EQ(back.hidden, c.hidden);
  EXPECT_EQ(back.embedding_dim, c.embedding_dim);
  EXPECT_EQ(back.head_count, c.head_count);
  EXPECT_EQ(back.seed, c.seed);
  j["widht"] = 3;
  EXPECT_THROW(j.get<EncoderConfig>(), ConfigError);
}

TEST(EmbeddingModel, SlotLayout) {
  const EmbeddingModel m(small_config(2));
  const auto& p = m.params();
  EXPECT_EQ(p[0].name, "hidden0.weight");
  EXPECT_EQ(p[0].value.rows(), 6u);
  EXPECT_EQ(p[0].value.cols(), 8u);
  EXPECT_EQ(p.at("proj.weight").value.rows(), 7u);
  EXPECT_EQ(p.at("proj.weight").value.cols(), 5u);
  EXPECT_EQ(p.at("head1.weight").value.cols(), 2u);
  for (const auto& slot : p)
    if (slot.name.ends_with(".bias"))
      for (double v : slot.value.data()) EXPECT_EQ(v, 0.0);
}

TEST(EmbeddingModel, GlorotRange) {
  const EmbeddingModel m(small_config());
  const auto& w = m.params().at("hidden0.weight").value;
  const double limit = std::sqrt(6.0 / (6.0 + 8.0));
  for (double v : w.data()) EXPECT_LE(std::abs(v), limit);
}

TEST(EmbeddingModel, SameSeedSameWeights) {
  const EmbeddingModel a(small_config()), b(small_config());
  EXPECT_EQ(a.params().snapshot_values(), b.params().snapshot_values());
  auto other = small_config();
  other.seed = 4;
  EXPECT_NE(EmbeddingModel(other).params().snapshot_values(), a.params().snapshot_values());
}

TEST(EmbeddingModel, OutputsAreUnitNorm) {
  const EmbeddingModel m(small_config());
  Rng rng(1);
  for (int t = 0; t < 500; ++t) {
    const auto x = testing::random_vector(rng, 6, 3.0);
    EXPECT_NEAR(norm2(m.embed(x)), 1.0, 1e-12);
  }
}

TEST(EmbeddingModel, WrongWidthThrows) {
  const EmbeddingModel m(small_config());
  EXPECT_THROW(m.embed(std::vector<double>(5, 1.0)), DimensionError);
}

TEST(EmbeddingModel, ZeroProjectionIsDegenerate) {
  EmbeddingModel m(small_config());
  m.params().at("proj.weight").value.fill(0.0);
  EXPECT_THROW(m.embed(std::vector<double>(6, 1.0)), DegenerateInputError);
}

TEST(EmbeddingModel, BiasOnlyProjectionIsConstant) {
  EmbeddingModel m(small_config());
  m.params().at("proj.weight").value.fill(0.0);
  auto& b = m.params().at("proj.bias").value;
  b(0, 0) = 3.0;
  b(0, 3) = -4.0;
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const auto e = m.embed(testing::random_vector(rng, 6));
    EXPECT_NEAR(e[0], 0.6, 1e-15);
    EXPECT_NEAR(e[3], -0.8, 1e-15);
  }
}

TEST(EmbeddingModel, InvariantToPositiveProjectionScale) {
  EmbeddingModel m(small_config());
  Rng rng(3);
  auto& b = m.params().at("proj.bias").value;
  for (double& v : b.data()) v = 0.1;
  std::vector<std::vector<double>> xs, before;
  for (int t = 0; t < 20; ++t) {
    xs.push_back(testing::random_vector(rng, 6));
    before.push_back(m.embed(xs.back()));
  }
  for (auto* slot : {&m.params().at("proj.weight").value, &b})
    for (double& v : slot->data()) v *= 7.5;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const auto after = m.embed(xs[t]);
    for (std::size_t k = 0; k < after.size(); ++k) EXPECT_NEAR(after[k], before[t][k], 1e-14);
  }
}

TEST(EmbeddingModel, LogSoftmaxRowsSumToOne) {
  const EmbeddingModel m(small_config(4));
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const Matrix lp = m.classify(testing::random_vector(rng, 6, 2.0));
    ASSERT_EQ(lp.rows(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_NEAR(std::exp(lp(i, 0)) + std::exp(lp(i, 1)), 1.0, 1e-12);
      EXPECT_LE(lp(i, 0), 0.0);
    }
  }
}

TEST(EmbeddingModel, ClassifyWithoutHeadsThrows) {
  const EmbeddingModel m(small_config());
  EXPECT_THROW(m.classify(std::vector<double>(6, 0.5)), ConfigError);
}

TEST(EmbeddingModel, EmbedGradientMatchesFiniteDifferences) {
  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    EmbeddingModel m(small_config());
    // Push biases off zero so no unit sits exactly at a rectifier kink.
    for (auto& slot : m.params())
      if (slot.name.ends_with(".bias"))
        for (double& v : slot.value.data()) v = 0.1 * testing::random_vector(rng, 1)[0];
    const auto x = testing::random_vector(rng, 6);
    const auto c = testing::random_vector(rng, 5);
    const Objective f = [&](ParamStore&) {
      ForwardCache cache;
      const auto e = m.forward_embed(x, cache);
      m.backward_embed(cache, c);
      return dot(c, e);
    };
    EXPECT_LE(check_gradient(f, m.params()), 1e-4);
  }
}

TEST(EmbeddingModel, ClassifyGradientMatchesFiniteDifferences) {
  Rng rng(6);
  for (int t = 0; t < 10; ++t) {
    EmbeddingModel m(small_config(3));
    const auto x = testing::random_vector(rng, 6);
    const auto y = testing::random_label_set(rng, 3);
    const Objective f = [&](ParamStore&) {
      ForwardCache cache;
      const Matrix lp = m.forward_classify(x, cache);
      const auto out = pretrain_loss(lp, y, 3);
      m.backward_classify(cache, out.grads);
      return out.value;
    };
    EXPECT_LE(check_gradient(f, m.params()), 1e-4);
  }
}

TEST(EmbeddingModel, RadialUpstreamHasNoEffect) {
  // The normalization's Jacobian annihilates the output direction.
  const EmbeddingModel m(small_config());
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    ForwardCache cache;
    const auto e = m.forward_embed(testing::random_vector(rng, 6), cache);
    auto buf = m.params().make_grad_buffer();
    m.backward_embed(cache, e, buf);
    for (const auto& g : buf)
      for (double v : g.data()) EXPECT_NEAR(v, 0.0, 1e-12);
  }
}

TEST(EmbeddingModel, BackwardWithoutForwardThrows) {
  const EmbeddingModel m(small_config());
  auto buf = m.params().make_grad_buffer();
  EXPECT_THROW(m.backward_embed(ForwardCache{}, std::vector<double>(5, 1.0), buf),
               ContractError);
}

TEST(EmbeddingModel, ReinitializeProjectionKeepsTrunk) {
  EmbeddingModel m(small_config(2));
  const auto before = m.params().snapshot_values();
  m.reinitialize_projection(99);
  const auto after = m.params().snapshot_values();
  for (std::size_t s = 0; s < before.size(); ++s) {
    const auto& name = m.params()[s].name;
    if (name == "proj.weight")
      EXPECT_NE(before[s], after[s]);
    else
      EXPECT_EQ(before[s], after[s]) << name;
  }
}

TEST(EmbeddingModel, EmbedAllMatchesRowwise) {
  const EmbeddingModel m(small_config());
  Rng rng(8);
  const Matrix x(9, 6, testing::random_vector(rng, 54));
  const Matrix e = m.embed_all(x);
  for (std::size_t r = 0; r < 9; ++r) {
    const auto row = m.embed(x.row(r));
    for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(e(r, k), row[k]);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  EmbeddingModel m(small_config(3));
  Rng rng(9);
  for (auto& slot : m.params())
    for (double& v : slot.value.data()) v = testing::random_vector(rng, 1)[0];
  const auto path = temp_path("round.ckpt");
  save_checkpoint(m, path, {{"note", "x"}});
  const auto loaded = load_checkpoint(path);
  EXPECT_EQ(loaded.model.params().snapshot_values(), m.params().snapshot_values());
  EXPECT_EQ(loaded.metadata.at("note"), "x");
  EXPECT_EQ(loaded.model.config().head_count, 3);
  const auto x = testing::random_vector(rng, 6);
  EXPECT_EQ(loaded.model.embed(x), m.embed(x));
}

TEST(Checkpoint, BadMagicAndVersion) {
  const auto path = temp_path("bad.ckpt");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACKPT and then some";
  }
  EXPECT_THROW(load_checkpoint(path), FormatError);

  const EmbeddingModel m(small_config());
  save_checkpoint(m, path);
  {
    std::fstream io(path, std::ios::binary | std::ios::in | std::ios::out);
    io.seekp(8);
    const char v[4] = {7, 0, 0, 0};
    io.write(v, 4);
  }
  try {
    load_checkpoint(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version 7"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_checkpoint(temp_path("missing.ckpt")), FormatError);
}

TEST(Checkpoint, TruncatedFileIsRejected) {
  const EmbeddingModel m(small_config());
  const auto path = temp_path("trunc.ckpt");
  save_checkpoint(m, path);
  fs::resize_file(path, fs::file_size(path) - 9);
  EXPECT_THROW(load_checkpoint(path), FormatError);
}

}  // namespace
}  // namespace mlml
