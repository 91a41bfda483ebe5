/*
 * Copyright 2026 The semshap Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "semshap/game.hpp"

#include <atomic>
#include <memory>

#include "gtest/gtest.h"
#include "scenes.hpp"

namespace semshap {
namespace {

using ::semshap::testing::kSceneDims;
using ::semshap::testing::ThreeRegionConfig;

Image Gradient(ImageDims dims) {
  Image image(dims);
  for (int y = 0; y < dims.height; ++y) {
    for (int x = 0; x < dims.width; ++x) {
      image.at(y, x, 0) = static_cast<std::uint8_t>(10 + x * 3);
      image.at(y, x, 1) = static_cast<std::uint8_t>(20 + y * 5);
      image.at(y, x, 2) = static_cast<std::uint8_t>(200 - x - y);
    }
  }
  return image;
}

FeatureSet LeftRight(ImageDims dims) {
  FeatureSet fs;
  fs.dims = dims;
  BinaryMask left(dims), right(dims);
  for (int y = 0; y < dims.height; ++y) {
    for (int x = 0; x < dims.width; ++x) (x < dims.width / 2 ? left : right)(y, x) = 1;
  }
  fs.masks = {{left, std::nullopt, FeatureKind::kExternal},
              {right, std::nullopt, FeatureKind::kExternal}};
  return fs;
}

TEST(ApplyCoalition, FullCoalitionIsIdentity) {
  const Image image = Gradient({10, 12});
  const FeatureSet fs = LeftRight(image.dims());
  EXPECT_EQ(ApplyCoalition(image, fs, Coalition::Full(2), Baseline{}), image);
}

TEST(ApplyCoalition, EmptyCoalitionIsBaseline) {
  const Image image = Gradient({10, 12});
  const FeatureSet fs = LeftRight(image.dims());
  EXPECT_EQ(ApplyCoalition(image, fs, Coalition::Empty(2), Baseline{}), Image(image.dims(), 0));
  const Baseline blur = Baseline::Parse("blur:2");
  EXPECT_EQ(ApplyCoalition(image, fs, Coalition::Empty(2), blur), BoxBlur(image, 2));
}

TEST(ApplyCoalition, LeftHalfKeptRightHalfBlack) {
  const Image image = Gradient({10, 12});
  const FeatureSet fs = LeftRight(image.dims());
  const Image out = ApplyCoalition(image, fs, Coalition(2, 0b01), Baseline{});
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 12; ++x) {
      for (int c = 0; c < 3; ++c) {
        EXPECT_EQ(out.at(y, x, c), x < 6 ? image.at(y, x, c) : 0) << y << "," << x;
      }
    }
  }
}

TEST(ApplyCoalition, OverlappingMasksKeepTheUnion) {
  const Image image = Gradient({4, 4});
  FeatureSet fs = LeftRight(image.dims());
  fs.masks[1].binary(0, 0) = 1;
  const Image out = ApplyCoalition(image, fs, Coalition(2, 0b10), Baseline{});
  EXPECT_EQ(out.at(0, 0, 0), image.at(0, 0, 0));
  EXPECT_EQ(out.at(1, 0, 0), 0);
}

TEST(ApplyCoalition, DimensionMismatch) {
  const Image image = Gradient({10, 12});
  const FeatureSet fs = LeftRight({10, 11});
  EXPECT_THROW(ApplyCoalition(image, fs, Coalition::Full(2), Baseline{}), InputError);
  EXPECT_THROW(ApplyCoalition(image, LeftRight(image.dims()), Coalition::Full(3), Baseline{}),
               InputError);
}

TEST(ApplyCoalition, SourceIsUntouched) {
  const Image image = Gradient({6, 6});
  const Image copy = image;
  ApplyCoalition(image, LeftRight(image.dims()), Coalition(2, 0b10), Baseline{});
  EXPECT_EQ(image, copy);
}

TEST(Baseline, MeanColour) {
  Image image({1, 2}, 0);
  image.at(0, 0, 0) = 100;
  image.at(0, 1, 0) = 201;
  image.at(0, 1, 2) = 50;
  const Image mean = BaselineImage(image, Baseline::Parse("mean"));
  for (int x = 0; x < 2; ++x) {
    EXPECT_EQ(mean.at(0, x, 0), 151);  // 150.5 rounds away from zero
    EXPECT_EQ(mean.at(0, x, 1), 0);
    EXPECT_EQ(mean.at(0, x, 2), 25);
  }
}

TEST(Baseline, BlurOfConstantIsConstant) {
  const Image flat({7, 5}, 90);
  EXPECT_EQ(BoxBlur(flat, 3), flat);
}

TEST(Baseline, Parsing) {
  EXPECT_EQ(Baseline::Parse("black").ToString(), "black");
  EXPECT_EQ(Baseline::Parse("blur:4").radius, 4);
  EXPECT_EQ(Baseline::Parse("blur:4").ToString(), "blur:4");
  EXPECT_THROW(Baseline::Parse("blur:0"), ConfigError);
  EXPECT_THROW(Baseline::Parse("blur:x"), ConfigError);
  EXPECT_THROW(Baseline::Parse("grey"), ConfigError);
  GameConfig config;
  config.baseline = Baseline::Parse("blur:3");
  EXPECT_EQ(GameConfig::FromJson(config.ToJson()), config);
}

TEST(Embedding, Deterministic) {
  const HashedNgramEmbedder embedder;
  EXPECT_EQ(embedder.dim(), 512);
  EXPECT_EQ(embedder.Embed("a dog runs"), embedder.Embed("a dog runs"));
  EXPECT_NEAR(embedder.Embed("a dog runs").norm, 1.0, 1e-12);
}

TEST(Embedding, WordOrderMatters) {
  const HashedNgramEmbedder embedder;
  EXPECT_NE(embedder.Embed("a b").vector, embedder.Embed("b a").vector);
}

TEST(Embedding, EmptyIsDegenerate) {
  const HashedNgramEmbedder embedder;
  EXPECT_TRUE(embedder.Embed("").degenerate);
  EXPECT_TRUE(embedder.Embed(" ,. ").degenerate);
  EXPECT_FALSE(embedder.Embed("dog").degenerate);
}

TEST(Embedding, CaseAndPunctuationIgnored) {
  const HashedNgramEmbedder embedder;
  EXPECT_EQ(embedder.Embed("A Dog!"), embedder.Embed("a dog"));
}

TEST(Similarity, IdenticalIsOne) {
  const HashedNgramEmbedder embedder;
  const auto e = embedder.Embed("two dogs play");
  EXPECT_NEAR(Similarity(e, e), 1.0, 1e-12);
}

TEST(Similarity, OrthogonalIsZero) {
  const auto a = CaptionEmbedding::FromVector({1.0, 0.0, 0.0});
  const auto b = CaptionEmbedding::FromVector({0.0, 3.0, 0.0});
  EXPECT_DOUBLE_EQ(Similarity(a, b), 0.0);
}

TEST(Similarity, ScaleInvariant) {
  const auto a = CaptionEmbedding::FromVector({0.3, -1.2, 2.0});
  const auto b = CaptionEmbedding::FromVector({0.6, -2.4, 4.0});
  EXPECT_NEAR(Similarity(a, b), 1.0, 1e-12);
}

TEST(Similarity, DegenerateIsZero) {
  const HashedNgramEmbedder embedder;
  EXPECT_EQ(Similarity(embedder.Embed(""), embedder.Embed("dog")), 0.0);
  EXPECT_EQ(Similarity(embedder.Embed(""), embedder.Embed("")), 0.0);
}

TEST(Similarity, DimensionMismatch) {
  EXPECT_THROW(Similarity(HashedNgramEmbedder(8).Embed("a"), HashedNgramEmbedder(16).Embed("a")),
               InputError);
}

// Counts caption calls; otherwise the oracle.
class CountingModel final : public ModelHandle {
 public:
  explicit CountingModel(RegionOracleConfig config) : oracle_(std::move(config)) {}
  std::string Caption(const Image& image, const std::optional<std::string>& question) override {
    ++calls;
    last_question = question;
    return oracle_.Caption(image, question);
  }
  std::set<Capability> capabilities() const override { return oracle_.capabilities(); }
  Backbone backbone() const override { return oracle_.backbone(); }
  std::string description() const override { return "counting"; }

  std::atomic<int> calls{0};
  std::optional<std::string> last_question;

 private:
  RegionOracleModel oracle_;
};

// One external mask per oracle region plus the leftover.
FeatureSet RegionMasks(const RegionOracleConfig& config, ImageDims dims) {
  FeatureSet fs;
  fs.dims = dims;
  for (const auto& r : config.regions) {
    BinaryMask m(dims);
    for (int y = r.y; y < r.y + r.height; ++y) {
      for (int x = r.x; x < r.x + r.width; ++x) m(y, x) = 1;
    }
    fs.masks.push_back({m, std::nullopt, FeatureKind::kExternal});
  }
  AppendLeftover(fs, true);
  return fs;
}

class SentenceGameTest : public ::testing::Test {
 protected:
  RegionOracleConfig config_ = ThreeRegionConfig();
  CountingModel model_{config_};
  std::shared_ptr<const Embedder> embedder_ = std::make_shared<HashedNgramEmbedder>();
  SentenceGame game_{model_, PaintOracleScene(config_, kSceneDims),
                     RegionMasks(config_, kSceneDims), GameConfig{}, embedder_};
};

TEST_F(SentenceGameTest, FullCoalitionScoresOne) {
  EXPECT_EQ(game_.reference_caption(), "dog ball grass");
  EXPECT_NEAR(game_.Value(Coalition::Full(4)), 1.0, 1e-12);
}

TEST_F(SentenceGameTest, MissingRegionLowersTheValue) {
  const double without_ball = game_.Value(Coalition(4, 0b1101));
  EXPECT_LT(without_ball, 1.0);
  EXPECT_EQ(game_.CaptionFor(Coalition(4, 0b1101)), "dog grass");
  const double expected =
      Similarity(embedder_->Embed("dog ball grass"), embedder_->Embed("dog grass"));
  EXPECT_DOUBLE_EQ(without_ball, expected);
}

TEST_F(SentenceGameTest, EmptyCoalitionScoresTheEmptyCaption) {
  const double expected =
      Similarity(embedder_->Embed("dog ball grass"), embedder_->Embed("nothing"));
  EXPECT_DOUBLE_EQ(game_.Value(Coalition::Empty(4)), expected);
  EXPECT_DOUBLE_EQ(expected, 0.0);
}

TEST_F(SentenceGameTest, ReferenceComputedOnceAndValuesMemoized) {
  EXPECT_EQ(model_.calls.load(), 1);
  game_.Value(Coalition(4, 0b0011));
  game_.Value(Coalition(4, 0b0011));
  game_.Value(Coalition(4, 0b0101));
  EXPECT_EQ(model_.calls.load(), 3);
  EXPECT_EQ(game_.model_calls(), 3);
}

TEST_F(SentenceGameTest, LeftoverIsInert) {
  // The oracle only reads its regions, so toggling the leftover never matters.
  for (std::uint32_t bits = 0; bits < 8; ++bits) {
    EXPECT_DOUBLE_EQ(game_.Value(Coalition(4, bits)), game_.Value(Coalition(4, bits | 8u)));
  }
}

TEST(SentenceGame, QuestionIsForwarded) {
  const auto config = ThreeRegionConfig();
  CountingModel model(config);
  SentenceGame game(model, PaintOracleScene(config, kSceneDims), RegionMasks(config, kSceneDims),
                    GameConfig{}, std::make_shared<HashedNgramEmbedder>(),
                    std::string("what is in the picture?"));
  EXPECT_EQ(model.last_question, "what is in the picture?");
}

TEST(SentenceGame, RejectsMismatchedFeatures) {
  const auto config = ThreeRegionConfig();
  CountingModel model(config);
  EXPECT_THROW(SentenceGame(model, PaintOracleScene(config, kSceneDims),
                            RegionMasks(config, {32, 64}), GameConfig{},
                            std::make_shared<HashedNgramEmbedder>()),
               InputError);
}

TEST(SentenceGame, ExactExplanationCreditsOnlyRegions) {
  const auto config = ThreeRegionConfig();
  RegionOracleModel model(config);
  SentenceGame game(model, PaintOracleScene(config, kSceneDims), RegionMasks(config, kSceneDims),
                    GameConfig{}, std::make_shared<HashedNgramEmbedder>());
  const Explanation e = Explain(game.AsGame(), 4, ExplainOptions{});
  EXPECT_LE(e.EfficiencyResidual(), 1e-9);
  EXPECT_NEAR(e.phi[3], 0.0, 1e-9);
  for (int i = 0; i < 3; ++i) EXPECT_GT(e.phi[i], 0.1);
}

}  // namespace
}  // namespace semshap
