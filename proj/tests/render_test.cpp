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

#include "semshap/render.hpp"

#include "gtest/gtest.h"
#include "semshap/record.hpp"
#include "temp_dir.hpp"

namespace semshap {
namespace {

using ::semshap::testing::TempDir;

Explanation WithPhi(std::vector<double> phi) {
  Explanation e;
  e.phi = std::move(phi);
  return e;
}

TEST(Render, SuperpixelModesAreIdentical) {
  const FeatureSet fs = SuperpixelMasks({9, 12}, 3, 4);
  Explanation e = WithPhi({0.5, -0.25, 0.1, 0.0, 1.0, -1.0, 0.3, 0.3, 0.2, -0.7, 0.05, 0.6});
  const AttributionMap a = RenderAttributionMap(e, fs, RenderMode::kIntensity);
  const AttributionMap b = RenderAttributionMap(e, fs, RenderMode::kFlat);
  ASSERT_EQ(a.values.size(), b.values.size());
  EXPECT_EQ(std::memcmp(a.values.values().data(), b.values.values().data(),
                        a.values.size() * sizeof(double)),
            0);
  EXPECT_EQ(a.values(0, 0), 0.5);
  EXPECT_EQ(a.values(8, 11), 0.6);
}

TEST(Render, DffRampScalesWithPhi) {
  const ImageDims dims{3, 11};
  FeatureMask mask;
  mask.kind = FeatureKind::kDff;
  mask.binary = BinaryMask(dims, 1);
  RealMap ramp(dims);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 11; ++x) ramp(y, x) = x / 10.0;
  }
  mask.heatmap = ramp;
  FeatureSet fs;
  fs.dims = dims;
  fs.masks = {mask};
  const AttributionMap map = RenderAttributionMap(WithPhi({2.0}), fs, RenderMode::kIntensity);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 11; ++x) EXPECT_NEAR(map.values(y, x), 2.0 * (x / 10.0), 1e-12);
  }
  const AttributionMap flat = RenderAttributionMap(WithPhi({2.0}), fs, RenderMode::kFlat);
  for (double v : flat.values.values()) EXPECT_EQ(v, 2.0);
}

TEST(Render, ZeroPhiGivesZeroMap) {
  const FeatureSet fs = SuperpixelMasks({5, 5}, 2, 2);
  const auto map = RenderAttributionMap(WithPhi({0, 0, 0, 0}), fs, RenderMode::kIntensity);
  for (double v : map.values.values()) EXPECT_EQ(v, 0.0);
}

TEST(Render, OverlapsSum) {
  const ImageDims dims{1, 3};
  FeatureSet fs;
  fs.dims = dims;
  BinaryMask a(dims), b(dims);
  a(0, 0) = a(0, 1) = 1;
  b(0, 1) = b(0, 2) = 1;
  fs.masks = {{a, std::nullopt, FeatureKind::kExternal}, {b, std::nullopt, FeatureKind::kExternal}};
  const auto map = RenderAttributionMap(WithPhi({0.5, 0.25}), fs, RenderMode::kFlat);
  EXPECT_EQ(map.values(0, 0), 0.5);
  EXPECT_EQ(map.values(0, 1), 0.75);
  EXPECT_EQ(map.values(0, 2), 0.25);
}

TEST(Render, FlatSumOverDisjointMasks) {
  const FeatureSet fs = SuperpixelMasks({10, 7}, 3, 2);
  const std::vector<double> phi = {0.125, -0.5, 0.25, 0.75, -0.0625, 1.5};
  const auto map = RenderAttributionMap(WithPhi(phi), fs, RenderMode::kFlat);
  double total = 0.0, expected = 0.0;
  for (double v : map.values.values()) total += v;
  for (int i = 0; i < 6; ++i) expected += phi[i] * static_cast<double>(fs.masks[i].Area());
  EXPECT_EQ(total, expected);
}

TEST(Render, RejectsMismatch) {
  const FeatureSet fs = SuperpixelMasks({4, 4}, 2, 2);
  EXPECT_THROW(RenderAttributionMap(WithPhi({1, 2, 3}), fs, RenderMode::kFlat), InputError);
}

TEST(Palette, PositiveBlueNegativeRed) {
  RealMap map(1, 3);
  map(0, 0) = 2.0;
  map(0, 1) = -2.0;
  const Image image = DivergingPalette(map, MaxAbs(map));
  EXPECT_EQ(image.at(0, 0, 0), 0);
  EXPECT_EQ(image.at(0, 0, 2), 255);
  EXPECT_EQ(image.at(0, 1, 0), 255);
  EXPECT_EQ(image.at(0, 1, 2), 0);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(image.at(0, 2, c), 255);
}

TEST(Files, AttributionRoundTripAndScale) {
  TempDir dir;
  const FeatureSet fs = SuperpixelMasks({6, 8}, 2, 2);
  const auto map = RenderAttributionMap(WithPhi({0.5, -0.25, 0.125, -1.5}), fs,
                                        RenderMode::kIntensity);
  WriteAttributionFiles(dir.path(), map);
  EXPECT_EQ(ReadFloatMap(dir.path() / "attribution.f32"), map.values);
  const auto sidecar = nlohmann::json::parse(ReadBinaryFile(dir.path() / "attribution.json"));
  EXPECT_EQ(sidecar["color_scale"].get<double>(), 1.5);
  EXPECT_EQ(sidecar["shape"], nlohmann::json({6, 8}));
  EXPECT_EQ(ReadPng(dir.path() / "attribution.png").dims(), (ImageDims{6, 8}));
}

TEST(Files, MasksLoadBackAsExternalFeatures) {
  TempDir dir;
  const FeatureSet fs = SuperpixelMasks({6, 8}, 2, 3);
  WriteMaskFiles(dir.path() / "masks", fs);
  const FeatureSet back = LoadExternalMasks(dir.path() / "masks", fs.dims);
  ASSERT_EQ(back.num_features(), fs.num_features());
  for (int i = 0; i < fs.num_features(); ++i) EXPECT_EQ(back.masks[i].binary, fs.masks[i].binary);
  const auto index = nlohmann::json::parse(ReadBinaryFile(dir.path() / "masks" / "masks.json"));
  EXPECT_EQ(index["features"].size(), 6u);
  EXPECT_EQ(index["features"][0]["kind"], "superpixel");
}

ExplanationRecord SampleRecord() {
  ExplanationRecord r;
  r.explanation.phi0 = 0.1;
  r.explanation.phi = {0.30000000000000004, -1e-300, 2.5e-17};
  r.explanation.v_full = 0.4;
  r.explanation.sampler = Sampler::kMonteCarlo;
  r.explanation.budget = 2048;
  r.explanation.evaluated = 6;
  r.explanation.seed = 18446744073709551615ull;
  r.feature_config = {"dff", 2, 0.5, 0, 0, "acts.f32", "minmax_before_upsample"};
  r.feature_kinds = {"dff", "dff", "leftover"};
  r.feature_areas = {10, 20, 34};
  r.image_dims = {8, 8};
  r.game_config.baseline = Baseline::Parse("blur:3");
  r.reference_caption = "a \"quoted\" caption\nwith a newline";
  r.question = "what?";
  r.image = "scene.png";
  r.model = "region-oracle";
  r.timings_ms = {{"explain", 12.5}, {"features", 0.25}};
  r.metadata = {{"distance", {{"empty", 0.9}}}};
  return r;
}

TEST(Record, JsonRoundTripIsLossless) {
  const ExplanationRecord r = SampleRecord();
  const ExplanationRecord back =
      ExplanationRecord::FromJson(nlohmann::json::parse(r.ToJson().dump()));
  EXPECT_EQ(back, r);
  ExplanationRecord no_question = r;
  no_question.question.reset();
  no_question.explanation.seed.reset();
  EXPECT_EQ(ExplanationRecord::FromJson(no_question.ToJson()), no_question);
}

TEST(Record, SaveAndLoad) {
  TempDir dir;
  const ExplanationRecord r = SampleRecord();
  r.Save(dir.path() / "record.json");
  EXPECT_EQ(ExplanationRecord::Load(dir.path() / "record.json"), r);
}

TEST(Record, RejectsMalformed) {
  auto j = SampleRecord().ToJson();
  j["format_version"] = 2;
  EXPECT_THROW(ExplanationRecord::FromJson(j), InputError);
  j = SampleRecord().ToJson();
  j.erase("explanation");
  EXPECT_THROW(ExplanationRecord::FromJson(j), InputError);
  j = SampleRecord().ToJson();
  j["num_features"] = 4;
  EXPECT_THROW(ExplanationRecord::FromJson(j), InputError);
}

}  // namespace
}  // namespace semshap
