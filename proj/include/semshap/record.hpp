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

#pragma once

// record.json: everything needed to interpret (or reproduce) one explanation.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "semshap/error.hpp"
#include "semshap/features.hpp"
#include "semshap/game.hpp"
#include "semshap/image.hpp"
#include "semshap/shapley.hpp"

namespace semshap {

inline constexpr int kRecordFormatVersion = 1;

inline nlohmann::json ExplanationToJson(const Explanation& e) {
  nlohmann::json j = {{"phi0", e.phi0},
                      {"phi", e.phi},
                      {"v_full", e.v_full},
                      {"sampler", SamplerName(e.sampler)},
                      {"budget", e.budget},
                      {"evaluated", e.evaluated},
                      {"seed", nullptr},
                      {"efficiency_residual", e.EfficiencyResidual()}};
  if (e.seed) j["seed"] = *e.seed;
  return j;
}

inline Explanation ExplanationFromJson(const nlohmann::json& j) {
  Explanation e;
  e.phi0 = j.at("phi0").get<double>();
  e.phi = j.at("phi").get<std::vector<double>>();
  e.v_full = j.at("v_full").get<double>();
  e.sampler = ParseSampler(j.at("sampler").get<std::string>());
  e.budget = j.at("budget").get<std::int64_t>();
  e.evaluated = j.value("evaluated", std::int64_t{0});
  if (j.contains("seed") && !j["seed"].is_null()) e.seed = j["seed"].get<std::uint64_t>();
  return e;
}

inline nlohmann::json FeatureConfigToJson(const FeatureConfig& c) {
  return {{"method", c.method},
          {"k", c.k},
          {"theta", c.theta},
          {"grid", {c.grid_rows, c.grid_cols}},
          {"source", c.source},
          {"heatmap_normalization", c.heatmap_normalization}};
}

inline FeatureConfig FeatureConfigFromJson(const nlohmann::json& j) {
  FeatureConfig c;
  c.method = j.at("method").get<std::string>();
  c.k = j.at("k").get<int>();
  c.theta = j.at("theta").get<double>();
  const auto grid = j.at("grid").get<std::vector<int>>();
  if (grid.size() != 2) throw InputError("feature_config.grid must have two entries");
  c.grid_rows = grid[0];
  c.grid_cols = grid[1];
  c.source = j.at("source").get<std::string>();
  c.heatmap_normalization = j.at("heatmap_normalization").get<std::string>();
  return c;
}

struct ExplanationRecord {
  Explanation explanation;
  FeatureConfig feature_config;
  // Per feature, in explanation order.
  std::vector<std::string> feature_kinds;
  std::vector<std::int64_t> feature_areas;
  ImageDims image_dims;
  GameConfig game_config;
  std::string reference_caption;
  std::optional<std::string> question;
  std::string image;
  std::string model;
  std::map<std::string, double> timings_ms;
  // Free-form audit data (distance, overlap, ...).
  nlohmann::json metadata = nlohmann::json::object();

  int num_features() const { return explanation.num_features(); }

  nlohmann::json ToJson() const {
    return {{"format_version", kRecordFormatVersion},
            {"explanation", ExplanationToJson(explanation)},
            {"num_features", num_features()},
            {"feature_config", FeatureConfigToJson(feature_config)},
            {"feature_kinds", feature_kinds},
            {"feature_areas", feature_areas},
            {"image_dims", {image_dims.height, image_dims.width}},
            {"game_config", game_config.ToJson()},
            {"reference_caption", reference_caption},
            {"question", question ? nlohmann::json(*question) : nlohmann::json(nullptr)},
            {"image", image},
            {"model", model},
            {"timings_ms", timings_ms},
            {"metadata", metadata}};
  }

  static ExplanationRecord FromJson(const nlohmann::json& j) {
    try {
      const int version = j.at("format_version").get<int>();
      if (version != kRecordFormatVersion) {
        throw InputError("unsupported record format version " + std::to_string(version));
      }
      ExplanationRecord r;
      r.explanation = ExplanationFromJson(j.at("explanation"));
      r.feature_config = FeatureConfigFromJson(j.at("feature_config"));
      r.feature_kinds = j.at("feature_kinds").get<std::vector<std::string>>();
      r.feature_areas = j.at("feature_areas").get<std::vector<std::int64_t>>();
      const auto dims = j.at("image_dims").get<std::vector<int>>();
      if (dims.size() != 2) throw InputError("image_dims must be [h, w]");
      r.image_dims = {dims[0], dims[1]};
      r.game_config = GameConfig::FromJson(j.at("game_config"));
      r.reference_caption = j.at("reference_caption").get<std::string>();
      if (!j.at("question").is_null()) r.question = j["question"].get<std::string>();
      r.image = j.at("image").get<std::string>();
      r.model = j.at("model").get<std::string>();
      r.timings_ms = j.at("timings_ms").get<std::map<std::string, double>>();
      r.metadata = j.at("metadata");
      if (j.at("num_features").get<int>() != r.num_features()) {
        throw InputError("num_features disagrees with the explanation");
      }
      return r;
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("malformed explanation record: ") + e.what());
    }
  }

  static ExplanationRecord Load(const std::filesystem::path& path) {
    try {
      return FromJson(nlohmann::json::parse(ReadBinaryFile(path)));
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(path.string() + ": " + e.what());
    }
  }

  void Save(const std::filesystem::path& path) const {
    const std::string text = ToJson().dump(2) + "\n";
    WriteBinaryFile(path, std::vector<std::uint8_t>(text.begin(), text.end()));
  }

  friend bool operator==(const ExplanationRecord&, const ExplanationRecord&) = default;
};

}  // namespace semshap
