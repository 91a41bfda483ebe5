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

// End to end: image -> features -> sentence game -> explanation -> record and
// rendered outputs. Shared by the command-line tool and the tests.

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <unistd.h>

#include "json.hpp"

#include "semshap/analysis.hpp"
#include "semshap/embedding.hpp"
#include "semshap/error.hpp"
#include "semshap/external_model.hpp"
#include "semshap/features.hpp"
#include "semshap/game.hpp"
#include "semshap/image.hpp"
#include "semshap/model.hpp"
#include "semshap/record.hpp"
#include "semshap/render.hpp"
#include "semshap/shapley.hpp"

namespace semshap {

inline constexpr std::string_view kOracleModelPrefix = "oracle:";
inline constexpr std::string_view kMasksFeaturePrefix = "masks:";

struct FeatureOptions {
  // dff | vit | superpixel | masks:<path>
  std::string method = "dff";
  int k = 10;
  double theta = 0.5;
  double band_threshold = 0.5;
  int grid_rows = 4;
  int grid_cols = 4;
  // Raw activation file used instead of asking the model.
  std::optional<std::filesystem::path> activations;
  // none | lowest | random
  std::string disjoint = "none";
  std::uint64_t disjoint_seed = 0;
  NmfOptions nmf;
};

struct PipelineOptions {
  FeatureOptions features;
  ExplainOptions explain;
  GameConfig game;
  // auto | hashed | model
  std::string embedder = "auto";
  std::optional<std::string> question;
  RenderMode render = RenderMode::kIntensity;
};

// "oracle:<config.json>" runs the built-in region oracle; anything else is a
// command line for an external model process.
inline std::unique_ptr<ModelHandle> OpenModel(
    const std::string& spec, BridgeOptions bridge = BridgeOptions::FromEnvironment()) {
  if (spec.rfind(kOracleModelPrefix, 0) == 0) {
    return std::make_unique<RegionOracleModel>(
        RegionOracleConfig::Load(spec.substr(kOracleModelPrefix.size())));
  }
  return std::make_unique<ExternalProcessModel>(SplitCommandLine(spec), bridge);
}

inline FeatureSet BuildFeatures(ModelHandle& model, const Image& image,
                                const FeatureOptions& options) {
  FeatureSet fs;
  const std::string& method = options.method;
  if (method == "superpixel") {
    fs = SuperpixelMasks(image.dims(), options.grid_rows, options.grid_cols);
  } else if (method.rfind(kMasksFeaturePrefix, 0) == 0) {
    fs = LoadExternalMasks(method.substr(kMasksFeaturePrefix.size()), image.dims());
  } else if (method == "dff" || method == "vit") {
    const ActivationTensor act =
        options.activations ? ReadRawActivations(*options.activations) : model.Activations(image);
    if (act.layout == ActivationLayout::kPatches) {
      fs = VitDffMasks(act, options.k, image.dims(), options.band_threshold, options.nmf);
    } else if (method == "vit") {
      throw ConfigError("--features vit needs patch activations, got a spatial tensor");
    } else {
      fs = DffMasks(act, options.k, image.dims(), DffOptions{options.theta, options.nmf});
    }
    if (options.activations) fs.config.source = options.activations->string();
  } else if (method == "frcnn") {
    throw ConfigError(
        "object-detector features are not built in; export the detector's masks and use "
        "--features masks:<path>");
  } else {
    throw ConfigError("unknown feature method '" + method + "'");
  }
  if (options.disjoint == "lowest") {
    fs = EnforceDisjoint(std::move(fs), DisjointPolicy::kLowestIndex);
  } else if (options.disjoint == "random") {
    fs = EnforceDisjoint(std::move(fs), DisjointPolicy::kSeededRandom, options.disjoint_seed);
  } else if (options.disjoint != "none") {
    throw ConfigError("unknown disjoint policy '" + options.disjoint + "'");
  }
  ValidateFeatureSet(fs);
  return fs;
}

inline std::shared_ptr<const Embedder> MakeEmbedder(ModelHandle& model, const std::string& choice) {
  if (choice == "hashed") return std::make_shared<HashedNgramEmbedder>();
  if (choice == "model") return std::make_shared<ModelEmbedder>(model);
  if (choice == "auto") {
    if (model.Has(Capability::kEmbed)) return std::make_shared<ModelEmbedder>(model);
    return std::make_shared<HashedNgramEmbedder>();
  }
  throw ConfigError("unknown embedder '" + choice + "' (expected auto, hashed or model)");
}

struct ExplainResult {
  ExplanationRecord record;
  FeatureSet features;
  AttributionMap map;
};

namespace internal {

class Stopwatch {
 public:
  double Lap() {
    const auto now = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
    return ms;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

inline nlohmann::json AuditMetadata(const Explanation& e, const FeatureSet& fs,
                                    const SentenceGame& game) {
  nlohmann::json meta;
  meta["outcome"] = "similarity";
  meta["distance"] = {{"definition", "1 - similarity"},
                      {"empty", 1.0 - e.phi0},
                      {"full", 1.0 - e.v_full}};
  meta["model_calls"] = game.model_calls();
  meta["embedder_dim"] = game.reference_embedding().dim();
  meta["has_leftover"] = fs.has_leftover();
  const OverlapStats overlap = ComputeOverlapStats(fs);
  meta["overlap"] = {{"mean_overlap_pct", overlap.mean_overlap_pct},
                     {"max_overlap_pct", overlap.max_overlap_pct}};

  nlohmann::json normalized;
  normalized["note"] =
      "analysis artifact: phi_i / r_i, r_i = |mask_i| / (h*w); efficiency not preserved";
  try {
    const NormalizedAttributions n = NormalizeAttributions(e, fs);
    normalized["phi"] = n.explanation.phi;
    normalized["coverage"] = n.coverage;
    normalized["rbo_vs_raw"] = CompareRankings(e.phi, n.explanation.phi).ToJson();
  } catch (const DomainError& err) {
    normalized["phi"] = nullptr;
    normalized["error"] = err.what();
  }
  meta["size_normalized"] = normalized;
  return meta;
}

}  // namespace internal

inline ExplainResult ExplainImage(ModelHandle& model, const Image& image,
                                  const PipelineOptions& options) {
  internal::Stopwatch clock;
  ExplainResult result;
  result.features = BuildFeatures(model, image, options.features);
  const double features_ms = clock.Lap();

  auto embedder = MakeEmbedder(model, options.embedder);
  GameConfig game_config = options.game;
  game_config.embedder = embedder->name();
  SentenceGame game(model, image, result.features, game_config, embedder, options.question);
  const double reference_ms = clock.Lap();

  const Explanation e = Explain(game.AsGame(), result.features.num_features(), options.explain);
  const double explain_ms = clock.Lap();

  result.map = RenderAttributionMap(e, result.features, options.render);
  const double render_ms = clock.Lap();

  ExplanationRecord& r = result.record;
  r.explanation = e;
  r.feature_config = result.features.config;
  for (const auto& mask : result.features.masks) {
    r.feature_kinds.emplace_back(FeatureKindName(mask.kind));
    r.feature_areas.push_back(mask.Area());
  }
  r.image_dims = image.dims();
  r.game_config = game_config;
  r.reference_caption = game.reference_caption();
  r.question = options.question;
  r.model = model.description();
  r.timings_ms = {{"features", features_ms},
                  {"reference", reference_ms},
                  {"explain", explain_ms},
                  {"render", render_ms}};
  r.metadata = internal::AuditMetadata(e, result.features, game);
  r.metadata["render_mode"] = RenderModeName(options.render);
  return result;
}

// Writes record.json, attribution.{f32,json,png} and masks/ into `out`. Files
// are staged in a sibling directory and moved into place at the end, so a
// failure leaves no partial output.
inline void WriteExplainOutputs(const std::filesystem::path& out, const ExplainResult& result) {
  namespace fs = std::filesystem;
  if (fs::exists(out) && !(fs::is_directory(out) && fs::is_empty(out))) {
    throw InputError("output directory " + out.string() + " already exists and is not empty");
  }
  const fs::path parent = out.has_parent_path() ? out.parent_path() : fs::path(".");
  fs::create_directories(parent);
  const fs::path staging =
      parent / ("." + out.filename().string() + ".staging-" + std::to_string(::getpid()));
  fs::remove_all(staging);
  try {
    fs::create_directories(staging);
    result.record.Save(staging / "record.json");
    WriteAttributionFiles(staging, result.map);
    WriteMaskFiles(staging / "masks", result.features);
    if (fs::exists(out)) fs::remove(out);
    fs::rename(staging, out);
  } catch (const fs::filesystem_error& e) {
    fs::remove_all(staging);
    throw InputError(std::string("cannot write outputs: ") + e.what());
  } catch (...) {
    std::error_code ignored;
    fs::remove_all(staging, ignored);
    throw;
  }
}

}  // namespace semshap
