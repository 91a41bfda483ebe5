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

// The sentence game: a coalition keeps the pixels of its masks, the rest is
// replaced by a baseline, and the value is the cosine similarity between the
// caption of that image and the reference caption.

#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "json.hpp"

#include "semshap/embedding.hpp"
#include "semshap/error.hpp"
#include "semshap/features.hpp"
#include "semshap/image.hpp"
#include "semshap/model.hpp"
#include "semshap/shapley.hpp"

namespace semshap {

enum class BaselineKind { kBlack, kMean, kBlur };

struct Baseline {
  BaselineKind kind = BaselineKind::kBlack;
  int radius = 0;  // blur only

  std::string ToString() const {
    switch (kind) {
      case BaselineKind::kBlack:
        return "black";
      case BaselineKind::kMean:
        return "mean";
      case BaselineKind::kBlur:
        return "blur:" + std::to_string(radius);
    }
    return "black";
  }

  // black | mean | blur:R
  static Baseline Parse(std::string_view text) {
    if (text == "black") return {BaselineKind::kBlack, 0};
    if (text == "mean" || text == "mean_color") return {BaselineKind::kMean, 0};
    if (text.substr(0, 5) == "blur:") {
      const std::string_view digits = text.substr(5);
      int radius = 0;
      const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), radius);
      if (ec != std::errc() || end != digits.data() + digits.size() || radius < 1) {
        throw ConfigError("blur radius must be an integer >= 1, got '" + std::string(digits) +
                          "'");
      }
      return {BaselineKind::kBlur, radius};
    }
    throw ConfigError("unknown baseline '" + std::string(text) +
                      "' (expected black, mean or blur:R)");
  }

  friend bool operator==(const Baseline&, const Baseline&) = default;
};

struct GameConfig {
  Baseline baseline;
  std::string outcome = "similarity";
  std::string embedder = "hashed_ngram_512";

  nlohmann::json ToJson() const {
    return {{"baseline", baseline.ToString()}, {"outcome", outcome}, {"embedder", embedder}};
  }

  static GameConfig FromJson(const nlohmann::json& j) {
    GameConfig config;
    config.baseline = Baseline::Parse(j.at("baseline").get<std::string>());
    config.outcome = j.at("outcome").get<std::string>();
    config.embedder = j.at("embedder").get<std::string>();
    return config;
  }

  friend bool operator==(const GameConfig&, const GameConfig&) = default;
};

// Separable box blur with clamped borders.
inline Image BoxBlur(const Image& image, int radius) {
  const int h = image.height();
  const int w = image.width();
  const int n = Image::kChannels;
  std::vector<double> horizontal(static_cast<std::size_t>(h) * w * n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < n; ++c) {
        double sum = 0.0;
        for (int d = -radius; d <= radius; ++d) {
          sum += image.at(y, std::clamp(x + d, 0, w - 1), c);
        }
        horizontal[(static_cast<std::size_t>(y) * w + x) * n + c] = sum / (2 * radius + 1);
      }
    }
  }
  Image out(image.dims());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < n; ++c) {
        double sum = 0.0;
        for (int d = -radius; d <= radius; ++d) {
          sum += horizontal[(static_cast<std::size_t>(std::clamp(y + d, 0, h - 1)) * w + x) * n + c];
        }
        out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(sum / (2 * radius + 1)));
      }
    }
  }
  return out;
}

// The image a fully removed coalition leaves behind.
inline Image BaselineImage(const Image& image, const Baseline& baseline) {
  switch (baseline.kind) {
    case BaselineKind::kBlack:
      return Image(image.dims(), 0);
    case BaselineKind::kMean: {
      std::array<double, Image::kChannels> sum{};
      for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
          for (int c = 0; c < Image::kChannels; ++c) sum[c] += image.at(y, x, c);
        }
      }
      Image out(image.dims());
      const double n = static_cast<double>(image.dims().pixels());
      for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
          for (int c = 0; c < Image::kChannels; ++c) {
            out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(sum[c] / n));
          }
        }
      }
      return out;
    }
    case BaselineKind::kBlur:
      return BoxBlur(image, baseline.radius);
  }
  return Image(image.dims(), 0);
}

// Keeps source pixels under the union of the coalition's masks and takes
// every other pixel from `fill`.
inline Image ApplyCoalition(const Image& image, const FeatureSet& fs, const Coalition& coalition,
                            const Image& fill) {
  if (image.dims() != fs.dims || fill.dims() != image.dims()) {
    throw InputError("image " + image.dims().ToString() + " does not match feature set " +
                     fs.dims.ToString());
  }
  if (coalition.num_features() != fs.num_features()) {
    throw InputError("coalition over " + std::to_string(coalition.num_features()) +
                     " features applied to " + std::to_string(fs.num_features()) + " masks");
  }
  Image out = fill;
  const auto members = coalition.Members();
  const std::size_t pixels = static_cast<std::size_t>(image.dims().pixels());
  for (std::size_t p = 0; p < pixels; ++p) {
    bool keep = false;
    for (int i : members) {
      if (fs.masks[i].binary[p]) {
        keep = true;
        break;
      }
    }
    if (!keep) continue;
    for (int c = 0; c < Image::kChannels; ++c) {
      out.pixels()[p * Image::kChannels + c] = image.pixels()[p * Image::kChannels + c];
    }
  }
  return out;
}

inline Image ApplyCoalition(const Image& image, const FeatureSet& fs, const Coalition& coalition,
                            const Baseline& baseline) {
  return ApplyCoalition(image, fs, coalition, BaselineImage(image, baseline));
}

// v(S) = similarity(e_ref, embed(caption(perturb(S)))). The reference caption
// and embedding are computed once; values are memoized per coalition.
class SentenceGame {
 public:
  SentenceGame(ModelHandle& model, Image image, FeatureSet features, GameConfig config,
               std::shared_ptr<const Embedder> embedder,
               std::optional<std::string> question = std::nullopt)
      : model_(model),
        image_(std::move(image)),
        features_(std::move(features)),
        config_(std::move(config)),
        embedder_(std::move(embedder)),
        question_(std::move(question)) {
    if (!embedder_) throw ConfigError("sentence game needs an embedder");
    if (config_.outcome != "similarity") {
      throw ConfigError("unsupported game outcome '" + config_.outcome + "'");
    }
    if (image_.dims() != features_.dims) {
      throw InputError("image " + image_.dims().ToString() + " does not match feature set " +
                       features_.dims.ToString());
    }
    ValidateFeatureSet(features_);
    fill_ = BaselineImage(image_, config_.baseline);
    reference_caption_ = model_.Caption(image_, question_);
    model_calls_ = 1;
    reference_ = embedder_->Embed(reference_caption_);
  }

  double Value(const Coalition& coalition) {
    {
      std::lock_guard lock(mutex_);
      if (auto it = cache_.find(coalition.bits()); it != cache_.end()) return it->second;
    }
    const Image perturbed = ApplyCoalition(image_, features_, coalition, fill_);
    const std::string caption = model_.Caption(perturbed, question_);
    ++model_calls_;
    const double value = Similarity(reference_, embedder_->Embed(caption));
    std::lock_guard lock(mutex_);
    cache_.emplace(coalition.bits(), value);
    return value;
  }

  Game AsGame() {
    return [this](const Coalition& c) { return Value(c); };
  }

  // Caption of the perturbed image, for inspection.
  std::string CaptionFor(const Coalition& coalition) {
    return model_.Caption(ApplyCoalition(image_, features_, coalition, fill_), question_);
  }

  int num_features() const { return features_.num_features(); }
  const std::string& reference_caption() const { return reference_caption_; }
  const CaptionEmbedding& reference_embedding() const { return reference_; }
  const FeatureSet& features() const { return features_; }
  const GameConfig& config() const { return config_; }
  std::int64_t model_calls() const { return model_calls_; }

 private:
  ModelHandle& model_;
  Image image_;
  FeatureSet features_;
  GameConfig config_;
  std::shared_ptr<const Embedder> embedder_;
  std::optional<std::string> question_;
  Image fill_;
  std::string reference_caption_;
  CaptionEmbedding reference_;
  std::atomic<std::int64_t> model_calls_{0};
  std::mutex mutex_;
  std::unordered_map<std::uint32_t, double> cache_;
};

}  // namespace semshap
