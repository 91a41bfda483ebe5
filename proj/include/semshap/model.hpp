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

// Image-to-text models seen by the explainer: the abstract handle, a
// ground-truth region oracle used for testing, and the server side of the
// wire protocol (so any handle can be exposed as an external process).

#include <algorithm>
#include <filesystem>
#include <istream>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "semshap/embedding.hpp"
#include "semshap/error.hpp"
#include "semshap/features.hpp"
#include "semshap/image.hpp"
#include "semshap/protocol.hpp"

namespace semshap {

enum class Capability { kCaption, kActivations, kEmbed };
enum class Backbone { kCnn, kVit, kOther };

inline std::string_view CapabilityName(Capability c) {
  switch (c) {
    case Capability::kCaption:
      return "caption";
    case Capability::kActivations:
      return "activations";
    case Capability::kEmbed:
      return "embed";
  }
  return "caption";
}

inline std::optional<Capability> ParseCapability(std::string_view name) {
  if (name == "caption") return Capability::kCaption;
  if (name == "activations") return Capability::kActivations;
  if (name == "embed") return Capability::kEmbed;
  return std::nullopt;
}

inline std::string_view BackboneName(Backbone b) {
  switch (b) {
    case Backbone::kCnn:
      return "cnn";
    case Backbone::kVit:
      return "vit";
    case Backbone::kOther:
      return "other";
  }
  return "other";
}

inline Backbone ParseBackbone(std::string_view name) {
  if (name == "cnn") return Backbone::kCnn;
  if (name == "vit") return Backbone::kVit;
  return Backbone::kOther;
}

// A captioning model. Calls may come from several threads at once.
class ModelHandle {
 public:
  virtual ~ModelHandle() = default;

  virtual std::string Caption(const Image& image,
                              const std::optional<std::string>& question = std::nullopt) = 0;

  virtual ActivationTensor Activations(const Image& /*image*/) {
    throw CapabilityError(description() + " does not provide activations");
  }

  virtual std::vector<float> Embed(std::string_view /*text*/) {
    throw CapabilityError(description() + " does not provide embeddings");
  }

  virtual std::set<Capability> capabilities() const = 0;
  virtual Backbone backbone() const = 0;
  virtual std::string description() const = 0;

  bool Has(Capability c) const { return capabilities().count(c) > 0; }
};

// Sentence embedder served by the model process.
class ModelEmbedder final : public Embedder {
 public:
  explicit ModelEmbedder(ModelHandle& model) : model_(model) {
    if (!model.Has(Capability::kEmbed)) {
      throw CapabilityError(model.description() + " does not provide embeddings");
    }
    dim_ = static_cast<int>(model_.Embed("a").size());
    if (dim_ < 1) throw ProtocolError("model returned an empty embedding");
  }

  CaptionEmbedding Embed(std::string_view text) const override {
    if (Tokenize(text).empty()) return CaptionEmbedding::FromVector(std::vector<double>(dim_, 0.0));
    const std::vector<float> raw = model_.Embed(text);
    if (static_cast<int>(raw.size()) != dim_) {
      throw ProtocolError("embedding dimension changed from " + std::to_string(dim_) + " to " +
                          std::to_string(raw.size()));
    }
    return CaptionEmbedding::FromVector(std::vector<double>(raw.begin(), raw.end()));
  }

  int dim() const override { return dim_; }
  std::string name() const override { return "model:" + model_.description(); }

 private:
  ModelHandle& model_;
  int dim_ = 0;
};

struct OracleRegion {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
  std::string token;
  // Mean brightness in [0,1] at or above which the token is emitted.
  double threshold = 0.5;

  bool Covers(int px, int py) const {
    return px >= x && px < x + width && py >= y && py < y + height;
  }

  friend bool operator==(const OracleRegion&, const OracleRegion&) = default;
};

struct RegionOracleConfig {
  std::vector<OracleRegion> regions;
  std::string empty_caption = "nothing";
  Backbone backbone = Backbone::kCnn;
  // Pixels per activation cell (cnn) or per patch (vit).
  int cell_size = 8;
  int channels_per_region = 4;

  void Validate() const {
    if (regions.empty()) throw InputError("oracle config has no regions");
    if (cell_size < 1) throw InputError("oracle cell_size must be >= 1");
    if (channels_per_region < 1) throw InputError("oracle channels_per_region must be >= 1");
    std::set<std::string> tokens;
    for (const auto& r : regions) {
      if (r.width <= 0 || r.height <= 0 || r.x < 0 || r.y < 0) {
        throw InputError("oracle region '" + r.token + "' has an invalid rectangle");
      }
      if (r.threshold < 0.0 || r.threshold > 1.0) {
        throw InputError("oracle region '" + r.token + "' threshold outside [0,1]");
      }
      if (r.token.empty() || !tokens.insert(r.token).second) {
        throw InputError("oracle tokens must be non-empty and distinct ('" + r.token + "')");
      }
    }
  }

  void ValidateFor(ImageDims dims) const {
    Validate();
    for (const auto& r : regions) {
      if (r.x + r.width > dims.width || r.y + r.height > dims.height) {
        throw InputError("oracle region '" + r.token + "' extends beyond image " +
                         dims.ToString());
      }
    }
  }

  nlohmann::json ToJson() const {
    nlohmann::json regions_json = nlohmann::json::array();
    for (const auto& r : regions) {
      regions_json.push_back({{"rect", {r.x, r.y, r.width, r.height}},
                              {"token", r.token},
                              {"threshold", r.threshold}});
    }
    return {{"regions", regions_json},
            {"empty_caption", empty_caption},
            {"backbone", BackboneName(backbone)},
            {"cell_size", cell_size},
            {"channels_per_region", channels_per_region}};
  }

  static RegionOracleConfig FromJson(const nlohmann::json& j) {
    try {
      RegionOracleConfig config;
      for (const auto& r : j.at("regions")) {
        const auto rect = r.at("rect").get<std::vector<int>>();
        if (rect.size() != 4) throw InputError("oracle rect must be [x, y, width, height]");
        config.regions.push_back({rect[0], rect[1], rect[2], rect[3],
                                  r.at("token").get<std::string>(),
                                  r.value("threshold", 0.5)});
      }
      config.empty_caption = j.value("empty_caption", config.empty_caption);
      config.backbone = ParseBackbone(j.value("backbone", std::string("cnn")));
      config.cell_size = j.value("cell_size", config.cell_size);
      config.channels_per_region = j.value("channels_per_region", config.channels_per_region);
      config.Validate();
      return config;
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("malformed oracle config: ") + e.what());
    }
  }

  static RegionOracleConfig Load(const std::filesystem::path& path) {
    try {
      return FromJson(nlohmann::json::parse(ReadBinaryFile(path)));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path.string() + ": " + e.what());
    }
  }
};

// Ground-truth captioner: emits each region's token (in declaration order)
// when the region's mean brightness reaches its threshold. Its activations
// are per-region coverage maps, so DFF can recover the regions.
class RegionOracleModel final : public ModelHandle {
 public:
  explicit RegionOracleModel(RegionOracleConfig config) : config_(std::move(config)) {
    config_.Validate();
  }

  const RegionOracleConfig& config() const { return config_; }

  static double MeanBrightness(const Image& image, const OracleRegion& r) {
    double total = 0.0;
    for (int y = r.y; y < r.y + r.height; ++y) {
      for (int x = r.x; x < r.x + r.width; ++x) {
        total += image.at(y, x, 0) + image.at(y, x, 1) + image.at(y, x, 2);
      }
    }
    return total / (3.0 * 255.0 * r.width * r.height);
  }

  std::string Caption(const Image& image,
                      const std::optional<std::string>& /*question*/ = std::nullopt) override {
    config_.ValidateFor(image.dims());
    std::string caption;
    for (const auto& region : config_.regions) {
      if (MeanBrightness(image, region) >= region.threshold) {
        if (!caption.empty()) caption += " ";
        caption += region.token;
      }
    }
    return caption.empty() ? config_.empty_caption : caption;
  }

  // Fraction of the cell [y0,y1) x [x0,x1) inside the region.
  static double Coverage(const OracleRegion& r, int y0, int y1, int x0, int x1) {
    const int oy = std::max(0, std::min(y1, r.y + r.height) - std::max(y0, r.y));
    const int ox = std::max(0, std::min(x1, r.x + r.width) - std::max(x0, r.x));
    return static_cast<double>(oy) * ox / (static_cast<double>(y1 - y0) * (x1 - x0));
  }

  ImageDims ActivationGrid(ImageDims image_dims) const {
    return {std::max(1, image_dims.height / config_.cell_size),
            std::max(1, image_dims.width / config_.cell_size)};
  }

  ActivationTensor Activations(const Image& image) override {
    config_.ValidateFor(image.dims());
    const ImageDims grid = ActivationGrid(image.dims());
    const int per = config_.channels_per_region;
    const int channels = static_cast<int>(config_.regions.size()) * per;
    const bool vit = config_.backbone == Backbone::kVit;

    std::vector<float> data;
    if (vit) {
      // Prefix token first; patch values shifted negative like raw ViT features.
      data.assign(static_cast<std::size_t>(channels), 1.0f);
    }
    for (int r = 0; r < grid.height; ++r) {
      const auto [y0, y1] = CellBounds(image.height(), grid.height, r);
      for (int c = 0; c < grid.width; ++c) {
        const auto [x0, x1] = CellBounds(image.width(), grid.width, c);
        for (const auto& region : config_.regions) {
          const double coverage = Coverage(region, y0, y1, x0, x1);
          for (int j = 0; j < per; ++j) {
            const double value = coverage * (1.0 + 0.25 * j);
            data.push_back(static_cast<float>(vit ? value - 0.25 : value));
          }
        }
      }
    }
    if (vit) {
      return ActivationTensor::Patches(grid.height * grid.width + 1, channels, grid.height,
                                       grid.width, true, std::move(data));
    }
    return ActivationTensor::Spatial(grid.height, grid.width, channels, std::move(data));
  }

  std::set<Capability> capabilities() const override {
    return {Capability::kCaption, Capability::kActivations};
  }
  Backbone backbone() const override { return config_.backbone; }
  std::string description() const override { return "region-oracle"; }

 private:
  RegionOracleConfig config_;
};

// Image whose oracle regions are white on a dark textured background, so
// every region fires.
inline Image PaintOracleScene(const RegionOracleConfig& config, ImageDims dims) {
  config.ValidateFor(dims);
  Image image(dims);
  for (int y = 0; y < dims.height; ++y) {
    for (int x = 0; x < dims.width; ++x) {
      const auto shade = static_cast<std::uint8_t>(20 + (x * 7 + y * 3) % 40);
      image.at(y, x, 0) = shade;
      image.at(y, x, 1) = static_cast<std::uint8_t>(shade / 2);
      image.at(y, x, 2) = static_cast<std::uint8_t>(60 - shade / 2);
    }
  }
  for (const auto& r : config.regions) {
    for (int y = r.y; y < r.y + r.height; ++y) {
      for (int x = r.x; x < r.x + r.width; ++x) {
        for (int ch = 0; ch < Image::kChannels; ++ch) image.at(y, x, ch) = 255;
      }
    }
  }
  return image;
}

// Server side of the protocol: answers one request from `model`.
inline protocol::Response HandleRequest(ModelHandle& model, const protocol::Request& request) {
  using protocol::Response;
  try {
    Response response;
    response.id = request.id;
    if (request.op == protocol::op::kHello) {
      response.protocol_version = protocol::kProtocolVersion;
      std::vector<std::string> caps;
      for (Capability c : model.capabilities()) caps.emplace_back(CapabilityName(c));
      response.capabilities = caps;
      response.backbone = std::string(BackboneName(model.backbone()));
    } else if (request.op == protocol::op::kCaption) {
      if (!request.image_png_b64) {
        return Response::Failure(request.id, "caption needs image_png_b64");
      }
      response.caption = model.Caption(DecodePng(Base64Decode(*request.image_png_b64)),
                                       request.question);
    } else if (request.op == protocol::op::kActivations) {
      if (!request.image_png_b64) {
        return Response::Failure(request.id, "activations needs image_png_b64");
      }
      const ActivationTensor t =
          model.Activations(DecodePng(Base64Decode(*request.image_png_b64)));
      response.shape = t.shape;
      response.layout = std::string(LayoutName(t.layout));
      response.dtype = "f32";
      if (t.layout == ActivationLayout::kPatches) {
        response.grid = std::vector<int>{t.grid_rows, t.grid_cols};
        response.prefix_token = t.prefix_token;
      }
      response.data_b64 = Base64Encode(PackFloat32(t.data));
    } else if (request.op == protocol::op::kEmbed) {
      if (!request.text) return Response::Failure(request.id, "embed needs text");
      const std::vector<float> values = model.Embed(*request.text);
      response.dim = static_cast<int>(values.size());
      response.data_b64 = Base64Encode(PackFloat32(values));
    } else {
      return Response::Failure(request.id, "unknown op '" + request.op + "'");
    }
    return response;
  } catch (const std::exception& e) {
    return Response::Failure(request.id, e.what());
  }
}

// Request loop over line streams, one response per request, in order.
inline void ServeLines(ModelHandle& model, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    protocol::Response response;
    try {
      response = HandleRequest(model, protocol::DecodeRequest(line));
    } catch (const std::exception& e) {
      response = protocol::Response::Failure(-1, e.what());
    }
    out << protocol::EncodeResponse(response) << std::flush;
  }
}

}  // namespace semshap
