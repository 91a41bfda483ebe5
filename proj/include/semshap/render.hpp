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

// Attribution maps: per-pixel sums of phi_i times each mask's intensity, plus
// the files written next to an explanation (raw float map, colour PNG, masks).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

#include "semshap/error.hpp"
#include "semshap/features.hpp"
#include "semshap/image.hpp"
#include "semshap/shapley.hpp"

namespace semshap {

enum class RenderMode { kIntensity, kFlat };

inline std::string_view RenderModeName(RenderMode mode) {
  return mode == RenderMode::kIntensity ? "intensity" : "flat";
}

inline RenderMode ParseRenderMode(std::string_view name) {
  if (name == "intensity") return RenderMode::kIntensity;
  if (name == "flat") return RenderMode::kFlat;
  throw ConfigError("unknown render mode '" + std::string(name) + "'");
}

struct AttributionMap {
  RealMap values;
  RenderMode mode = RenderMode::kIntensity;
};

// intensity: sum_i phi_i * H_i(p), with H_i the heatmap (the binary support
// for masks without one). flat: sum_i phi_i * binary_i(p).
inline AttributionMap RenderAttributionMap(const Explanation& e, const FeatureSet& fs,
                                           RenderMode mode) {
  if (e.num_features() != fs.num_features()) {
    throw InputError("explanation has " + std::to_string(e.num_features()) +
                     " values but the feature set has " + std::to_string(fs.num_features()) +
                     " masks");
  }
  AttributionMap out{RealMap(fs.dims, 0.0), mode};
  const std::size_t pixels = static_cast<std::size_t>(fs.dims.pixels());
  for (int i = 0; i < fs.num_features(); ++i) {
    const FeatureMask& mask = fs.masks[i];
    if (mask.binary.dims() != fs.dims || (mask.heatmap && mask.heatmap->dims() != fs.dims)) {
      throw InputError("mask " + std::to_string(i) + " does not match " + fs.dims.ToString());
    }
    const double phi = e.phi[i];
    for (std::size_t p = 0; p < pixels; ++p) {
      const double h = mode == RenderMode::kIntensity ? mask.Intensity(p)
                                                      : (mask.binary[p] ? 1.0 : 0.0);
      if (h != 0.0) out.values[p] += phi * h;
    }
  }
  return out;
}

inline double MaxAbs(const RealMap& map) {
  double m = 0.0;
  for (double v : map.values()) m = std::max(m, std::abs(v));
  return m;
}

// Positive values shade white to blue, negative white to red, |v| / scale
// giving the depth.
inline Image DivergingPalette(const RealMap& map, double scale) {
  Image out(map.dims(), 255);
  if (!(scale > 0.0)) return out;
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      const double t = std::clamp(map(y, x) / scale, -1.0, 1.0);
      const auto fade = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - std::abs(t))));
      if (t > 0.0) {
        out.at(y, x, 0) = fade;
        out.at(y, x, 1) = fade;
      } else if (t < 0.0) {
        out.at(y, x, 1) = fade;
        out.at(y, x, 2) = fade;
      }
    }
  }
  return out;
}

inline void WriteFloatMap(const std::filesystem::path& raw, const RealMap& map,
                          nlohmann::json extra = nlohmann::json::object()) {
  std::vector<float> values(map.values().begin(), map.values().end());
  WriteBinaryFile(raw, PackFloat32(values));
  extra["shape"] = {map.height(), map.width()};
  extra["dtype"] = "f32";
  extra["order"] = "row_major";
  const std::string text = extra.dump(2) + "\n";
  WriteBinaryFile(SidecarPath(raw), std::vector<std::uint8_t>(text.begin(), text.end()));
}

inline RealMap ReadFloatMap(const std::filesystem::path& raw) {
  const nlohmann::json header = nlohmann::json::parse(ReadBinaryFile(SidecarPath(raw)));
  const auto shape = header.at("shape").get<std::vector<int>>();
  if (shape.size() != 2) throw InputError(raw.string() + ": map shape must be [h, w]");
  const std::vector<float> values = UnpackFloat32(ReadBinaryFile(raw));
  RealMap map(shape[0], shape[1]);
  if (values.size() != map.size()) {
    throw InputError(raw.string() + ": " + std::to_string(values.size()) + " values for shape " +
                     map.dims().ToString());
  }
  std::copy(values.begin(), values.end(), map.values().begin());
  return map;
}

// attribution.f32 (+ .json sidecar holding the colour scale) and
// attribution.png.
inline void WriteAttributionFiles(const std::filesystem::path& dir, const AttributionMap& map) {
  const double scale = MaxAbs(map.values);
  WriteFloatMap(dir / "attribution.f32", map.values,
                {{"render_mode", RenderModeName(map.mode)},
                 {"palette", "diverging: positive blue, negative red, white at zero"},
                 {"color_scale", scale},
                 {"color_normalization", "per_image_max_abs"}});
  WritePng(dir / "attribution.png", DivergingPalette(map.values, scale));
}

// masks/mask_<i>.png (0 or 255), masks/heatmap_<i>.f32 where present, and
// masks/masks.json describing them. The PNGs load back as an external
// feature set.
inline void WriteMaskFiles(const std::filesystem::path& dir, const FeatureSet& fs) {
  std::filesystem::create_directories(dir);
  nlohmann::json features = nlohmann::json::array();
  for (int i = 0; i < fs.num_features(); ++i) {
    const FeatureMask& mask = fs.masks[i];
    Grid<std::uint8_t> gray(fs.dims);
    for (std::size_t p = 0; p < gray.size(); ++p) gray[p] = mask.binary[p] ? 255 : 0;
    const std::string png = "mask_" + std::to_string(i) + ".png";
    WriteGrayPng(dir / png, gray);
    nlohmann::json entry = {{"index", i},
                            {"kind", FeatureKindName(mask.kind)},
                            {"area", mask.Area()},
                            {"mask", png},
                            {"heatmap", nullptr}};
    if (mask.heatmap) {
      const std::string raw = "heatmap_" + std::to_string(i) + ".f32";
      WriteFloatMap(dir / raw, *mask.heatmap);
      entry["heatmap"] = raw;
    }
    features.push_back(entry);
  }
  const nlohmann::json index = {{"dims", {fs.dims.height, fs.dims.width}},
                                {"features", features}};
  const std::string text = index.dump(2) + "\n";
  WriteBinaryFile(dir / "masks.json", std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace semshap
