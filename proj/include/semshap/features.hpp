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

// Feature masks over an image: deep feature factorization of backbone
// activations (spatial or ViT patch layouts), rectangular superpixel grids,
// and masks from an external segmenter, plus the leftover mask and overlap
// bookkeeping.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "semshap/error.hpp"
#include "semshap/image.hpp"
#include "semshap/nmf.hpp"

namespace semshap {

enum class ActivationLayout { kSpatial, kPatches };

// Backbone activations. Spatial tensors are h x w x c; patch tensors are
// p x d token rows laid out on a grid_rows x grid_cols patch grid, optionally
// preceded by one prefix (class) token. Data is row-major.
struct ActivationTensor {
  ActivationLayout layout = ActivationLayout::kSpatial;
  std::vector<int> shape;
  int grid_rows = 0;
  int grid_cols = 0;
  bool prefix_token = false;
  std::vector<float> data;

  static ActivationTensor Spatial(int h, int w, int c, std::vector<float> data) {
    ActivationTensor t;
    t.layout = ActivationLayout::kSpatial;
    t.shape = {h, w, c};
    t.data = std::move(data);
    t.Validate();
    return t;
  }

  static ActivationTensor Patches(int p, int d, int grid_rows, int grid_cols,
                                  bool prefix_token, std::vector<float> data) {
    ActivationTensor t;
    t.layout = ActivationLayout::kPatches;
    t.shape = {p, d};
    t.grid_rows = grid_rows;
    t.grid_cols = grid_cols;
    t.prefix_token = prefix_token;
    t.data = std::move(data);
    t.Validate();
    return t;
  }

  std::int64_t ElementCount() const {
    std::int64_t n = 1;
    for (int s : shape) n *= s;
    return n;
  }

  void Validate() const {
    const std::size_t rank = layout == ActivationLayout::kSpatial ? 3 : 2;
    if (shape.size() != rank) {
      throw InputError("activation shape has rank " + std::to_string(shape.size()) +
                       ", expected " + std::to_string(rank));
    }
    for (int s : shape) {
      if (s <= 0) throw InputError("activation shape has a non-positive extent");
    }
    if (ElementCount() != static_cast<std::int64_t>(data.size())) {
      throw InputError("activation shape product " + std::to_string(ElementCount()) +
                       " does not match " + std::to_string(data.size()) + " values");
    }
    if (layout == ActivationLayout::kPatches) {
      const int expected = grid_rows * grid_cols + (prefix_token ? 1 : 0);
      if (grid_rows <= 0 || grid_cols <= 0 || shape[0] != expected) {
        throw ConfigError("patch grid " + std::to_string(grid_rows) + "x" +
                          std::to_string(grid_cols) +
                          (prefix_token ? " plus prefix token" : "") + " needs " +
                          std::to_string(expected) + " tokens, tensor has " +
                          std::to_string(shape[0]));
      }
    }
  }

  friend bool operator==(const ActivationTensor&, const ActivationTensor&) = default;
};

inline std::string_view LayoutName(ActivationLayout layout) {
  return layout == ActivationLayout::kSpatial ? "spatial" : "patches";
}

inline ActivationLayout ParseLayout(std::string_view name) {
  if (name == "spatial") return ActivationLayout::kSpatial;
  if (name == "patches") return ActivationLayout::kPatches;
  throw InputError("unknown activation layout '" + std::string(name) + "'");
}

// Sidecar / wire header describing a tensor (everything except the data).
inline nlohmann::json ActivationHeader(const ActivationTensor& t) {
  nlohmann::json j = {{"layout", LayoutName(t.layout)}, {"shape", t.shape}};
  if (t.layout == ActivationLayout::kPatches) {
    j["grid"] = {t.grid_rows, t.grid_cols};
    j["prefix_token"] = t.prefix_token;
  }
  return j;
}

inline ActivationTensor ActivationFromHeader(const nlohmann::json& header,
                                             std::vector<float> data) {
  try {
    ActivationTensor t;
    t.layout = ParseLayout(header.at("layout").get<std::string>());
    t.shape = header.at("shape").get<std::vector<int>>();
    if (t.layout == ActivationLayout::kPatches) {
      const auto grid = header.at("grid").get<std::vector<int>>();
      if (grid.size() != 2) throw InputError("activation grid must have two entries");
      t.grid_rows = grid[0];
      t.grid_cols = grid[1];
      t.prefix_token = header.value("prefix_token", false);
    }
    t.data = std::move(data);
    t.Validate();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed activation header: ") + e.what());
  }
}

// `<stem>.json` next to `<stem>.f32`.
inline std::filesystem::path SidecarPath(const std::filesystem::path& raw) {
  auto sidecar = raw;
  sidecar.replace_extension(".json");
  return sidecar;
}

inline ActivationTensor ReadRawActivations(const std::filesystem::path& raw) {
  const auto sidecar_path = SidecarPath(raw);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(ReadBinaryFile(sidecar_path));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(sidecar_path.string() + ": " + e.what());
  }
  return ActivationFromHeader(header, UnpackFloat32(ReadBinaryFile(raw)));
}

inline void WriteRawActivations(const std::filesystem::path& raw,
                                const ActivationTensor& t) {
  WriteBinaryFile(raw, PackFloat32(t.data));
  const std::string header = ActivationHeader(t).dump(2) + "\n";
  WriteBinaryFile(SidecarPath(raw),
                  {reinterpret_cast<const std::uint8_t*>(header.data()), header.size()});
}

enum class FeatureKind { kDff, kVitBand, kSuperpixel, kExternal, kLeftover };

inline std::string_view FeatureKindName(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kDff:
      return "dff";
    case FeatureKind::kVitBand:
      return "vit_band";
    case FeatureKind::kSuperpixel:
      return "superpixel";
    case FeatureKind::kExternal:
      return "external";
    case FeatureKind::kLeftover:
      return "leftover";
  }
  return "external";
}

struct FeatureMask {
  BinaryMask binary;
  // Only DFF masks carry one; zero outside the binary support.
  std::optional<RealMap> heatmap;
  FeatureKind kind = FeatureKind::kExternal;

  std::int64_t Area() const {
    std::int64_t n = 0;
    for (std::uint8_t b : binary.values()) n += b;
    return n;
  }

  // Heatmap value, or 1 on the binary support for masks without one.
  double Intensity(std::size_t pixel) const {
    if (heatmap) return (*heatmap)[pixel];
    return binary[pixel] ? 1.0 : 0.0;
  }

  friend bool operator==(const FeatureMask&, const FeatureMask&) = default;
};

// How a FeatureSet was produced; carried into explanation records.
struct FeatureConfig {
  std::string method;  // dff | vit | superpixel | external
  int k = 0;
  double theta = 0.0;
  int grid_rows = 0;
  int grid_cols = 0;
  std::string source;
  std::string heatmap_normalization;

  friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

struct FeatureSet {
  std::vector<FeatureMask> masks;
  ImageDims dims;
  FeatureConfig config;

  int num_features() const { return static_cast<int>(masks.size()); }
  bool has_leftover() const {
    return !masks.empty() && masks.back().kind == FeatureKind::kLeftover;
  }
  // Masks excluding the trailing leftover.
  int num_concepts() const { return num_features() - (has_leftover() ? 1 : 0); }

  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;
};

// Complement of the union of `masks`.
inline BinaryMask ComplementOfUnion(std::span<const FeatureMask> masks, ImageDims dims) {
  BinaryMask leftover(dims, 1);
  for (const auto& mask : masks) {
    for (std::size_t p = 0; p < leftover.size(); ++p) {
      if (mask.binary[p]) leftover[p] = 0;
    }
  }
  return leftover;
}

inline bool IsEmpty(const BinaryMask& mask) {
  return std::none_of(mask.values().begin(), mask.values().end(),
                      [](std::uint8_t b) { return b != 0; });
}

// Appends the complement of the current masks as the leftover feature. With
// `keep_if_empty` false an empty complement is omitted.
inline void AppendLeftover(FeatureSet& fs, bool keep_if_empty) {
  BinaryMask leftover = ComplementOfUnion(fs.masks, fs.dims);
  if (!keep_if_empty && IsEmpty(leftover)) return;
  fs.masks.push_back({std::move(leftover), std::nullopt, FeatureKind::kLeftover});
}

// Checks dimensions, full coverage, and that a trailing leftover equals the
// complement of the other masks.
inline void ValidateFeatureSet(const FeatureSet& fs) {
  if (fs.masks.empty()) throw InputError("feature set has no masks");
  for (std::size_t i = 0; i < fs.masks.size(); ++i) {
    const auto& mask = fs.masks[i];
    if (mask.binary.dims() != fs.dims) {
      throw InputError("mask " + std::to_string(i) + " is " +
                       mask.binary.dims().ToString() + ", image is " + fs.dims.ToString());
    }
    if (mask.heatmap && mask.heatmap->dims() != fs.dims) {
      throw InputError("heatmap " + std::to_string(i) + " has wrong dimensions");
    }
    if (mask.kind == FeatureKind::kLeftover && i + 1 != fs.masks.size()) {
      throw InputError("leftover mask must be the last feature");
    }
  }
  const std::span<const FeatureMask> concepts(fs.masks.data(),
                                              static_cast<std::size_t>(fs.num_concepts()));
  const BinaryMask complement = ComplementOfUnion(concepts, fs.dims);
  if (fs.has_leftover()) {
    if (!(fs.masks.back().binary == complement)) {
      throw InputError("leftover mask is not the complement of the feature masks");
    }
  } else if (!IsEmpty(complement)) {
    throw InputError("feature masks do not cover the image and no leftover is present");
  }
}

// Corner-aligned bilinear resampling.
inline RealMap UpsampleBilinear(const RealMap& map, ImageDims target) {
  if (map.height() < 1 || map.width() < 1) {
    throw ConfigError("cannot resample an empty map");
  }
  if (target.height < 1 || target.width < 1) {
    throw ConfigError("resampling target " + target.ToString() + " is empty");
  }
  auto source_coord = [](int i, int out_extent, int in_extent) {
    if (out_extent == 1 || in_extent == 1) return 0.0;
    return static_cast<double>(i) * (in_extent - 1) / (out_extent - 1);
  };
  RealMap out(target);
  for (int y = 0; y < target.height; ++y) {
    const double sy = source_coord(y, target.height, map.height());
    const int y0 = std::min(static_cast<int>(sy), map.height() - 1);
    const int y1 = std::min(y0 + 1, map.height() - 1);
    const double fy = sy - y0;
    for (int x = 0; x < target.width; ++x) {
      const double sx = source_coord(x, target.width, map.width());
      const int x0 = std::min(static_cast<int>(sx), map.width() - 1);
      const int x1 = std::min(x0 + 1, map.width() - 1);
      const double fx = sx - x0;
      const double top = map(y0, x0) * (1.0 - fx) + map(y0, x1) * fx;
      const double bottom = map(y1, x0) * (1.0 - fx) + map(y1, x1) * fx;
      // Clamp away rounding outside the source range.
      double value = top * (1.0 - fy) + bottom * fy;
      const double lo = std::min({map(y0, x0), map(y0, x1), map(y1, x0), map(y1, x1)});
      const double hi = std::max({map(y0, x0), map(y0, x1), map(y1, x0), map(y1, x1)});
      out(y, x) = std::clamp(value, lo, hi);
    }
  }
  return out;
}

// Rescales to [0,1]. A constant positive map becomes all ones, a zero map
// stays zero.
inline void MinMaxNormalize(std::span<double> values) {
  if (values.empty()) return;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (hi > lo) {
    for (double& v : values) v = (v - lo) / (hi - lo);
  } else {
    for (double& v : values) v = hi > 0.0 ? 1.0 : 0.0;
  }
}

// 1 where value >= theta * max(map); empty when the map has no positive value.
inline BinaryMask BinarizeRelative(const RealMap& map, double theta) {
  BinaryMask out(map.dims());
  double peak = 0.0;
  for (double v : map.values()) peak = std::max(peak, v);
  if (peak <= 0.0) return out;
  const double cut = theta * peak;
  for (std::size_t p = 0; p < map.size(); ++p) out[p] = map[p] >= cut && map[p] > 0.0;
  return out;
}

struct DffOptions {
  double theta = 0.5;
  NmfOptions nmf;
};

inline constexpr std::string_view kHeatmapNormalization = "minmax_before_upsample";

// Factorizes an h x w x c activation tensor into k spatial concept heatmaps,
// upsamples them to the image and thresholds each into a binary mask. Masks
// may overlap; the leftover is always appended (possibly empty).
inline FeatureSet DffMasks(const ActivationTensor& act, int k, ImageDims image_dims,
                           const DffOptions& options = {}) {
  act.Validate();
  if (act.layout != ActivationLayout::kSpatial) {
    throw ConfigError("spatial DFF needs a spatial activation tensor");
  }
  if (k < 1) throw ConfigError("DFF needs k >= 1");
  const int h = act.shape[0];
  const int w = act.shape[1];
  const int c = act.shape[2];
  Eigen::MatrixXd v(static_cast<Eigen::Index>(h) * w, c);
  bool any_positive = false;
  for (int row = 0; row < h * w; ++row) {
    for (int ch = 0; ch < c; ++ch) {
      const double value = act.data[static_cast<std::size_t>(row) * c + ch];
      v(row, ch) = value;
      any_positive |= value > 0.0;
    }
  }
  if (!any_positive) throw InputError("degenerate input: activation tensor is all zero");

  const NmfResult nmf = Nmf(v, k, options.nmf);

  FeatureSet fs;
  fs.dims = image_dims;
  fs.config = {"dff", k, options.theta, 0, 0, "", std::string(kHeatmapNormalization)};
  for (int j = 0; j < k; ++j) {
    RealMap factor(h, w);
    for (int row = 0; row < h * w; ++row) factor[row] = nmf.w(row, j);
    MinMaxNormalize(factor.values());
    RealMap heatmap = UpsampleBilinear(factor, image_dims);
    BinaryMask binary = BinarizeRelative(heatmap, options.theta);
    for (std::size_t p = 0; p < heatmap.size(); ++p) {
      if (!binary[p]) heatmap[p] = 0.0;
    }
    fs.masks.push_back({std::move(binary), std::move(heatmap), FeatureKind::kDff});
  }
  AppendLeftover(fs, /*keep_if_empty=*/true);
  return fs;
}

// [start, end) of cell `index` when `extent` pixels are split into `cells`;
// the remainder goes to the last cell.
inline std::pair<int, int> CellBounds(int extent, int cells, int index) {
  const int base = extent / cells;
  const int start = index * base;
  const int end = index == cells - 1 ? extent : start + base;
  return {start, end};
}

inline void FillCell(BinaryMask& mask, int rows, int cols, int r, int c) {
  const auto [y0, y1] = CellBounds(mask.height(), rows, r);
  const auto [x0, x1] = CellBounds(mask.width(), cols, c);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) mask(y, x) = 1;
  }
}

// rows x cols grid of rectangles tiling the image, row-major order.
inline FeatureSet SuperpixelMasks(ImageDims dims, int rows, int cols) {
  if (rows < 1 || cols < 1 || rows * cols < 2) {
    throw ConfigError("superpixel grid " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " needs at least two cells");
  }
  if (rows > dims.height || cols > dims.width) {
    throw ConfigError("superpixel grid " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " exceeds image " + dims.ToString());
  }
  FeatureSet fs;
  fs.dims = dims;
  fs.config = {"superpixel", 0, 0.0, rows, cols, "", ""};
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      BinaryMask mask(dims);
      FillCell(mask, rows, cols, r, c);
      fs.masks.push_back({std::move(mask), std::nullopt, FeatureKind::kSuperpixel});
    }
  }
  return fs;
}

// DFF over ViT patch tokens. The token matrix is min-max normalized to [0,1]
// (ViT activations can be negative), factorized, and each factor's per-patch
// loading thresholded; selected patches become whole grid cells of the mask.
inline FeatureSet VitDffMasks(const ActivationTensor& act, int k, ImageDims image_dims,
                              double band_threshold = 0.5, const NmfOptions& nmf_options = {}) {
  act.Validate();
  if (act.layout != ActivationLayout::kPatches) {
    throw ConfigError("ViT DFF needs a patch activation tensor");
  }
  if (k < 1) throw ConfigError("ViT DFF needs k >= 1");
  if (act.grid_rows > image_dims.height || act.grid_cols > image_dims.width) {
    throw ConfigError("patch grid exceeds image " + image_dims.ToString());
  }
  const int first = act.prefix_token ? 1 : 0;
  const int patches = act.grid_rows * act.grid_cols;
  const int d = act.shape[1];
  Eigen::MatrixXd v(patches, d);
  for (int p = 0; p < patches; ++p) {
    for (int j = 0; j < d; ++j) {
      v(p, j) = act.data[static_cast<std::size_t>(p + first) * d + j];
    }
  }
  const double lo = v.minCoeff();
  const double hi = v.maxCoeff();
  if (!(hi > lo)) throw InputError("degenerate input: patch activations are constant");
  v = (v.array() - lo) / (hi - lo);

  const NmfResult nmf = Nmf(v, k, nmf_options);

  FeatureSet fs;
  fs.dims = image_dims;
  fs.config = {"vit", k, band_threshold, act.grid_rows, act.grid_cols, "", ""};
  for (int j = 0; j < k; ++j) {
    const double peak = nmf.w.col(j).maxCoeff();
    BinaryMask mask(image_dims);
    if (peak > 0.0) {
      for (int p = 0; p < patches; ++p) {
        if (nmf.w(p, j) >= band_threshold * peak) {
          FillCell(mask, act.grid_rows, act.grid_cols, p / act.grid_cols, p % act.grid_cols);
        }
      }
    }
    fs.masks.push_back({std::move(mask), std::nullopt, FeatureKind::kVitBand});
  }
  AppendLeftover(fs, /*keep_if_empty=*/true);
  return fs;
}

// External segmentation output: an 8-bit label map (0 = unlabeled, each other
// value one feature, ascending) or a directory of mask_<i>.png files (nonzero
// = inside). A leftover is appended only when coverage is incomplete.
inline FeatureSet LoadExternalMasks(const std::filesystem::path& path,
                                    std::optional<ImageDims> expected = std::nullopt) {
  namespace fs = std::filesystem;
  FeatureSet out;
  out.config = {"external", 0, 0.0, 0, 0, path.string(), ""};

  auto check_dims = [&](ImageDims dims, const fs::path& file) {
    if (expected && dims != *expected) {
      throw InputError(file.string() + " is " + dims.ToString() + ", image is " +
                       expected->ToString());
    }
  };

  if (fs::is_directory(path)) {
    const std::regex pattern(R"(mask_(\d+)\.png)");
    std::map<int, fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      std::smatch match;
      const std::string name = entry.path().filename().string();
      if (std::regex_match(name, match, pattern)) files[std::stoi(match[1])] = entry.path();
    }
    if (files.empty()) throw InputError(path.string() + " contains no mask_<i>.png files");
    for (const auto& [index, file] : files) {
      const Grid<std::uint8_t> gray = ReadGrayPng(file);
      check_dims(gray.dims(), file);
      if (out.masks.empty()) {
        out.dims = gray.dims();
      } else if (gray.dims() != out.dims) {
        throw InputError(file.string() + " differs in size from the other masks");
      }
      BinaryMask mask(gray.dims());
      for (std::size_t p = 0; p < mask.size(); ++p) mask[p] = gray[p] != 0;
      if (IsEmpty(mask)) throw InputError(file.string() + " is an empty mask");
      out.masks.push_back({std::move(mask), std::nullopt, FeatureKind::kExternal});
    }
  } else {
    const Grid<std::uint8_t> labels = ReadGrayPng(path);
    check_dims(labels.dims(), path);
    out.dims = labels.dims();
    std::map<int, BinaryMask> by_label;
    for (std::size_t p = 0; p < labels.size(); ++p) {
      if (labels[p] == 0) continue;
      auto [it, inserted] = by_label.try_emplace(labels[p], labels.dims());
      it->second[p] = 1;
    }
    if (by_label.empty()) throw InputError(path.string() + " has no labeled pixels");
    for (auto& [label, mask] : by_label) {
      out.masks.push_back({std::move(mask), std::nullopt, FeatureKind::kExternal});
    }
  }
  out.config.k = static_cast<int>(out.masks.size());
  AppendLeftover(out, /*keep_if_empty=*/false);
  return out;
}

enum class DisjointPolicy { kLowestIndex, kSeededRandom };

// Gives every pixel to at most one non-leftover mask. Coverage (and so the
// leftover) is unchanged; heatmaps are cut to the surviving support.
inline FeatureSet EnforceDisjoint(FeatureSet fs, DisjointPolicy policy,
                                  std::uint64_t seed = 0) {
  const int concepts = fs.num_concepts();
  std::mt19937_64 rng(seed);
  std::vector<int> claimants;
  const std::size_t pixels = static_cast<std::size_t>(fs.dims.pixels());
  for (std::size_t p = 0; p < pixels; ++p) {
    claimants.clear();
    for (int i = 0; i < concepts; ++i) {
      if (fs.masks[i].binary[p]) claimants.push_back(i);
    }
    if (claimants.size() < 2) continue;
    int winner = claimants.front();
    if (policy == DisjointPolicy::kSeededRandom) {
      std::uniform_int_distribution<std::size_t> pick(0, claimants.size() - 1);
      winner = claimants[pick(rng)];
    }
    for (int i : claimants) {
      if (i != winner) fs.masks[i].binary[p] = 0;
    }
  }
  for (auto& mask : fs.masks) {
    if (!mask.heatmap) continue;
    for (std::size_t p = 0; p < pixels; ++p) {
      if (!mask.binary[p]) (*mask.heatmap)[p] = 0.0;
    }
  }
  return fs;
}

struct OverlapStats {
  // Percent of image pixels covered by two or more non-leftover masks.
  double mean_overlap_pct = 0.0;
  // Pairwise intersections as percent of the image; zero diagonal.
  std::vector<std::vector<double>> per_pair_overlap_pct;
  double max_overlap_pct = 0.0;
};

inline OverlapStats ComputeOverlapStats(const FeatureSet& fs) {
  const int concepts = fs.num_concepts();
  const std::size_t pixels = static_cast<std::size_t>(fs.dims.pixels());
  OverlapStats stats;
  stats.per_pair_overlap_pct.assign(concepts, std::vector<double>(concepts, 0.0));
  if (pixels == 0) return stats;
  std::vector<std::vector<std::int64_t>> counts(concepts,
                                                std::vector<std::int64_t>(concepts, 0));
  std::int64_t shared = 0;
  std::vector<int> present;
  for (std::size_t p = 0; p < pixels; ++p) {
    present.clear();
    for (int i = 0; i < concepts; ++i) {
      if (fs.masks[i].binary[p]) present.push_back(i);
    }
    if (present.size() >= 2) ++shared;
    for (std::size_t a = 0; a < present.size(); ++a) {
      for (std::size_t b = a + 1; b < present.size(); ++b) ++counts[present[a]][present[b]];
    }
  }
  const double scale = 100.0 / static_cast<double>(pixels);
  stats.mean_overlap_pct = scale * static_cast<double>(shared);
  for (int a = 0; a < concepts; ++a) {
    for (int b = a + 1; b < concepts; ++b) {
      const double pct = scale * static_cast<double>(counts[a][b]);
      stats.per_pair_overlap_pct[a][b] = stats.per_pair_overlap_pct[b][a] = pct;
      stats.max_overlap_pct = std::max(stats.max_overlap_pct, pct);
    }
  }
  return stats;
}

}  // namespace semshap
