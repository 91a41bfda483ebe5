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

// Raster containers plus PNG and base64 codecs.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>
#include <png.h>

#include "semshap/error.hpp"

namespace semshap {

struct ImageDims {
  int height = 0;
  int width = 0;

  std::int64_t pixels() const { return std::int64_t{height} * width; }
  std::string ToString() const {
    return std::to_string(height) + "x" + std::to_string(width);
  }
  friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

// Row-major h x w raster.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(ImageDims dims, T fill = T{})
      : dims_(dims), data_(static_cast<std::size_t>(CheckedPixels(dims)), fill) {}
  Grid(int height, int width, T fill = T{}) : Grid(ImageDims{height, width}, fill) {}

  ImageDims dims() const { return dims_; }
  int height() const { return dims_.height; }
  int width() const { return dims_.width; }
  std::size_t size() const { return data_.size(); }

  T& operator()(int y, int x) { return data_[Index(y, x)]; }
  const T& operator()(int y, int x) const { return data_[Index(y, x)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  static std::int64_t CheckedPixels(ImageDims dims) {
    if (dims.height < 0 || dims.width < 0) {
      throw ConfigError("negative raster dimensions " + dims.ToString());
    }
    return dims.pixels();
  }
  std::size_t Index(int y, int x) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(dims_.width) +
           static_cast<std::size_t>(x);
  }

  ImageDims dims_;
  std::vector<T> data_;
};

using RealMap = Grid<double>;
// 0/1 per pixel.
using BinaryMask = Grid<std::uint8_t>;

// 8-bit RGB image, interleaved.
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  explicit Image(ImageDims dims, std::uint8_t fill = 0)
      : dims_(dims),
        pixels_(static_cast<std::size_t>(dims.pixels()) * kChannels, fill) {}

  ImageDims dims() const { return dims_; }
  int height() const { return dims_.height; }
  int width() const { return dims_.width; }

  std::uint8_t& at(int y, int x, int c) { return pixels_[Offset(y, x) + c]; }
  std::uint8_t at(int y, int x, int c) const { return pixels_[Offset(y, x) + c]; }

  std::span<std::uint8_t> pixels() { return pixels_; }
  std::span<const std::uint8_t> pixels() const { return pixels_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t Offset(int y, int x) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(dims_.width) +
            static_cast<std::size_t>(x)) *
           kChannels;
  }

  ImageDims dims_;
  std::vector<std::uint8_t> pixels_;
};

inline std::vector<std::uint8_t> ReadBinaryFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void WriteBinaryFile(const std::filesystem::path& path,
                            std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("short write to " + path.string());
}

namespace internal {

struct PngImage {
  png_image image{};
  PngImage() {
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

// Decodes into the requested libpng format (RGB or GRAY).
inline std::vector<std::uint8_t> DecodePngAs(std::span<const std::uint8_t> bytes,
                                             png_uint_32 format, ImageDims& dims) {
  PngImage png;
  if (!png_image_begin_read_from_memory(&png.image, bytes.data(), bytes.size())) {
    throw InputError(std::string("invalid PNG: ") + png.image.message);
  }
  png.image.format = format;
  dims = {static_cast<int>(png.image.height), static_cast<int>(png.image.width)};
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, buffer.data(), 0, nullptr)) {
    throw InputError(std::string("PNG decode failed: ") + png.image.message);
  }
  return buffer;
}

inline std::vector<std::uint8_t> EncodePngAs(std::span<const std::uint8_t> pixels,
                                             ImageDims dims, png_uint_32 format) {
  PngImage png;
  png.image.width = static_cast<png_uint_32>(dims.width);
  png.image.height = static_cast<png_uint_32>(dims.height);
  png.image.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png.image, nullptr, &size, 0, pixels.data(), 0,
                                 nullptr)) {
    throw InputError(std::string("PNG encode failed: ") + png.image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png.image, out.data(), &size, 0, pixels.data(), 0,
                                 nullptr)) {
    throw InputError(std::string("PNG encode failed: ") + png.image.message);
  }
  out.resize(size);
  return out;
}

}  // namespace internal

// Any PNG colour type is converted to 8-bit RGB (alpha composited on black).
inline Image DecodePng(std::span<const std::uint8_t> bytes) {
  ImageDims dims;
  auto buffer = internal::DecodePngAs(bytes, PNG_FORMAT_RGB, dims);
  Image image(dims);
  std::copy(buffer.begin(), buffer.end(), image.pixels().begin());
  return image;
}

inline std::vector<std::uint8_t> EncodePng(const Image& image) {
  return internal::EncodePngAs(image.pixels(), image.dims(), PNG_FORMAT_RGB);
}

inline Grid<std::uint8_t> DecodeGrayPng(std::span<const std::uint8_t> bytes) {
  ImageDims dims;
  auto buffer = internal::DecodePngAs(bytes, PNG_FORMAT_GRAY, dims);
  Grid<std::uint8_t> out(dims);
  std::copy(buffer.begin(), buffer.end(), out.values().begin());
  return out;
}

inline std::vector<std::uint8_t> EncodeGrayPng(const Grid<std::uint8_t>& gray) {
  return internal::EncodePngAs(gray.values(), gray.dims(), PNG_FORMAT_GRAY);
}

inline Image ReadPng(const std::filesystem::path& path) {
  try {
    return DecodePng(ReadBinaryFile(path));
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

inline Grid<std::uint8_t> ReadGrayPng(const std::filesystem::path& path) {
  try {
    return DecodeGrayPng(ReadBinaryFile(path));
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

inline void WritePng(const std::filesystem::path& path, const Image& image) {
  WriteBinaryFile(path, EncodePng(image));
}

inline void WriteGrayPng(const std::filesystem::path& path,
                         const Grid<std::uint8_t>& gray) {
  WriteBinaryFile(path, EncodeGrayPng(gray));
}

inline std::string Base64Encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                      bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(written));
  return out;
}

inline std::vector<std::uint8_t> Base64Decode(std::string_view text) {
  if (text.size() % 4 != 0) {
    throw InputError("base64 length " + std::to_string(text.size()) +
                     " is not a multiple of 4");
  }
  std::vector<std::uint8_t> out(3 * (text.size() / 4));
  const int written =
      EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                      static_cast<int>(text.size()));
  if (written < 0) throw InputError("invalid base64 payload");
  // EVP_DecodeBlock keeps the bytes produced by '=' padding.
  std::size_t padding = 0;
  if (!text.empty() && text.back() == '=') ++padding;
  if (text.size() >= 2 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(written) - padding);
  return out;
}

// Little-endian float32 packing used by raw tensors and the wire protocol.
inline std::vector<std::uint8_t> PackFloat32(std::span<const float> values) {
  static_assert(std::endian::native == std::endian::little,
                "float32 packing assumes a little-endian host");
  std::vector<std::uint8_t> out(values.size() * sizeof(float));
  std::memcpy(out.data(), values.data(), out.size());
  return out;
}

inline std::vector<float> UnpackFloat32(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % sizeof(float) != 0) {
    throw InputError("float32 payload of " + std::to_string(bytes.size()) +
                     " bytes is not a multiple of 4");
  }
  std::vector<float> out(bytes.size() / sizeof(float));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

}  // namespace semshap
