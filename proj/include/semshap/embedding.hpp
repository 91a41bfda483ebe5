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

// Sentence representations for captions and their cosine similarity.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "semshap/error.hpp"

namespace semshap {

struct CaptionEmbedding {
  std::vector<double> vector;
  double norm = 0.0;
  // Set for empty captions (zero vector).
  bool degenerate = true;

  static CaptionEmbedding FromVector(std::vector<double> values) {
    CaptionEmbedding e;
    double sq = 0.0;
    for (double v : values) sq += v * v;
    e.norm = std::sqrt(sq);
    e.degenerate = !(e.norm > 0.0);
    e.vector = std::move(values);
    return e;
  }

  int dim() const { return static_cast<int>(vector.size()); }

  friend bool operator==(const CaptionEmbedding&, const CaptionEmbedding&) = default;
};

// Maps caption text to a fixed-dimension vector. Implementations must be
// deterministic and safe to call concurrently.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual CaptionEmbedding Embed(std::string_view text) const = 0;
  virtual int dim() const = 0;
  virtual std::string name() const = 0;
};

// Lower-cased alphanumeric words.
inline std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char raw : text) {
    const unsigned char c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

// 64-bit FNV-1a.
inline std::uint64_t Fnv1a(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (char c : bytes) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ull;
  }
  return hash;
}

// Hashes word unigrams and bigrams into count buckets, then L2-normalizes.
class HashedNgramEmbedder final : public Embedder {
 public:
  explicit HashedNgramEmbedder(int dim = 512) : dim_(dim) {
    if (dim < 1) throw ConfigError("embedding dimension must be positive");
  }

  CaptionEmbedding Embed(std::string_view text) const override {
    std::vector<double> counts(dim_, 0.0);
    const auto words = Tokenize(text);
    for (std::size_t i = 0; i < words.size(); ++i) {
      counts[Bucket("u:" + words[i])] += 1.0;
      if (i + 1 < words.size()) counts[Bucket("b:" + words[i] + " " + words[i + 1])] += 1.0;
    }
    CaptionEmbedding e = CaptionEmbedding::FromVector(std::move(counts));
    if (!e.degenerate) {
      for (double& v : e.vector) v /= e.norm;
      e.norm = 1.0;
    }
    return e;
  }

  int dim() const override { return dim_; }
  std::string name() const override { return "hashed_ngram_" + std::to_string(dim_); }

 private:
  std::size_t Bucket(std::string_view gram) const {
    return static_cast<std::size_t>(Fnv1a(gram) % static_cast<std::uint64_t>(dim_));
  }

  int dim_;
};

// Cosine similarity; 0 when either side is degenerate.
inline double Similarity(const CaptionEmbedding& a, const CaptionEmbedding& b) {
  if (a.dim() != b.dim()) {
    throw InputError("embedding dimensions differ: " + std::to_string(a.dim()) + " vs " +
                     std::to_string(b.dim()));
  }
  if (a.degenerate || b.degenerate) return 0.0;
  double dot = 0.0;
  for (int i = 0; i < a.dim(); ++i) dot += a.vector[i] * b.vector[i];
  const double cosine = dot / (a.norm * b.norm);
  return std::clamp(cosine, -1.0, 1.0);
}

}  // namespace semshap
