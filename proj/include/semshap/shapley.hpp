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

// Kernel SHAP over coalitions of up to 30 features: Shapley-kernel weights,
// deterministic priority ordering, Monte Carlo sampling, and the constrained
// weighted least-squares solve that turns evaluated coalitions into
// attributions.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "semshap/error.hpp"

namespace semshap {

inline constexpr int kMaxFeatures = 30;

// A subset of M features, bit i set when feature i is present.
class Coalition {
 public:
  Coalition() = default;
  Coalition(int num_features, std::uint32_t bits)
      : num_features_(num_features), bits_(bits) {
    if (num_features < 0 || num_features > kMaxFeatures) {
      throw ConfigError("coalition width " + std::to_string(num_features) +
                        " outside [0, " + std::to_string(kMaxFeatures) + "]");
    }
    if (num_features < 32 && (bits >> num_features) != 0) {
      throw ConfigError("coalition bits exceed width " +
                        std::to_string(num_features));
    }
  }

  static Coalition Empty(int num_features) { return {num_features, 0}; }
  static Coalition Full(int num_features) {
    return {num_features, num_features == 0
                              ? 0u
                              : (std::uint32_t{0xFFFFFFFFu} >> (32 - num_features))};
  }

  int num_features() const { return num_features_; }
  std::uint32_t bits() const { return bits_; }
  int size() const { return std::popcount(bits_); }
  bool contains(int feature) const { return (bits_ >> feature) & 1u; }
  bool empty() const { return bits_ == 0; }
  bool full() const { return *this == Full(num_features_); }

  Coalition With(int feature) const {
    return {num_features_, bits_ | (1u << feature)};
  }
  Coalition Without(int feature) const {
    return {num_features_, bits_ & ~(1u << feature)};
  }

  std::vector<int> Members() const {
    std::vector<int> out;
    for (int i = 0; i < num_features_; ++i) {
      if (contains(i)) out.push_back(i);
    }
    return out;
  }

  std::string ToString() const {
    std::string out = "{";
    bool first = true;
    for (int i : Members()) {
      if (!first) out += ",";
      out += std::to_string(i);
      first = false;
    }
    return out + "}";
  }

  friend bool operator==(const Coalition&, const Coalition&) = default;

 private:
  int num_features_ = 0;
  std::uint32_t bits_ = 0;
};

struct WeightedCoalition {
  Coalition coalition;
  double weight = 0.0;
  double outcome = std::numeric_limits<double>::quiet_NaN();
};

enum class Sampler { kExact, kPriority, kMonteCarlo };

inline std::string_view SamplerName(Sampler sampler) {
  switch (sampler) {
    case Sampler::kExact:
      return "exact";
    case Sampler::kPriority:
      return "priority";
    case Sampler::kMonteCarlo:
      return "montecarlo";
  }
  return "exact";
}

inline Sampler ParseSampler(std::string_view name) {
  if (name == "exact") return Sampler::kExact;
  if (name == "priority") return Sampler::kPriority;
  if (name == "montecarlo") return Sampler::kMonteCarlo;
  throw ConfigError("unknown sampler '" + std::string(name) + "'");
}

// Selection law of the Monte Carlo sampler.
enum class MonteCarloWeighting { kKernel, kUniform };

struct Explanation {
  double phi0 = 0.0;
  std::vector<double> phi;
  double v_full = 0.0;
  Sampler sampler = Sampler::kExact;
  // Requested budget; `evaluated` is the number of proper coalitions actually
  // evaluated (the budget clamped to the pool).
  std::int64_t budget = 0;
  std::optional<std::uint64_t> seed;
  std::int64_t evaluated = 0;

  int num_features() const { return static_cast<int>(phi.size()); }

  double EfficiencyResidual() const {
    double total = phi0;
    for (double p : phi) total += p;
    return std::abs(total - v_full);
  }

  friend bool operator==(const Explanation&, const Explanation&) = default;
};

// Exact binomial coefficient for n <= 62.
inline std::uint64_t Binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t result = 1;
  for (int i = 1; i <= k; ++i) {
    result = result * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  }
  return result;
}

inline std::uint64_t ProperCoalitionCount(int num_features) {
  return (std::uint64_t{1} << num_features) - 2;
}

// Shapley kernel (M-1) / (C(M,s) s (M-s)). Empty and full coalitions have
// infinite weight and are rejected; callers treat them as constraints.
inline double ShapleyKernelWeight(int num_features, int size) {
  if (num_features < 2 || num_features > kMaxFeatures) {
    throw ConfigError("kernel weight needs 2 <= M <= 30, got M=" +
                      std::to_string(num_features));
  }
  if (size <= 0 || size >= num_features) {
    throw DomainError("kernel weight is infinite for coalition size " +
                      std::to_string(size) + " of M=" +
                      std::to_string(num_features));
  }
  // Evaluate on the smaller side so weight(s) == weight(M-s) bit for bit.
  const int s = std::min(size, num_features - size);
  const double denom = static_cast<double>(Binomial(num_features, s)) * s *
                       (num_features - s);
  return static_cast<double>(num_features - 1) / denom;
}

namespace internal {

inline void CheckWidth(int num_features) {
  if (num_features < 2 || num_features > kMaxFeatures) {
    throw ConfigError("coalition sampling needs 2 <= M <= " +
                      std::to_string(kMaxFeatures) + ", got " +
                      std::to_string(num_features));
  }
}

inline void CheckBudget(int num_features, std::int64_t budget) {
  if (budget <= 0) {
    throw ConfigError("sampling budget must be positive, got " +
                      std::to_string(budget));
  }
  if (static_cast<std::uint64_t>(budget) > ProperCoalitionCount(num_features)) {
    throw ConfigError("sampling budget " + std::to_string(budget) +
                      " exceeds the pool of " +
                      std::to_string(ProperCoalitionCount(num_features)) +
                      " proper coalitions");
  }
}

// Next integer with the same popcount (Gosper's hack).
inline std::uint32_t NextSamePopcount(std::uint32_t v) {
  const std::uint32_t t = v | (v - 1);
  return (t + 1) | (((~t & -~t) - 1) >> (std::countr_zero(v) + 1));
}

// Combination of `size` elements out of `n` with colexicographic rank `rank`.
inline std::uint32_t UnrankCombination(int n, int size, std::uint64_t rank) {
  std::uint32_t bits = 0;
  int k = size;
  for (int i = n - 1; i >= 0 && k > 0; --i) {
    const std::uint64_t c = Binomial(i, k);
    if (rank >= c) {
      bits |= (1u << i);
      rank -= c;
      --k;
    }
  }
  return bits;
}

}  // namespace internal

// Coalition sizes in priority order: weight non-increasing, and sizes s and
// M-s (equal weight) adjacent with the smaller size first.
inline std::vector<int> PrioritySizeOrder(int num_features) {
  internal::CheckWidth(num_features);
  std::vector<int> sizes;
  for (int d = 1; 2 * d <= num_features; ++d) {
    sizes.push_back(d);
    if (num_features - d != d) sizes.push_back(num_features - d);
  }
  return sizes;
}

// Lazily walks all proper coalitions in priority order; within a size,
// bitsets ascend as unsigned integers.
class PriorityCoalitionOrder {
 public:
  explicit PriorityCoalitionOrder(int num_features)
      : num_features_(num_features), sizes_(PrioritySizeOrder(num_features)) {
    StartSize();
  }

  std::optional<WeightedCoalition> Next() {
    if (size_index_ >= sizes_.size()) return std::nullopt;
    WeightedCoalition out{Coalition(num_features_, current_), weight_};
    const std::uint32_t limit = std::uint32_t{1} << num_features_;
    const std::uint32_t next = internal::NextSamePopcount(current_);
    if (next >= limit || next <= current_) {
      ++size_index_;
      StartSize();
    } else {
      current_ = next;
    }
    return out;
  }

 private:
  void StartSize() {
    if (size_index_ >= sizes_.size()) return;
    const int s = sizes_[size_index_];
    current_ = (std::uint32_t{1} << s) - 1;
    weight_ = ShapleyKernelWeight(num_features_, s);
  }

  int num_features_;
  std::vector<int> sizes_;
  std::size_t size_index_ = 0;
  std::uint32_t current_ = 0;
  double weight_ = 0.0;
};

// The first `budget` coalitions of the priority order.
inline std::vector<WeightedCoalition> SampleCoalitionsPriority(int num_features,
                                                               std::int64_t budget) {
  internal::CheckWidth(num_features);
  internal::CheckBudget(num_features, budget);
  std::vector<WeightedCoalition> out;
  out.reserve(static_cast<std::size_t>(budget));
  PriorityCoalitionOrder order(num_features);
  while (static_cast<std::int64_t>(out.size()) < budget) {
    out.push_back(*order.Next());
  }
  return out;
}

// All 2^M - 2 proper coalitions in priority order.
inline std::vector<WeightedCoalition> EnumerateCoalitionsPriority(int num_features) {
  internal::CheckWidth(num_features);
  return SampleCoalitionsPriority(
      num_features, static_cast<std::int64_t>(ProperCoalitionCount(num_features)));
}

// `budget` distinct proper coalitions drawn sequentially without replacement.
// Each draw picks a coalition with probability proportional to its kernel
// weight (or uniformly) among those not yet drawn: first a size class by its
// remaining mass, then a member of that class uniformly.
inline std::vector<WeightedCoalition> SampleCoalitionsMonteCarlo(
    int num_features, std::int64_t budget, std::uint64_t seed,
    MonteCarloWeighting weighting = MonteCarloWeighting::kKernel) {
  internal::CheckWidth(num_features);
  internal::CheckBudget(num_features, budget);
  const int m = num_features;

  std::vector<double> weight(m, 0.0);
  std::vector<std::uint64_t> remaining(m, 0);
  for (int s = 1; s < m; ++s) {
    weight[s] = ShapleyKernelWeight(m, s);
    remaining[s] = Binomial(m, s);
  }
  std::vector<std::unordered_set<std::uint32_t>> taken(m);
  // Size classes small enough to materialize once they get crowded.
  constexpr std::uint64_t kDenseClassLimit = 1u << 16;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<WeightedCoalition> out;
  out.reserve(static_cast<std::size_t>(budget));

  while (static_cast<std::int64_t>(out.size()) < budget) {
    double total = 0.0;
    for (int s = 1; s < m; ++s) {
      const double per = weighting == MonteCarloWeighting::kKernel ? weight[s] : 1.0;
      total += per * static_cast<double>(remaining[s]);
    }
    double target = unit(rng) * total;
    int size = 0;
    for (int s = 1; s < m; ++s) {
      if (remaining[s] == 0) continue;
      size = s;
      const double per = weighting == MonteCarloWeighting::kKernel ? weight[s] : 1.0;
      target -= per * static_cast<double>(remaining[s]);
      if (target < 0.0) break;
    }

    const std::uint64_t class_size = Binomial(m, size);
    auto& used = taken[size];
    std::uint32_t bits = 0;
    if (class_size <= kDenseClassLimit && used.size() * 2 >= class_size) {
      // Crowded class: pick directly among the untaken ranks.
      std::uniform_int_distribution<std::uint64_t> pick(0, remaining[size] - 1);
      std::uint64_t skip = pick(rng);
      for (std::uint64_t rank = 0; rank < class_size; ++rank) {
        const std::uint32_t candidate = internal::UnrankCombination(m, size, rank);
        if (used.count(candidate)) continue;
        if (skip == 0) {
          bits = candidate;
          break;
        }
        --skip;
      }
    } else {
      std::uniform_int_distribution<std::uint64_t> pick(0, class_size - 1);
      do {
        bits = internal::UnrankCombination(m, size, pick(rng));
      } while (used.count(bits));
    }
    used.insert(bits);
    --remaining[size];
    out.push_back({Coalition(m, bits), weight[size]});
  }
  return out;
}

// Constrained Kernel SHAP regression. phi0 is pinned to v_empty and the last
// coefficient is eliminated through sum(phi) = v_full - v_empty, leaving an
// (M-1)-dimensional weighted least-squares problem solved by its normal
// equations.
inline Explanation SolveWeightedRegression(std::span<const WeightedCoalition> samples,
                                           double v_empty, double v_full) {
  if (samples.empty()) {
    throw ConfigError("regression needs at least one evaluated coalition");
  }
  const int m = samples.front().coalition.num_features();
  if (m < 2) throw ConfigError("regression needs M >= 2");
  const int n = m - 1;
  const double delta = v_full - v_empty;

  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd row(n);
  for (const auto& sample : samples) {
    if (sample.coalition.num_features() != m) {
      throw ConfigError("coalitions of mixed width in regression input");
    }
    if (!(sample.weight > 0.0) || !std::isfinite(sample.weight)) {
      throw DomainError("coalition " + sample.coalition.ToString() +
                        " has non-positive or infinite weight");
    }
    if (!std::isfinite(sample.outcome)) {
      throw DomainError("coalition " + sample.coalition.ToString() +
                        " has no finite outcome");
    }
    const double last = sample.coalition.contains(n) ? 1.0 : 0.0;
    for (int i = 0; i < n; ++i) {
      row[i] = (sample.coalition.contains(i) ? 1.0 : 0.0) - last;
    }
    const double target = sample.outcome - v_empty - last * delta;
    normal.noalias() += sample.weight * row * row.transpose();
    rhs.noalias() += sample.weight * target * row;
  }

  constexpr double kSingularRcond = 1e-13;
  constexpr double kRidge = 1e-10;
  Eigen::VectorXd reduced;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
  double rcond = ldlt.info() == Eigen::Success ? ldlt.rcond() : 0.0;
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() && rcond > kSingularRcond) {
    reduced = ldlt.solve(rhs);
  } else {
    Eigen::MatrixXd ridged = normal;
    ridged.diagonal().array() += kRidge;
    Eigen::LLT<Eigen::MatrixXd> llt(ridged);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("reduced normal equations singular even with ridge " +
                           std::to_string(kRidge) + " (M=" + std::to_string(m) +
                           ", samples=" + std::to_string(samples.size()) +
                           ", rcond=" + std::to_string(rcond) + ")");
    }
    reduced = llt.solve(rhs);
  }
  if (!reduced.allFinite()) {
    throw NumericalError("regression produced non-finite coefficients (M=" +
                         std::to_string(m) + ", samples=" +
                         std::to_string(samples.size()) + ")");
  }

  Explanation out;
  out.phi0 = v_empty;
  out.v_full = v_full;
  out.phi.assign(m, 0.0);
  double partial = 0.0;
  for (int i = 0; i < n; ++i) {
    out.phi[i] = reduced[i];
    partial += reduced[i];
  }
  out.phi[n] = delta - partial;
  out.budget = static_cast<std::int64_t>(samples.size());
  return out;
}

// Game value for a coalition. Must be safe to call concurrently.
using Game = std::function<double(const Coalition&)>;

// Wraps a failure raised while evaluating one coalition.
class GameEvaluationError : public Error {
 public:
  GameEvaluationError(ErrorKind kind, Coalition coalition, const std::string& cause)
      : Error(kind, "game evaluation failed for coalition " + coalition.ToString() +
                        ": " + cause),
        coalition_(coalition) {}

  const Coalition& coalition() const { return coalition_; }

 private:
  Coalition coalition_;
};

namespace internal {

[[noreturn]] inline void RethrowWithCoalition(std::exception_ptr error,
                                              const Coalition& coalition) {
  try {
    std::rethrow_exception(error);
  } catch (const GameEvaluationError&) {
    throw;
  } catch (const Error& e) {
    throw GameEvaluationError(e.kind(), coalition, e.what());
  } catch (const std::exception& e) {
    throw GameEvaluationError(ErrorKind::kModel, coalition, e.what());
  }
}

inline double EvaluateOne(const Game& game, const Coalition& coalition) {
  try {
    return game(coalition);
  } catch (...) {
    RethrowWithCoalition(std::current_exception(), coalition);
  }
}

}  // namespace internal

// Fills sample outcomes, possibly on several threads. Outcomes are stored by
// index; on failure the error of the lowest failing index is reported.
inline void EvaluateCoalitions(const Game& game, std::span<WeightedCoalition> samples,
                               int threads = 0) {
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min<int>(threads, static_cast<int>(samples.size()));
  if (threads <= 1) {
    for (auto& sample : samples) sample.outcome = internal::EvaluateOne(game, sample.coalition);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex error_mutex;
  std::size_t error_index = samples.size();
  std::exception_ptr error;
  {
    std::vector<std::jthread> workers;
    workers.reserve(threads);
    for (int t = 0; t < threads; ++t) {
      workers.emplace_back([&] {
        while (!failed.load(std::memory_order_relaxed)) {
          const std::size_t i = next.fetch_add(1);
          if (i >= samples.size()) return;
          try {
            samples[i].outcome = game(samples[i].coalition);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (i < error_index) {
              error_index = i;
              error = std::current_exception();
            }
            failed = true;
          }
        }
      });
    }
  }
  if (error) internal::RethrowWithCoalition(error, samples[error_index].coalition);
}

struct ExplainOptions {
  Sampler sampler = Sampler::kExact;
  // Proper coalitions to evaluate; ignored by the exact sampler.
  std::int64_t budget = 0;
  std::uint64_t seed = 0;
  MonteCarloWeighting weighting = MonteCarloWeighting::kKernel;
  // 0 picks the hardware concurrency.
  int threads = 0;
};

// Largest M the exact sampler will enumerate.
inline constexpr int kMaxExactFeatures = 24;

inline std::vector<WeightedCoalition> DrawCoalitions(int num_features,
                                                     const ExplainOptions& options) {
  switch (options.sampler) {
    case Sampler::kExact:
      if (num_features > kMaxExactFeatures) {
        throw ConfigError("exact sampler limited to M <= " +
                          std::to_string(kMaxExactFeatures) + ", got " +
                          std::to_string(num_features));
      }
      return EnumerateCoalitionsPriority(num_features);
    case Sampler::kPriority:
      return SampleCoalitionsPriority(num_features, options.budget);
    case Sampler::kMonteCarlo:
      return SampleCoalitionsMonteCarlo(num_features, options.budget, options.seed,
                                        options.weighting);
  }
  throw ConfigError("unknown sampler");
}

// Evaluates v(empty), v(full) and the sampled coalitions, then solves the
// constrained regression. The two constraint evaluations are not charged to
// the budget. A budget beyond the pool of proper coalitions is clamped to the
// pool (the record keeps the requested value).
inline Explanation Explain(const Game& game, int num_features,
                           const ExplainOptions& options) {
  if (num_features < 1 || num_features > kMaxFeatures) {
    throw ConfigError("number of features must be in [1, 30], got " +
                      std::to_string(num_features));
  }
  const double v_empty = internal::EvaluateOne(game, Coalition::Empty(num_features));
  const double v_full = internal::EvaluateOne(game, Coalition::Full(num_features));

  const std::int64_t pool =
      num_features >= 2 ? static_cast<std::int64_t>(ProperCoalitionCount(num_features)) : 0;
  ExplainOptions effective = options;
  if (options.sampler != Sampler::kExact && options.budget > pool && pool > 0) {
    effective.budget = pool;
  }

  Explanation out;
  std::int64_t evaluated = 0;
  if (num_features == 1) {
    out.phi0 = v_empty;
    out.v_full = v_full;
    out.phi = {v_full - v_empty};
  } else {
    std::vector<WeightedCoalition> samples = DrawCoalitions(num_features, effective);
    if (options.sampler == Sampler::kMonteCarlo) {
      // Draw order is irrelevant to the estimate; a canonical order makes
      // equal sample sets give bitwise-equal results.
      std::sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) {
        return a.coalition.bits() < b.coalition.bits();
      });
    }
    EvaluateCoalitions(game, samples, options.threads);
    out = SolveWeightedRegression(samples, v_empty, v_full);
    evaluated = static_cast<std::int64_t>(samples.size());
  }
  out.sampler = options.sampler;
  out.budget = options.sampler == Sampler::kExact ? pool : options.budget;
  out.evaluated = evaluated;
  if (options.sampler == Sampler::kMonteCarlo) out.seed = options.seed;
  return out;
}

}  // namespace semshap
