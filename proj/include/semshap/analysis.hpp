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

// Post-hoc analyses: size-normalized attributions, ranking overlap (RBO) and
// the sampler error experiment.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "semshap/error.hpp"
#include "semshap/features.hpp"
#include "semshap/shapley.hpp"

namespace semshap {

struct NormalizedAttributions {
  // phi divided by each mask's coverage; phi0 and v_full are copied as-is, so
  // efficiency does not hold for this vector.
  Explanation explanation;
  std::vector<double> coverage;  // |mask_i| / (h*w)
};

// phi_i / r_i with r_i = areas[i] / total_pixels.
inline NormalizedAttributions NormalizeByAreas(const Explanation& e,
                                               std::span<const std::int64_t> areas,
                                               std::int64_t total_pixels) {
  if (static_cast<int>(areas.size()) != e.num_features()) {
    throw InputError("explanation has " + std::to_string(e.num_features()) +
                     " values but " + std::to_string(areas.size()) + " mask areas were given");
  }
  if (total_pixels < 1) throw InputError("image has no pixels");
  NormalizedAttributions out{e, {}};
  for (int i = 0; i < e.num_features(); ++i) {
    if (areas[i] <= 0) {
      throw DomainError("feature " + std::to_string(i) +
                        " has an empty mask; cannot normalize by its size");
    }
    const double r = static_cast<double>(areas[i]) / static_cast<double>(total_pixels);
    out.coverage.push_back(r);
    out.explanation.phi[i] = e.phi[i] / r;
  }
  return out;
}

inline NormalizedAttributions NormalizeAttributions(const Explanation& e, const FeatureSet& fs) {
  if (fs.num_features() != e.num_features()) {
    throw InputError("explanation has " + std::to_string(e.num_features()) +
                     " values but the feature set has " + std::to_string(fs.num_features()) +
                     " masks");
  }
  std::vector<std::int64_t> areas;
  for (const auto& mask : fs.masks) areas.push_back(mask.Area());
  return NormalizeByAreas(e, areas, fs.dims.pixels());
}

enum class RankingSubset { kAll, kPositive, kNegative };

inline std::string_view RankingSubsetName(RankingSubset subset) {
  switch (subset) {
    case RankingSubset::kAll:
      return "all";
    case RankingSubset::kPositive:
      return "positive";
    case RankingSubset::kNegative:
      return "negative";
  }
  return "all";
}

using Ranking = std::vector<int>;

// kAll and kPositive: descending signed value. kNegative: most negative first.
// Ties go to the lower index.
inline Ranking RankFeatures(std::span<const double> values,
                            RankingSubset subset = RankingSubset::kAll) {
  Ranking items;
  for (int i = 0; i < static_cast<int>(values.size()); ++i) {
    if (subset == RankingSubset::kPositive && !(values[i] > 0.0)) continue;
    if (subset == RankingSubset::kNegative && !(values[i] < 0.0)) continue;
    items.push_back(i);
  }
  std::stable_sort(items.begin(), items.end(), [&](int a, int b) {
    return subset == RankingSubset::kNegative ? values[a] < values[b] : values[a] > values[b];
  });
  return items;
}

inline constexpr double kDefaultRboP = 0.9;

// Extrapolated rank-biased overlap of two equal-length lists of distinct
// items. Lists over different items are allowed (zero overlap scores 0).
inline double ExtrapolatedRbo(const Ranking& a, const Ranking& b, double p = kDefaultRboP) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("RBO p must be in (0, 1)");
  if (a.size() != b.size()) {
    throw InputError("rankings differ in length (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  if (std::set<int>(a.begin(), a.end()).size() != a.size() ||
      std::set<int>(b.begin(), b.end()).size() != b.size()) {
    throw InputError("rankings must not repeat items");
  }
  const int k = static_cast<int>(a.size());
  if (k == 0) return 1.0;

  // Summed as 1 - (shortfall from full agreement), which is exactly 1 for
  // identical lists; with no overlap at all the direct sum is exactly 0.
  std::set<int> seen_a, seen_b;
  int overlap = 0;
  bool any_overlap = false;
  double shortfall = 0.0;
  double p_d = 1.0;
  for (int d = 1; d <= k; ++d) {
    const int x = a[d - 1];
    const int y = b[d - 1];
    if (x == y) {
      ++overlap;
    } else {
      overlap += seen_b.count(x) ? 1 : 0;
      overlap += seen_a.count(y) ? 1 : 0;
    }
    seen_a.insert(x);
    seen_b.insert(y);
    any_overlap |= overlap > 0;
    p_d *= p;
    shortfall += (1.0 - static_cast<double>(overlap) / d) * p_d;
  }
  if (!any_overlap) return 0.0;
  shortfall = (1.0 - static_cast<double>(overlap) / k) * p_d + (1.0 - p) / p * shortfall;
  return std::clamp(1.0 - shortfall, 0.0, 1.0);
}

// RBO of two rankings of the same items.
inline double Rbo(const Ranking& a, const Ranking& b, double p = kDefaultRboP) {
  if (a.size() == b.size() &&
      std::set<int>(a.begin(), a.end()) != std::set<int>(b.begin(), b.end())) {
    throw InputError("rankings cover different items");
  }
  return ExtrapolatedRbo(a, b, p);
}

struct RankingComparison {
  double p = kDefaultRboP;
  double all = 1.0;
  double positive = 1.0;
  double negative = 1.0;

  nlohmann::json ToJson() const {
    return {{"rbo_variant", "extrapolated"},
            {"p", p},
            {"all", all},
            {"positive", positive},
            {"negative", negative}};
  }
};

// RBO between the rankings of two attribution vectors over the same features.
inline RankingComparison CompareRankings(std::span<const double> a, std::span<const double> b,
                                         double p = kDefaultRboP) {
  RankingComparison out;
  out.p = p;
  out.all = Rbo(RankFeatures(a), RankFeatures(b), p);
  out.positive = Rbo(RankFeatures(a, RankingSubset::kPositive),
                     RankFeatures(b, RankingSubset::kPositive), p);
  out.negative = Rbo(RankFeatures(a, RankingSubset::kNegative),
                     RankFeatures(b, RankingSubset::kNegative), p);
  return out;
}

inline double MeanSquaredError(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw InputError("MSE needs equal non-empty vectors");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
  return total / static_cast<double>(a.size());
}

struct SamplingErrorOptions {
  // Empty means {2^(M-1), 2^(M-2), 2^(M-3)}.
  std::vector<std::int64_t> budgets;
  int runs = 10;
  std::uint64_t seed = 0;
  int threads = 0;
};

struct BudgetError {
  std::int64_t budget = 0;
  double mse_priority = 0.0;
  std::vector<double> mse_montecarlo_runs;
  double mse_montecarlo_mean = 0.0;
  // Population standard deviation over runs.
  double mse_montecarlo_std = 0.0;
};

struct ErrorReport {
  int num_features = 0;
  int runs = 0;
  std::uint64_t seed = 0;
  std::vector<BudgetError> rows;
  std::vector<std::string> warnings;
  std::vector<double> exact_phi;

  std::vector<std::int64_t> budgets() const {
    std::vector<std::int64_t> out;
    for (const auto& r : rows) out.push_back(r.budget);
    return out;
  }

  std::string ToCsv() const {
    std::ostringstream out;
    out.precision(17);
    out << "budget,sampler,mse,std\n";
    for (const auto& r : rows) {
      out << r.budget << ",priority," << r.mse_priority << ",0\n";
      out << r.budget << ",montecarlo," << r.mse_montecarlo_mean << "," << r.mse_montecarlo_std
          << "\n";
    }
    return out.str();
  }

  nlohmann::json ToJson() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows) {
      rows_json.push_back({{"budget", r.budget},
                           {"mse_priority", r.mse_priority},
                           {"mse_montecarlo_mean", r.mse_montecarlo_mean},
                           {"mse_montecarlo_std", r.mse_montecarlo_std},
                           {"mse_montecarlo_runs", r.mse_montecarlo_runs}});
    }
    return {{"num_features", num_features}, {"runs", runs},        {"seed", seed},
            {"budgets", budgets()},         {"rows", rows_json},   {"warnings", warnings},
            {"exact_phi", exact_phi}};
  }
};

inline std::vector<std::int64_t> DefaultErrorBudgets(int num_features) {
  if (num_features < 4) throw ConfigError("default error budgets need M >= 4");
  return {std::int64_t{1} << (num_features - 1), std::int64_t{1} << (num_features - 2),
          std::int64_t{1} << (num_features - 3)};
}

// MSE against exact Kernel SHAP for priority (one run) and Monte Carlo
// (`runs` runs seeded seed + run index). Budgets larger than the pool are
// skipped with a warning; a budget equal to the pool is kept and flagged.
inline ErrorReport SamplingErrorExperiment(const Game& game, int num_features,
                                           const SamplingErrorOptions& options) {
  if (options.runs < 1) throw ConfigError("runs must be >= 1");
  if (num_features < 2 || num_features > kMaxExactFeatures) {
    throw ConfigError("sampling error experiment needs 2 <= M <= " +
                      std::to_string(kMaxExactFeatures));
  }
  const std::vector<std::int64_t> budgets =
      options.budgets.empty() ? DefaultErrorBudgets(num_features) : options.budgets;
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (budgets[i] < 1) throw ConfigError("budgets must be positive");
    if (i > 0 && budgets[i] >= budgets[i - 1]) {
      throw ConfigError("budgets must be strictly decreasing");
    }
  }

  ErrorReport report;
  report.num_features = num_features;
  report.runs = options.runs;
  report.seed = options.seed;

  ExplainOptions exact;
  exact.threads = options.threads;
  report.exact_phi = Explain(game, num_features, exact).phi;

  const auto pool = static_cast<std::int64_t>(ProperCoalitionCount(num_features));
  for (std::int64_t budget : budgets) {
    if (budget > pool) {
      report.warnings.push_back("budget " + std::to_string(budget) + " exceeds the pool of " +
                                std::to_string(pool) + " coalitions; skipped");
      continue;
    }
    if (budget == pool) {
      report.warnings.push_back("budget " + std::to_string(budget) +
                                " equals the pool; sampling is exact");
    }
    BudgetError row;
    row.budget = budget;
    ExplainOptions priority;
    priority.sampler = Sampler::kPriority;
    priority.budget = budget;
    priority.threads = options.threads;
    row.mse_priority = MeanSquaredError(Explain(game, num_features, priority).phi,
                                        report.exact_phi);
    for (int run = 0; run < options.runs; ++run) {
      ExplainOptions mc;
      mc.sampler = Sampler::kMonteCarlo;
      mc.budget = budget;
      mc.seed = options.seed + static_cast<std::uint64_t>(run);
      mc.threads = options.threads;
      row.mse_montecarlo_runs.push_back(
          MeanSquaredError(Explain(game, num_features, mc).phi, report.exact_phi));
    }
    const double n = static_cast<double>(row.mse_montecarlo_runs.size());
    row.mse_montecarlo_mean =
        std::accumulate(row.mse_montecarlo_runs.begin(), row.mse_montecarlo_runs.end(), 0.0) / n;
    double var = 0.0;
    for (double v : row.mse_montecarlo_runs) {
      var += (v - row.mse_montecarlo_mean) * (v - row.mse_montecarlo_mean);
    }
    row.mse_montecarlo_std = std::sqrt(var / n);
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace semshap
