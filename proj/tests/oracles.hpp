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

// Independent reference computations used only by tests.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace semshap::testing {

// v(S) for every S in [0, 2^M), S as an integer bitset.
using GameTable = std::vector<double>;

inline double Factorial(int n) {
  double out = 1.0;
  for (int i = 2; i <= n; ++i) out *= i;
  return out;
}

// phi_i = sum_{S subset N\{i}} |S|!(M-|S|-1)!/M! (v(S+i) - v(S)).
inline std::vector<double> BruteForceShapley(const GameTable& v, int m) {
  std::vector<double> phi(m, 0.0);
  const double m_fact = Factorial(m);
  for (int i = 0; i < m; ++i) {
    for (std::uint32_t s = 0; s < (1u << m); ++s) {
      if (s & (1u << i)) continue;
      const int size = __builtin_popcount(s);
      const double w = Factorial(size) * Factorial(m - size - 1) / m_fact;
      phi[i] += w * (v[s | (1u << i)] - v[s]);
    }
  }
  return phi;
}

inline GameTable RandomGame(int m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  GameTable v(std::size_t{1} << m);
  for (double& x : v) x = normal(rng);
  return v;
}

inline std::function<double(std::uint32_t)> TableLookup(const GameTable& v) {
  return [&v](std::uint32_t bits) { return v[bits]; };
}

}  // namespace semshap::testing
