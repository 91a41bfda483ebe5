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

// Non-negative matrix factorization V ~ W H by Lee-Seung multiplicative
// updates on the Frobenius loss.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "semshap/error.hpp"

namespace semshap {

struct NmfOptions {
  int max_iter = 200;
  // Stop once (e_prev - e) / e_prev falls below this.
  double tol = 1e-4;
  std::uint64_t seed = 0;
};

struct NmfResult {
  Eigen::MatrixXd w;  // n x k
  Eigen::MatrixXd h;  // k x m
  // Frobenius error before the first update and after every iteration.
  std::vector<double> errors;
  int iterations = 0;

  double RelativeError(const Eigen::MatrixXd& v) const {
    const double norm = v.norm();
    return norm == 0.0 ? errors.back() : errors.back() / norm;
  }
};

namespace internal {

// x <- x * num / den elementwise; entries with a zero denominator are left as
// they are (their gradient is zero).
inline void MultiplicativeStep(Eigen::MatrixXd& x, const Eigen::MatrixXd& num,
                               const Eigen::MatrixXd& den) {
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (den(i, j) > 0.0) x(i, j) *= num(i, j) / den(i, j);
    }
  }
}

}  // namespace internal

inline NmfResult Nmf(const Eigen::MatrixXd& v, int k, const NmfOptions& options = {}) {
  const Eigen::Index n = v.rows();
  const Eigen::Index m = v.cols();
  if (n == 0 || m == 0) throw ConfigError("NMF input is empty");
  if (k < 1 || k > std::min(n, m)) {
    throw ConfigError("NMF rank " + std::to_string(k) + " outside [1, " +
                      std::to_string(std::min(n, m)) + "]");
  }
  if (!v.allFinite()) throw DomainError("NMF input has non-finite entries");
  if ((v.array() < 0.0).any()) {
    throw DomainError("NMF input has negative entries (min " +
                      std::to_string(v.minCoeff()) + ")");
  }
  if (options.max_iter < 0) throw ConfigError("NMF max_iter must be >= 0");

  // Uniform random start scaled so W H matches the mean of V.
  const double scale = std::sqrt(v.mean() / k);
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  NmfResult out;
  out.w.resize(n, k);
  out.h.resize(k, m);
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) out.w(i, j) = scale * unit(rng);
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < k; ++i) out.h(i, j) = scale * unit(rng);
  }

  auto error = [&] { return (v - out.w * out.h).norm(); };
  out.errors.push_back(error());
  for (int iter = 0; iter < options.max_iter; ++iter) {
    const Eigen::MatrixXd wt_v = out.w.transpose() * v;
    const Eigen::MatrixXd wt_w_h = (out.w.transpose() * out.w) * out.h;
    internal::MultiplicativeStep(out.h, wt_v, wt_w_h);

    const Eigen::MatrixXd v_ht = v * out.h.transpose();
    const Eigen::MatrixXd w_h_ht = out.w * (out.h * out.h.transpose());
    internal::MultiplicativeStep(out.w, v_ht, w_h_ht);

    const double previous = out.errors.back();
    const double current = error();
    out.errors.push_back(current);
    out.iterations = iter + 1;
    if (current == 0.0 || (previous - current) / previous < options.tol) break;
  }
  return out;
}

}  // namespace semshap
