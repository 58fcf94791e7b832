/*
 * Copyright 2026 The LIVAR Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef LIVAR_TESTS_SUPPORT_HPP_
#define LIVAR_TESTS_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "livar/matrix.hpp"
#include "livar/rng.hpp"

namespace test_support {

inline livar::Matrix random_matrix(std::size_t rows, std::size_t cols,
                                   livar::Rng& rng, double lo = -1.0,
                                   double hi = 1.0) {
  livar::Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      m(i, j) = rng.uniform(lo, hi);
    }
  }
  return m;
}

/// ||target - sum_i lambda_i * atom_i||_F for a given coefficient vector.
inline double combination_residual(std::span<const livar::Matrix> atoms,
                                   const livar::Matrix& target,
                                   std::span<const double> lambdas) {
  livar::Matrix r = target;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    r.add_scaled(atoms[i], -lambdas[i]);
  }
  return livar::frobenius_norm(r);
}

/// Exhaustive oracle: minimum of ||target - sum lambda_i atom_i||_F over the
/// grid lambda_i in {0, step, 2*step, ..., max}. Evaluates the quadratic form
/// incrementally, so 4 atoms at step 0.05 stay fast.
inline double grid_search_best_residual(std::span<const livar::Matrix> atoms,
                                        const livar::Matrix& target,
                                        double step = 0.05, double max = 3.0) {
  const std::size_t m = atoms.size();
  const int k_max = static_cast<int>(std::lround(max / step));
  std::vector<double> corr(m);
  std::vector<std::vector<double>> gram(m, std::vector<double>(m));
  for (std::size_t i = 0; i < m; ++i) {
    corr[i] = livar::frobenius_dot(atoms[i], target);
    for (std::size_t j = 0; j <= i; ++j) {
      gram[i][j] = gram[j][i] = livar::frobenius_dot(atoms[i], atoms[j]);
    }
  }

  double best = livar::frobenius_dot(target, target);
  std::vector<double> lambda(m, 0.0);
  std::function<void(std::size_t, double)> recurse = [&](std::size_t level,
                                                         double partial) {
    double lin = -2.0 * corr[level];
    for (std::size_t j = 0; j < level; ++j) {
      lin += 2.0 * lambda[j] * gram[level][j];
    }
    const double quad = gram[level][level];
    if (level + 1 == m) {
      for (int k = 0; k <= k_max; ++k) {
        const double v = k * step;
        const double objective = partial + v * lin + v * v * quad;
        best = std::min(best, objective);
      }
      return;
    }
    for (int k = 0; k <= k_max; ++k) {
      const double v = k * step;
      lambda[level] = v;
      recurse(level + 1, partial + v * lin + v * v * quad);
    }
    lambda[level] = 0.0;
  };
  recurse(0, livar::frobenius_dot(target, target));
  return std::sqrt(std::max(best, 0.0));
}

/// Boxed refinement oracle: minimum of the combination residual over the
/// grid of per-dimension values {max(0, center_i - halfwidth + t * pitch)}
/// with 2 * steps_per_side + 1 points per dimension. Used to certify a
/// solver's optimum locally at a much finer pitch than the global grid.
inline double grid_search_box_residual(std::span<const livar::Matrix> atoms,
                                       const livar::Matrix& target,
                                       std::span<const double> center,
                                       double halfwidth, int steps_per_side) {
  const std::size_t m = atoms.size();
  const double pitch = halfwidth / steps_per_side;
  std::vector<std::vector<double>> values(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (int t = -steps_per_side; t <= steps_per_side; ++t) {
      values[i].push_back(std::max(0.0, center[i] + t * pitch));
    }
  }

  std::vector<double> corr(m);
  std::vector<std::vector<double>> gram(m, std::vector<double>(m));
  for (std::size_t i = 0; i < m; ++i) {
    corr[i] = livar::frobenius_dot(atoms[i], target);
    for (std::size_t j = 0; j <= i; ++j) {
      gram[i][j] = gram[j][i] = livar::frobenius_dot(atoms[i], atoms[j]);
    }
  }

  double best = livar::frobenius_dot(target, target);
  std::vector<double> lambda(m, 0.0);
  std::function<void(std::size_t, double)> recurse = [&](std::size_t level,
                                                         double partial) {
    double lin = -2.0 * corr[level];
    for (std::size_t j = 0; j < level; ++j) {
      lin += 2.0 * lambda[j] * gram[level][j];
    }
    const double quad = gram[level][level];
    if (level + 1 == m) {
      for (double v : values[level]) {
        best = std::min(best, partial + v * lin + v * v * quad);
      }
      return;
    }
    for (double v : values[level]) {
      lambda[level] = v;
      recurse(level + 1, partial + v * lin + v * v * quad);
    }
    lambda[level] = 0.0;
  };
  recurse(0, livar::frobenius_dot(target, target));
  return std::sqrt(std::max(best, 0.0));
}

}  // namespace test_support

#endif  // LIVAR_TESTS_SUPPORT_HPP_
