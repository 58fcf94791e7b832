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

#include "livar/nnls.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace livar {

namespace {

// Solves sym * x = rhs for a small symmetric system by Gaussian elimination
// with partial pivoting. `sym` is row-major n x n. If the system is singular
// a tiny ridge is added to the diagonal and the solve retried once.
std::vector<double> solve_symmetric(std::vector<double> sym, std::vector<double> rhs,
                                    std::size_t n) {
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    max_diag = std::max(max_diag, std::abs(sym[i * n + i]));
  }
  const double pivot_tol = 1e-12 * (1.0 + max_diag);

  for (int attempt = 0; attempt < 2; ++attempt) {
    std::vector<double> a = sym;
    std::vector<double> b = rhs;
    bool singular = false;
    for (std::size_t col = 0; col < n && !singular; ++col) {
      std::size_t pivot = col;
      for (std::size_t r = col + 1; r < n; ++r) {
        if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) {
          pivot = r;
        }
      }
      if (std::abs(a[pivot * n + col]) <= pivot_tol) {
        singular = true;
        break;
      }
      if (pivot != col) {
        for (std::size_t j = 0; j < n; ++j) {
          std::swap(a[pivot * n + j], a[col * n + j]);
        }
        std::swap(b[pivot], b[col]);
      }
      for (std::size_t r = col + 1; r < n; ++r) {
        const double f = a[r * n + col] / a[col * n + col];
        if (f == 0.0) {
          continue;
        }
        for (std::size_t j = col; j < n; ++j) {
          a[r * n + j] -= f * a[col * n + j];
        }
        b[r] -= f * b[col];
      }
    }
    if (!singular) {
      std::vector<double> x(n, 0.0);
      for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t j = i + 1; j < n; ++j) {
          s -= a[i * n + j] * x[j];
        }
        x[i] = s / a[i * n + i];
      }
      return x;
    }
    // Duplicate atoms make the Gram submatrix singular; regularize lightly.
    const double ridge = 1e-10 * (1.0 + max_diag);
    for (std::size_t i = 0; i < n; ++i) {
      sym[i * n + i] += ridge;
    }
  }
  throw NumericError("nnls_solve: singular passive-set system");
}

}  // namespace

NnlsSolution nnls_solve(std::span<const Matrix> atoms, const Matrix& target,
                        double tol, int max_iter) {
  if (atoms.empty()) {
    throw std::invalid_argument("nnls_solve: empty atom list");
  }
  const std::size_t m = atoms.size();
  for (const Matrix& atom : atoms) {
    if (!atom.same_shape(target)) {
      throw DimensionError("nnls_solve: atom shape " + atom.shape_str() +
                           " does not match target " + target.shape_str());
    }
  }
  if (max_iter <= 0) {
    max_iter = 10 * static_cast<int>(m);
  }

  // Gram matrix and correlation vector of the flattened atoms.
  std::vector<double> gram(m * m, 0.0);
  std::vector<double> corr(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    corr[i] = frobenius_dot(atoms[i], target);
    for (std::size_t j = i; j < m; ++j) {
      gram[i * m + j] = gram[j * m + i] = frobenius_dot(atoms[i], atoms[j]);
    }
  }

  std::vector<double> x(m, 0.0);
  std::vector<bool> passive(m, false);
  std::vector<double> dual(corr);  // dual = corr - gram * x; x starts at 0
  int iterations = 0;

  auto residual_of = [&](const std::vector<double>& coeffs) {
    Matrix r = target;
    for (std::size_t i = 0; i < m; ++i) {
      if (coeffs[i] != 0.0) {
        r.add_scaled(atoms[i], -coeffs[i]);
      }
    }
    return frobenius_norm(r);
  };

  for (;;) {
    // Dual feasibility: stop when no inactive atom has positive gradient.
    std::size_t best = m;
    double best_dual = tol;
    for (std::size_t i = 0; i < m; ++i) {
      if (!passive[i] && dual[i] > best_dual) {
        best_dual = dual[i];
        best = i;
      }
    }
    if (best == m) {
      break;
    }
    if (++iterations > max_iter) {
      NnlsSolution partial{x, residual_of(x), iterations - 1};
      throw NnlsConvergenceError(
          "nnls_solve: no convergence after " + std::to_string(max_iter) +
              " iterations",
          std::move(partial));
    }
    passive[best] = true;

    // Inner loop: restrict to the passive set, back off along the segment
    // towards the unconstrained solution until all passive coeffs are > 0.
    for (;;) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < m; ++i) {
        if (passive[i]) {
          idx.push_back(i);
        }
      }
      const std::size_t p = idx.size();
      std::vector<double> sub(p * p);
      std::vector<double> rhs(p);
      for (std::size_t a = 0; a < p; ++a) {
        rhs[a] = corr[idx[a]];
        for (std::size_t b = 0; b < p; ++b) {
          sub[a * p + b] = gram[idx[a] * m + idx[b]];
        }
      }
      std::vector<double> s = solve_symmetric(std::move(sub), std::move(rhs), p);

      bool feasible = true;
      for (double v : s) {
        if (v <= 0.0) {
          feasible = false;
          break;
        }
      }
      if (feasible) {
        std::fill(x.begin(), x.end(), 0.0);
        for (std::size_t a = 0; a < p; ++a) {
          x[idx[a]] = s[a];
        }
        break;
      }

      double alpha = std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < p; ++a) {
        if (s[a] <= 0.0) {
          const double step = x[idx[a]] / (x[idx[a]] - s[a]);
          alpha = std::min(alpha, step);
        }
      }
      for (std::size_t a = 0; a < p; ++a) {
        x[idx[a]] += alpha * (s[a] - x[idx[a]]);
      }
      for (std::size_t a = 0; a < p; ++a) {
        if (x[idx[a]] <= tol) {
          x[idx[a]] = 0.0;
          passive[idx[a]] = false;
        }
      }
    }

    for (std::size_t i = 0; i < m; ++i) {
      double g = corr[i];
      for (std::size_t j = 0; j < m; ++j) {
        if (x[j] != 0.0) {
          g -= gram[i * m + j] * x[j];
        }
      }
      dual[i] = g;
    }
  }

  const double res = residual_of(x);
  return NnlsSolution{std::move(x), res, iterations};
}

}  // namespace livar
