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

#include <cmath>
#include <vector>

#include <doctest.h>

#include "livar/errors.hpp"
#include "livar/matrix.hpp"
#include "livar/nnls.hpp"
#include "livar/rng.hpp"
#include "support.hpp"

using livar::Matrix;
using livar::NnlsConvergenceError;
using livar::NnlsSolution;
using livar::Rng;
using livar::frobenius_norm;
using livar::nnls_solve;
using test_support::combination_residual;
using test_support::grid_search_best_residual;
using test_support::random_matrix;

TEST_CASE("orthogonal atoms are recovered exactly") {
  const Matrix a1 = Matrix::from_rows({{1.0, 0.0}, {0.0, 0.0}});
  const Matrix a2 = Matrix::from_rows({{0.0, 0.0}, {0.0, 1.0}});
  const Matrix target = a1 * 2.0 + a2 * 3.0;
  const std::vector<Matrix> atoms = {a1, a2};
  const NnlsSolution solution = nnls_solve(atoms, target);
  REQUIRE(solution.coefficients.size() == 2);
  CHECK(solution.coefficients[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(solution.coefficients[1] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(solution.residual_norm == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("anti-correlated target pins the coefficient at zero") {
  const Matrix v = Matrix::from_rows({{1.0, -2.0}, {0.5, 3.0}});
  const Matrix target = v * -1.0;
  const std::vector<Matrix> atoms = {v};
  const NnlsSolution solution = nnls_solve(atoms, target);
  CHECK(solution.coefficients[0] == 0.0);
  CHECK(solution.residual_norm == frobenius_norm(v));
  CHECK(solution.iterations == 0);
}

TEST_CASE("solver matches the exhaustive grid oracle") {
  Rng rng(101);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Matrix> atoms;
    for (int i = 0; i < 3; ++i) {
      atoms.push_back(random_matrix(2, 2, rng));
    }
    const Matrix target = random_matrix(2, 2, rng, -2.0, 2.0);
    const NnlsSolution solution = nnls_solve(atoms, target);
    const double oracle = grid_search_best_residual(atoms, target);
    // Optimality is one-sided: the solver may beat the finite grid but the
    // grid can never beat the true minimizer by more than its resolution.
    CHECK(solution.residual_norm <= oracle + 1e-3);
  }
}

TEST_CASE("planted non-negative combinations are recovered") {
  Rng rng(202);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 2 + rng.index(3);  // 2..4 atoms
    std::vector<Matrix> atoms;
    for (std::size_t i = 0; i < m; ++i) {
      atoms.push_back(random_matrix(2, 3, rng));
    }
    std::vector<double> plant(m);
    for (std::size_t i = 0; i < m; ++i) {
      plant[i] = (rng.uniform() < 0.25) ? 0.0 : rng.uniform(0.0, 2.0);
    }
    Matrix target(2, 3);
    for (std::size_t i = 0; i < m; ++i) {
      target.add_scaled(atoms[i], plant[i]);
    }
    const NnlsSolution solution = nnls_solve(atoms, target);
    for (std::size_t i = 0; i < m; ++i) {
      CHECK(std::abs(solution.coefficients[i] - plant[i]) < 1e-6);
    }
    CHECK(solution.residual_norm < 1e-6);
  }
}

TEST_CASE("coefficients are non-negative on arbitrary instances") {
  Rng rng(303);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng.index(4);
    std::vector<Matrix> atoms;
    for (std::size_t i = 0; i < m; ++i) {
      atoms.push_back(random_matrix(2, 2, rng));
    }
    const Matrix target = random_matrix(2, 2, rng, -3.0, 3.0);
    const NnlsSolution solution = nnls_solve(atoms, target);
    for (double c : solution.coefficients) {
      CHECK(c >= 0.0);
    }
    // Never worse than predicting zero.
    CHECK(solution.residual_norm <= frobenius_norm(target) + 1e-12);
    // The reported residual is the achieved objective.
    CHECK(solution.residual_norm ==
          doctest::Approx(combination_residual(atoms, target,
                                               solution.coefficients))
              .epsilon(1e-12));
  }
}

TEST_CASE("duplicate atoms do not break the solve") {
  Rng rng(404);
  const Matrix a = random_matrix(3, 3, rng);
  const std::vector<Matrix> atoms = {a, a, a};
  const Matrix target = a * 1.5;
  const NnlsSolution solution = nnls_solve(atoms, target);
  double total = 0.0;
  for (double c : solution.coefficients) {
    CHECK(c >= 0.0);
    total += c;
  }
  CHECK(total == doctest::Approx(1.5).epsilon(1e-6));
  CHECK(solution.residual_norm < 1e-6);
}

TEST_CASE("input validation") {
  const std::vector<Matrix> none;
  CHECK_THROWS_AS(nnls_solve(none, Matrix(2, 2)), std::invalid_argument);
  const std::vector<Matrix> mismatched = {Matrix(2, 2), Matrix(2, 3)};
  CHECK_THROWS_AS(nnls_solve(mismatched, Matrix(2, 2)), livar::DimensionError);
}

TEST_CASE("iteration cap raises an error carrying the best iterate") {
  const Matrix a1 = Matrix::from_rows({{1.0, 0.0}});
  const Matrix a2 = Matrix::from_rows({{0.0, 1.0}});
  const Matrix target = Matrix::from_rows({{1.0, 2.0}});
  const std::vector<Matrix> atoms = {a1, a2};
  try {
    nnls_solve(atoms, target, 1e-10, 1);
    FAIL("expected NnlsConvergenceError");
  } catch (const NnlsConvergenceError& e) {
    REQUIRE(e.best_iterate.coefficients.size() == 2);
    // One outer iteration fits only the better-correlated atom.
    CHECK(e.best_iterate.coefficients[1] == doctest::Approx(2.0));
    CHECK(e.best_iterate.coefficients[0] == 0.0);
    CHECK(e.best_iterate.residual_norm == doctest::Approx(1.0));
  }
  // With enough iterations the same instance solves cleanly.
  const NnlsSolution solution = nnls_solve(atoms, target);
  CHECK(solution.residual_norm < 1e-12);
}
