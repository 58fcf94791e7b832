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

#ifndef LIVAR_NNLS_HPP_
#define LIVAR_NNLS_HPP_

#include <span>
#include <vector>

#include "livar/errors.hpp"
#include "livar/matrix.hpp"

namespace livar {

struct NnlsSolution {
  std::vector<double> coefficients;  // one per atom, all >= 0
  double residual_norm = 0.0;        // ||target - sum_m coeff_m * atom_m||_F
  int iterations = 0;
};

/// Thrown when the active-set loop exceeds its iteration cap; carries the
/// best iterate found so far.
class NnlsConvergenceError : public NumericError {
 public:
  NnlsConvergenceError(const std::string& what, NnlsSolution best)
      : NumericError(what), best_iterate(std::move(best)) {}

  NnlsSolution best_iterate;
};

/// Minimizes ||target - sum_m coeff_m * atom_m||_2 subject to coeff_m >= 0.
///
/// Lawson-Hanson active-set method on the Gram system of the flattened
/// (row-major) atoms. `tol` is the dual-feasibility threshold; `max_iter`
/// caps the outer iterations (0 means 10x the atom count).
///
/// Requires at least one atom; all atoms and the target must share one shape.
NnlsSolution nnls_solve(std::span<const Matrix> atoms, const Matrix& target,
                        double tol = 1e-10, int max_iter = 0);

}  // namespace livar

#endif  // LIVAR_NNLS_HPP_
