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

#ifndef LIVAR_LORA_HPP_
#define LIVAR_LORA_HPP_

#include <cstdint>

#include "livar/matrix.hpp"
#include "livar/rng.hpp"

namespace livar {

/// Low-rank adapter pair attached to one frozen d x k layer: the layer's
/// trainable update is the product b * a of rank at most `rank`.
struct LoraAdapter {
  Matrix a;  // rank x k, Kaiming-uniform at init
  Matrix b;  // d x rank, zero at init
  int rank = 0;
};

/// Fresh adapter for a d x k layer: b is all zeros; a is uniform in
/// [-sqrt(6/k), +sqrt(6/k)] (Kaiming bound with fan_in = k, gain 1).
/// Requires 1 <= rank < min(d, k) and rank * (d + k) < d * k, so the
/// adapter is strictly smaller than the layer it adapts.
LoraAdapter init_adapter(std::size_t d, std::size_t k, int rank, Rng& rng);
LoraAdapter init_adapter(std::size_t d, std::size_t k, int rank, std::uint64_t seed);

/// Materialized layer update b * a (shape d x k).
Matrix delta(const LoraAdapter& adapter);

/// Which factor of the adapter an importance increment targets.
enum class Factor { kA, kB };

/// Per-layer running importance sums for the two adapter factors.
///
/// Each optimizer step adds -<grad, update> for the targeted factor, the
/// step's contribution to loss decrease. Under plain gradient descent the
/// update is -lr * grad, so both sums are non-negative and non-decreasing.
struct ImportanceRecord {
  double omega_a = 0.0;
  double omega_b = 0.0;
  int layer_index = 0;  // 1-based
};

/// Returns `record` with the targeted omega increased by
/// frobenius_dot(-grad, param_update). `param_update` is the applied
/// parameter change for one step; it must share grad's shape.
ImportanceRecord accumulate(ImportanceRecord record, Factor factor,
                            const Matrix& grad, const Matrix& param_update);

}  // namespace livar

#endif  // LIVAR_LORA_HPP_
