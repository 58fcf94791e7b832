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

#include "livar/lora.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "livar/errors.hpp"

namespace livar {

LoraAdapter init_adapter(std::size_t d, std::size_t k, int rank, Rng& rng) {
  const std::size_t min_dim = std::min(d, k);
  if (rank < 1 || static_cast<std::size_t>(rank) >= min_dim) {
    throw std::invalid_argument("init_adapter: rank " + std::to_string(rank) +
                                " out of range [1, " + std::to_string(min_dim) +
                                ") for layer " + std::to_string(d) + "x" +
                                std::to_string(k));
  }
  // The adapter must actually shrink the parameter count.
  if (static_cast<std::size_t>(rank) * (d + k) >= d * k) {
    throw std::invalid_argument(
        "init_adapter: rank " + std::to_string(rank) + " gives " +
        std::to_string(static_cast<std::size_t>(rank) * (d + k)) +
        " adapter parameters, not fewer than the " + std::to_string(d * k) +
        " of the " + std::to_string(d) + "x" + std::to_string(k) + " layer");
  }
  const double bound = std::sqrt(6.0 / static_cast<double>(k));
  Matrix a(static_cast<std::size_t>(rank), k);
  for (double& v : a.data()) {
    v = rng.uniform(-bound, bound);
  }
  Matrix b(d, static_cast<std::size_t>(rank));
  return LoraAdapter{std::move(a), std::move(b), rank};
}

LoraAdapter init_adapter(std::size_t d, std::size_t k, int rank, std::uint64_t seed) {
  Rng rng(seed);
  return init_adapter(d, k, rank, rng);
}

Matrix delta(const LoraAdapter& adapter) { return matmul(adapter.b, adapter.a); }

ImportanceRecord accumulate(ImportanceRecord record, Factor factor,
                            const Matrix& grad, const Matrix& param_update) {
  if (!grad.same_shape(param_update)) {
    throw DimensionError("accumulate: grad " + grad.shape_str() +
                         " vs update " + param_update.shape_str());
  }
  const double increment = -frobenius_dot(grad, param_update);
  if (factor == Factor::kA) {
    record.omega_a += increment;
  } else {
    record.omega_b += increment;
  }
  return record;
}

}  // namespace livar
