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

#ifndef LIVAR_RNG_HPP_
#define LIVAR_RNG_HPP_

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace livar {

/// SplitMix64 finalizer (avalanching bit mix).
constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

/// Derives a sub-seed from a master seed and a path of stream identifiers
/// (e.g. {kStreamClient, round, client}). The derivation is a chained
/// splitmix mix, so sub-streams are independent of how many siblings exist:
/// client m's seed does not change when the client count changes.
std::uint64_t derive_seed(std::uint64_t master,
                          std::initializer_list<std::uint64_t> path);

// Stream identifiers for derive_seed paths, shared across modules so the
// same master seed never feeds two different consumers the same stream.
inline constexpr std::uint64_t kStreamData = 1;
inline constexpr std::uint64_t kStreamPartition = 2;
inline constexpr std::uint64_t kStreamModel = 3;
inline constexpr std::uint64_t kStreamClient = 4;
inline constexpr std::uint64_t kStreamCalibration = 5;

/// Deterministic random source with self-contained distributions.
///
/// Distributions are implemented here rather than via <random> so that a
/// given seed reproduces the same stream on every platform and standard
/// library. The engine is SplitMix64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  /// Uniform double in [0, 1).
  double uniform();

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi);

  /// Uniform double in (0, 1); safe as a log() argument.
  double uniform_open();

  /// Standard normal via the Marsaglia polar method.
  double normal();

  /// Gamma(shape, 1) via Marsaglia-Tsang squeeze; shape > 0.
  double gamma(double shape);

  /// Uniform index in [0, n); n must be positive.
  std::size_t index(std::size_t n);

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace livar

#endif  // LIVAR_RNG_HPP_
