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
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "livar/errors.hpp"
#include "livar/lora.hpp"
#include "livar/matrix.hpp"
#include "livar/rng.hpp"

using livar::Factor;
using livar::ImportanceRecord;
using livar::LoraAdapter;
using livar::Matrix;
using livar::Rng;
using livar::accumulate;
using livar::delta;
using livar::init_adapter;

namespace {

// 3x3 determinant, used as a numeric-rank probe: if every 3x3 minor of a
// matrix vanishes its rank is at most 2.
double det3(const Matrix& m, const std::size_t r[3], const std::size_t c[3]) {
  auto e = [&](int i, int j) { return m(r[i], c[j]); };
  return e(0, 0) * (e(1, 1) * e(2, 2) - e(1, 2) * e(2, 1)) -
         e(0, 1) * (e(1, 0) * e(2, 2) - e(1, 2) * e(2, 0)) +
         e(0, 2) * (e(1, 0) * e(2, 1) - e(1, 1) * e(2, 0));
}

}  // namespace

TEST_CASE("fresh adapters start with a zero delta") {
  const LoraAdapter adapter = init_adapter(8, 8, 2, 7);
  const Matrix d = delta(adapter);
  CHECK(d.rows() == 8);
  CHECK(d.cols() == 8);
  for (double v : d.data()) CHECK(v == 0.0);
}

TEST_CASE("equal seeds give bit-identical adapters") {
  const LoraAdapter x = init_adapter(8, 6, 2, 99);
  const LoraAdapter y = init_adapter(8, 6, 2, 99);
  CHECK(x.a == y.a);
  CHECK(x.b == y.b);
  const LoraAdapter z = init_adapter(8, 6, 2, 100);
  CHECK_FALSE(x.a == z.a);
}

TEST_CASE("initial entries respect the fan-in uniform bound") {
  // sqrt(6/8) = 0.8660...
  const double bound = std::sqrt(6.0 / 8.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const LoraAdapter adapter = init_adapter(8, 8, 2, seed);
    for (double v : adapter.a.data()) {
      CHECK(v >= -bound);
      CHECK(v <= bound);
      CHECK(std::abs(v) <= 0.866026);
    }
    for (double v : adapter.b.data()) CHECK(v == 0.0);
  }
}

TEST_CASE("rank bounds are enforced") {
  CHECK_THROWS_AS(init_adapter(8, 8, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(init_adapter(8, 8, 8, 1), std::invalid_argument);
  CHECK_THROWS_AS(init_adapter(4, 8, 4, 1), std::invalid_argument);
  // rank < min(d, k) alone is not enough: 3 * (4 + 4) >= 4 * 4.
  CHECK_THROWS_AS(init_adapter(4, 4, 3, 1), std::invalid_argument);
}

TEST_CASE("every constructed adapter shrinks the parameter count") {
  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 3 + rng.index(30);
    const std::size_t k = 3 + rng.index(30);
    const int rank = 1 + static_cast<int>(rng.index(std::min(d, k) - 1));
    try {
      const LoraAdapter adapter = init_adapter(d, k, rank, rng);
      CHECK(static_cast<std::size_t>(adapter.rank) * (d + k) < d * k);
    } catch (const std::invalid_argument&) {
      // Construction refused: the candidate rank saves no parameters.
      CHECK(static_cast<std::size_t>(rank) * (d + k) >= d * k);
    }
  }
}

TEST_CASE("delta hand oracle and shape contract") {
  const LoraAdapter adapter{Matrix::from_rows({{2.0, 3.0}}),
                            Matrix::from_rows({{1.0}, {1.0}}), 1};
  CHECK(delta(adapter) == Matrix::from_rows({{2.0, 3.0}, {2.0, 3.0}}));

  for (const int rank : {1, 2, 3}) {
    const LoraAdapter any = init_adapter(9, 7, rank, 5);
    const Matrix d = delta(any);
    CHECK(d.rows() == 9);
    CHECK(d.cols() == 7);
  }
}

TEST_CASE("delta has numeric rank at most the adapter rank") {
  Rng rng(66);
  // Rank 1: every 2x2 minor of the 3x4 delta vanishes.
  LoraAdapter r1 = init_adapter(3, 4, 1, rng);
  for (double& v : r1.b.data()) v = rng.uniform(-1.0, 1.0);
  const Matrix d1 = delta(r1);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      const double minor = d1(i, j) * d1(i + 1, j + 1) - d1(i, j + 1) * d1(i + 1, j);
      CHECK(std::abs(minor) < 1e-12);
    }
  }
  // Rank 2: every 3x3 minor of the 5x5 delta vanishes.
  LoraAdapter r2 = init_adapter(5, 5, 2, rng);
  for (double& v : r2.b.data()) v = rng.uniform(-1.0, 1.0);
  const Matrix d2 = delta(r2);
  const std::size_t triples[][3] = {{0, 1, 2}, {0, 2, 4}, {1, 3, 4}, {2, 3, 4}};
  for (const auto& rows : triples) {
    for (const auto& cols : triples) {
      CHECK(std::abs(det3(d2, rows, cols)) < 1e-12);
    }
  }
}

TEST_CASE("accumulate targets one factor with the descent sign") {
  ImportanceRecord record;
  record.layer_index = 2;

  // Zero update leaves the sums untouched.
  const Matrix grad = Matrix::from_rows({{2.0}});
  record = accumulate(record, Factor::kA, grad, Matrix(1, 1));
  CHECK(record.omega_a == 0.0);
  CHECK(record.omega_b == 0.0);

  // Plain SGD with lr 0.1 and squared gradient norm 4 adds 0.4.
  const Matrix update = grad * -0.1;
  record = accumulate(record, Factor::kA, grad, update);
  CHECK(record.omega_a == doctest::Approx(0.4));
  CHECK(record.omega_b == 0.0);

  record = accumulate(record, Factor::kB, grad, update);
  CHECK(record.omega_a == doctest::Approx(0.4));
  CHECK(record.omega_b == doctest::Approx(0.4));
  CHECK(record.layer_index == 2);

  // Running-sum linearity: two steps add their single-step increments.
  ImportanceRecord twice;
  twice = accumulate(twice, Factor::kA, grad, update);
  twice = accumulate(twice, Factor::kA, grad, update);
  CHECK(twice.omega_a == doctest::Approx(0.8));
}

TEST_CASE("accumulate rejects mismatched shapes") {
  ImportanceRecord record;
  CHECK_THROWS_AS(accumulate(record, Factor::kA, Matrix(2, 2), Matrix(2, 3)),
                  livar::DimensionError);
}

TEST_CASE("sgd-style updates keep the sums non-negative and non-decreasing") {
  Rng rng(77);
  ImportanceRecord record;
  double previous_a = 0.0;
  for (int step = 0; step < 200; ++step) {
    Matrix grad(3, 4);
    for (double& v : grad.data()) v = rng.normal();
    record = accumulate(record, Factor::kA, grad, grad * -0.05);
    CHECK(record.omega_a >= previous_a);
    previous_a = record.omega_a;
  }
  CHECK(record.omega_a > 0.0);
}
