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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "livar/errors.hpp"
#include "livar/model.hpp"
#include "livar/rng.hpp"

using livar::ClassifierHead;
using livar::Dataset;
using livar::DimensionError;
using livar::LoraAdapter;
using livar::Matrix;
using livar::ModelSnapshot;
using livar::Rng;
using livar::ToyBackbone;

namespace {

ToyBackbone random_backbone(std::vector<std::size_t> dims, int rank, Rng& rng) {
  ToyBackbone backbone;
  backbone.dims = std::move(dims);
  backbone.frozen = livar::random_frozen_weights(backbone.dims, rng);
  backbone.adapters = livar::fresh_adapters(backbone.dims, rank, rng);
  return backbone;
}

void randomize_adapters(ToyBackbone& backbone, Rng& rng) {
  for (auto& adapter : backbone.adapters) {
    for (double& v : adapter.a.data()) v = rng.uniform(-0.5, 0.5);
    for (double& v : adapter.b.data()) v = rng.uniform(-0.5, 0.5);
  }
}

/// Identity single-layer network over `dim` features with an identity head,
/// so logits equal the input exactly.
std::pair<ToyBackbone, ClassifierHead> identity_network(std::size_t dim) {
  ToyBackbone backbone;
  backbone.dims = {dim, dim};
  backbone.frozen = {Matrix::identity(dim)};
  ClassifierHead head;
  head.weights = Matrix::identity(dim);
  head.bias.assign(dim, 0.0);
  return {std::move(backbone), std::move(head)};
}

Matrix random_input(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix x(rows, cols);
  for (double& v : x.data()) v = rng.uniform(-1.0, 1.0);
  return x;
}

}  // namespace

TEST_CASE("fresh adapters leave the forward pass bit-identical") {
  Rng rng(31);
  ToyBackbone with = random_backbone({4, 6, 5}, 2, rng);
  ToyBackbone without = with;
  without.adapters.clear();
  ClassifierHead head;
  Rng head_rng(32);
  head.weights = random_input(3, 5, head_rng);
  head.bias = {0.1, -0.2, 0.3};
  const Matrix x = random_input(7, 4, head_rng);
  const auto a = livar::forward(with, head, x);
  const auto b = livar::forward(without, head, x);
  CHECK(a.features == b.features);
  CHECK(a.logits == b.logits);
}

TEST_CASE("identity network reproduces its input as logits") {
  auto [backbone, head] = identity_network(3);
  const Matrix x = Matrix::from_rows({{1.0, 2.0, 3.0}, {-0.5, 0.0, 4.0}});
  const auto result = livar::forward(backbone, head, x);
  CHECK(result.features == x);
  CHECK(result.logits == x);

  head.bias = {0.5, -1.0, 0.0};
  const auto biased = livar::forward(backbone, head, x);
  CHECK(biased.logits(0, 0) == 1.5);
  CHECK(biased.logits(0, 1) == 1.0);
  CHECK(biased.logits(1, 2) == 4.0);
}

TEST_CASE("forward obeys the shape contract") {
  Rng rng(5);
  const ToyBackbone backbone = random_backbone({5, 7, 4}, 2, rng);
  ClassifierHead head = livar::make_zero_head(6, 4);
  const Matrix x = random_input(3, 5, rng);
  const auto result = livar::forward(backbone, head, x);
  CHECK(result.features.rows() == 3);
  CHECK(result.features.cols() == 4);
  CHECK(result.logits.rows() == 3);
  CHECK(result.logits.cols() == 6);
  const Matrix bad = random_input(3, 4, rng);
  CHECK_THROWS_AS(livar::forward(backbone, head, bad), DimensionError);
}

TEST_CASE("a zero head yields the uniform loss ln(C)") {
  Rng rng(11);
  const ToyBackbone backbone = random_backbone({2, 5}, 1, rng);
  const ClassifierHead head = livar::make_zero_head(4, 5);
  const Matrix x = Matrix::from_rows({{0.3, -0.7}, {1.2, 0.4}});
  const std::vector<int> labels = {0, 1};
  const auto result = livar::loss_and_grads(backbone, head, x, labels);
  CHECK(std::abs(result.loss - std::log(4.0)) < 1e-12);
  // With uniform probabilities the bias gradient is mean(1/C - onehot).
  REQUIRE(result.grads.bias.size() == 4);
  CHECK(std::abs(result.grads.bias[0] - (-0.25)) < 1e-12);
  CHECK(std::abs(result.grads.bias[1] - (-0.25)) < 1e-12);
  CHECK(std::abs(result.grads.bias[2] - 0.25) < 1e-12);
  CHECK(std::abs(result.grads.bias[3] - 0.25) < 1e-12);
}

TEST_CASE("loss_and_grads validates batch and labels") {
  Rng rng(13);
  const ToyBackbone backbone = random_backbone({2, 5}, 1, rng);
  const ClassifierHead head = livar::make_zero_head(3, 5);
  const Matrix x = Matrix::from_rows({{0.1, 0.2}});
  CHECK_THROWS_AS(livar::loss_and_grads(backbone, head, x, std::vector<int>{}),
                  std::invalid_argument);
  CHECK_THROWS_AS(livar::loss_and_grads(backbone, head, x, std::vector<int>{3}),
                  std::invalid_argument);
  CHECK_THROWS_AS(livar::loss_and_grads(backbone, head, x, std::vector<int>{-1}),
                  std::invalid_argument);
  ToyBackbone frozen_only = backbone;
  frozen_only.adapters.clear();
  CHECK_THROWS_AS(
      livar::loss_and_grads(frozen_only, head, x, std::vector<int>{0}),
      std::invalid_argument);
}

TEST_CASE("analytic gradients match central finite differences") {
  for (std::uint64_t seed : {17u, 18u}) {
    Rng rng(seed);
    ToyBackbone backbone = random_backbone({5, 6, 4}, 2, rng);
    randomize_adapters(backbone, rng);
    ClassifierHead head;
    head.weights = random_input(3, 4, rng);
    head.bias = {rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                 rng.uniform(-0.3, 0.3)};
    const Matrix x = random_input(4, 5, rng);
    const std::vector<int> labels = {0, 1, 2, 1};

    const auto analytic = livar::loss_and_grads(backbone, head, x, labels);

    // Parameter slots paired with their analytic gradients.
    std::vector<double*> params;
    std::vector<double> grads;
    for (std::size_t l = 0; l < backbone.num_layers(); ++l) {
      auto a_span = backbone.adapters[l].a.data();
      auto ga = analytic.grads.a[l].data();
      for (std::size_t i = 0; i < a_span.size(); ++i) {
        params.push_back(&a_span[i]);
        grads.push_back(ga[i]);
      }
      auto b_span = backbone.adapters[l].b.data();
      auto gb = analytic.grads.b[l].data();
      for (std::size_t i = 0; i < b_span.size(); ++i) {
        params.push_back(&b_span[i]);
        grads.push_back(gb[i]);
      }
    }
    auto head_span = head.weights.data();
    auto gh = analytic.grads.head.data();
    for (std::size_t i = 0; i < head_span.size(); ++i) {
      params.push_back(&head_span[i]);
      grads.push_back(gh[i]);
    }
    for (std::size_t c = 0; c < head.bias.size(); ++c) {
      params.push_back(&head.bias[c]);
      grads.push_back(analytic.grads.bias[c]);
    }

    const double eps = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double saved = *params[i];
      *params[i] = saved + eps;
      const double up = livar::loss_and_grads(backbone, head, x, labels).loss;
      *params[i] = saved - eps;
      const double down = livar::loss_and_grads(backbone, head, x, labels).loss;
      *params[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double err =
          std::abs(fd - grads[i]) / std::max(1.0, std::abs(grads[i]));
      worst = std::max(worst, err);
    }
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("duplicating the batch leaves loss and gradients unchanged") {
  Rng rng(23);
  ToyBackbone backbone = random_backbone({4, 5, 3}, 1, rng);
  randomize_adapters(backbone, rng);
  ClassifierHead head;
  head.weights = random_input(3, 3, rng);
  head.bias = {0.0, 0.1, -0.1};
  const Matrix x = random_input(2, 4, rng);
  const std::vector<int> labels = {0, 2};

  Matrix doubled(4, 4);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      doubled(i, j) = x(i % 2, j);
    }
  }
  const std::vector<int> doubled_labels = {0, 2, 0, 2};

  const auto one = livar::loss_and_grads(backbone, head, x, labels);
  const auto two = livar::loss_and_grads(backbone, head, doubled, doubled_labels);
  CHECK(std::abs(one.loss - two.loss) < 1e-12);
  for (std::size_t l = 0; l < backbone.num_layers(); ++l) {
    CHECK(frobenius_norm(one.grads.a[l] - two.grads.a[l]) < 1e-12);
    CHECK(frobenius_norm(one.grads.b[l] - two.grads.b[l]) < 1e-12);
  }
  CHECK(frobenius_norm(one.grads.head - two.grads.head) < 1e-12);
}

TEST_CASE("class variance statistics match hand-computed values") {
  auto [backbone, head] = identity_network(2);
  Dataset dataset;
  dataset.features = Matrix::from_rows(
      {{0.0, 0.0}, {2.0, 0.0}, {0.0, 5.0}, {0.0, 5.0}});
  dataset.labels = {0, 0, 1, 1};
  dataset.num_classes = 2;
  const auto stats = livar::class_variances(backbone, head, dataset);
  REQUIRE(stats.sigma.size() == 2);
  // Class 0 features are (0,0) and (2,0): variances (1, 0), mean 0.5.
  CHECK(stats.sigma[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(stats.sigma[1] == 0.0);
  CHECK(stats.correct_counts == std::vector<int>{2, 2});
}

TEST_CASE("classes without two correct samples get zero variance") {
  auto [backbone, head] = identity_network(2);
  Dataset dataset;
  // Both label-1 samples are predicted as class 0, so no class has
  // two correctly classified members.
  dataset.features = Matrix::from_rows({{5.0, 0.0}, {7.0, 1.0}, {0.0, 3.0}});
  dataset.labels = {1, 1, 1};
  dataset.num_classes = 2;
  const auto stats = livar::class_variances(backbone, head, dataset);
  CHECK(stats.sigma == std::vector<double>{0.0, 0.0});
  CHECK(stats.correct_counts == std::vector<int>{0, 1});
  CHECK_THROWS_AS(livar::class_variances(backbone, head, Dataset{}),
                  std::invalid_argument);
}

TEST_CASE("class variances ignore sample order") {
  auto [backbone, head] = identity_network(3);
  Rng rng(41);
  Dataset dataset;
  dataset.features = random_input(12, 3, rng);
  dataset.labels.clear();
  for (int i = 0; i < 12; ++i) dataset.labels.push_back(i % 3);
  dataset.num_classes = 3;

  Dataset reversed;
  reversed.num_classes = 3;
  reversed.features = Matrix(12, 3);
  for (std::size_t i = 0; i < 12; ++i) {
    reversed.labels.push_back(dataset.labels[11 - i]);
    for (std::size_t j = 0; j < 3; ++j) {
      reversed.features(i, j) = dataset.features(11 - i, j);
    }
  }
  const auto a = livar::class_variances(backbone, head, dataset);
  const auto b = livar::class_variances(backbone, head, reversed);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(std::abs(a.sigma[c] - b.sigma[c]) < 1e-12);
    CHECK(a.correct_counts[c] == b.correct_counts[c]);
  }
}

TEST_CASE("accuracy counts argmax hits with ties to the lowest class") {
  auto [backbone, head] = identity_network(2);
  Dataset dataset;
  dataset.features = Matrix::from_rows({{3.0, 1.0}, {0.0, 2.0}, {1.0, 1.0}});
  dataset.labels = {0, 1, 0};
  dataset.num_classes = 2;
  CHECK(livar::accuracy(backbone, head, dataset) == 1.0);
  dataset.labels = {0, 1, 1};
  CHECK(livar::accuracy(backbone, head, dataset) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(livar::accuracy(backbone, head, Dataset{}),
                  std::invalid_argument);
}

TEST_CASE("model snapshots round-trip bit-exactly") {
  Rng rng(51);
  ModelSnapshot snapshot;
  snapshot.dims = {4, 6, 3};
  snapshot.frozen = {random_input(6, 4, rng), random_input(3, 6, rng)};
  snapshot.head_weights = random_input(5, 3, rng);
  snapshot.bias = {0.25, -1.5, 3.0, 0.0, 1e-300};

  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / "livar_test_model.bin";
  livar::save_snapshot(path, snapshot);
  const ModelSnapshot loaded = livar::load_snapshot(path);
  CHECK(loaded.dims == snapshot.dims);
  REQUIRE(loaded.frozen.size() == 2);
  CHECK(loaded.frozen[0] == snapshot.frozen[0]);
  CHECK(loaded.frozen[1] == snapshot.frozen[1]);
  CHECK(loaded.head_weights == snapshot.head_weights);
  CHECK(loaded.bias == snapshot.bias);
  std::filesystem::remove(path);
}

TEST_CASE("corrupt snapshots are rejected") {
  const std::filesystem::path dir = std::filesystem::temp_directory_path();
  const std::filesystem::path bad_magic = dir / "livar_test_bad_magic.bin";
  {
    std::ofstream out(bad_magic, std::ios::binary);
    out << "NOPE and then some bytes";
  }
  CHECK_THROWS_WITH_AS(livar::load_snapshot(bad_magic),
                       doctest::Contains("bad magic"), std::runtime_error);

  Rng rng(52);
  ModelSnapshot snapshot;
  snapshot.dims = {3, 4};
  snapshot.frozen = {random_input(4, 3, rng)};
  snapshot.head_weights = random_input(2, 4, rng);
  snapshot.bias = {0.0, 1.0};
  const std::filesystem::path truncated = dir / "livar_test_truncated.bin";
  livar::save_snapshot(truncated, snapshot);
  const auto full_size = std::filesystem::file_size(truncated);
  std::filesystem::resize_file(truncated, full_size / 2);
  CHECK_THROWS_AS(livar::load_snapshot(truncated), std::runtime_error);

  CHECK_THROWS_AS(livar::load_snapshot(dir / "livar_test_missing.bin"),
                  std::runtime_error);
  std::filesystem::remove(bad_magic);
  std::filesystem::remove(truncated);
}
