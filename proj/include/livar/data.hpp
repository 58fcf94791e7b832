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

#ifndef LIVAR_DATA_HPP_
#define LIVAR_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "livar/matrix.hpp"

namespace livar {

struct Dataset {
  Matrix features;          // n x dim
  std::vector<int> labels;  // class indices in [0, num_classes)
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
};

/// Synthetic classification data: class c is an isotropic Gaussian with
/// standard deviation `spread` around a seeded standard-normal mean.
/// Rows are grouped by class; deterministic per seed.
Dataset make_blobs(int num_classes, int dim, int per_class, double spread,
                   std::uint64_t seed);

/// Splits by taking the first `first_count` occurrences of each class into
/// the first dataset and the remainder into the second. Used to carve a
/// train/test pair that shares class means.
std::pair<Dataset, Dataset> split_per_class(const Dataset& dataset, int first_count);

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices);

/// Disjoint cover of a dataset's indices across clients.
struct Partition {
  std::vector<std::vector<std::size_t>> client_indices;
  double beta = 0.0;
  std::uint64_t seed = 0;
};

/// Label-skewed partition: per class, proportions are drawn from
/// Dirichlet(beta * 1_M) and that class's samples assigned multinomially.
/// Resamples (up to 100 attempts) until every client is nonempty.
Partition dirichlet_partition(std::span<const int> labels, int num_clients,
                              double beta, std::uint64_t seed);

/// Heterogeneity statistic: max over clients of the max class-proportion
/// deviation from the global label distribution.
double partition_skew(std::span<const int> labels, int num_classes,
                      const Partition& partition);

// CSV round trip: header f0,...,f{dim-1},label; 17 significant digits.
void write_dataset_csv(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace livar

#endif  // LIVAR_DATA_HPP_
