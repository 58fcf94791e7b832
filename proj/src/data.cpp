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

#include "livar/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "livar/errors.hpp"
#include "livar/rng.hpp"

namespace livar {

Dataset make_blobs(int num_classes, int dim, int per_class, double spread,
                   std::uint64_t seed) {
  if (num_classes < 2) {
    throw std::invalid_argument("make_blobs: num_classes must be >= 2");
  }
  if (per_class < 2) {
    throw std::invalid_argument("make_blobs: per_class must be >= 2");
  }
  if (dim < 1) {
    throw std::invalid_argument("make_blobs: dim must be >= 1");
  }
  if (spread < 0.0) {
    throw std::invalid_argument("make_blobs: spread must be >= 0");
  }
  Rng rng(seed);
  std::vector<std::vector<double>> means(static_cast<std::size_t>(num_classes));
  for (auto& mu : means) {
    mu.resize(static_cast<std::size_t>(dim));
    for (double& v : mu) {
      v = rng.normal();
    }
  }
  const std::size_t n = static_cast<std::size_t>(num_classes) *
                        static_cast<std::size_t>(per_class);
  std::vector<double> features;
  features.reserve(n * static_cast<std::size_t>(dim));
  std::vector<int> labels;
  labels.reserve(n);
  for (int c = 0; c < num_classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      for (int d = 0; d < dim; ++d) {
        features.push_back(means[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)] +
                           spread * rng.normal());
      }
      labels.push_back(c);
    }
  }
  return Dataset{Matrix(n, static_cast<std::size_t>(dim), std::move(features)),
                 std::move(labels), num_classes};
}

std::pair<Dataset, Dataset> split_per_class(const Dataset& dataset, int first_count) {
  std::vector<int> taken(static_cast<std::size_t>(dataset.num_classes), 0);
  std::vector<std::size_t> first_idx;
  std::vector<std::size_t> second_idx;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    int& t = taken[static_cast<std::size_t>(dataset.labels[i])];
    if (t < first_count) {
      first_idx.push_back(i);
      ++t;
    } else {
      second_idx.push_back(i);
    }
  }
  return {subset(dataset, first_idx), subset(dataset, second_idx)};
}

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices) {
  if (indices.empty()) {
    throw std::invalid_argument("subset: empty index list");
  }
  const std::size_t dim = dataset.features.cols();
  std::vector<double> features;
  features.reserve(indices.size() * dim);
  std::vector<int> labels;
  labels.reserve(indices.size());
  for (std::size_t idx : indices) {
    if (idx >= dataset.size()) {
      throw std::out_of_range("subset: index " + std::to_string(idx) +
                              " out of range for dataset of size " +
                              std::to_string(dataset.size()));
    }
    for (std::size_t d = 0; d < dim; ++d) {
      features.push_back(dataset.features(idx, d));
    }
    labels.push_back(dataset.labels[idx]);
  }
  return Dataset{Matrix(indices.size(), dim, std::move(features)), std::move(labels),
                 dataset.num_classes};
}

Partition dirichlet_partition(std::span<const int> labels, int num_clients,
                              double beta, std::uint64_t seed) {
  if (num_clients < 2) {
    throw std::invalid_argument("dirichlet_partition: need at least 2 clients");
  }
  if (!(beta > 0.0)) {
    throw std::invalid_argument("dirichlet_partition: beta must be positive");
  }
  if (labels.empty()) {
    throw std::invalid_argument("dirichlet_partition: empty label list");
  }
  int num_classes = 0;
  for (int label : labels) {
    num_classes = std::max(num_classes, label + 1);
  }
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }

  Rng rng(seed);
  const std::size_t m = static_cast<std::size_t>(num_clients);
  constexpr int kMaxAttempts = 100;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<std::vector<std::size_t>> clients(m);
    for (const auto& class_indices : by_class) {
      if (class_indices.empty()) {
        continue;
      }
      // Dirichlet(beta * 1_M) via normalized Gamma draws.
      std::vector<double> props(m);
      double total = 0.0;
      do {
        total = 0.0;
        for (double& p : props) {
          p = rng.gamma(beta);
          total += p;
        }
      } while (!(total > 0.0));
      for (double& p : props) {
        p /= total;
      }
      for (std::size_t idx : class_indices) {
        double u = rng.uniform();
        std::size_t client = m - 1;
        double cum = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          cum += props[j];
          if (u < cum) {
            client = j;
            break;
          }
        }
        clients[client].push_back(idx);
      }
    }
    const bool all_nonempty =
        std::all_of(clients.begin(), clients.end(),
                    [](const auto& c) { return !c.empty(); });
    if (all_nonempty) {
      return Partition{std::move(clients), beta, seed};
    }
  }
  throw std::runtime_error(
      "dirichlet_partition: could not produce nonempty clients after " +
      std::to_string(kMaxAttempts) +
      " attempts; increase the dataset size or beta");
}

double partition_skew(std::span<const int> labels, int num_classes,
                      const Partition& partition) {
  std::vector<double> global(static_cast<std::size_t>(num_classes), 0.0);
  for (int label : labels) {
    global[static_cast<std::size_t>(label)] += 1.0;
  }
  for (double& g : global) {
    g /= static_cast<double>(labels.size());
  }
  double worst = 0.0;
  for (const auto& indices : partition.client_indices) {
    std::vector<double> local(static_cast<std::size_t>(num_classes), 0.0);
    for (std::size_t idx : indices) {
      local[static_cast<std::size_t>(labels[idx])] += 1.0;
    }
    for (std::size_t c = 0; c < local.size(); ++c) {
      const double p = local[c] / static_cast<double>(indices.size());
      worst = std::max(worst, std::abs(p - global[c]));
    }
  }
  return worst;
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("write_dataset_csv: cannot open " + path.string());
  }
  const std::size_t dim = dataset.features.cols();
  for (std::size_t d = 0; d < dim; ++d) {
    out << "f" << d << ",";
  }
  out << "label\n";
  char buf[40];
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      std::snprintf(buf, sizeof(buf), "%.17g", dataset.features(i, d));
      out << buf << ",";
    }
    out << dataset.labels[i] << "\n";
  }
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("read_dataset_csv: cannot open " + path.string());
  }
  std::string header;
  if (!std::getline(in, header)) {
    throw std::runtime_error("read_dataset_csv: empty file " + path.string());
  }
  std::size_t dim = 0;
  {
    std::stringstream ss(header);
    std::string field;
    while (std::getline(ss, field, ',')) {
      if (field != "label") {
        ++dim;
      }
    }
  }
  std::vector<double> features;
  std::vector<int> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    std::stringstream ss(line);
    std::string field;
    for (std::size_t d = 0; d < dim; ++d) {
      if (!std::getline(ss, field, ',')) {
        throw std::runtime_error("read_dataset_csv: short row in " + path.string());
      }
      features.push_back(std::stod(field));
    }
    if (!std::getline(ss, field, ',')) {
      throw std::runtime_error("read_dataset_csv: missing label in " + path.string());
    }
    labels.push_back(std::stoi(field));
  }
  if (labels.empty()) {
    throw std::runtime_error("read_dataset_csv: no rows in " + path.string());
  }
  int num_classes = 0;
  for (int label : labels) {
    num_classes = std::max(num_classes, label + 1);
  }
  const std::size_t n = labels.size();
  return Dataset{Matrix(n, dim, std::move(features)), std::move(labels), num_classes};
}

}  // namespace livar
