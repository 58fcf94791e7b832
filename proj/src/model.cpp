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

#include "livar/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "livar/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "snapshot format assumes a little-endian host");

namespace livar {

namespace {

// Effective layer weight W + BA; returns the frozen weight alone when the
// backbone carries no adapters.
Matrix effective_weight(const ToyBackbone& backbone, std::size_t layer) {
  if (backbone.adapters.empty()) {
    return backbone.frozen[layer];
  }
  Matrix w = backbone.frozen[layer];
  w += delta(backbone.adapters[layer]);
  return w;
}

void check_input(const ToyBackbone& backbone, const Matrix& x) {
  if (x.cols() != backbone.dims.front()) {
    throw DimensionError("forward: input width " + std::to_string(x.cols()) +
                         " does not match model input dim " +
                         std::to_string(backbone.dims.front()));
  }
}

std::size_t argmax_row(const Matrix& m, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < m.cols(); ++j) {
    if (m(row, j) > m(row, best)) {
      best = j;
    }
  }
  return best;
}

}  // namespace

std::vector<Matrix> random_frozen_weights(std::span<const std::size_t> dims, Rng& rng) {
  if (dims.size() < 2) {
    throw std::invalid_argument("random_frozen_weights: need at least 2 dims");
  }
  std::vector<Matrix> weights;
  weights.reserve(dims.size() - 1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    Matrix w(dims[l + 1], dims[l]);
    for (double& v : w.data()) {
      v = scale * rng.normal();
    }
    weights.push_back(std::move(w));
  }
  return weights;
}

std::vector<LoraAdapter> fresh_adapters(std::span<const std::size_t> dims, int rank,
                                        Rng& rng) {
  std::vector<LoraAdapter> adapters;
  adapters.reserve(dims.size() - 1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    adapters.push_back(init_adapter(dims[l + 1], dims[l], rank, rng));
  }
  return adapters;
}

ClassifierHead make_zero_head(int num_classes, std::size_t feature_dim) {
  if (num_classes < 2) {
    throw std::invalid_argument("make_zero_head: need at least 2 classes");
  }
  return ClassifierHead{Matrix(static_cast<std::size_t>(num_classes), feature_dim),
                        std::vector<double>(static_cast<std::size_t>(num_classes), 0.0)};
}

ForwardResult forward(const ToyBackbone& backbone, const ClassifierHead& head,
                      const Matrix& x) {
  check_input(backbone, x);
  Matrix h = x;
  const std::size_t num_layers = backbone.num_layers();
  for (std::size_t l = 0; l < num_layers; ++l) {
    h = matmul(h, transpose(effective_weight(backbone, l)));
    if (l + 1 < num_layers) {
      for (double& v : h.data()) {
        v = std::tanh(v);
      }
    }
  }
  Matrix logits = matmul(h, transpose(head.weights));
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      logits(i, j) += head.bias[j];
    }
  }
  return ForwardResult{std::move(h), std::move(logits)};
}

LossAndGrads loss_and_grads(const ToyBackbone& backbone, const ClassifierHead& head,
                            const Matrix& x, std::span<const int> labels) {
  check_input(backbone, x);
  if (labels.empty() || x.rows() == 0) {
    throw std::invalid_argument("loss_and_grads: empty batch");
  }
  if (labels.size() != x.rows()) {
    throw DimensionError("loss_and_grads: " + std::to_string(x.rows()) +
                         " rows vs " + std::to_string(labels.size()) + " labels");
  }
  const int num_classes = head.num_classes();
  for (int label : labels) {
    if (label < 0 || label >= num_classes) {
      throw std::invalid_argument("loss_and_grads: label " + std::to_string(label) +
                                  " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  if (backbone.adapters.size() != backbone.num_layers()) {
    throw std::invalid_argument("loss_and_grads: backbone has no adapters to train");
  }

  const std::size_t num_layers = backbone.num_layers();
  const std::size_t n = x.rows();

  // Forward pass, keeping per-layer activations and effective weights.
  std::vector<Matrix> activations;  // a_0 = x, ..., a_L = features
  activations.reserve(num_layers + 1);
  activations.push_back(x);
  std::vector<Matrix> weights;
  weights.reserve(num_layers);
  for (std::size_t l = 0; l < num_layers; ++l) {
    weights.push_back(effective_weight(backbone, l));
    Matrix h = matmul(activations.back(), transpose(weights[l]));
    if (l + 1 < num_layers) {
      for (double& v : h.data()) {
        v = std::tanh(v);
      }
    }
    activations.push_back(std::move(h));
  }
  const Matrix& features = activations.back();
  Matrix logits = matmul(features, transpose(head.weights));
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < num_classes; ++j) {
      logits(i, static_cast<std::size_t>(j)) += head.bias[static_cast<std::size_t>(j)];
    }
  }

  // Stable softmax cross-entropy; dlogits = (softmax - onehot)/n.
  double loss = 0.0;
  Matrix dlogits(n, static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < n; ++i) {
    double row_max = logits(i, 0);
    for (int j = 1; j < num_classes; ++j) {
      row_max = std::max(row_max, logits(i, static_cast<std::size_t>(j)));
    }
    double sum_exp = 0.0;
    for (int j = 0; j < num_classes; ++j) {
      sum_exp += std::exp(logits(i, static_cast<std::size_t>(j)) - row_max);
    }
    const double log_z = row_max + std::log(sum_exp);
    loss += log_z - logits(i, static_cast<std::size_t>(labels[i]));
    for (int j = 0; j < num_classes; ++j) {
      const double p = std::exp(logits(i, static_cast<std::size_t>(j)) - log_z);
      dlogits(i, static_cast<std::size_t>(j)) =
          (p - (j == labels[i] ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) {
    throw NumericError("loss_and_grads: non-finite loss");
  }

  Gradients grads;
  grads.head = matmul(transpose(dlogits), features);
  grads.bias.assign(static_cast<std::size_t>(num_classes), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < num_classes; ++j) {
      grads.bias[static_cast<std::size_t>(j)] += dlogits(i, static_cast<std::size_t>(j));
    }
  }

  grads.a.resize(num_layers);
  grads.b.resize(num_layers);
  Matrix d_act = matmul(dlogits, head.weights);  // gradient wrt a_L
  for (std::size_t l = num_layers; l-- > 0;) {
    Matrix d_pre = std::move(d_act);
    if (l + 1 < num_layers) {
      // Backward through tanh: a_{l+1} = tanh(pre), so d_pre = d_act * (1 - a^2).
      const Matrix& act = activations[l + 1];
      for (std::size_t i = 0; i < d_pre.rows(); ++i) {
        for (std::size_t j = 0; j < d_pre.cols(); ++j) {
          d_pre(i, j) *= 1.0 - act(i, j) * act(i, j);
        }
      }
    }
    Matrix d_weight = matmul(transpose(d_pre), activations[l]);
    const LoraAdapter& adapter = backbone.adapters[l];
    grads.b[l] = matmul(d_weight, transpose(adapter.a));
    grads.a[l] = matmul(transpose(adapter.b), d_weight);
    if (l > 0) {
      d_act = matmul(d_pre, weights[l]);
    }
  }

  return LossAndGrads{loss, std::move(grads)};
}

ClassVarianceStats class_variances(const ToyBackbone& backbone,
                                   const ClassifierHead& head, const Dataset& dataset) {
  if (dataset.size() == 0) {
    throw std::invalid_argument("class_variances: empty dataset");
  }
  const int num_classes = head.num_classes();
  ForwardResult out = forward(backbone, head, dataset.features);
  const std::size_t feat_dim = out.features.cols();

  std::vector<std::vector<std::size_t>> correct_rows(
      static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const int label = dataset.labels[i];
    if (argmax_row(out.logits, i) == static_cast<std::size_t>(label)) {
      correct_rows[static_cast<std::size_t>(label)].push_back(i);
    }
  }

  ClassVarianceStats stats;
  stats.sigma.assign(static_cast<std::size_t>(num_classes), 0.0);
  stats.correct_counts.assign(static_cast<std::size_t>(num_classes), 0);
  for (int c = 0; c < num_classes; ++c) {
    const auto& rows = correct_rows[static_cast<std::size_t>(c)];
    stats.correct_counts[static_cast<std::size_t>(c)] = static_cast<int>(rows.size());
    if (rows.size() < 2) {
      continue;
    }
    // Per-dimension population variance, then the mean across dimensions.
    double var_sum = 0.0;
    for (std::size_t d = 0; d < feat_dim; ++d) {
      double mu = 0.0;
      for (std::size_t r : rows) {
        mu += out.features(r, d);
      }
      mu /= static_cast<double>(rows.size());
      double ss = 0.0;
      for (std::size_t r : rows) {
        const double dv = out.features(r, d) - mu;
        ss += dv * dv;
      }
      var_sum += ss / static_cast<double>(rows.size());
    }
    stats.sigma[static_cast<std::size_t>(c)] = var_sum / static_cast<double>(feat_dim);
  }
  return stats;
}

double accuracy(const ToyBackbone& backbone, const ClassifierHead& head,
                const Dataset& dataset) {
  if (dataset.size() == 0) {
    throw std::invalid_argument("accuracy: empty dataset");
  }
  ForwardResult out = forward(backbone, head, dataset.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (argmax_row(out.logits, i) == static_cast<std::size_t>(dataset.labels[i])) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

namespace {

constexpr char kMagic[4] = {'L', 'V', 'A', 'R'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_matrix(std::ofstream& out, const Matrix& m) {
  write_u32(out, static_cast<std::uint32_t>(m.rows()));
  write_u32(out, static_cast<std::uint32_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data().data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Matrix read_matrix(std::ifstream& in, const std::string& path) {
  const std::uint32_t rows = read_u32(in);
  const std::uint32_t cols = read_u32(in);
  if (!in || rows == 0 || cols == 0) {
    throw std::runtime_error("load_snapshot: corrupt matrix header in " + path);
  }
  std::vector<double> data(static_cast<std::size_t>(rows) * cols);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!in) {
    throw std::runtime_error("load_snapshot: truncated matrix payload in " + path);
  }
  return Matrix(rows, cols, std::move(data));
}

}  // namespace

void save_snapshot(const std::filesystem::path& path, const ModelSnapshot& snapshot) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("save_snapshot: cannot open " + path.string());
  }
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(snapshot.frozen.size()));
  write_u32(out, static_cast<std::uint32_t>(snapshot.head_weights.rows()));
  for (std::size_t d : snapshot.dims) {
    write_u32(out, static_cast<std::uint32_t>(d));
  }
  for (const Matrix& w : snapshot.frozen) {
    write_matrix(out, w);
  }
  write_matrix(out, snapshot.head_weights);
  write_matrix(out, Matrix(1, snapshot.bias.size(), snapshot.bias));
}

ModelSnapshot load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("load_snapshot: cannot open " + path.string());
  }
  char magic[4] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("load_snapshot: bad magic in " + path.string());
  }
  const std::uint32_t version = read_u32(in);
  if (version != kVersion) {
    throw std::runtime_error("load_snapshot: unsupported version " +
                             std::to_string(version) + " in " + path.string());
  }
  const std::uint32_t num_layers = read_u32(in);
  const std::uint32_t num_classes = read_u32(in);
  if (!in || num_layers == 0 || num_classes < 2) {
    throw std::runtime_error("load_snapshot: corrupt header in " + path.string());
  }
  ModelSnapshot snapshot;
  snapshot.dims.resize(num_layers + 1);
  for (std::size_t i = 0; i <= num_layers; ++i) {
    snapshot.dims[i] = read_u32(in);
  }
  for (std::size_t l = 0; l < num_layers; ++l) {
    Matrix w = read_matrix(in, path.string());
    if (w.rows() != snapshot.dims[l + 1] || w.cols() != snapshot.dims[l]) {
      throw std::runtime_error("load_snapshot: layer shape mismatch in " +
                               path.string());
    }
    snapshot.frozen.push_back(std::move(w));
  }
  snapshot.head_weights = read_matrix(in, path.string());
  if (snapshot.head_weights.rows() != num_classes ||
      snapshot.head_weights.cols() != snapshot.dims.back()) {
    throw std::runtime_error("load_snapshot: head shape mismatch in " + path.string());
  }
  Matrix bias = read_matrix(in, path.string());
  if (bias.rows() != 1 || bias.cols() != num_classes) {
    throw std::runtime_error("load_snapshot: bias shape mismatch in " + path.string());
  }
  snapshot.bias.assign(bias.data().begin(), bias.data().end());
  return snapshot;
}

}  // namespace livar
