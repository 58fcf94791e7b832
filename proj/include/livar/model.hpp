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

#ifndef LIVAR_MODEL_HPP_
#define LIVAR_MODEL_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "livar/data.hpp"
#include "livar/lora.hpp"
#include "livar/matrix.hpp"
#include "livar/rng.hpp"

namespace livar {

/// Frozen multi-layer backbone with one optional LoRA adapter per layer.
/// Layer l maps dims[l] -> dims[l+1] with weight frozen[l] of shape
/// dims[l+1] x dims[l]; tanh follows every layer except the last. Only
/// adapters train; the frozen weights never change during local training.
struct ToyBackbone {
  std::vector<std::size_t> dims;      // d_0 .. d_L
  std::vector<Matrix> frozen;         // L weights
  std::vector<LoraAdapter> adapters;  // L adapters, or empty for frozen-only

  std::size_t num_layers() const { return frozen.size(); }
  std::size_t feature_dim() const { return dims.back(); }
};

/// Per-class linear head: row c of `weights` is the class-c head.
struct ClassifierHead {
  Matrix weights;            // C x feature_dim
  std::vector<double> bias;  // C

  int num_classes() const { return static_cast<int>(weights.rows()); }
};

/// Per-class mean feature variance over correctly classified samples.
/// sigma[c] is 0 whenever fewer than 2 such samples exist.
struct ClassVarianceStats {
  std::vector<double> sigma;
  std::vector<int> correct_counts;
};

/// Frozen weights drawn N(0, 1/sqrt(fan_in)) entrywise.
std::vector<Matrix> random_frozen_weights(std::span<const std::size_t> dims, Rng& rng);

/// One fresh adapter per layer, drawn sequentially from `rng`.
std::vector<LoraAdapter> fresh_adapters(std::span<const std::size_t> dims, int rank,
                                        Rng& rng);

ClassifierHead make_zero_head(int num_classes, std::size_t feature_dim);

struct ForwardResult {
  Matrix features;  // n x feature_dim, pre-logit activations
  Matrix logits;    // n x C
};

/// Applies (W^l + B^l A^l) per layer, tanh between layers, then the head.
ForwardResult forward(const ToyBackbone& backbone, const ClassifierHead& head,
                      const Matrix& x);

struct Gradients {
  std::vector<Matrix> a;     // per layer, shape of adapter a
  std::vector<Matrix> b;     // per layer, shape of adapter b
  Matrix head;               // C x feature_dim
  std::vector<double> bias;  // C
};

struct LossAndGrads {
  double loss = 0.0;
  Gradients grads;
};

/// Mean softmax cross-entropy over the batch plus gradients for every
/// adapter factor, the head and the bias, via manual backpropagation.
/// No gradients are produced for the frozen weights.
LossAndGrads loss_and_grads(const ToyBackbone& backbone, const ClassifierHead& head,
                            const Matrix& x, std::span<const int> labels);

/// For each class c: mean over feature dimensions of the per-dimension
/// population variance of pre-logit features, restricted to samples with
/// true label c that the model also predicts as c. Classes with fewer than
/// 2 such samples get sigma 0.
ClassVarianceStats class_variances(const ToyBackbone& backbone,
                                   const ClassifierHead& head, const Dataset& dataset);

/// Top-1 accuracy; argmax ties resolve to the lowest class index.
double accuracy(const ToyBackbone& backbone, const ClassifierHead& head,
                const Dataset& dataset);

/// Model snapshot: frozen weights plus head, for the "LVAR" binary format.
struct ModelSnapshot {
  std::vector<std::size_t> dims;
  std::vector<Matrix> frozen;
  Matrix head_weights;
  std::vector<double> bias;
};

// Little-endian layout: "LVAR", version u32, L u32, C u32, dims as u32[L+1],
// then each matrix (frozen layers, head weights, bias as 1 x C) as
// rows u32, cols u32, row-major f64 payload. Round-trips bit-exactly.
void save_snapshot(const std::filesystem::path& path, const ModelSnapshot& snapshot);
ModelSnapshot load_snapshot(const std::filesystem::path& path);

}  // namespace livar

#endif  // LIVAR_MODEL_HPP_
