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

#ifndef LIVAR_FED_HPP_
#define LIVAR_FED_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "livar/data.hpp"
#include "livar/lora.hpp"
#include "livar/matrix.hpp"
#include "livar/model.hpp"

namespace livar {

/// Everything one client sends per round.
struct ClientUpdate {
  std::vector<Matrix> deltas;               // L materialized layer updates
  std::vector<ImportanceRecord> importance;  // L records
  ClassifierHead head;
  ClassVarianceStats variance_stats;
  std::size_t sample_count = 0;
};

/// 3x3 quantile-binned coefficient lookup used by the server to turn
/// importance percentiles into raw merging weights.
///
/// Bin conventions: the a axis splits at (t0, t1) into q < t0, t0 <= q <= t1,
/// q > t1, and the b axis likewise. Cells must be positive and non-decreasing
/// along the b axis within each a row.
struct GShapTable {
  std::array<double, 2> a_thresholds{25.0, 50.0};
  std::array<double, 2> b_thresholds{60.0, 80.0};
  std::array<std::array<double, 3>, 3> cells{};  // [a_bin][b_bin]
  double base_value = 0.0;  // documentation field, not used at merge time

  /// The shipped default coefficient table.
  static GShapTable default_table();

  /// Throws std::invalid_argument if any invariant is violated.
  void validate() const;

  int a_bin(double q) const;
  int b_bin(double q) const;
};

// JSON round trip: keys a_thresholds, b_thresholds, cells (3x3 row-major,
// a-bin major) and base_value.
GShapTable load_gshap_table(const std::filesystem::path& path);
void save_gshap_table(const std::filesystem::path& path, const GShapTable& table);

/// Per-layer merging weights: for every layer the client weights are
/// non-negative and sum to 1.
struct MergeCoefficients {
  std::size_t num_clients = 0;
  std::size_t num_layers = 0;
  std::vector<double> alpha;  // row-major [client][layer]

  double at(std::size_t client, std::size_t layer) const {
    return alpha[client * num_layers + layer];
  }
  double& at(std::size_t client, std::size_t layer) {
    return alpha[client * num_layers + layer];
  }
};

/// Global model state held by the server between rounds.
struct GlobalModel {
  std::vector<std::size_t> dims;
  std::vector<Matrix> frozen;
  ClassifierHead head;
};

GlobalModel init_global_model(std::span<const std::size_t> dims, int num_classes,
                              std::uint64_t seed);

/// Read-only view of the global model for evaluation (no adapters).
ToyBackbone frozen_backbone(const GlobalModel& model);

struct TrainOptions {
  int epochs = 5;
  double lr = 0.05;
  int batch_size = 16;
  int rank = 4;
  int max_steps = -1;  // optional step cap; -1 means full epochs
};

struct TrainTelemetry {
  double final_loss = 0.0;  // loss of the last optimized batch
  int steps = 0;
};

/// One client's local training pass: fresh adapters, SGD over `epochs`
/// passes with per-step importance accumulation, then variance statistics
/// on the client's own data. The global model is not modified.
ClientUpdate local_train(const GlobalModel& global_model, const Dataset& client_data,
                         const TrainOptions& options, std::uint64_t seed,
                         TrainTelemetry* telemetry = nullptr);

/// Per-layer merging coefficients from pooled importance percentiles:
/// Q_A/Q_B are mid-rank percentiles of each omega within the pooled
/// clients x layers population, the table is looked up per (m, l), and the
/// raw values are normalized to 1 within each layer.
MergeCoefficients compute_alphas(std::span<const ClientUpdate> updates,
                                 const GShapTable& table);

/// Layer-wise weighted combination of client deltas.
std::vector<Matrix> merge_backbone(std::span<const ClientUpdate> updates,
                                   const MergeCoefficients& coeffs);

/// Class-specific variance-weighted head aggregation: each class row (and
/// bias entry) is combined with weights sigma_m / sum_m sigma_m; classes
/// whose sigmas are all zero fall back to the unweighted mean.
ClassifierHead merge_heads(std::span<const ClientUpdate> updates);

std::vector<Matrix> fedavg_deltas(std::span<const ClientUpdate> updates);
ClassifierHead fedavg_head(std::span<const ClientUpdate> updates);

/// Sample-count-weighted average of deltas and heads.
std::pair<std::vector<Matrix>, ClassifierHead> fedavg_merge(
    std::span<const ClientUpdate> updates);

enum class Strategy { kLivar, kFedavg, kLivarAlphaOnly, kLivarSigmaOnly };

Strategy parse_strategy(const std::string& name);
std::string to_string(Strategy strategy);

struct MergeOutcome {
  std::vector<Matrix> deltas;
  ClassifierHead head;
  std::optional<MergeCoefficients> alphas;  // set for alpha-using strategies
};

/// Server-side aggregation for one round under the selected strategy.
MergeOutcome server_merge(std::span<const ClientUpdate> updates, Strategy strategy,
                          const GShapTable& table);

struct RoundOptions {
  TrainOptions train;
  GShapTable table = GShapTable::default_table();
  std::uint64_t master_seed = 0;
  bool parallel_clients = false;
  // When nonempty, overrides the derived per-client seeds (size M).
  std::vector<std::uint64_t> client_seed_override;
};

struct RoundMetrics {
  int round = 0;
  Strategy strategy = Strategy::kFedavg;
  double test_accuracy = 0.0;
  double mean_client_loss = 0.0;
  std::vector<double> client_losses;
  std::optional<MergeCoefficients> alphas;
  std::vector<std::vector<double>> sigmas;  // per client, per class
};

/// Executes one communication round: local training for every client
/// (serial or parallel; identical results either way), the selected server
/// merge, folding the merged deltas into the frozen weights, and
/// evaluation on `test_data`.
RoundMetrics run_round(GlobalModel& model, std::span<const Dataset> client_data,
                       const Dataset& test_data, Strategy strategy,
                       const RoundOptions& options, int round_index);

}  // namespace livar

#endif  // LIVAR_FED_HPP_
