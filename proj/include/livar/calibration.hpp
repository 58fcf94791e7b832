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

#ifndef LIVAR_CALIBRATION_HPP_
#define LIVAR_CALIBRATION_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "livar/fed.hpp"
#include "livar/lora.hpp"
#include "livar/matrix.hpp"

namespace livar {

/// Output of one proxy calibration pass: per-client, per-layer ground-truth
/// combination weights recovered by non-negative least squares against a
/// centrally trained reference, plus the signals that predict them.
struct CalibrationRun {
  std::vector<std::vector<double>> lambdas;            // [client][layer], >= 0
  std::vector<std::vector<ImportanceRecord>> omegas;   // [client][layer]
  std::vector<double> residuals;                       // per layer
  std::vector<Matrix> joint_deltas;                    // per layer
  std::vector<std::vector<Matrix>> client_deltas;      // [client][layer]

  std::size_t num_clients() const { return lambdas.size(); }
  std::size_t num_layers() const { return residuals.size(); }
};

struct ProxyConfig {
  int num_clients = 5;
  int num_classes = 10;
  int per_class = 40;
  double spread = 0.8;
  double beta = 0.5;
  std::vector<std::size_t> dims;  // d_0 .. d_L; d_0 is the data dimension
  TrainOptions train;
  std::uint64_t seed = 0;
  // Override for the centralized pass; tests use it to replay a client's
  // exact trajectory.
  std::optional<std::uint64_t> joint_seed;
};

/// Runs the calibration experiment: one federated round of `num_clients`
/// clients on a seeded blob dataset, plus a centralized model trained on
/// the pooled data with the same optimizer-step budget as the average
/// client. Per layer, the centralized delta is regressed onto the client
/// deltas under non-negativity to recover lambda.
CalibrationRun run_proxy(const ProxyConfig& config);

/// Non-negative regression of one layer's reference delta onto the client
/// deltas; returns the weights and the residual norm. Throws NumericError
/// when every atom is zero.
std::pair<std::vector<double>, double> solve_layer_lambdas(
    std::span<const Matrix> client_deltas, const Matrix& joint_delta);

/// Discretizes a calibration run into the 3x3 coefficient table: each
/// (client, layer) pair lands in the bin of its pooled importance
/// percentiles and each cell takes the mean lambda of its members. Empty
/// cells borrow from b-axis neighbors (or the global mean when a whole row
/// is empty), values are floored at 1e-6, and each row is clamped to be
/// non-decreasing along b. base_value is set to the pooled mean lambda.
GShapTable fit_table(const CalibrationRun& run,
                     const std::array<double, 2>& a_thresholds,
                     const std::array<double, 2>& b_thresholds);

/// Monotone-trend check: along b cells should not decrease (row-wise), and
/// along a they should not increase (column-wise).
struct TrendReport {
  std::array<bool, 3> b_rows_pass{};  // per a bin
  std::array<bool, 3> a_cols_pass{};  // per b bin

  bool all_pass() const;
};

TrendReport validate_trend(const GShapTable& table);

/// CSV rows `layer,client,omega_a,omega_b,lambda,residual`, layer-major,
/// one row per (layer, client) pair; 17 significant digits.
void write_calibration_report(const std::filesystem::path& path,
                              const CalibrationRun& run);

}  // namespace livar

#endif  // LIVAR_CALIBRATION_HPP_
