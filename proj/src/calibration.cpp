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

#include "livar/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

#include "livar/data.hpp"
#include "livar/errors.hpp"
#include "livar/nnls.hpp"
#include "livar/rng.hpp"
#include "livar/stats.hpp"

namespace livar {

namespace {

constexpr double kCellFloor = 1e-6;

std::size_t batches_per_epoch(std::size_t n, int batch_size) {
  const std::size_t batch = static_cast<std::size_t>(batch_size);
  return (n + batch - 1) / batch;
}

void validate_proxy_config(const ProxyConfig& config) {
  if (config.num_clients < 1) {
    throw std::invalid_argument("calibration needs at least 1 client, got " +
                                std::to_string(config.num_clients));
  }
  if (config.dims.size() < 2) {
    throw std::invalid_argument("calibration model needs at least one layer");
  }
  if (config.num_classes < 2) {
    throw std::invalid_argument("calibration needs at least 2 classes");
  }
  if (config.per_class < 2) {
    throw std::invalid_argument("calibration needs at least 2 samples per class");
  }
  if (config.train.epochs < 1) {
    throw std::invalid_argument("calibration training needs at least 1 epoch");
  }
}

}  // namespace

std::pair<std::vector<double>, double> solve_layer_lambdas(
    std::span<const Matrix> client_deltas, const Matrix& joint_delta) {
  bool any_nonzero = false;
  for (const Matrix& atom : client_deltas) {
    if (frobenius_norm(atom) > 0.0) {
      any_nonzero = true;
      break;
    }
  }
  if (!any_nonzero) {
    throw NumericError(
        "degenerate calibration layer: every client delta is zero");
  }
  const NnlsSolution solution = nnls_solve(client_deltas, joint_delta);
  return {solution.coefficients, solution.residual_norm};
}

CalibrationRun run_proxy(const ProxyConfig& config) {
  validate_proxy_config(config);
  const std::size_t num_clients = static_cast<std::size_t>(config.num_clients);
  const std::size_t num_layers = config.dims.size() - 1;

  const Dataset pooled =
      make_blobs(config.num_classes, static_cast<int>(config.dims.front()),
                 config.per_class, config.spread,
                 derive_seed(config.seed, {kStreamData}));

  // Client datasets: the usual label-skewed split, except that a single
  // client simply owns the pooled data (so a seeded centralized pass can
  // replay its trajectory exactly).
  std::vector<Dataset> client_data;
  client_data.reserve(num_clients);
  if (num_clients == 1) {
    std::vector<std::size_t> all(pooled.size());
    std::iota(all.begin(), all.end(), 0);
    client_data.push_back(subset(pooled, all));
  } else {
    const Partition partition =
        dirichlet_partition(pooled.labels, config.num_clients, config.beta,
                            derive_seed(config.seed, {kStreamPartition}));
    for (const std::vector<std::size_t>& indices : partition.client_indices) {
      client_data.push_back(subset(pooled, indices));
    }
  }

  const GlobalModel model = init_global_model(
      config.dims, config.num_classes, derive_seed(config.seed, {kStreamModel}));

  std::vector<ClientUpdate> updates(num_clients);
  std::vector<TrainTelemetry> telemetry(num_clients);
  for (std::size_t m = 0; m < num_clients; ++m) {
    const std::uint64_t client_seed =
        derive_seed(config.seed, {kStreamClient, 0, m});
    updates[m] =
        local_train(model, client_data[m], config.train, client_seed, &telemetry[m]);
  }

  // Centralized reference: pooled data, step budget equal to the average
  // client's step count so delta magnitudes stay comparable.
  double mean_steps = 0.0;
  for (const TrainTelemetry& t : telemetry) {
    mean_steps += static_cast<double>(t.steps);
  }
  mean_steps /= static_cast<double>(num_clients);
  const int budget = static_cast<int>(std::llround(mean_steps));
  if (budget < 1) {
    throw std::invalid_argument("calibration training budget is zero steps");
  }
  const std::size_t pooled_batches =
      batches_per_epoch(pooled.size(), config.train.batch_size);
  TrainOptions joint_options = config.train;
  joint_options.max_steps = budget;
  joint_options.epochs = static_cast<int>(
      (static_cast<std::size_t>(budget) + pooled_batches - 1) / pooled_batches);
  const std::uint64_t joint_seed = config.joint_seed.has_value()
                                       ? *config.joint_seed
                                       : derive_seed(config.seed, {kStreamCalibration});
  const ClientUpdate joint =
      local_train(model, pooled, joint_options, joint_seed, nullptr);

  CalibrationRun run;
  run.lambdas.assign(num_clients, std::vector<double>(num_layers, 0.0));
  run.omegas.assign(num_clients, {});
  run.residuals.assign(num_layers, 0.0);
  run.joint_deltas = joint.deltas;
  run.client_deltas.reserve(num_clients);
  for (std::size_t m = 0; m < num_clients; ++m) {
    run.omegas[m] = updates[m].importance;
    run.client_deltas.push_back(updates[m].deltas);
  }
  for (std::size_t l = 0; l < num_layers; ++l) {
    std::vector<Matrix> atoms;
    atoms.reserve(num_clients);
    for (std::size_t m = 0; m < num_clients; ++m) {
      atoms.push_back(updates[m].deltas[l]);
    }
    auto [lambdas, residual] = solve_layer_lambdas(atoms, joint.deltas[l]);
    for (std::size_t m = 0; m < num_clients; ++m) {
      run.lambdas[m][l] = lambdas[m];
    }
    run.residuals[l] = residual;
  }
  return run;
}

GShapTable fit_table(const CalibrationRun& run,
                     const std::array<double, 2>& a_thresholds,
                     const std::array<double, 2>& b_thresholds) {
  const std::size_t num_clients = run.num_clients();
  const std::size_t num_layers = run.num_layers();
  if (num_clients == 0 || num_layers == 0) {
    throw std::invalid_argument("fit_table: empty calibration run");
  }
  for (std::size_t m = 0; m < num_clients; ++m) {
    if (run.lambdas[m].size() != num_layers || run.omegas[m].size() != num_layers) {
      throw DimensionError("fit_table: lambda/omega grids are ragged");
    }
  }

  GShapTable table;
  table.a_thresholds = a_thresholds;
  table.b_thresholds = b_thresholds;

  std::vector<double> pool_a;
  std::vector<double> pool_b;
  pool_a.reserve(num_clients * num_layers);
  pool_b.reserve(num_clients * num_layers);
  for (const std::vector<ImportanceRecord>& row : run.omegas) {
    for (const ImportanceRecord& record : row) {
      pool_a.push_back(record.omega_a);
      pool_b.push_back(record.omega_b);
    }
  }

  std::array<std::array<double, 3>, 3> sums{};
  std::array<std::array<int, 3>, 3> counts{};
  double lambda_total = 0.0;
  for (std::size_t m = 0; m < num_clients; ++m) {
    for (std::size_t l = 0; l < num_layers; ++l) {
      const ImportanceRecord& record = run.omegas[m][l];
      const int a = table.a_bin(percentile_rank(record.omega_a, pool_a));
      const int b = table.b_bin(percentile_rank(record.omega_b, pool_b));
      sums[a][b] += run.lambdas[m][l];
      counts[a][b] += 1;
      lambda_total += run.lambdas[m][l];
    }
  }

  std::array<std::array<bool, 3>, 3> known{};
  bool any_known = false;
  double known_sum = 0.0;
  int known_cells = 0;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      if (counts[a][b] > 0) {
        table.cells[a][b] = sums[a][b] / counts[a][b];
        known[a][b] = true;
        any_known = true;
        known_sum += table.cells[a][b];
        ++known_cells;
      }
    }
  }
  if (!any_known) {
    throw std::invalid_argument("fit_table: no occupied cells");
  }

  // Fill empty cells from b-axis neighbors, repeating until stable; rows
  // that stay fully empty take the mean of the occupied cells.
  bool progressed = true;
  while (progressed) {
    progressed = false;
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        if (known[a][b]) continue;
        double neighbor_sum = 0.0;
        int neighbors = 0;
        if (b > 0 && known[a][b - 1]) {
          neighbor_sum += table.cells[a][b - 1];
          ++neighbors;
        }
        if (b < 2 && known[a][b + 1]) {
          neighbor_sum += table.cells[a][b + 1];
          ++neighbors;
        }
        if (neighbors > 0) {
          table.cells[a][b] = neighbor_sum / neighbors;
          known[a][b] = true;
          progressed = true;
        }
      }
    }
  }
  const double global_mean = known_sum / known_cells;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      if (!known[a][b]) {
        table.cells[a][b] = global_mean;
      }
    }
  }

  // Positivity floor (recovered lambdas may be exactly zero), then the
  // raise-only clamp that makes every row non-decreasing along b.
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      table.cells[a][b] = std::max(table.cells[a][b], kCellFloor);
    }
    for (int b = 1; b < 3; ++b) {
      table.cells[a][b] = std::max(table.cells[a][b], table.cells[a][b - 1]);
    }
  }

  table.base_value =
      lambda_total / static_cast<double>(num_clients * num_layers);
  table.validate();
  return table;
}

bool TrendReport::all_pass() const {
  for (int i = 0; i < 3; ++i) {
    if (!b_rows_pass[i] || !a_cols_pass[i]) return false;
  }
  return true;
}

TrendReport validate_trend(const GShapTable& table) {
  TrendReport report;
  for (int a = 0; a < 3; ++a) {
    report.b_rows_pass[a] = table.cells[a][1] >= table.cells[a][0] &&
                            table.cells[a][2] >= table.cells[a][1];
  }
  for (int b = 0; b < 3; ++b) {
    report.a_cols_pass[b] = table.cells[1][b] <= table.cells[0][b] &&
                            table.cells[2][b] <= table.cells[1][b];
  }
  return report;
}

void write_calibration_report(const std::filesystem::path& path,
                              const CalibrationRun& run) {
  std::ofstream out(path);
  if (!out) {
    throw ConfigError("cannot write calibration report: " + path.string());
  }
  out << "layer,client,omega_a,omega_b,lambda,residual\n";
  char buffer[128];
  for (std::size_t l = 0; l < run.num_layers(); ++l) {
    for (std::size_t m = 0; m < run.num_clients(); ++m) {
      const ImportanceRecord& record = run.omegas[m][l];
      std::snprintf(buffer, sizeof(buffer), "%zu,%zu,%.17g,%.17g,%.17g,%.17g\n",
                    l + 1, m, record.omega_a, record.omega_b, run.lambdas[m][l],
                    run.residuals[l]);
      out << buffer;
    }
  }
}

}  // namespace livar
