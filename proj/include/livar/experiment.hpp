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

#ifndef LIVAR_EXPERIMENT_HPP_
#define LIVAR_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "livar/config.hpp"
#include "livar/data.hpp"
#include "livar/fed.hpp"

namespace livar {

/// Seeded data for one experiment: global train/test split plus the
/// per-client shards of the training set.
struct PreparedData {
  Dataset train;
  Dataset test;
  std::vector<Dataset> clients;
  std::vector<std::vector<std::size_t>> client_indices;  // into `train`
};

/// Generates blobs, carves the train/test split, and partitions the
/// training set across clients (a single client owns everything).
PreparedData prepare_data(const ExperimentConfig& config);

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<RoundMetrics> rounds;
  double final_accuracy = 0.0;
};

using RoundCallback = std::function<void(const RoundMetrics&)>;

/// Runs the full federated loop described by `config`. `on_round` (if set)
/// fires after each round, e.g. to stream metrics rows.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                bool parallel_clients = false,
                                const RoundCallback& on_round = {});

// Metrics CSV: header `round,strategy,test_accuracy,mean_client_loss`,
// plus one `alpha_m{m}_l{l}` column per coefficient when `dump_alphas` is
// set (m is 0-based client, l is 1-based layer; blank for strategies that
// compute no alphas). 17 significant digits throughout.
void write_metrics_header(std::ostream& out, int num_clients, int num_layers,
                          bool dump_alphas);
void write_metrics_row(std::ostream& out, const RoundMetrics& metrics,
                       int num_clients, int num_layers, bool dump_alphas);
void write_metrics_csv(const std::filesystem::path& path,
                       const ExperimentResult& result, bool dump_alphas);

/// Summary JSON: {"final_accuracy", "per_round_accuracies", "config"}; the
/// config echo lists every effective field, defaults included.
void write_summary_json(const std::filesystem::path& path,
                        const ExperimentResult& result);

struct AblationRow {
  bool alpha_on = false;
  bool sigma_on = false;
  std::vector<double> accuracies;  // final accuracy per seed
  double mean_acc = 0.0;
  double std_acc = 0.0;
};

struct AblationResult {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;  // (off,off), (on,off), (off,on), (on,on)
};

/// 2x2 strategy grid under shared seeds: every variant sees identical
/// data, partitions, model init and client training streams per seed, so
/// rows differ only in the server merge.
AblationResult run_ablation(const ExperimentConfig& base,
                            std::span<const std::uint64_t> seeds,
                            bool parallel_clients = false);

/// CSV `alpha,sigma,mean_acc,std_acc` with on/off flags, one row per
/// grid cell.
void write_ablation_csv(const std::filesystem::path& path,
                        const AblationResult& result);

/// CSV `client,class0,...,class{C-1}`: per-client label histogram of the
/// training partition implied by `config`.
void write_partition_csv(const std::filesystem::path& path,
                         const ExperimentConfig& config);

}  // namespace livar

#endif  // LIVAR_EXPERIMENT_HPP_
