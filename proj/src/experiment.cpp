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

#include "livar/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>

#include "livar/errors.hpp"
#include "livar/rng.hpp"
#include "livar/stats.hpp"

namespace livar {

namespace {

std::string g17(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw ConfigError("cannot write output file: " + path.string());
  }
  return out;
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& config) {
  config.validate();
  const Dataset full =
      make_blobs(config.classes, config.dim,
                 config.per_class_train + config.per_class_test, config.spread,
                 derive_seed(config.seed, {kStreamData}));
  auto [train, test] = split_per_class(full, config.per_class_train);

  PreparedData prepared;
  prepared.train = std::move(train);
  prepared.test = std::move(test);
  if (config.clients == 1) {
    std::vector<std::size_t> all(prepared.train.size());
    std::iota(all.begin(), all.end(), 0);
    prepared.client_indices.push_back(std::move(all));
  } else {
    Partition partition =
        dirichlet_partition(prepared.train.labels, config.clients, config.beta,
                            derive_seed(config.seed, {kStreamPartition}));
    prepared.client_indices = std::move(partition.client_indices);
  }
  prepared.clients.reserve(prepared.client_indices.size());
  for (const std::vector<std::size_t>& indices : prepared.client_indices) {
    prepared.clients.push_back(subset(prepared.train, indices));
  }
  return prepared;
}

ExperimentResult run_experiment(const ExperimentConfig& config,
                                bool parallel_clients,
                                const RoundCallback& on_round) {
  config.validate();
  const Strategy strategy = parse_strategy(config.strategy);
  const PreparedData data = prepare_data(config);

  GlobalModel model =
      init_global_model(model_dims(config), config.classes,
                        derive_seed(config.seed, {kStreamModel}));

  RoundOptions options;
  options.train.epochs = config.local_epochs;
  options.train.lr = config.lr;
  options.train.batch_size = config.batch_size;
  options.train.rank = config.rank;
  options.table = config.table_path.empty() ? GShapTable::default_table()
                                            : load_gshap_table(config.table_path);
  options.master_seed = config.seed;
  options.parallel_clients = parallel_clients;

  ExperimentResult result;
  result.config = config;
  result.rounds.reserve(static_cast<std::size_t>(config.rounds));
  for (int round = 1; round <= config.rounds; ++round) {
    RoundMetrics metrics =
        run_round(model, data.clients, data.test, strategy, options, round);
    if (on_round) {
      on_round(metrics);
    }
    result.rounds.push_back(std::move(metrics));
  }
  result.final_accuracy = result.rounds.back().test_accuracy;
  return result;
}

void write_metrics_header(std::ostream& out, int num_clients, int num_layers,
                          bool dump_alphas) {
  out << "round,strategy,test_accuracy,mean_client_loss";
  if (dump_alphas) {
    for (int m = 0; m < num_clients; ++m) {
      for (int l = 1; l <= num_layers; ++l) {
        out << ",alpha_m" << m << "_l" << l;
      }
    }
  }
  out << '\n';
}

void write_metrics_row(std::ostream& out, const RoundMetrics& metrics,
                       int num_clients, int num_layers, bool dump_alphas) {
  out << metrics.round << ',' << to_string(metrics.strategy) << ','
      << g17(metrics.test_accuracy) << ',' << g17(metrics.mean_client_loss);
  if (dump_alphas) {
    const bool have = metrics.alphas.has_value() &&
                      metrics.alphas->num_clients ==
                          static_cast<std::size_t>(num_clients) &&
                      metrics.alphas->num_layers ==
                          static_cast<std::size_t>(num_layers);
    for (int m = 0; m < num_clients; ++m) {
      for (int l = 0; l < num_layers; ++l) {
        out << ',';
        if (have) {
          out << g17(metrics.alphas->at(static_cast<std::size_t>(m),
                                        static_cast<std::size_t>(l)));
        }
      }
    }
  }
  out << '\n';
}

void write_metrics_csv(const std::filesystem::path& path,
                       const ExperimentResult& result, bool dump_alphas) {
  std::ofstream out = open_for_write(path);
  write_metrics_header(out, result.config.clients, result.config.layers,
                       dump_alphas);
  for (const RoundMetrics& metrics : result.rounds) {
    write_metrics_row(out, metrics, result.config.clients, result.config.layers,
                      dump_alphas);
  }
}

void write_summary_json(const std::filesystem::path& path,
                        const ExperimentResult& result) {
  nlohmann::ordered_json summary;
  summary["final_accuracy"] = result.final_accuracy;
  std::vector<double> per_round;
  per_round.reserve(result.rounds.size());
  for (const RoundMetrics& metrics : result.rounds) {
    per_round.push_back(metrics.test_accuracy);
  }
  summary["per_round_accuracies"] = per_round;
  summary["config"] = config_to_json(result.config);
  std::ofstream out = open_for_write(path);
  out << summary.dump(2) << '\n';
}

AblationResult run_ablation(const ExperimentConfig& base,
                            std::span<const std::uint64_t> seeds,
                            bool parallel_clients) {
  if (seeds.empty()) {
    throw ConfigError("ablation needs at least one seed");
  }
  struct Variant {
    bool alpha_on;
    bool sigma_on;
    const char* strategy;
  };
  static constexpr Variant kVariants[] = {
      {false, false, "fedavg"},
      {true, false, "livar_alpha_only"},
      {false, true, "livar_sigma_only"},
      {true, true, "livar"},
  };

  AblationResult result;
  result.seeds.assign(seeds.begin(), seeds.end());
  for (const Variant& variant : kVariants) {
    AblationRow row;
    row.alpha_on = variant.alpha_on;
    row.sigma_on = variant.sigma_on;
    for (const std::uint64_t seed : seeds) {
      ExperimentConfig config = base;
      config.seed = seed;
      config.strategy = variant.strategy;
      const ExperimentResult run = run_experiment(config, parallel_clients);
      row.accuracies.push_back(run.final_accuracy);
    }
    row.mean_acc = mean(row.accuracies);
    row.std_acc = sample_stddev(row.accuracies);
    result.rows.push_back(std::move(row));
  }
  return result;
}

void write_ablation_csv(const std::filesystem::path& path,
                        const AblationResult& result) {
  std::ofstream out = open_for_write(path);
  out << "alpha,sigma,mean_acc,std_acc\n";
  for (const AblationRow& row : result.rows) {
    out << (row.alpha_on ? "on" : "off") << ',' << (row.sigma_on ? "on" : "off")
        << ',' << g17(row.mean_acc) << ',' << g17(row.std_acc) << '\n';
  }
}

void write_partition_csv(const std::filesystem::path& path,
                         const ExperimentConfig& config) {
  const PreparedData data = prepare_data(config);
  std::ofstream out = open_for_write(path);
  out << "client";
  for (int c = 0; c < config.classes; ++c) {
    out << ",class" << c;
  }
  out << '\n';
  for (std::size_t m = 0; m < data.clients.size(); ++m) {
    std::vector<int> counts(static_cast<std::size_t>(config.classes), 0);
    for (const int label : data.clients[m].labels) {
      counts[static_cast<std::size_t>(label)] += 1;
    }
    out << m;
    for (const int count : counts) {
      out << ',' << count;
    }
    out << '\n';
  }
}

}  // namespace livar
