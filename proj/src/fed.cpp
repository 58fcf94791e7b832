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

#include "livar/fed.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "livar/errors.hpp"
#include "livar/rng.hpp"
#include "livar/stats.hpp"

namespace livar {

namespace {

void check_updates_consistent(std::span<const ClientUpdate> updates) {
  if (updates.empty()) {
    throw std::invalid_argument("aggregation requires at least one client update");
  }
  const ClientUpdate& first = updates.front();
  const std::size_t num_layers = first.deltas.size();
  for (const ClientUpdate& update : updates) {
    if (update.deltas.size() != num_layers ||
        update.importance.size() != num_layers) {
      throw DimensionError("client updates disagree on layer count");
    }
    for (std::size_t l = 0; l < num_layers; ++l) {
      if (!update.deltas[l].same_shape(first.deltas[l])) {
        throw DimensionError("client delta shape mismatch at layer " +
                             std::to_string(l + 1) + ": " +
                             update.deltas[l].shape_str() + " vs " +
                             first.deltas[l].shape_str());
      }
    }
    if (!update.head.weights.same_shape(first.head.weights) ||
        update.head.bias.size() != first.head.bias.size()) {
      throw DimensionError("client head shape mismatch: " +
                           update.head.weights.shape_str() + " vs " +
                           first.head.weights.shape_str());
    }
    if (update.variance_stats.sigma.size() != first.head.bias.size()) {
      throw DimensionError("variance statistics do not cover every class");
    }
    if (update.sample_count == 0) {
      throw std::invalid_argument("client update has sample_count 0");
    }
  }
}

std::vector<double> sample_weights(std::span<const ClientUpdate> updates) {
  double total = 0.0;
  for (const ClientUpdate& update : updates) {
    total += static_cast<double>(update.sample_count);
  }
  std::vector<double> weights;
  weights.reserve(updates.size());
  for (const ClientUpdate& update : updates) {
    weights.push_back(static_cast<double>(update.sample_count) / total);
  }
  return weights;
}

/// Per-layer combination sum_m weight(m, l) * delta_m^l.
template <typename WeightFn>
std::vector<Matrix> combine_deltas(std::span<const ClientUpdate> updates,
                                   WeightFn weight) {
  const std::size_t num_layers = updates.front().deltas.size();
  std::vector<Matrix> merged;
  merged.reserve(num_layers);
  for (std::size_t l = 0; l < num_layers; ++l) {
    Matrix acc(updates.front().deltas[l].rows(), updates.front().deltas[l].cols());
    for (std::size_t m = 0; m < updates.size(); ++m) {
      acc.add_scaled(updates[m].deltas[l], weight(m, l));
    }
    merged.push_back(std::move(acc));
  }
  return merged;
}

/// Per-class-row combination with weights that may depend on the class.
template <typename WeightFn>
ClassifierHead combine_heads(std::span<const ClientUpdate> updates, WeightFn weight) {
  const ClassifierHead& first = updates.front().head;
  const std::size_t num_classes = first.weights.rows();
  const std::size_t feature_dim = first.weights.cols();
  ClassifierHead merged = make_zero_head(static_cast<int>(num_classes), feature_dim);
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t m = 0; m < updates.size(); ++m) {
      const double w = weight(m, c);
      for (std::size_t f = 0; f < feature_dim; ++f) {
        merged.weights(c, f) += w * updates[m].head.weights(c, f);
      }
      merged.bias[c] += w * updates[m].head.bias[c];
    }
  }
  return merged;
}

}  // namespace

GShapTable GShapTable::default_table() {
  GShapTable table;
  table.a_thresholds = {25.0, 50.0};
  table.b_thresholds = {60.0, 80.0};
  table.cells = {{{0.038, 0.100, 0.193},
                  {0.038, 0.089, 0.118},
                  {0.038, 0.078, 0.093}}};
  table.base_value = 0.063;
  return table;
}

void GShapTable::validate() const {
  auto check_axis = [](const std::array<double, 2>& t, const char* name) {
    if (!(t[0] > 0.0 && t[0] < t[1] && t[1] < 100.0)) {
      std::ostringstream msg;
      msg << name << " must be strictly increasing within (0, 100), got ("
          << t[0] << ", " << t[1] << ")";
      throw std::invalid_argument(msg.str());
    }
  };
  check_axis(a_thresholds, "a_thresholds");
  check_axis(b_thresholds, "b_thresholds");
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      if (!(cells[a][b] > 0.0) || !std::isfinite(cells[a][b])) {
        std::ostringstream msg;
        msg << "cell (" << a << ", " << b << ") must be a positive real, got "
            << cells[a][b];
        throw std::invalid_argument(msg.str());
      }
      if (b > 0 && cells[a][b] < cells[a][b - 1]) {
        std::ostringstream msg;
        msg << "cells must be non-decreasing along the b axis; row " << a
            << " drops from " << cells[a][b - 1] << " to " << cells[a][b];
        throw std::invalid_argument(msg.str());
      }
    }
  }
}

int GShapTable::a_bin(double q) const {
  if (q < a_thresholds[0]) return 0;
  if (q <= a_thresholds[1]) return 1;
  return 2;
}

int GShapTable::b_bin(double q) const {
  if (q < b_thresholds[0]) return 0;
  if (q <= b_thresholds[1]) return 1;
  return 2;
}

GShapTable load_gshap_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open coefficient table file: " + path.string());
  }
  nlohmann::json parsed;
  try {
    in >> parsed;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed coefficient table file " + path.string() + ": " +
                      e.what());
  }
  GShapTable table;
  try {
    table.a_thresholds = parsed.at("a_thresholds").get<std::array<double, 2>>();
    table.b_thresholds = parsed.at("b_thresholds").get<std::array<double, 2>>();
    const auto flat = parsed.at("cells").get<std::array<double, 9>>();
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        table.cells[a][b] = flat[a * 3 + b];
      }
    }
    table.base_value = parsed.at("base_value").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("coefficient table file " + path.string() +
                      " is missing or mistypes a key: " + e.what());
  }
  try {
    table.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("invalid coefficient table in " + path.string() + ": " +
                      e.what());
  }
  return table;
}

void save_gshap_table(const std::filesystem::path& path, const GShapTable& table) {
  table.validate();
  nlohmann::ordered_json out;
  out["a_thresholds"] = table.a_thresholds;
  out["b_thresholds"] = table.b_thresholds;
  std::array<double, 9> flat{};
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      flat[a * 3 + b] = table.cells[a][b];
    }
  }
  out["cells"] = flat;
  out["base_value"] = table.base_value;
  std::ofstream file(path);
  if (!file) {
    throw ConfigError("cannot write coefficient table file: " + path.string());
  }
  file << out.dump(2) << '\n';
}

GlobalModel init_global_model(std::span<const std::size_t> dims, int num_classes,
                              std::uint64_t seed) {
  if (dims.size() < 2) {
    throw std::invalid_argument("global model needs at least one layer");
  }
  if (num_classes < 2) {
    throw std::invalid_argument("global model needs at least 2 classes, got " +
                                std::to_string(num_classes));
  }
  Rng rng(seed);
  GlobalModel model;
  model.dims.assign(dims.begin(), dims.end());
  model.frozen = random_frozen_weights(model.dims, rng);
  model.head = make_zero_head(num_classes, model.dims.back());
  return model;
}

ToyBackbone frozen_backbone(const GlobalModel& model) {
  return ToyBackbone{model.dims, model.frozen, {}};
}

ClientUpdate local_train(const GlobalModel& global_model, const Dataset& client_data,
                         const TrainOptions& options, std::uint64_t seed,
                         TrainTelemetry* telemetry) {
  if (client_data.size() == 0) {
    throw std::invalid_argument("local_train: client dataset is empty");
  }
  if (options.epochs < 0) {
    throw std::invalid_argument("local_train: epochs must be >= 0, got " +
                                std::to_string(options.epochs));
  }
  if (!(options.lr > 0.0)) {
    throw std::invalid_argument("local_train: learning rate must be positive");
  }
  if (options.batch_size < 1) {
    throw std::invalid_argument("local_train: batch_size must be >= 1, got " +
                                std::to_string(options.batch_size));
  }

  Rng rng(seed);
  ToyBackbone backbone{global_model.dims, global_model.frozen,
                       fresh_adapters(global_model.dims, options.rank, rng)};
  ClassifierHead head = global_model.head;

  const std::size_t num_layers = backbone.num_layers();
  std::vector<ImportanceRecord> importance(num_layers);
  for (std::size_t l = 0; l < num_layers; ++l) {
    importance[l].layer_index = static_cast<int>(l) + 1;
  }

  const std::size_t n = client_data.size();
  const std::size_t dim = client_data.features.cols();
  const std::size_t batch = static_cast<std::size_t>(options.batch_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  int steps = 0;
  double last_loss = 0.0;
  bool done = false;
  for (int epoch = 0; epoch < options.epochs && !done; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n && !done; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      Matrix x(stop - start, dim);
      std::vector<int> labels(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        const std::size_t row = order[i];
        for (std::size_t j = 0; j < dim; ++j) {
          x(i - start, j) = client_data.features(row, j);
        }
        labels[i - start] = client_data.labels[row];
      }

      const LossAndGrads step = loss_and_grads(backbone, head, x, labels);
      last_loss = step.loss;
      for (std::size_t l = 0; l < num_layers; ++l) {
        const Matrix update_a = step.grads.a[l] * -options.lr;
        const Matrix update_b = step.grads.b[l] * -options.lr;
        importance[l] = accumulate(importance[l], Factor::kA, step.grads.a[l], update_a);
        importance[l] = accumulate(importance[l], Factor::kB, step.grads.b[l], update_b);
        backbone.adapters[l].a += update_a;
        backbone.adapters[l].b += update_b;
      }
      head.weights.add_scaled(step.grads.head, -options.lr);
      for (std::size_t c = 0; c < head.bias.size(); ++c) {
        head.bias[c] -= options.lr * step.grads.bias[c];
      }
      ++steps;
      if (options.max_steps >= 0 && steps >= options.max_steps) {
        done = true;
      }
    }
  }

  ClientUpdate update;
  update.deltas.reserve(num_layers);
  for (const LoraAdapter& adapter : backbone.adapters) {
    update.deltas.push_back(delta(adapter));
  }
  update.importance = std::move(importance);
  update.variance_stats = class_variances(backbone, head, client_data);
  update.head = std::move(head);
  update.sample_count = n;
  if (telemetry != nullptr) {
    telemetry->final_loss = last_loss;
    telemetry->steps = steps;
  }
  return update;
}

MergeCoefficients compute_alphas(std::span<const ClientUpdate> updates,
                                 const GShapTable& table) {
  check_updates_consistent(updates);
  table.validate();
  const std::size_t num_clients = updates.size();
  const std::size_t num_layers = updates.front().importance.size();
  if (num_layers == 0) {
    throw std::invalid_argument("compute_alphas: zero layers");
  }

  std::vector<double> pool_a;
  std::vector<double> pool_b;
  pool_a.reserve(num_clients * num_layers);
  pool_b.reserve(num_clients * num_layers);
  for (const ClientUpdate& update : updates) {
    for (const ImportanceRecord& record : update.importance) {
      pool_a.push_back(record.omega_a);
      pool_b.push_back(record.omega_b);
    }
  }

  MergeCoefficients coeffs{num_clients, num_layers,
                           std::vector<double>(num_clients * num_layers, 0.0)};
  for (std::size_t m = 0; m < num_clients; ++m) {
    for (std::size_t l = 0; l < num_layers; ++l) {
      const ImportanceRecord& record = updates[m].importance[l];
      const double qa = percentile_rank(record.omega_a, pool_a);
      const double qb = percentile_rank(record.omega_b, pool_b);
      coeffs.at(m, l) = table.cells[table.a_bin(qa)][table.b_bin(qb)];
    }
  }
  for (std::size_t l = 0; l < num_layers; ++l) {
    double total = 0.0;
    for (std::size_t m = 0; m < num_clients; ++m) {
      total += coeffs.at(m, l);
    }
    for (std::size_t m = 0; m < num_clients; ++m) {
      coeffs.at(m, l) /= total;
    }
  }
  return coeffs;
}

std::vector<Matrix> merge_backbone(std::span<const ClientUpdate> updates,
                                   const MergeCoefficients& coeffs) {
  check_updates_consistent(updates);
  if (coeffs.num_clients != updates.size() ||
      coeffs.num_layers != updates.front().deltas.size()) {
    throw DimensionError("merge coefficients cover " +
                         std::to_string(coeffs.num_clients) + "x" +
                         std::to_string(coeffs.num_layers) + ", updates are " +
                         std::to_string(updates.size()) + "x" +
                         std::to_string(updates.front().deltas.size()));
  }
  return combine_deltas(updates,
                        [&](std::size_t m, std::size_t l) { return coeffs.at(m, l); });
}

ClassifierHead merge_heads(std::span<const ClientUpdate> updates) {
  check_updates_consistent(updates);
  const std::size_t num_classes = updates.front().head.weights.rows();
  const std::size_t num_clients = updates.size();

  // Per class: sigma_m / Sigma, or the uniform 1/M fallback when no client
  // reports variance mass for that class.
  std::vector<double> class_totals(num_classes, 0.0);
  for (const ClientUpdate& update : updates) {
    for (std::size_t c = 0; c < num_classes; ++c) {
      class_totals[c] += update.variance_stats.sigma[c];
    }
  }
  return combine_heads(updates, [&](std::size_t m, std::size_t c) {
    if (class_totals[c] > 0.0) {
      return updates[m].variance_stats.sigma[c] / class_totals[c];
    }
    return 1.0 / static_cast<double>(num_clients);
  });
}

std::vector<Matrix> fedavg_deltas(std::span<const ClientUpdate> updates) {
  check_updates_consistent(updates);
  const std::vector<double> weights = sample_weights(updates);
  return combine_deltas(updates,
                        [&](std::size_t m, std::size_t) { return weights[m]; });
}

ClassifierHead fedavg_head(std::span<const ClientUpdate> updates) {
  check_updates_consistent(updates);
  const std::vector<double> weights = sample_weights(updates);
  return combine_heads(updates,
                       [&](std::size_t m, std::size_t) { return weights[m]; });
}

std::pair<std::vector<Matrix>, ClassifierHead> fedavg_merge(
    std::span<const ClientUpdate> updates) {
  return {fedavg_deltas(updates), fedavg_head(updates)};
}

Strategy parse_strategy(const std::string& name) {
  if (name == "livar") return Strategy::kLivar;
  if (name == "fedavg") return Strategy::kFedavg;
  if (name == "livar_alpha_only") return Strategy::kLivarAlphaOnly;
  if (name == "livar_sigma_only") return Strategy::kLivarSigmaOnly;
  throw ConfigError(
      "strategy must be one of livar, fedavg, livar_alpha_only, "
      "livar_sigma_only; got \"" +
      name + "\"");
}

std::string to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::kLivar:
      return "livar";
    case Strategy::kFedavg:
      return "fedavg";
    case Strategy::kLivarAlphaOnly:
      return "livar_alpha_only";
    case Strategy::kLivarSigmaOnly:
      return "livar_sigma_only";
  }
  throw std::invalid_argument("unknown strategy value");
}

MergeOutcome server_merge(std::span<const ClientUpdate> updates, Strategy strategy,
                          const GShapTable& table) {
  MergeOutcome outcome;
  switch (strategy) {
    case Strategy::kLivar: {
      MergeCoefficients alphas = compute_alphas(updates, table);
      outcome.deltas = merge_backbone(updates, alphas);
      outcome.head = merge_heads(updates);
      outcome.alphas = std::move(alphas);
      break;
    }
    case Strategy::kFedavg: {
      auto merged = fedavg_merge(updates);
      outcome.deltas = std::move(merged.first);
      outcome.head = std::move(merged.second);
      break;
    }
    case Strategy::kLivarAlphaOnly: {
      MergeCoefficients alphas = compute_alphas(updates, table);
      outcome.deltas = merge_backbone(updates, alphas);
      outcome.head = fedavg_head(updates);
      outcome.alphas = std::move(alphas);
      break;
    }
    case Strategy::kLivarSigmaOnly: {
      outcome.deltas = fedavg_deltas(updates);
      outcome.head = merge_heads(updates);
      break;
    }
  }
  return outcome;
}

RoundMetrics run_round(GlobalModel& model, std::span<const Dataset> client_data,
                       const Dataset& test_data, Strategy strategy,
                       const RoundOptions& options, int round_index) {
  const std::size_t num_clients = client_data.size();
  if (num_clients == 0) {
    throw std::invalid_argument("run_round: no clients");
  }

  std::vector<std::uint64_t> seeds;
  if (!options.client_seed_override.empty()) {
    if (options.client_seed_override.size() != num_clients) {
      throw std::invalid_argument("client_seed_override must list one seed per client");
    }
    seeds = options.client_seed_override;
  } else {
    seeds.reserve(num_clients);
    for (std::size_t m = 0; m < num_clients; ++m) {
      seeds.push_back(derive_seed(options.master_seed,
                                  {kStreamClient,
                                   static_cast<std::uint64_t>(round_index), m}));
    }
  }

  // Clients only read the global model; each writes its own slot, so the
  // parallel path needs no synchronization beyond joining the futures.
  std::vector<ClientUpdate> updates(num_clients);
  std::vector<TrainTelemetry> telemetry(num_clients);
  auto train_one = [&](std::size_t m) {
    updates[m] = local_train(model, client_data[m], options.train, seeds[m],
                             &telemetry[m]);
  };
  if (options.parallel_clients) {
    std::vector<std::future<void>> futures;
    futures.reserve(num_clients);
    for (std::size_t m = 0; m < num_clients; ++m) {
      futures.push_back(std::async(std::launch::async, train_one, m));
    }
    for (std::future<void>& future : futures) {
      future.get();
    }
  } else {
    for (std::size_t m = 0; m < num_clients; ++m) {
      train_one(m);
    }
  }

  MergeOutcome merged = server_merge(updates, strategy, options.table);
  for (std::size_t l = 0; l < model.frozen.size(); ++l) {
    model.frozen[l] += merged.deltas[l];
  }
  model.head = std::move(merged.head);

  RoundMetrics metrics;
  metrics.round = round_index;
  metrics.strategy = strategy;
  metrics.test_accuracy = accuracy(frozen_backbone(model), model.head, test_data);
  metrics.client_losses.reserve(num_clients);
  for (const TrainTelemetry& t : telemetry) {
    metrics.client_losses.push_back(t.final_loss);
  }
  metrics.mean_client_loss = mean(metrics.client_losses);
  metrics.alphas = std::move(merged.alphas);
  metrics.sigmas.reserve(num_clients);
  for (const ClientUpdate& update : updates) {
    metrics.sigmas.push_back(update.variance_stats.sigma);
  }
  return metrics;
}

}  // namespace livar
