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

#include "livar/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "livar/errors.hpp"
#include "livar/fed.hpp"

namespace livar {

namespace {

void require(bool ok, const std::string& field, const std::string& rule) {
  if (!ok) {
    throw ConfigError("config field \"" + field + "\" " + rule);
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  require(clients >= 1, "clients", "must be >= 1, got " + std::to_string(clients));
  require(std::isfinite(beta) && beta > 0.0, "beta", "must be > 0");
  require(rounds >= 1, "rounds", "must be >= 1, got " + std::to_string(rounds));
  require(local_epochs >= 1, "local_epochs",
          "must be >= 1, got " + std::to_string(local_epochs));
  require(std::isfinite(lr) && lr > 0.0, "lr", "must be > 0");
  parse_strategy(strategy);
  require(layers >= 1, "layers", "must be >= 1, got " + std::to_string(layers));
  require(hidden >= 2, "hidden", "must be >= 2, got " + std::to_string(hidden));
  require(classes >= 2, "classes", "must be >= 2, got " + std::to_string(classes));
  require(dim >= 2, "dim", "must be >= 2, got " + std::to_string(dim));
  const int narrowest = std::min(dim, hidden);
  require(rank >= 1 && rank < narrowest, "rank",
          "must satisfy 1 <= rank < min(dim, hidden) = " +
              std::to_string(narrowest) + ", got " + std::to_string(rank));
  // Adapters must shrink every layer's parameter count.
  require(rank * (dim + hidden) < dim * hidden && 2 * rank < hidden, "rank",
          "must satisfy rank * (fan_in + fan_out) < fan_in * fan_out for "
          "every layer, got " +
              std::to_string(rank));
  require(per_class_train >= 1, "per_class_train",
          "must be >= 1, got " + std::to_string(per_class_train));
  require(per_class_test >= 1, "per_class_test",
          "must be >= 1, got " + std::to_string(per_class_test));
  require(std::isfinite(spread) && spread >= 0.0, "spread", "must be >= 0");
  require(batch_size >= 1, "batch_size",
          "must be >= 1, got " + std::to_string(batch_size));
}

std::vector<std::size_t> model_dims(const ExperimentConfig& config) {
  std::vector<std::size_t> dims;
  dims.reserve(static_cast<std::size_t>(config.layers) + 1);
  dims.push_back(static_cast<std::size_t>(config.dim));
  for (int l = 0; l < config.layers; ++l) {
    dims.push_back(static_cast<std::size_t>(config.hidden));
  }
  return dims;
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& config) {
  nlohmann::ordered_json object;
  object["clients"] = config.clients;
  object["beta"] = config.beta;
  object["rounds"] = config.rounds;
  object["local_epochs"] = config.local_epochs;
  object["lr"] = config.lr;
  object["seed"] = config.seed;
  object["strategy"] = config.strategy;
  object["layers"] = config.layers;
  object["hidden"] = config.hidden;
  object["rank"] = config.rank;
  object["classes"] = config.classes;
  object["dim"] = config.dim;
  object["per_class_train"] = config.per_class_train;
  object["per_class_test"] = config.per_class_test;
  object["spread"] = config.spread;
  object["batch_size"] = config.batch_size;
  object["table_path"] = config.table_path;
  return object;
}

ExperimentConfig config_from_json(const nlohmann::json& object) {
  if (!object.is_object()) {
    throw ConfigError("config must be a JSON object");
  }
  static const std::set<std::string> known = {
      "clients", "beta", "rounds", "local_epochs", "lr", "seed", "strategy",
      "layers", "hidden", "rank", "classes", "dim", "per_class_train",
      "per_class_test", "spread", "batch_size", "table_path"};
  for (const auto& [key, value] : object.items()) {
    if (known.find(key) == known.end()) {
      throw ConfigError("unknown config key \"" + key + "\"");
    }
  }

  ExperimentConfig config;
  auto read = [&object](const char* key, auto& field) {
    if (!object.contains(key)) return;
    try {
      object.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("config field \"") + key +
                        "\" has the wrong type");
    }
  };
  read("clients", config.clients);
  read("beta", config.beta);
  read("rounds", config.rounds);
  read("local_epochs", config.local_epochs);
  read("lr", config.lr);
  read("seed", config.seed);
  read("strategy", config.strategy);
  read("layers", config.layers);
  read("hidden", config.hidden);
  read("rank", config.rank);
  read("classes", config.classes);
  read("dim", config.dim);
  read("per_class_train", config.per_class_train);
  read("per_class_test", config.per_class_test);
  read("spread", config.spread);
  read("batch_size", config.batch_size);
  read("table_path", config.table_path);
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file: " + path.string());
  }
  nlohmann::json parsed;
  try {
    in >> parsed;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config file " + path.string() + ": " + e.what());
  }
  return config_from_json(parsed);
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& config) {
  std::ofstream out(path);
  if (!out) {
    throw ConfigError("cannot write config file: " + path.string());
  }
  out << config_to_json(config).dump(2) << '\n';
}

}  // namespace livar
