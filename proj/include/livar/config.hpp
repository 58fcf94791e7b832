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

#ifndef LIVAR_CONFIG_HPP_
#define LIVAR_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace livar {

/// Full experiment description. Defaults are the shipped protocol: 10
/// clients on a Dirichlet(0.5) split, 5 rounds of 5 local epochs at lr
/// 0.05, a 4-layer width-32 backbone with rank-4 adapters.
struct ExperimentConfig {
  int clients = 10;
  double beta = 0.5;
  int rounds = 5;
  int local_epochs = 5;
  double lr = 0.05;
  std::uint64_t seed = 0;
  std::string strategy = "livar";
  int layers = 4;
  int hidden = 32;
  int rank = 4;
  int classes = 10;
  int dim = 16;
  int per_class_train = 40;
  int per_class_test = 25;
  double spread = 0.8;
  int batch_size = 16;
  std::string table_path;  // empty selects the embedded default table

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Layer widths d_0 .. d_L implied by the config: the data dimension
/// followed by `layers` hidden widths.
std::vector<std::size_t> model_dims(const ExperimentConfig& config);

/// JSON object with one flat key per field, in declaration order.
nlohmann::ordered_json config_to_json(const ExperimentConfig& config);

/// Strict parse: unknown keys and type mismatches raise ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& object);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& config);

}  // namespace livar

#endif  // LIVAR_CONFIG_HPP_
