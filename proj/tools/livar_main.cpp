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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "livar/calibration.hpp"
#include "livar/config.hpp"
#include "livar/errors.hpp"
#include "livar/experiment.hpp"
#include "livar/fed.hpp"

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

/// Experiment flags shared by run/ablate/partition. Precedence:
/// flag > LIVAR_SEED env (seed only) > --config file > built-in default.
struct ExperimentFlags {
  livar::ExperimentConfig flags;
  std::string config_path;

  CLI::Option* clients = nullptr;
  CLI::Option* beta = nullptr;
  CLI::Option* rounds = nullptr;
  CLI::Option* local_epochs = nullptr;
  CLI::Option* lr = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* strategy = nullptr;
  CLI::Option* layers = nullptr;
  CLI::Option* hidden = nullptr;
  CLI::Option* rank = nullptr;
  CLI::Option* classes = nullptr;
  CLI::Option* dim = nullptr;
  CLI::Option* per_class_train = nullptr;
  CLI::Option* per_class_test = nullptr;
  CLI::Option* spread = nullptr;
  CLI::Option* batch_size = nullptr;
  CLI::Option* table = nullptr;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file")
        ->check(CLI::ExistingFile);
    clients = cmd->add_option("--clients", flags.clients, "Number of clients")
                  ->capture_default_str();
    beta = cmd->add_option("--beta", flags.beta, "Dirichlet concentration")
               ->capture_default_str();
    rounds = cmd->add_option("--rounds", flags.rounds, "Communication rounds")
                 ->capture_default_str();
    local_epochs = cmd->add_option("--local-epochs", flags.local_epochs,
                                   "Local epochs per round")
                       ->capture_default_str();
    lr = cmd->add_option("--lr", flags.lr, "Learning rate")->capture_default_str();
    seed = cmd->add_option("--seed", flags.seed, "Master seed")
               ->envname("LIVAR_SEED")
               ->capture_default_str();
    strategy = cmd->add_option("--strategy", flags.strategy,
                               "livar | fedavg | livar_alpha_only | livar_sigma_only")
                   ->capture_default_str();
    layers = cmd->add_option("--layers", flags.layers, "Backbone layer count")
                 ->capture_default_str();
    hidden = cmd->add_option("--hidden", flags.hidden, "Hidden width")
                 ->capture_default_str();
    rank = cmd->add_option("--rank", flags.rank, "Adapter rank")
               ->capture_default_str();
    classes = cmd->add_option("--classes", flags.classes, "Class count")
                  ->capture_default_str();
    dim = cmd->add_option("--dim", flags.dim, "Feature dimension")
              ->capture_default_str();
    per_class_train = cmd->add_option("--per-class-train", flags.per_class_train,
                                      "Training samples per class")
                          ->capture_default_str();
    per_class_test = cmd->add_option("--per-class-test", flags.per_class_test,
                                     "Test samples per class")
                         ->capture_default_str();
    spread = cmd->add_option("--spread", flags.spread, "Blob standard deviation")
                 ->capture_default_str();
    batch_size = cmd->add_option("--batch-size", flags.batch_size, "SGD batch size")
                     ->capture_default_str();
    table = cmd->add_option("--table", flags.table_path,
                            "Coefficient table JSON (default: embedded table)");
  }

  livar::ExperimentConfig resolve() const {
    livar::ExperimentConfig config;
    if (!config_path.empty()) {
      config = livar::load_config(config_path);
    }
    auto overlay = [](CLI::Option* option, auto& target, const auto& value) {
      if (option != nullptr && option->count() > 0) {
        target = value;
      }
    };
    overlay(clients, config.clients, flags.clients);
    overlay(beta, config.beta, flags.beta);
    overlay(rounds, config.rounds, flags.rounds);
    overlay(local_epochs, config.local_epochs, flags.local_epochs);
    overlay(lr, config.lr, flags.lr);
    overlay(seed, config.seed, flags.seed);
    overlay(strategy, config.strategy, flags.strategy);
    overlay(layers, config.layers, flags.layers);
    overlay(hidden, config.hidden, flags.hidden);
    overlay(rank, config.rank, flags.rank);
    overlay(classes, config.classes, flags.classes);
    overlay(dim, config.dim, flags.dim);
    overlay(per_class_train, config.per_class_train, flags.per_class_train);
    overlay(per_class_test, config.per_class_test, flags.per_class_test);
    overlay(spread, config.spread, flags.spread);
    overlay(batch_size, config.batch_size, flags.batch_size);
    overlay(table, config.table_path, flags.table_path);
    config.validate();
    return config;
  }
};

fs::path ensure_out_dir(const std::string& out_dir) {
  fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw livar::ConfigError("cannot create output directory " + dir.string() +
                             ": " + ec.message());
  }
  return dir;
}

int cmd_run(const ExperimentFlags& flags, const std::string& out_dir,
            bool parallel_clients, bool dump_alphas) {
  const livar::ExperimentConfig config = flags.resolve();
  const fs::path dir = ensure_out_dir(out_dir);

  std::ofstream metrics(dir / "metrics.csv");
  if (!metrics) {
    throw livar::ConfigError("cannot write " + (dir / "metrics.csv").string());
  }
  livar::write_metrics_header(metrics, config.clients, config.layers, dump_alphas);

  auto on_round = [&](const livar::RoundMetrics& round) {
    livar::write_metrics_row(metrics, round, config.clients, config.layers,
                             dump_alphas);
    metrics.flush();
    std::cout << "round " << round.round << ": test_accuracy=" << round.test_accuracy
              << " mean_client_loss=" << round.mean_client_loss << '\n';
  };
  const livar::ExperimentResult result =
      livar::run_experiment(config, parallel_clients, on_round);
  metrics.close();

  livar::write_summary_json(dir / "summary.json", result);
  std::cout << "final_accuracy=" << result.final_accuracy << '\n';
  std::cout << "wrote " << (dir / "metrics.csv").string() << " and "
            << (dir / "summary.json").string() << '\n';
  return kExitOk;
}

int cmd_ablate(const ExperimentFlags& flags, const std::string& out_dir,
               int num_seeds, bool parallel_clients) {
  livar::ExperimentConfig base = flags.resolve();
  if (num_seeds < 1) {
    throw livar::ConfigError("--num-seeds must be >= 1");
  }
  std::vector<std::uint64_t> seeds;
  seeds.reserve(static_cast<std::size_t>(num_seeds));
  for (int i = 0; i < num_seeds; ++i) {
    seeds.push_back(base.seed + static_cast<std::uint64_t>(i));
  }
  const livar::AblationResult result =
      livar::run_ablation(base, seeds, parallel_clients);
  const fs::path dir = ensure_out_dir(out_dir);
  livar::write_ablation_csv(dir / "ablation.csv", result);
  for (const livar::AblationRow& row : result.rows) {
    std::cout << "alpha=" << (row.alpha_on ? "on" : "off")
              << " sigma=" << (row.sigma_on ? "on" : "off")
              << " mean_acc=" << row.mean_acc << " std_acc=" << row.std_acc << '\n';
  }
  std::cout << "wrote " << (dir / "ablation.csv").string() << '\n';
  return kExitOk;
}

int cmd_calibrate(const livar::ProxyConfig& proxy, const std::string& out_dir,
                  bool force) {
  const fs::path dir = ensure_out_dir(out_dir);
  const fs::path table_path = dir / "table.json";
  if (fs::exists(table_path) && !force) {
    throw livar::ConfigError("refusing to overwrite " + table_path.string() +
                             " without --force");
  }

  const livar::CalibrationRun run = livar::run_proxy(proxy);
  const livar::GShapTable table = livar::fit_table(run, {25.0, 50.0}, {60.0, 80.0});
  livar::save_gshap_table(table_path, table);
  livar::write_calibration_report(dir / "calibration_report.csv", run);

  const livar::TrendReport trend = livar::validate_trend(table);
  for (int a = 0; a < 3; ++a) {
    std::cout << "trend b-row " << a << ": "
              << (trend.b_rows_pass[a] ? "pass" : "fail") << '\n';
  }
  for (int b = 0; b < 3; ++b) {
    std::cout << "trend a-col " << b << ": "
              << (trend.a_cols_pass[b] ? "pass" : "fail") << '\n';
  }
  std::cout << "wrote " << table_path.string() << " and "
            << (dir / "calibration_report.csv").string() << '\n';
  return kExitOk;
}

int cmd_partition(const ExperimentFlags& flags, const std::string& out_dir) {
  const livar::ExperimentConfig config = flags.resolve();
  const fs::path dir = ensure_out_dir(out_dir);
  livar::write_partition_csv(dir / "partition.csv", config);
  std::cout << "wrote " << (dir / "partition.csv").string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated LoRA merging simulator"};
  app.require_subcommand(1);

  ExperimentFlags run_flags;
  std::string run_out_dir = ".";
  bool run_parallel = false;
  bool run_dump_alphas = false;
  CLI::App* run = app.add_subcommand("run", "Run a federated experiment");
  run_flags.attach(run);
  run->add_option("--out-dir", run_out_dir, "Artifact directory")
      ->capture_default_str();
  run->add_flag("--parallel-clients", run_parallel,
                "Train clients on worker threads (outputs are unchanged)");
  run->add_flag("--dump-alphas", run_dump_alphas,
                "Add per-coefficient columns to metrics.csv");

  ExperimentFlags ablate_flags;
  std::string ablate_out_dir = ".";
  int ablate_num_seeds = 10;
  bool ablate_parallel = false;
  CLI::App* ablate =
      app.add_subcommand("ablate", "Run the 2x2 aggregation-component grid");
  ablate_flags.attach(ablate);
  ablate->add_option("--out-dir", ablate_out_dir, "Artifact directory")
      ->capture_default_str();
  ablate->add_option("--num-seeds", ablate_num_seeds, "Seeds per variant")
      ->capture_default_str();
  ablate->add_flag("--parallel-clients", ablate_parallel,
                   "Train clients on worker threads (outputs are unchanged)");

  livar::ProxyConfig proxy;
  int cal_layers = 2;
  int cal_hidden = 16;
  int cal_dim = 16;
  std::string cal_out_dir = ".";
  bool cal_force = false;
  CLI::App* calibrate =
      app.add_subcommand("calibrate", "Fit a coefficient table on proxy data");
  calibrate->add_option("--clients", proxy.num_clients, "Calibration clients")
      ->capture_default_str();
  calibrate->add_option("--classes", proxy.num_classes, "Class count")
      ->capture_default_str();
  calibrate->add_option("--per-class", proxy.per_class, "Samples per class")
      ->capture_default_str();
  calibrate->add_option("--spread", proxy.spread, "Blob standard deviation")
      ->capture_default_str();
  calibrate->add_option("--beta", proxy.beta, "Dirichlet concentration")
      ->capture_default_str();
  calibrate->add_option("--dim", cal_dim, "Feature dimension")->capture_default_str();
  calibrate->add_option("--layers", cal_layers, "Backbone layer count")
      ->capture_default_str();
  calibrate->add_option("--hidden", cal_hidden, "Hidden width")
      ->capture_default_str();
  calibrate->add_option("--rank", proxy.train.rank, "Adapter rank")
      ->capture_default_str();
  calibrate->add_option("--epochs", proxy.train.epochs, "Local epochs")
      ->capture_default_str();
  calibrate->add_option("--lr", proxy.train.lr, "Learning rate")
      ->capture_default_str();
  calibrate->add_option("--batch-size", proxy.train.batch_size, "SGD batch size")
      ->capture_default_str();
  calibrate->add_option("--seed", proxy.seed, "Master seed")
      ->envname("LIVAR_SEED")
      ->capture_default_str();
  calibrate->add_option("--out-dir", cal_out_dir, "Artifact directory")
      ->capture_default_str();
  calibrate->add_flag("--force", cal_force, "Overwrite an existing table.json");

  ExperimentFlags partition_flags;
  std::string partition_out_dir = ".";
  CLI::App* partition =
      app.add_subcommand("partition", "Dump the per-client class histogram");
  partition_flags.attach(partition);
  partition->add_option("--out-dir", partition_out_dir, "Artifact directory")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (run->parsed()) {
      return cmd_run(run_flags, run_out_dir, run_parallel, run_dump_alphas);
    }
    if (ablate->parsed()) {
      return cmd_ablate(ablate_flags, ablate_out_dir, ablate_num_seeds,
                        ablate_parallel);
    }
    if (calibrate->parsed()) {
      proxy.dims.clear();
      proxy.dims.push_back(static_cast<std::size_t>(cal_dim));
      for (int l = 0; l < cal_layers; ++l) {
        proxy.dims.push_back(static_cast<std::size_t>(cal_hidden));
      }
      return cmd_calibrate(proxy, cal_out_dir, cal_force);
    }
    if (partition->parsed()) {
      return cmd_partition(partition_flags, partition_out_dir);
    }
  } catch (const livar::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
