#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "loong/bench.hpp"
#include "loong/config.hpp"
#include "loong/pilot.hpp"
#include "loong/timenet.hpp"
#include "loong/world.hpp"

namespace {

using namespace loong;

Config loadConfigOrDefault(const std::string& path) {
  return path.empty() ? defaultConfig() : loadConfig(path);
}

std::optional<MlpModel> loadModelIfAny(const Config& cfg, const std::string& override_path) {
  const std::string path = override_path.empty() ? cfg.weights_path : override_path;
  if (path.empty()) return std::nullopt;
  return loadModel(path);
}

ScenarioClass classFromName(const std::string& name) {
  if (name == "forest") return ScenarioClass::kForest;
  if (name == "corridor") return ScenarioClass::kCorridor;
  throw CLI::ValidationError("--class", "expected 'forest' or 'corridor'");
}

void writeOrPrint(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text << "\n";
  } else {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << text << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quadrotor contouring-control planner benchmark harness"};
  app.require_subcommand(1);

  std::string config_path, scenario_path, weights_path, out_path, telemetry_path;
  std::string scenario_class = "forest";
  double density = 0.30;
  int seeds = 10;
  uint64_t seed = 1;
  bool strict = false;
  int n_samples = 10000;
  int epochs = 200;
  int batch = 256;
  double lr = 1e-3;
  std::string dataset_path;

  auto* run = app.add_subcommand("run", "run one mission and print the result JSON");
  run->add_option("--scenario", scenario_path, "scenario JSON file")->required();
  run->add_option("--config", config_path, "config JSON (default: built-in)");
  run->add_option("--weights", weights_path, "time-allocation network weights");
  run->add_option("--telemetry", telemetry_path, "per-cycle JSON-lines output");
  run->add_option("--out", out_path, "write result JSON here instead of stdout");
  run->add_flag("--strict", strict, "exit 1 when the mission fails");

  auto* suite = app.add_subcommand("suite", "run K seeded missions and write a CSV");
  suite->add_option("--class", scenario_class, "forest|corridor");
  suite->add_option("--density", density, "obstacles per m^2");
  suite->add_option("--seeds", seeds, "number of seeds");
  suite->add_option("--seed", seed, "first seed");
  suite->add_option("--config", config_path);
  suite->add_option("--weights", weights_path);
  suite->add_option("--out", out_path, "CSV path (default stdout)");
  suite->add_flag("--strict", strict, "exit 1 when any mission fails");

  auto* ablate = app.add_subcommand("ablate", "ablation matrix on identical seeds");
  ablate->add_option("--class", scenario_class)->default_val("corridor");
  ablate->add_option("--density", density)->default_val(0.06);
  ablate->add_option("--seeds", seeds);
  ablate->add_option("--seed", seed);
  ablate->add_option("--config", config_path);
  ablate->add_option("--weights", weights_path);
  ablate->add_option("--out", out_path);
  ablate->add_flag("--strict", strict);

  auto* dataset = app.add_subcommand("dataset", "generate expert-labeled time allocations");
  dataset->add_option("--n", n_samples, "sample count");
  dataset->add_option("--seed", seed);
  dataset->add_option("--config", config_path);
  dataset->add_option("--out", out_path, "dataset CSV")->required();

  auto* train_cmd = app.add_subcommand("train", "train the time-allocation network");
  train_cmd->add_option("--dataset", dataset_path, "dataset CSV")->required();
  train_cmd->add_option("--epochs", epochs);
  train_cmd->add_option("--batch", batch);
  train_cmd->add_option("--lr", lr);
  train_cmd->add_option("--seed", seed);
  train_cmd->add_option("--out", out_path, "weights file")->required();

  auto* eval = app.add_subcommand("eval-net", "evaluate a trained network on a dataset");
  eval->add_option("--weights", weights_path)->required();
  eval->add_option("--dataset", dataset_path)->required();

  auto* dump = app.add_subcommand("dump-scenario", "generate and write a scenario JSON");
  dump->add_option("--class", scenario_class);
  dump->add_option("--density", density);
  dump->add_option("--seed", seed);
  dump->add_option("--out", out_path)->required();

  auto* dumpcfg = app.add_subcommand("dump-config", "write the default config JSON");
  dumpcfg->add_option("--out", out_path);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const int threads = threadsFromEnv();

    if (run->parsed()) {
      const Config cfg = loadConfigOrDefault(config_path);
      const Scenario scenario = loadScenario(scenario_path);
      const auto model = loadModelIfAny(cfg, weights_path);
      const MissionResult result =
          runMission(cfg, scenario, model ? &*model : nullptr, telemetry_path);
      writeOrPrint(result.toJson(), out_path);
      return strict && !result.success ? 1 : 0;
    }

    if (suite->parsed()) {
      const Config cfg = loadConfigOrDefault(config_path);
      const auto model = loadModelIfAny(cfg, weights_path);
      const auto rows = runSuite(cfg, "default", classFromName(scenario_class), density, seeds,
                                 seed, model ? &*model : nullptr, threads);
      writeOrPrint(suiteCsv(rows), out_path);
      if (strict) {
        for (const auto& r : rows) {
          if (!r.result.success) return 1;
        }
      }
      return 0;
    }

    if (ablate->parsed()) {
      const Config cfg = loadConfigOrDefault(config_path);
      const auto model = loadModelIfAny(cfg, weights_path);
      const auto rows = runAblation(cfg, classFromName(scenario_class), density, seeds, seed,
                                    model ? &*model : nullptr, threads);
      writeOrPrint(suiteCsv(rows), out_path);
      if (strict) {
        for (const auto& r : rows) {
          if (r.config_name == "default" && !r.result.success) return 1;
        }
      }
      return 0;
    }

    if (dataset->parsed()) {
      const Config cfg = loadConfigOrDefault(config_path);
      SamplerConfig sampler;
      sampler.seed = seed;
      sampler.m_max = cfg.m_max;
      sampler.threads = threads;
      const auto data = generateDataset(n_samples, sampler, cfg.flat_limits, cfg.quad);
      saveDatasetCsv(data, sampler.m_max, out_path);
      std::printf("wrote %d samples to %s\n", n_samples, out_path.c_str());
      return 0;
    }

    if (train_cmd->parsed()) {
      int m_max = 6;
      const auto data = loadDatasetCsv(dataset_path, &m_max);
      TrainConfig tc;
      tc.epochs = epochs;
      tc.batch_size = batch;
      tc.lr = lr;
      tc.seed = seed;
      tc.verbose = true;
      const TrainResult result = train(data, tc, m_max);
      saveModel(result.model, out_path);
      std::printf("best validation loss %.6f; weights written to %s\n", result.best_val_loss,
                  out_path.c_str());
      return 0;
    }

    if (eval->parsed()) {
      const MlpModel model = loadModel(weights_path);
      const auto data = loadDatasetCsv(dataset_path);
      const double med = medianRelativeError(model, data);
      const auto t0 = std::chrono::steady_clock::now();
      int count = 0;
      for (const auto& s : data) {
        (void)model.forward(encodeInput(s.v, s.a, s.rel_waypoints, model.m_max));
        ++count;
      }
      const double us_per =
          std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count() /
          std::max(1, count);
      std::printf("median relative error: %.4f\nmean inference time: %.1f us\n", med, us_per);
      return 0;
    }

    if (dump->parsed()) {
      const Scenario s = generateScenario(classFromName(scenario_class), density, seed);
      writeOrPrint(scenarioToJson(s), out_path);
      return 0;
    }

    if (dumpcfg->parsed()) {
      writeOrPrint(configToJson(defaultConfig()), out_path);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
