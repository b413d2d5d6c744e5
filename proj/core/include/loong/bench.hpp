#pragma once

#include <string>
#include <vector>

#include "loong/config.hpp"
#include "loong/pilot.hpp"
#include "loong/timenet.hpp"
#include "loong/world.hpp"

namespace loong {

struct SuiteRow {
  std::string config_name;
  uint64_t seed = 0;
  MissionResult result;
};

// Missions run in parallel worker threads (capped by LOONG_THREADS); row
// order is deterministic regardless of scheduling.
std::vector<SuiteRow> runSuite(const Config& cfg, const std::string& config_name,
                               ScenarioClass cls, double density, int seeds, uint64_t seed0,
                               const MlpModel* model, int threads);

// Table-style ablation over identical seeds: default (G=10), G=1, G=N,
// trajectory reuse off, intersection waypoints off.
std::vector<SuiteRow> runAblation(const Config& base, ScenarioClass cls, double density, int seeds,
                                  uint64_t seed0, const MlpModel* model, int threads);

std::vector<std::pair<std::string, Config>> ablationVariants(const Config& base);

// Columns: config, seed, success, avg_v, max_v, flight_time, mean_cycle_ms,
// p99_cycle_ms, sfc_violations. Reruns are identical modulo the timing columns.
void writeSuiteCsv(const std::vector<SuiteRow>& rows, const std::string& path);
std::string suiteCsv(const std::vector<SuiteRow>& rows);

int threadsFromEnv();

}  // namespace loong
