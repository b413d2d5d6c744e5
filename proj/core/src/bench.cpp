#include "loong/bench.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

namespace loong {

int threadsFromEnv() {
  const char* env = std::getenv("LOONG_THREADS");
  if (env) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return std::max(1u, std::min(4u, std::thread::hardware_concurrency()));
}

std::vector<SuiteRow> runSuite(const Config& cfg, const std::string& config_name,
                               ScenarioClass cls, double density, int seeds, uint64_t seed0,
                               const MlpModel* model, int threads) {
  std::vector<SuiteRow> rows(seeds);
  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= seeds) break;
      const uint64_t seed = seed0 + static_cast<uint64_t>(i);
      const Scenario scenario = generateScenario(cls, density, seed);
      rows[i].config_name = config_name;
      rows[i].seed = seed;
      rows[i].result = runMission(cfg, scenario, model);
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < std::max(1, threads); ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return rows;
}

std::vector<std::pair<std::string, Config>> ablationVariants(const Config& base) {
  std::vector<std::pair<std::string, Config>> variants;
  variants.emplace_back("default", base);
  {
    Config c = base;
    c.mpcc.safe_horizon = 1;
    variants.emplace_back("G1", c);
  }
  {
    Config c = base;
    c.mpcc.safe_horizon = c.mpcc.horizon;
    variants.emplace_back("GN", c);
  }
  {
    Config c = base;
    c.trajectory_reuse = false;
    variants.emplace_back("no_reuse", c);
  }
  {
    Config c = base;
    c.intersection_waypoints = false;
    variants.emplace_back("no_intersection_wp", c);
  }
  return variants;
}

std::vector<SuiteRow> runAblation(const Config& base, ScenarioClass cls, double density, int seeds,
                                  uint64_t seed0, const MlpModel* model, int threads) {
  std::vector<SuiteRow> all;
  for (const auto& [name, cfg] : ablationVariants(base)) {
    const auto rows = runSuite(cfg, name, cls, density, seeds, seed0, model, threads);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  return all;
}

std::string suiteCsv(const std::vector<SuiteRow>& rows) {
  std::ostringstream out;
  out << "config,seed,success,avg_v,max_v,flight_time,mean_cycle_ms,p99_cycle_ms,sfc_violations\n";
  for (const SuiteRow& r : rows) {
    out << r.config_name << "," << r.seed << "," << (r.result.success ? 1 : 0) << ","
        << r.result.avg_speed << "," << r.result.max_speed << "," << r.result.flight_time << ","
        << r.result.mean_cycle_ms << "," << r.result.p99_cycle_ms << ","
        << r.result.sfc_violations << "\n";
  }
  return out.str();
}

void writeSuiteCsv(const std::vector<SuiteRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write csv: " + path);
  out << suiteCsv(rows);
}

}  // namespace loong
