#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "loong/config.hpp"
#include "loong/corridor.hpp"
#include "loong/mpcc.hpp"
#include "loong/pathfind.hpp"
#include "loong/timenet.hpp"
#include "loong/world.hpp"

namespace loong {

enum class MissionPhase { kFlying, kGoalReached, kFailed };

struct MissionState {
  Vec3 goal = Vec3::Zero();
  MissionPhase phase = MissionPhase::kFlying;
  std::optional<MpccSolution> prev_solution;
  std::optional<Polytope> prev_sfc;
  std::optional<ReferencePath> prev_ref;
  double prev_theta = 0.0;  // progress on prev_ref, brake-mode anchor
  double clock = 0.0;       // s, simulated
  int qp_failures = 0;      // consecutive; 3 in a row fails the mission
};

struct CycleTelemetry {
  double t = 0.0;
  AugmentedState x0;
  double cost = 0.0;
  double sfc_slack_max = 0.0;
  double kkt_residual = 0.0;
  double solve_time = 0.0;  // s, MPCC only
  AugmentedInput executed;
  bool fallback = false;         // brake reference or shifted-previous input
  bool reuse_violation = false;  // p_c or p_G left the previous SFC
  bool used_heuristic_alloc = false;
  double cycle_seconds = 0.0;  // wall time of the whole planning cycle
  std::string note;            // fallback reason, empty on nominal cycles

  std::string toJsonLine() const;
};

// The 100 Hz replanning loop: map snapshot -> A* from the reused state ->
// shorten -> corridor -> learned time allocation -> MPCC constrained by the
// p_c..p_G seeded polytope -> first input out.
class Pilot {
 public:
  Pilot(const Config& cfg, const Scenario& scenario);

  void setModel(MlpModel model) { model_ = std::move(model); }
  bool hasModel() const { return model_.has_value(); }

  VoxelGrid& grid() { return grid_; }
  const VoxelGrid& grid() const { return grid_; }
  MissionState& mission() { return mission_; }
  const Config& config() const { return cfg_; }

  // f command and progress bookkeeping carried between cycles.
  const Vec4& commandedThrust() const { return f_cmd_; }
  double progressSpeed() const { return v_theta_; }

  void sense(const QuadState& pose);

  // Pre-marks a free ball (take-off clearance known before flight).
  void seedFreeBubble(const Vec3& center, double radius);

  // One replanning step; the returned rotor command is held for 1/replan_rate.
  RotorInput planCycle(const QuadState& plant);

  const CycleTelemetry& lastTelemetry() const { return telemetry_; }
  const Corridor& lastCorridor() const { return corridor_; }
  const std::optional<Polytope>& lastSfc() const { return mission_.prev_sfc; }

 private:
  std::vector<double> heuristicTimes(const std::vector<Vec3>& rel, const Vec3& v) const;
  std::vector<double> allocateTimes(const std::vector<Vec3>& rel, const Vec3& v, const Vec3& a,
                                    bool* used_heuristic);
  RotorInput execute(const AugmentedInput& input, double v_cap);
  RotorInput brakeCycle(const QuadState& plant, const Vec3& a_est, CycleTelemetry* tel);
  RotorInput executeShiftedPrevious(CycleTelemetry* tel);

  Config cfg_;
  Scenario scenario_;
  VoxelGrid grid_;
  MpccSolver solver_;
  PathfindScratch scratch_;
  std::optional<MlpModel> model_;
  MissionState mission_;
  Corridor corridor_;
  CycleTelemetry telemetry_;

  Vec4 f_cmd_;
  double v_theta_ = 0.0;
  double last_v_cap_ = 0.0;
};

struct MissionResult {
  bool success = false;
  bool collision = false;
  MissionPhase phase = MissionPhase::kFailed;
  double flight_time = 0.0;  // s to goal
  double avg_speed = 0.0;    // m/s over the flight
  double max_speed = 0.0;
  int cycles = 0;
  int sfc_violations = 0;  // unflagged safety-chain violations (> 1e-2 m)
  int qp_failures = 0;
  int fallback_cycles = 0;
  double mean_cycle_ms = 0.0;
  double p99_cycle_ms = 0.0;
  uint64_t seed = 0;

  // Timing fields are excluded when comparing runs for determinism.
  std::string toJson(bool include_timing = true) const;
};

MissionResult runMission(const Config& cfg, const Scenario& scenario, const MlpModel* model,
                         const std::string& telemetry_path = "");

}  // namespace loong
