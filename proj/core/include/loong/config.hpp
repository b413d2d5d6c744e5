#pragma once

#include <string>

#include "loong/dynamics.hpp"
#include "loong/mpcc.hpp"
#include "loong/polytraj.hpp"
#include "loong/world.hpp"

namespace loong {

// Full pipeline configuration. The `paper` section carries the published
// platform and controller constants; everything under `tuned` is a repo
// default with no external provenance.
struct Config {
  // paper
  QuadParams quad;
  MpccConfig mpcc;                 // N, G, dt, mu, q_c, omega_max from paper
  double f_max_mass_norm = 33.0;   // m/s^2, collective thrust limit
  double replan_rate = 100.0;      // Hz
  LidarConfig lidar;               // MID-360-class defaults

  // tuned
  double robot_radius = 0.15;      // m
  double resolution = 0.2;         // m/voxel
  double plant_dt = 0.001;         // s, RK4 ground-truth step
  FlatLimits flat_limits;
  int m_max = 6;                   // waypoint lookahead cap
  double goal_tolerance = 0.5;     // m
  double goal_speed_tolerance = 1.0;  // m/s
  double mission_timeout = 60.0;   // s of simulated time
  double brake_decel = 8.0;        // m/s^2, progress-speed schedule toward path end
  double start_free_radius = 1.0;  // m, pre-flight clearance marked known-free
  bool trajectory_reuse = true;
  bool intersection_waypoints = true;  // ablation: waypoints from SFC overlaps
  InflateOptions corridor;
  std::string weights_path;        // empty: heuristic time allocation

  double inflation() const { return robot_radius + resolution; }
  void applyThrustLimit(double mass_norm);
};

Config defaultConfig();

std::string configToJson(const Config& c);
Config configFromJson(const std::string& text);
Config loadConfig(const std::string& path);
void saveConfig(const Config& c, const std::string& path);

}  // namespace loong
