#include "loong/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace loong {

using json = nlohmann::json;

void Config::applyThrustLimit(double mass_norm) {
  f_max_mass_norm = mass_norm;
  mpcc.setCollectiveThrustLimit(mass_norm, quad.mass);
  flat_limits.f_max_mass_norm = mass_norm;
}

Config defaultConfig() {
  Config c;
  c.applyThrustLimit(c.f_max_mass_norm);
  c.flat_limits.omega_max = std::min(c.mpcc.omega_max.x(), c.mpcc.omega_max.y());
  c.corridor.robot_radius = c.robot_radius;
  return c;
}

namespace {

json vecToJson(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
Vec3 vecFromJson(const json& j) { return Vec3(j.at(0), j.at(1), j.at(2)); }

}  // namespace

std::string configToJson(const Config& c) {
  json paper;
  paper["mass"] = c.quad.mass;
  paper["inertia"] = vecToJson(c.quad.inertia);
  paper["arm_length"] = c.quad.arm_length;
  paper["torque_const"] = c.quad.torque_const;
  paper["drag"] = vecToJson(c.quad.drag);
  paper["horizon"] = c.mpcc.horizon;
  paper["safe_horizon"] = c.mpcc.safe_horizon;
  paper["mpcc_dt"] = c.mpcc.dt;
  paper["mu"] = c.mpcc.mu;
  paper["q_c"] = c.mpcc.q_c;
  paper["omega_max"] = vecToJson(c.mpcc.omega_max);
  paper["f_max_mass_norm"] = c.f_max_mass_norm;
  paper["replan_rate"] = c.replan_rate;
  paper["lidar"] = {{"max_range", c.lidar.max_range},
                    {"horizontal_fov", c.lidar.horizontal_fov},
                    {"vertical_fov", c.lidar.vertical_fov},
                    {"vertical_tilt", c.lidar.vertical_tilt},
                    {"rays_h", c.lidar.rays_h},
                    {"rays_v", c.lidar.rays_v},
                    {"rate", c.lidar.rate}};

  json tuned;
  tuned["q_l"] = c.mpcc.q_l;
  tuned["q_omega"] = vecToJson(c.mpcc.q_omega);
  tuned["r_df"] = c.mpcc.r_df;
  tuned["r_dv"] = c.mpcc.r_dv;
  tuned["f_min"] = c.mpcc.f_min;
  tuned["v_theta_max"] = c.mpcc.v_theta_max;
  tuned["df_bounds"] = {c.mpcc.df_min, c.mpcc.df_max};
  tuned["dv_bounds"] = {c.mpcc.dv_min, c.mpcc.dv_max};
  tuned["rho_sfc"] = c.mpcc.rho_sfc;
  tuned["rho_sfc_l1"] = c.mpcc.rho_sfc_l1;
  tuned["rho_omega"] = c.mpcc.rho_omega;
  tuned["rho_omega_l1"] = c.mpcc.rho_omega_l1;
  tuned["sfc_margin"] = c.mpcc.sfc_margin;
  tuned["sfc_tighten"] = c.mpcc.sfc_tighten;
  tuned["omega_margin"] = c.mpcc.omega_margin;
  tuned["gn_iterations"] = c.mpcc.gn_iterations;
  tuned["qp_max_iterations"] = c.mpcc.qp_max_iterations;
  tuned["robot_radius"] = c.robot_radius;
  tuned["resolution"] = c.resolution;
  tuned["plant_dt"] = c.plant_dt;
  tuned["thrust_margin"] = c.flat_limits.thrust_margin;
  tuned["m_max"] = c.m_max;
  tuned["goal_tolerance"] = c.goal_tolerance;
  tuned["goal_speed_tolerance"] = c.goal_speed_tolerance;
  tuned["mission_timeout"] = c.mission_timeout;
  tuned["brake_decel"] = c.brake_decel;
  tuned["trajectory_reuse"] = c.trajectory_reuse;
  tuned["intersection_waypoints"] = c.intersection_waypoints;
  tuned["corridor_max_planes"] = c.corridor.max_planes;
  tuned["corridor_roi_scale"] = c.corridor.roi_scale;
  tuned["corridor_roi_min_half"] = c.corridor.roi_min_half;
  tuned["weights_path"] = c.weights_path;

  json j;
  j["paper"] = paper;
  j["tuned"] = tuned;
  return j.dump(2);
}

Config configFromJson(const std::string& text) {
  const json j = json::parse(text);
  Config c = defaultConfig();
  if (j.contains("paper")) {
    const json& p = j["paper"];
    if (p.contains("mass")) c.quad.mass = p["mass"];
    if (p.contains("inertia")) c.quad.inertia = vecFromJson(p["inertia"]);
    if (p.contains("arm_length")) c.quad.arm_length = p["arm_length"];
    if (p.contains("torque_const")) c.quad.torque_const = p["torque_const"];
    if (p.contains("drag")) c.quad.drag = vecFromJson(p["drag"]);
    if (p.contains("horizon")) c.mpcc.horizon = p["horizon"];
    if (p.contains("safe_horizon")) c.mpcc.safe_horizon = p["safe_horizon"];
    if (p.contains("mpcc_dt")) c.mpcc.dt = p["mpcc_dt"];
    if (p.contains("mu")) c.mpcc.mu = p["mu"];
    if (p.contains("q_c")) c.mpcc.q_c = p["q_c"];
    if (p.contains("omega_max")) c.mpcc.omega_max = vecFromJson(p["omega_max"]);
    if (p.contains("replan_rate")) c.replan_rate = p["replan_rate"];
    if (p.contains("lidar")) {
      const json& l = p["lidar"];
      if (l.contains("max_range")) c.lidar.max_range = l["max_range"];
      if (l.contains("horizontal_fov")) c.lidar.horizontal_fov = l["horizontal_fov"];
      if (l.contains("vertical_fov")) c.lidar.vertical_fov = l["vertical_fov"];
      if (l.contains("vertical_tilt")) c.lidar.vertical_tilt = l["vertical_tilt"];
      if (l.contains("rays_h")) c.lidar.rays_h = l["rays_h"];
      if (l.contains("rays_v")) c.lidar.rays_v = l["rays_v"];
      if (l.contains("rate")) c.lidar.rate = l["rate"];
    }
    if (p.contains("f_max_mass_norm")) c.applyThrustLimit(p["f_max_mass_norm"].get<double>());
  }
  if (j.contains("tuned")) {
    const json& t = j["tuned"];
    if (t.contains("q_l")) c.mpcc.q_l = t["q_l"];
    if (t.contains("q_omega")) c.mpcc.q_omega = vecFromJson(t["q_omega"]);
    if (t.contains("r_df")) c.mpcc.r_df = t["r_df"];
    if (t.contains("r_dv")) c.mpcc.r_dv = t["r_dv"];
    if (t.contains("f_min")) c.mpcc.f_min = t["f_min"];
    if (t.contains("v_theta_max")) c.mpcc.v_theta_max = t["v_theta_max"];
    if (t.contains("df_bounds")) {
      c.mpcc.df_min = t["df_bounds"].at(0);
      c.mpcc.df_max = t["df_bounds"].at(1);
    }
    if (t.contains("dv_bounds")) {
      c.mpcc.dv_min = t["dv_bounds"].at(0);
      c.mpcc.dv_max = t["dv_bounds"].at(1);
    }
    if (t.contains("rho_sfc")) c.mpcc.rho_sfc = t["rho_sfc"];
    if (t.contains("rho_sfc_l1")) c.mpcc.rho_sfc_l1 = t["rho_sfc_l1"];
    if (t.contains("rho_omega")) c.mpcc.rho_omega = t["rho_omega"];
    if (t.contains("rho_omega_l1")) c.mpcc.rho_omega_l1 = t["rho_omega_l1"];
    if (t.contains("sfc_margin")) c.mpcc.sfc_margin = t["sfc_margin"];
    if (t.contains("sfc_tighten")) c.mpcc.sfc_tighten = t["sfc_tighten"];
    if (t.contains("omega_margin")) c.mpcc.omega_margin = t["omega_margin"];
    if (t.contains("gn_iterations")) c.mpcc.gn_iterations = t["gn_iterations"];
    if (t.contains("qp_max_iterations")) c.mpcc.qp_max_iterations = t["qp_max_iterations"];
    if (t.contains("robot_radius")) c.robot_radius = t["robot_radius"];
    if (t.contains("resolution")) c.resolution = t["resolution"];
    if (t.contains("plant_dt")) c.plant_dt = t["plant_dt"];
    if (t.contains("thrust_margin")) c.flat_limits.thrust_margin = t["thrust_margin"];
    if (t.contains("m_max")) c.m_max = t["m_max"];
    if (t.contains("goal_tolerance")) c.goal_tolerance = t["goal_tolerance"];
    if (t.contains("goal_speed_tolerance")) c.goal_speed_tolerance = t["goal_speed_tolerance"];
    if (t.contains("mission_timeout")) c.mission_timeout = t["mission_timeout"];
    if (t.contains("brake_decel")) c.brake_decel = t["brake_decel"];
    if (t.contains("trajectory_reuse")) c.trajectory_reuse = t["trajectory_reuse"];
    if (t.contains("intersection_waypoints")) c.intersection_waypoints = t["intersection_waypoints"];
    if (t.contains("corridor_max_planes")) c.corridor.max_planes = t["corridor_max_planes"];
    if (t.contains("corridor_roi_scale")) c.corridor.roi_scale = t["corridor_roi_scale"];
    if (t.contains("corridor_roi_min_half")) c.corridor.roi_min_half = t["corridor_roi_min_half"];
    if (t.contains("weights_path")) c.weights_path = t["weights_path"];
  }
  c.corridor.robot_radius = c.robot_radius;
  c.flat_limits.omega_max = std::min(c.mpcc.omega_max.x(), c.mpcc.omega_max.y());
  return c;
}

Config loadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return configFromJson(ss.str());
}

void saveConfig(const Config& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config: " + path);
  out << configToJson(c) << "\n";
}

}  // namespace loong
