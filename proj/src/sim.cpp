#include "topotrack/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace topotrack {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Method / policy names

std::string to_string(Method m) {
  switch (m) {
    case Method::khan_connected:
      return "khan-connected";
    case Method::khan_unconnected:
      return "khan-unconnected";
    case Method::lidar_gps:
      return "lidar+gps";
    case Method::rfid_gps:
      return "rfid+gps";
    case Method::full:
      return "rfid+lidar+gps";
    case Method::no_monitor:
      return "no-monitor";
    case Method::constant_speed:
      return "constant-speed";
  }
  return "?";
}

std::string to_string(Policy p) {
  return p == Policy::nbs ? "nbs" : "estimated-node";
}

Method method_from_string(const std::string& name) {
  if (name == "khan-connected") return Method::khan_connected;
  if (name == "khan-unconnected") return Method::khan_unconnected;
  if (name == "lidar+gps") return Method::lidar_gps;
  if (name == "rfid+gps") return Method::rfid_gps;
  if (name == "rfid+lidar+gps" || name == "ours" || name == "full") return Method::full;
  if (name == "no-monitor") return Method::no_monitor;
  if (name == "constant-speed") return Method::constant_speed;
  throw ConfigError(
      "unknown method '" + name +
      "'; valid: khan-connected, khan-unconnected, lidar+gps, rfid+gps, "
      "rfid+lidar+gps, no-monitor, constant-speed");
}

Policy policy_from_string(const std::string& name) {
  if (name == "nbs") return Policy::nbs;
  if (name == "estimated-node") return Policy::estimated_node;
  throw ConfigError("unknown policy '" + name + "'; valid: nbs, estimated-node");
}

bool method_uses_robot(Method m) {
  return m != Method::khan_connected && m != Method::khan_unconnected;
}

bool method_uses_lidar(Method m) {
  return m == Method::lidar_gps || m == Method::full || m == Method::no_monitor ||
         m == Method::constant_speed;
}

bool method_uses_rfid(Method m) {
  return m == Method::rfid_gps || m == Method::full || m == Method::no_monitor ||
         m == Method::constant_speed;
}

// ---------------------------------------------------------------------------
// Config (de)serialization

namespace {

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    out = j.at(key).get<T>();
  }
}

unsigned criterion_mask_from_string(const std::string& name) {
  unsigned mask = 0;
  std::stringstream ss(name);
  std::string part;
  while (std::getline(ss, part, '+')) {
    if (part == "td") {
      mask |= 1u << static_cast<int>(Criterion::travel_distance);
    } else if (part == "st") {
      mask |= 1u << static_cast<int>(Criterion::sensing_time);
    } else if (part == "rfid") {
      mask |= 1u << static_cast<int>(Criterion::rfid_gain);
    } else if (part == "bs") {
      mask |= 1u << static_cast<int>(Criterion::battery);
    } else {
      throw ConfigError("unknown criterion '" + part + "' in measure key");
    }
  }
  return mask;
}

std::string criterion_mask_to_string(unsigned mask) {
  static const char* names[] = {"td", "st", "rfid", "bs"};
  std::string out;
  for (int i = 0; i < kCriterionCount; ++i) {
    if (mask & (1u << i)) {
      if (!out.empty()) {
        out += '+';
      }
      out += names[i];
    }
  }
  return out;
}

}  // namespace

std::string SimConfig::to_json_text() const {
  json j;
  j["map"]["layout"] = {{"tunnels", layout.tunnels},
                        {"rows", layout.rows},
                        {"nodes_per_row", layout.nodes_per_row},
                        {"node_spacing", layout.node_spacing},
                        {"row_gap", layout.row_gap},
                        {"tunnel_gap", layout.tunnel_gap},
                        {"connector_offset", layout.connector_offset},
                        {"spur_nodes", layout.spur_nodes}};
  if (map_path) {
    j["map"]["path"] = *map_path;
  }
  j["method"] = to_string(method);
  j["policy"] = to_string(policy);
  j["pickers"] = pickers;
  j["duration_s"] = duration_s;
  j["dt"] = dt;
  j["metrics_period_s"] = metrics_period_s;
  j["picker"] = {{"speed", picker_speed},
                 {"p_reverse", p_reverse},
                 {"t_reverse_s", t_reverse_s}};
  if (!picker_speeds.empty()) {
    j["picker"]["speeds"] = picker_speeds;
  }
  j["gps"] = {{"offset_min", gps.offset_min},
              {"offset_max", gps.offset_max},
              {"white_std", gps.white_std},
              {"drift_std", gps.drift_std},
              {"drift_tau_s", gps.drift_tau_s},
              {"blackout_min_s", gps.blackout_min_s},
              {"blackout_max_s", gps.blackout_max_s},
              {"blackout_interval_s", gps.blackout_interval_s},
              {"period_s", gps.period_s}};
  j["lidar"] = {{"range", lidar.range},
                {"position_std", lidar.position_std},
                {"false_positive_rate", lidar.false_positive_rate},
                {"period_s", lidar.period_s}};
  j["rfid"] = {{"range", rfid.range}, {"period_s", rfid.period_s}};
  j["sensors"] = {{"sigma_gps", sensors.sigma_gps},
                  {"sigma_lidar", sensors.sigma_lidar},
                  {"rfid_range", sensors.rfid_range},
                  {"velocity_window", sensors.velocity_window}};
  j["filter"] = {{"particle_count", filter.particle_count},
                 {"velocity_window", filter.velocity_window},
                 {"eps_jsd", filter.eps_jsd},
                 {"eps_entropy", filter.eps_entropy},
                 {"mu_init", filter.mu_init},
                 {"var_init", filter.var_init},
                 {"mu_noise", filter.mu_noise},
                 {"var_noise", filter.var_noise},
                 {"dwell_init_min", filter.dwell_init_min},
                 {"dwell_init_max", filter.dwell_init_max},
                 {"dwell_noise_min", filter.dwell_noise_min},
                 {"dwell_noise_max", filter.dwell_noise_max},
                 {"gamma_q_gps", filter.gamma_q_gps},
                 {"gamma_q_lidar", filter.gamma_q_lidar},
                 {"gamma_q_rfid", filter.gamma_q_rfid},
                 {"gamma_v_gps", filter.gamma_v_gps},
                 {"gamma_v_lidar", filter.gamma_v_lidar},
                 {"gamma_v_rfid", filter.gamma_v_rfid},
                 {"prj_reinit", filter.prj_reinit},
                 {"prediction_rate", filter.prediction_rate},
                 {"sigma_v_floor", filter.sigma_v_floor},
                 {"constant_speed", filter.constant_speed},
                 {"systematic_resampling", filter.systematic_resampling}};
  j["robot"] = {{"speed", robot.speed},
                {"battery_pct", robot.battery_pct},
                {"drain_per_m", robot.drain_per_m},
                {"start_node", robot.start_node}};
  j["nbs"] = {{"weights",
               {{"td", nbs_weights[0]},
                {"st", nbs_weights[1]},
                {"rfid", nbs_weights[2]},
                {"bs", nbs_weights[3]}}},
              {"replan_interval_s", planner.replan_interval_s},
              {"sense_time_s", planner.sense_time_s},
              {"sense_time_max_s", planner.sense_time_max_s},
              {"rfid_range", planner.rfid_range},
              {"battery_drain_per_m", planner.battery_drain_per_m}};
  if (nbs_measure) {
    json m = json::object();
    for (const auto& [mask, value] : *nbs_measure) {
      m[criterion_mask_to_string(mask)] = value;
    }
    j["nbs"]["measure"] = m;
  }
  j["seed"] = seed;
  return j.dump(2);
}

SimConfig SimConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse failure: ") + e.what());
  }
  SimConfig c;
  try {
    if (j.contains("map")) {
      const auto& m = j["map"];
      if (m.contains("path")) {
        c.map_path = m["path"].get<std::string>();
      }
      if (m.contains("layout")) {
        const auto& l = m["layout"];
        read_if(l, "tunnels", c.layout.tunnels);
        read_if(l, "rows", c.layout.rows);
        read_if(l, "nodes_per_row", c.layout.nodes_per_row);
        read_if(l, "node_spacing", c.layout.node_spacing);
        read_if(l, "row_gap", c.layout.row_gap);
        read_if(l, "tunnel_gap", c.layout.tunnel_gap);
        read_if(l, "connector_offset", c.layout.connector_offset);
        read_if(l, "spur_nodes", c.layout.spur_nodes);
      }
    }
    if (j.contains("method")) {
      c.method = method_from_string(j["method"].get<std::string>());
    }
    if (j.contains("policy")) {
      c.policy = policy_from_string(j["policy"].get<std::string>());
    }
    read_if(j, "pickers", c.pickers);
    read_if(j, "duration_s", c.duration_s);
    read_if(j, "dt", c.dt);
    read_if(j, "metrics_period_s", c.metrics_period_s);
    if (j.contains("picker")) {
      const auto& p = j["picker"];
      read_if(p, "speed", c.picker_speed);
      read_if(p, "speeds", c.picker_speeds);
      read_if(p, "p_reverse", c.p_reverse);
      read_if(p, "t_reverse_s", c.t_reverse_s);
    }
    if (j.contains("gps")) {
      const auto& g = j["gps"];
      read_if(g, "offset_min", c.gps.offset_min);
      read_if(g, "offset_max", c.gps.offset_max);
      read_if(g, "white_std", c.gps.white_std);
      read_if(g, "drift_std", c.gps.drift_std);
      read_if(g, "drift_tau_s", c.gps.drift_tau_s);
      read_if(g, "blackout_min_s", c.gps.blackout_min_s);
      read_if(g, "blackout_max_s", c.gps.blackout_max_s);
      read_if(g, "blackout_interval_s", c.gps.blackout_interval_s);
      read_if(g, "period_s", c.gps.period_s);
    }
    if (j.contains("lidar")) {
      const auto& l = j["lidar"];
      read_if(l, "range", c.lidar.range);
      read_if(l, "position_std", c.lidar.position_std);
      read_if(l, "false_positive_rate", c.lidar.false_positive_rate);
      read_if(l, "period_s", c.lidar.period_s);
    }
    if (j.contains("rfid")) {
      const auto& r = j["rfid"];
      read_if(r, "range", c.rfid.range);
      read_if(r, "period_s", c.rfid.period_s);
    }
    if (j.contains("sensors")) {
      const auto& s = j["sensors"];
      read_if(s, "sigma_gps", c.sensors.sigma_gps);
      read_if(s, "sigma_lidar", c.sensors.sigma_lidar);
      read_if(s, "rfid_range", c.sensors.rfid_range);
      read_if(s, "velocity_window", c.sensors.velocity_window);
    }
    if (j.contains("filter")) {
      const auto& f = j["filter"];
      read_if(f, "particle_count", c.filter.particle_count);
      read_if(f, "velocity_window", c.filter.velocity_window);
      read_if(f, "eps_jsd", c.filter.eps_jsd);
      read_if(f, "eps_entropy", c.filter.eps_entropy);
      read_if(f, "mu_init", c.filter.mu_init);
      read_if(f, "var_init", c.filter.var_init);
      read_if(f, "mu_noise", c.filter.mu_noise);
      read_if(f, "var_noise", c.filter.var_noise);
      read_if(f, "dwell_init_min", c.filter.dwell_init_min);
      read_if(f, "dwell_init_max", c.filter.dwell_init_max);
      read_if(f, "dwell_noise_min", c.filter.dwell_noise_min);
      read_if(f, "dwell_noise_max", c.filter.dwell_noise_max);
      read_if(f, "gamma_q_gps", c.filter.gamma_q_gps);
      read_if(f, "gamma_q_lidar", c.filter.gamma_q_lidar);
      read_if(f, "gamma_q_rfid", c.filter.gamma_q_rfid);
      read_if(f, "gamma_v_gps", c.filter.gamma_v_gps);
      read_if(f, "gamma_v_lidar", c.filter.gamma_v_lidar);
      read_if(f, "gamma_v_rfid", c.filter.gamma_v_rfid);
      read_if(f, "prj_reinit", c.filter.prj_reinit);
      read_if(f, "prediction_rate", c.filter.prediction_rate);
      read_if(f, "sigma_v_floor", c.filter.sigma_v_floor);
      read_if(f, "constant_speed", c.filter.constant_speed);
      read_if(f, "systematic_resampling", c.filter.systematic_resampling);
    }
    if (j.contains("robot")) {
      const auto& r = j["robot"];
      read_if(r, "speed", c.robot.speed);
      read_if(r, "battery_pct", c.robot.battery_pct);
      read_if(r, "drain_per_m", c.robot.drain_per_m);
      read_if(r, "start_node", c.robot.start_node);
    }
    if (j.contains("nbs")) {
      const auto& n = j["nbs"];
      if (n.contains("weights")) {
        const auto& w = n["weights"];
        read_if(w, "td", c.nbs_weights[0]);
        read_if(w, "st", c.nbs_weights[1]);
        read_if(w, "rfid", c.nbs_weights[2]);
        read_if(w, "bs", c.nbs_weights[3]);
      }
      if (n.contains("measure")) {
        std::map<unsigned, double> measure;
        for (const auto& [key, value] : n["measure"].items()) {
          measure[criterion_mask_from_string(key)] = value.get<double>();
        }
        c.nbs_measure = std::move(measure);
      }
      read_if(n, "replan_interval_s", c.planner.replan_interval_s);
      read_if(n, "sense_time_s", c.planner.sense_time_s);
      read_if(n, "sense_time_max_s", c.planner.sense_time_max_s);
      read_if(n, "rfid_range", c.planner.rfid_range);
      read_if(n, "battery_drain_per_m", c.planner.battery_drain_per_m);
    }
    read_if(j, "seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }
  if (c.pickers < 1 || c.duration_s < 0.0 || c.dt <= 0.0) {
    throw ConfigError("pickers must be >= 1, duration_s >= 0, dt > 0");
  }
  return c;
}

SimConfig SimConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file: " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

std::string SimConfig::content_hash() const {
  // FNV-1a 64 over the canonical JSON form.
  const std::string text = to_json_text();
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// GPS noise

GpsNoiseModel::GpsNoiseModel(const GpsNoiseConfig& config, double duration_s,
                             std::mt19937_64& rng)
    : config_(config) {
  std::uniform_real_distribution<double> off(config.offset_min, config.offset_max);
  offset_ = {off(rng), off(rng)};
  drift_ = {stationary_drift_sample(config, rng), stationary_drift_sample(config, rng)};
  drift_alpha_ = std::exp(-config.period_s / config.drift_tau_s);
  std::uniform_real_distribution<double> dur(config.blackout_min_s, config.blackout_max_s);
  for (double onset = config.blackout_interval_s; onset < duration_s;
       onset += config.blackout_interval_s) {
    blackouts_.emplace_back(onset, onset + dur(rng));
  }
}

bool GpsNoiseModel::in_blackout(double t) const {
  for (const auto& [start, end] : blackouts_) {
    if (t >= start && t < end) {
      return true;
    }
  }
  return false;
}

double GpsNoiseModel::stationary_drift_sample(const GpsNoiseConfig& config,
                                              std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, config.drift_std);
  return d(rng);
}

Vec2 GpsNoiseModel::corrupt(const Vec2& truth, std::mt19937_64& rng) {
  const double sigma_step = config_.drift_std * std::sqrt(1.0 - drift_alpha_ * drift_alpha_);
  std::normal_distribution<double> step(0.0, sigma_step);
  drift_ = {drift_.x * drift_alpha_ + step(rng), drift_.y * drift_alpha_ + step(rng)};
  std::normal_distribution<double> white(0.0, config_.white_std);
  return truth + offset_ + drift_ + Vec2{white(rng), white(rng)};
}

// ---------------------------------------------------------------------------
// Agents

std::vector<NodeId> make_picker_route(const TopologicalMap& map) {
  const auto& lanes = map.lanes();
  if (lanes.empty()) {
    throw ConfigError("map has no lane annotations; picker routes need a generated map");
  }
  std::vector<NodeId> route;
  for (size_t i = 0; i < lanes.size(); ++i) {
    std::vector<NodeId> lane = lanes[i];
    if (i % 2 == 1) {
      std::reverse(lane.begin(), lane.end());
    }
    if (!route.empty()) {
      const auto join = map.shortest_path(route.back(), lane.front());
      route.insert(route.end(), join.begin() + 1, join.end() - 1);
    }
    route.insert(route.end(), lane.begin(), lane.end());
  }
  const auto closing = map.shortest_path(route.back(), route.front());
  route.insert(route.end(), closing.begin() + 1, closing.end() - 1);
  return route;
}

PickerAgent::PickerAgent(const TopologicalMap& map, std::vector<NodeId> route,
                         double speed, double p_reverse, double t_reverse_s,
                         std::uint64_t seed)
    : map_(&map),
      route_(std::move(route)),
      speed_(speed),
      p_reverse_(p_reverse),
      t_reverse_s_(t_reverse_s),
      rng_(seed) {
  if (route_.size() < 2) {
    throw ConfigError("picker route needs at least two nodes");
  }
  cum_len_.resize(route_.size() + 1, 0.0);
  for (size_t i = 0; i < route_.size(); ++i) {
    const NodeId a = route_[i];
    const NodeId b = route_[(i + 1) % route_.size()];
    cum_len_[i + 1] = cum_len_[i] + distance(map_->position(a), map_->position(b));
  }
  total_len_ = cum_len_.back();
}

void PickerAgent::step(double dt, double now) {
  while (next_decision_ <= now) {
    if (!reversing(next_decision_)) {
      std::uniform_real_distribution<double> uni(0.0, 1.0);
      if (uni(rng_) < p_reverse_) {
        reverse_until_ = next_decision_ + t_reverse_s_;
      }
    }
    next_decision_ += 1.0;
  }
  const double dir = reversing(now) ? -1.0 : 1.0;
  arc_ = std::fmod(arc_ + dir * speed_ * dt, total_len_);
  if (arc_ < 0.0) {
    arc_ += total_len_;
  }
}

Vec2 PickerAgent::position() const {
  const auto it = std::upper_bound(cum_len_.begin(), cum_len_.end(), arc_);
  size_t seg = static_cast<size_t>(it - cum_len_.begin());
  seg = seg > 0 ? seg - 1 : 0;
  if (seg >= route_.size()) {
    seg = route_.size() - 1;
  }
  const NodeId a = route_[seg];
  const NodeId b = route_[(seg + 1) % route_.size()];
  const double seg_len = cum_len_[seg + 1] - cum_len_[seg];
  const double f = seg_len > 0.0 ? (arc_ - cum_len_[seg]) / seg_len : 0.0;
  return map_->position(a) + (map_->position(b) - map_->position(a)) * f;
}

RobotAgent::RobotAgent(const TopologicalMap& map, NodeId start, const RobotConfig& config)
    : map_(&map),
      node_(start),
      speed_(config.speed),
      battery_(config.battery_pct),
      drain_per_m_(config.drain_per_m) {
  path_ = {start};
}

void RobotAgent::set_goal(NodeId goal) {
  if (goal == node_ && edge_progress_ == 0.0) {
    path_ = {node_};
    path_index_ = 0;
    return;
  }
  // Abandon any partially traversed edge by first completing it to the next
  // node, then replanning from there.
  NodeId from = node_;
  if (edge_progress_ > 0.0 && path_index_ + 1 < path_.size()) {
    from = path_[path_index_ + 1];
    std::vector<NodeId> prefix{node_, from};
    auto rest = map_->shortest_path(from, goal);
    prefix.insert(prefix.end(), rest.begin() + 1, rest.end());
    path_ = std::move(prefix);
    path_index_ = 0;
    return;
  }
  path_ = map_->shortest_path(from, goal);
  path_index_ = 0;
  edge_progress_ = 0.0;
}

void RobotAgent::step(double dt) {
  double budget = speed_ * dt;
  while (budget > 0.0 && path_index_ + 1 < path_.size()) {
    const NodeId a = path_[path_index_];
    const NodeId b = path_[path_index_ + 1];
    const double len = distance(map_->position(a), map_->position(b));
    const double remaining = len - edge_progress_;
    const double move = std::min(budget, remaining);
    edge_progress_ += move;
    budget -= move;
    battery_ = std::max(0.0, battery_ - drain_per_m_ * move);
    if (edge_progress_ >= len) {
      ++path_index_;
      node_ = b;
      edge_progress_ = 0.0;
    } else {
      // Nearest node for planning purposes.
      node_ = edge_progress_ * 2.0 < len ? a : b;
    }
  }
}

Vec2 RobotAgent::position() const {
  if (path_index_ + 1 >= path_.size()) {
    return map_->position(path_.back());
  }
  const NodeId a = path_[path_index_];
  const NodeId b = path_[path_index_ + 1];
  const double len = distance(map_->position(a), map_->position(b));
  const double f = len > 0.0 ? edge_progress_ / len : 0.0;
  return map_->position(a) + (map_->position(b) - map_->position(a)) * f;
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

FilterConfig filter_config_for(const SimConfig& config, std::uint64_t seed) {
  FilterConfig fc = config.filter;
  fc.seed = seed;
  switch (config.method) {
    case Method::khan_connected:
      fc.speed_model = SpeedModel::constant;
      fc.fixed_jump_rate = 0.1;
      fc.monitors_enabled = false;
      fc.initial_prj = 0.0;
      break;
    case Method::khan_unconnected:
      fc.speed_model = SpeedModel::constant;
      fc.fixed_jump_rate = 0.1;
      fc.monitors_enabled = false;
      fc.initial_prj = fc.prj_reinit;
      break;
    case Method::constant_speed:
      fc.speed_model = SpeedModel::constant;
      fc.fixed_jump_rate.reset();
      break;
    case Method::no_monitor:
      fc.monitors_enabled = false;
      fc.initial_prj = 0.0;
      break;
    default:
      break;
  }
  return fc;
}

NodeId default_robot_start(const TopologicalMap& map) {
  if (!map.lanes().empty()) {
    const auto& lane = map.lanes().front();
    for (const NodeId n : map.neighbors(lane.front())) {
      if (std::find(lane.begin(), lane.end(), n) == lane.end()) {
        return n;  // left connector of the first row
      }
    }
  }
  return 0;
}

int ticks_for(double period_s, double dt) {
  return std::max(1, static_cast<int>(std::lround(period_s / dt)));
}

void write_csv_header(std::ostream& out) {
  out << "t,picker_id,method,euclidean_err_m,topo_err_hops,estimate_node,jsd,"
         "entropy,pr_j\n";
}

void write_csv_row(std::ostream& out, const StepRecord& r, const std::string& method) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.3f,%d,%s,%.6f,%d,%d,%.6f,%.6f,%.6g\n", r.t,
                r.picker_id, method.c_str(), r.euclidean_err_m, r.topo_err_hops,
                r.estimate_node, r.jsd, r.entropy, r.pr_j);
  out << buf;
}

}  // namespace

RunResult run_simulation(const SimConfig& config, std::ostream* csv) {
  const TopologicalMap map = config.map_path
                                 ? TopologicalMap::load_file(*config.map_path)
                                 : make_polytunnel_map(config.layout);
  if (csv != nullptr) {
    write_csv_header(*csv);
  }
  RunResult result;
  const std::string method_name = to_string(config.method);

  const auto route = make_picker_route(map);
  std::vector<PickerAgent> pickers;
  std::vector<GpsNoiseModel> noise_models;
  std::vector<std::mt19937_64> noise_rngs;
  std::vector<VelocityEstimator> estimators;
  std::vector<BeliefFilter> filters;
  std::vector<double> last_obs_time;
  std::vector<UpdateDiagnostics> last_diag;

  for (int i = 0; i < config.pickers; ++i) {
    const double speed = i < static_cast<int>(config.picker_speeds.size())
                             ? config.picker_speeds[i]
                             : config.picker_speed;
    pickers.emplace_back(map, route, speed, config.p_reverse, config.t_reverse_s,
                         derive_seed(config.seed, 100 + i));
    noise_rngs.emplace_back(derive_seed(config.seed, 200 + i));
    noise_models.emplace_back(config.gps, config.duration_s, noise_rngs.back());
    estimators.emplace_back(config.sensors.velocity_window);
    filters.emplace_back(map, filter_config_for(config, derive_seed(config.seed, 300 + i)));
    last_obs_time.push_back(-1e9);
    last_diag.emplace_back();
  }
  // Spread pickers along the route.
  for (int i = 1; i < config.pickers; ++i) {
    const double head_start = 40.0 * i;  // meters along the route
    const int warm_steps = static_cast<int>(head_start / (pickers[i].speed() * config.dt));
    for (int s = 0; s < warm_steps; ++s) {
      pickers[i].step(config.dt, -1e6);  // pre-run offset, before t = 0
    }
  }

  const bool use_robot = method_uses_robot(config.method);
  const bool use_lidar = method_uses_lidar(config.method);
  const bool use_rfid = method_uses_rfid(config.method);
  std::optional<RobotAgent> robot;
  if (use_robot) {
    const NodeId start =
        config.robot.start_node >= 0 ? config.robot.start_node : default_robot_start(map);
    robot.emplace(map, start, config.robot);
  }
  std::mt19937_64 world_rng(derive_seed(config.seed, 999));

  const FuzzyMeasure measure = config.nbs_measure
                                   ? FuzzyMeasure::from_subsets(*config.nbs_measure)
                                   : FuzzyMeasure::additive(config.nbs_weights);

  const int gps_ticks = ticks_for(config.gps.period_s, config.dt);
  const int lidar_ticks = ticks_for(config.lidar.period_s, config.dt);
  const int rfid_ticks = ticks_for(config.rfid.period_s, config.dt);
  const int metrics_ticks = ticks_for(config.metrics_period_s, config.dt);
  const double predict_period = 1.0 / config.filter.prediction_rate;
  const int predict_ticks = ticks_for(predict_period, config.dt);
  const long total_ticks = std::lround(config.duration_s / config.dt);

  double next_replan = 0.0;
  double last_plan = -1e9;

  auto deliver = [&](int target, const Observation& obs) {
    last_diag[target] = filters[target].update(obs);
    last_obs_time[target] = obs.timestamp;
  };
  auto deliver_all = [&](const Observation& obs) {
    for (int i = 0; i < config.pickers; ++i) {
      deliver(i, obs);
    }
  };

  for (long tick = 1; tick <= total_ticks; ++tick) {
    const double t = tick * config.dt;
    for (auto& p : pickers) {
      p.step(config.dt, t);
    }
    if (robot) {
      robot->step(config.dt);
    }

    if (tick % gps_ticks == 0) {
      for (int i = 0; i < config.pickers; ++i) {
        if (noise_models[i].in_blackout(t)) {
          continue;
        }
        const Vec2 fix = noise_models[i].corrupt(pickers[i].position(), noise_rngs[i]);
        deliver(i, gps_to_observation(map, fix, i, estimators[i], t, config.sensors));
      }
    }

    if (robot && use_lidar && tick % lidar_ticks == 0) {
      std::normal_distribution<double> jitter(0.0, config.lidar.position_std);
      const Vec2 robot_pos = robot->position();
      for (int i = 0; i < config.pickers; ++i) {
        const Vec2 truth = pickers[i].position();
        if (distance(truth, robot_pos) <= config.lidar.range) {
          const Vec2 detection = truth + Vec2{jitter(world_rng), jitter(world_rng)};
          deliver_all(lidar_to_observation(map, detection, t, config.sensors));
        }
      }
      std::poisson_distribution<int> fp_count(config.lidar.false_positive_rate *
                                              config.lidar.period_s);
      const int fps = fp_count(world_rng);
      std::uniform_real_distribution<double> uni(0.0, 1.0);
      for (int k = 0; k < fps; ++k) {
        const double r = config.lidar.range * std::sqrt(uni(world_rng));
        const double a = 2.0 * M_PI * uni(world_rng);
        const Vec2 ghost = robot_pos + Vec2{r * std::cos(a), r * std::sin(a)};
        deliver_all(lidar_to_observation(map, ghost, t, config.sensors));
      }
    }

    if (robot && use_rfid && tick % rfid_ticks == 0) {
      const Vec2 robot_pos = robot->position();
      for (int i = 0; i < config.pickers; ++i) {
        if (distance(pickers[i].position(), robot_pos) <= config.rfid.range) {
          deliver(i, rfid_to_observation(map, robot_pos, i, t, config.sensors));
        }
      }
    }

    if (tick % predict_ticks == 0) {
      for (int i = 0; i < config.pickers; ++i) {
        if (filters[i].initialized() && t - last_obs_time[i] >= predict_period) {
          filters[i].predict_only(t);
        }
      }
    }

    if (robot) {
      // NBS re-evaluates on goal completion or every replan interval; the
      // EstimatedNode baseline commits to its goal until arrival.
      const bool due = config.policy == Policy::estimated_node
                           ? t >= next_replan
                           : (t >= next_replan || robot->at_goal());
      if (due && t >= last_plan + 1.0) {
        std::vector<const BeliefFilter*> ready;
        for (const auto& f : filters) {
          if (f.initialized()) {
            ready.push_back(&f);
          }
        }
        if (!ready.empty()) {
          NodeId goal = robot->nearest_node();
          if (config.policy == Policy::estimated_node) {
            goal = estimated_node_policy(ready);
          } else {
            WorldSnapshot snap;
            snap.robot_node = robot->nearest_node();
            snap.battery_pct = robot->battery_pct();
            snap.belief_mass.assign(map.size(), 0.0);
            for (const BeliefFilter* f : ready) {
              const auto dist = f->node_distribution();
              for (int n = 0; n < map.size(); ++n) {
                snap.belief_mass[n] += dist[n] / ready.size();
              }
            }
            std::vector<NodeId> candidates(map.size());
            std::iota(candidates.begin(), candidates.end(), 0);
            goal = select_next_pose(map, candidates, snap, measure, config.planner).node;
          }
          robot->set_goal(goal);
          last_plan = t;
          next_replan = t + config.planner.replan_interval_s;
        }
      }
    }

    if (tick % metrics_ticks == 0) {
      for (int i = 0; i < config.pickers; ++i) {
        if (!filters[i].initialized()) {
          continue;
        }
        StepRecord rec;
        rec.t = t;
        rec.picker_id = i;
        rec.estimate_node = filters[i].estimate();
        const Vec2 truth = pickers[i].position();
        rec.euclidean_err_m = distance(map.position(rec.estimate_node), truth);
        rec.topo_err_hops =
            map.shortest_path_hops(rec.estimate_node, map.closest_node(truth));
        rec.jsd = last_diag[i].jsd;
        rec.entropy = last_diag[i].entropy;
        rec.pr_j = filters[i].pr_j();
        if (csv != nullptr) {
          write_csv_row(*csv, rec, method_name);
        }
        result.records.push_back(rec);
      }
    }
  }

  if (!result.records.empty()) {
    double se = 0.0;
    double st = 0.0;
    for (const auto& r : result.records) {
      se += r.euclidean_err_m;
      st += r.topo_err_hops;
    }
    result.mean_euclidean = se / result.records.size();
    result.mean_topological = st / result.records.size();
  }
  return result;
}

RunResult run_experiment(const SimConfig& config, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir + "/metrics.csv", std::ios::binary);
  if (!csv) {
    throw ConfigError("cannot write " + out_dir + "/metrics.csv");
  }
  const RunResult result = run_simulation(config, &csv);
  csv.close();

  double var_e = 0.0;
  double var_t = 0.0;
  for (const auto& r : result.records) {
    var_e += (r.euclidean_err_m - result.mean_euclidean) *
             (r.euclidean_err_m - result.mean_euclidean);
    var_t += (r.topo_err_hops - result.mean_topological) *
             (r.topo_err_hops - result.mean_topological);
  }
  const size_t n = std::max<size_t>(1, result.records.size());
  json summary;
  summary["method"] = to_string(config.method);
  summary["policy"] = to_string(config.policy);
  summary["seed"] = config.seed;
  summary["records"] = result.records.size();
  summary["euclidean_err_m"] = {{"mean", result.mean_euclidean},
                                {"std", std::sqrt(var_e / n)}};
  summary["topo_err_hops"] = {{"mean", result.mean_topological},
                              {"std", std::sqrt(var_t / n)}};
  std::ofstream sout(out_dir + "/summary.json");
  sout << summary.dump(2) << "\n";

  json manifest;
  manifest["config"] = json::parse(config.to_json_text());
  manifest["config_hash"] = config.content_hash();
  manifest["output_dir"] = out_dir;
  std::ofstream mout(out_dir + "/manifest.json");
  mout << manifest.dump(2) << "\n";
  return result;
}

SummaryRow run_row(SimConfig config, const std::string& label,
                   const std::vector<std::uint64_t>& seeds) {
  SummaryRow row;
  row.label = label;
  row.method = config.method;
  row.policy = config.policy;
  row.seeds = seeds;
  row.runs = static_cast<int>(seeds.size());

  std::vector<RunResult> results(seeds.size());
  std::atomic<size_t> next{0};
  const unsigned workers =
      std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()),
                         static_cast<unsigned>(seeds.size()));
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (size_t i = next.fetch_add(1); i < seeds.size(); i = next.fetch_add(1)) {
        SimConfig local = config;
        local.seed = seeds[i];
        results[i] = run_simulation(local, nullptr);
      }
    });
  }
  for (auto& th : pool) {
    th.join();
  }

  double sum_e = 0.0;
  double sum_t = 0.0;
  size_t count = 0;
  for (const auto& res : results) {
    row.per_run_euclidean.push_back(res.mean_euclidean);
    row.per_run_topological.push_back(res.mean_topological);
    for (const auto& r : res.records) {
      sum_e += r.euclidean_err_m;
      sum_t += r.topo_err_hops;
      ++count;
    }
  }
  if (count > 0) {
    row.mean_euclidean = sum_e / count;
    row.mean_topological = sum_t / count;
    double var_e = 0.0;
    double var_t = 0.0;
    for (const auto& res : results) {
      for (const auto& r : res.records) {
        var_e += (r.euclidean_err_m - row.mean_euclidean) *
                 (r.euclidean_err_m - row.mean_euclidean);
        var_t += (r.topo_err_hops - row.mean_topological) *
                 (r.topo_err_hops - row.mean_topological);
      }
    }
    row.std_euclidean = std::sqrt(var_e / count);
    row.std_topological = std::sqrt(var_t / count);
  }
  return row;
}

std::string SuiteResult::table_text() const {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-28s %6s %18s %18s\n", "method", "runs",
                "euclidean [m]", "topological [nodes]");
  out << name << "\n" << buf;
  out << std::string(72, '-') << "\n";
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%-28s %6d %11.2f(%.2f) %11.2f(%.2f)\n",
                  row.label.c_str(), row.runs, row.mean_euclidean, row.std_euclidean,
                  row.mean_topological, row.std_topological);
    out << buf;
  }
  return out.str();
}

std::string SuiteResult::to_json_text() const {
  json j;
  j["suite"] = name;
  j["rows"] = json::array();
  for (const auto& row : rows) {
    json r;
    r["label"] = row.label;
    r["method"] = to_string(row.method);
    r["policy"] = to_string(row.policy);
    r["runs"] = row.runs;
    r["seeds"] = row.seeds;
    r["euclidean_err_m"] = {{"mean", row.mean_euclidean}, {"std", row.std_euclidean}};
    r["topo_err_hops"] = {{"mean", row.mean_topological}, {"std", row.std_topological}};
    r["per_run_topo_means"] = row.per_run_topological;
    r["per_run_euclidean_means"] = row.per_run_euclidean;
    j["rows"].push_back(r);
  }
  return j.dump(2);
}

SuiteResult run_suite(const std::string& name, SimConfig base,
                      const std::vector<std::uint64_t>& seeds) {
  SuiteResult result;
  result.name = name;
  auto add = [&](Method m, Policy p, int pickers, const std::string& label) {
    SimConfig config = base;
    config.method = m;
    config.policy = p;
    config.pickers = pickers;
    result.rows.push_back(run_row(config, label, seeds));
  };
  if (name == "exp1-single") {
    add(Method::khan_unconnected, Policy::nbs, 1, "khan-unconnected");
    add(Method::khan_connected, Policy::nbs, 1, "khan-connected");
    add(Method::lidar_gps, Policy::nbs, 1, "lidar+gps");
    add(Method::rfid_gps, Policy::nbs, 1, "rfid+gps");
    add(Method::full, Policy::nbs, 1, "rfid+lidar+gps");
  } else if (name == "exp2-policy") {
    add(Method::full, Policy::estimated_node, 1, "estimated-node");
    add(Method::full, Policy::nbs, 1, "next-best-sense");
  } else if (name == "exp3-multi") {
    // Pickers move at different speeds here; the constant-speed ablation
    // assumes they all match the configured constant.
    if (base.picker_speeds.empty()) {
      base.picker_speeds = {0.4, 0.8, 1.2};
    }
    add(Method::full, Policy::nbs, 3, "rfid+lidar+gps");
    add(Method::no_monitor, Policy::nbs, 3, "no-monitor");
    add(Method::constant_speed, Policy::nbs, 3, "constant-speed");
  } else {
    throw ConfigError("unknown suite '" + name +
                      "'; valid: exp1-single, exp2-policy, exp3-multi");
  }
  return result;
}

}  // namespace topotrack
