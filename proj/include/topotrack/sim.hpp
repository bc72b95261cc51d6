#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "topotrack/belief.hpp"
#include "topotrack/planner.hpp"
#include "topotrack/sensors.hpp"
#include "topotrack/topology.hpp"

namespace topotrack {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tracking method under test. `full` is the three-sensor filter with both
/// monitors; the khan variants model the earlier GPS-only filter with a fixed
/// jump rate and constant speed.
enum class Method {
  khan_connected,
  khan_unconnected,
  lidar_gps,
  rfid_gps,
  full,
  no_monitor,
  constant_speed,
};

enum class Policy { nbs, estimated_node };

std::string to_string(Method m);
std::string to_string(Policy p);
Method method_from_string(const std::string& name);
Policy policy_from_string(const std::string& name);

bool method_uses_robot(Method m);
bool method_uses_lidar(Method m);
bool method_uses_rfid(Method m);

struct GpsNoiseConfig {
  double offset_min = 0.0;  // per-axis constant bias ~ U(offset_min, offset_max)
  double offset_max = 3.5;
  double white_std = 0.1;          // m
  double drift_std = 2.5;          // m, stationary std of the drift process
  double drift_tau_s = 60.0;       // drift correlation time
  double blackout_min_s = 30.0;    // blackout duration ~ U(min, max)
  double blackout_max_s = 60.0;
  double blackout_interval_s = 120.0;  // scheduled onset spacing
  double period_s = 1.0;               // fix rate
};

struct LidarSimConfig {
  double range = 4.0;
  double position_std = 0.1;         // detection jitter
  double false_positive_rate = 0.05;  // per second, Poisson
  double period_s = 0.5;
};

struct RfidSimConfig {
  double range = 5.0;
  double period_s = 0.5;
};

struct RobotConfig {
  double speed = 1.0;  // m/s along edges
  double battery_pct = 100.0;
  double drain_per_m = 0.1;  // percent points per meter
  NodeId start_node = -1;    // -1: auto (tunnel entrance)
};

struct SimConfig {
  PolytunnelLayout layout;
  std::optional<std::string> map_path;

  Method method = Method::full;
  Policy policy = Policy::nbs;

  int pickers = 1;
  double duration_s = 600.0;
  double dt = 0.25;
  double metrics_period_s = 1.0;

  double picker_speed = 0.8;
  std::vector<double> picker_speeds;  // optional per-picker override
  double p_reverse = 0.1;             // per 1 s decision
  double t_reverse_s = 60.0;

  GpsNoiseConfig gps;
  LidarSimConfig lidar;
  RfidSimConfig rfid;
  SensorParams sensors;
  FilterConfig filter;
  RobotConfig robot;

  std::array<double, kCriterionCount> nbs_weights{0.3, 0.1, 0.35, 0.25};
  std::optional<std::map<unsigned, double>> nbs_measure;  // full 2^4 measure
  PlannerParams planner;

  std::uint64_t seed = 0;

  std::string to_json_text() const;
  static SimConfig from_json_text(const std::string& text);
  static SimConfig load_file(const std::string& path);

  /// Stable content hash of the resolved config (seed included).
  std::string content_hash() const;
};

/// Per-axis GPS corruption: run-constant offset, AR(1) drift with the given
/// stationary spread, white noise per fix, and scheduled blackout windows.
class GpsNoiseModel {
 public:
  GpsNoiseModel(const GpsNoiseConfig& config, double duration_s, std::mt19937_64& rng);

  bool in_blackout(double t) const;
  /// Corrupted fix for the given true position; advances the drift state.
  Vec2 corrupt(const Vec2& truth, std::mt19937_64& rng);

  const Vec2& offset() const { return offset_; }
  const Vec2& drift() const { return drift_; }

  /// One draw from the stationary drift distribution (N(0, drift_std)).
  static double stationary_drift_sample(const GpsNoiseConfig& config,
                                        std::mt19937_64& rng);

 private:
  GpsNoiseConfig config_;
  Vec2 offset_;
  Vec2 drift_;
  double drift_alpha_;
  std::vector<std::pair<double, double>> blackouts_;  // [start, end)
};

/// Picker moving along a cyclic route of map nodes: serpentine through the
/// lanes, with occasional timed reversals of direction.
class PickerAgent {
 public:
  PickerAgent(const TopologicalMap& map, std::vector<NodeId> route, double speed,
              double p_reverse, double t_reverse_s, std::uint64_t seed);

  void step(double dt, double now);
  Vec2 position() const;
  bool reversing(double now) const { return now < reverse_until_; }
  double speed() const { return speed_; }

 private:
  const TopologicalMap* map_;
  std::vector<NodeId> route_;
  std::vector<double> cum_len_;  // cumulative arclength at route_[i]
  double total_len_ = 0.0;
  double arc_ = 0.0;
  double speed_;
  double p_reverse_;
  double t_reverse_s_;
  double reverse_until_ = -1.0;
  double next_decision_ = 0.0;
  std::mt19937_64 rng_;
};

/// Serpentine cyclic route over the map's annotated lanes, joined by
/// shortest paths.
std::vector<NodeId> make_picker_route(const TopologicalMap& map);

class RobotAgent {
 public:
  RobotAgent(const TopologicalMap& map, NodeId start, const RobotConfig& config);

  void set_goal(NodeId goal);
  void step(double dt);
  bool at_goal() const { return path_index_ + 1 >= path_.size(); }
  Vec2 position() const;
  NodeId nearest_node() const { return node_; }
  double battery_pct() const { return battery_; }

 private:
  const TopologicalMap* map_;
  NodeId node_;
  std::vector<NodeId> path_;
  size_t path_index_ = 0;
  double edge_progress_ = 0.0;
  double speed_;
  double battery_;
  double drain_per_m_;
};

struct StepRecord {
  double t = 0.0;
  int picker_id = 0;
  double euclidean_err_m = 0.0;
  int topo_err_hops = 0;
  NodeId estimate_node = -1;
  double jsd = 0.0;
  double entropy = 0.0;
  double pr_j = 0.0;
};

struct RunResult {
  std::vector<StepRecord> records;
  double mean_euclidean = 0.0;
  double mean_topological = 0.0;
};

struct SummaryRow {
  std::string label;
  Method method = Method::full;
  Policy policy = Policy::nbs;
  int runs = 0;
  std::vector<std::uint64_t> seeds;
  double mean_euclidean = 0.0;
  double std_euclidean = 0.0;
  double mean_topological = 0.0;
  double std_topological = 0.0;
  std::vector<double> per_run_topological;
  std::vector<double> per_run_euclidean;
};

/// One deterministic simulation run. Streams metric rows to `csv` when given
/// (header always written, even for zero-duration runs).
RunResult run_simulation(const SimConfig& config, std::ostream* csv = nullptr);

/// Runs one config, writing metrics.csv, summary.json, and manifest.json
/// into `out_dir`.
RunResult run_experiment(const SimConfig& config, const std::string& out_dir);

/// Evaluates one method/policy row over the given seeds, runs in parallel.
SummaryRow run_row(SimConfig config, const std::string& label,
                   const std::vector<std::uint64_t>& seeds);

struct SuiteResult {
  std::string name;
  std::vector<SummaryRow> rows;
  std::string table_text() const;
  std::string to_json_text() const;
};

/// Named experiment suites: exp1-single, exp2-policy, exp3-multi.
SuiteResult run_suite(const std::string& name, SimConfig base,
                      const std::vector<std::uint64_t>& seeds);

}  // namespace topotrack
