#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "topotrack/topology.hpp"

namespace topotrack {

enum class SensorKind { gps, lidar, rfid };

std::string to_string(SensorKind kind);

/// Canonical sensor input to the filter: a likelihood over all map nodes,
/// whether the reading names a specific person, and (for GPS) a velocity
/// estimate of the target.
struct Observation {
  std::vector<double> likelihood;
  bool identifying = false;
  SensorKind kind = SensorKind::gps;
  std::optional<int> target_id;
  std::optional<Vec2> velocity;
  double timestamp = 0.0;
};

struct SensorParams {
  double sigma_gps = 2.0;    // m, node-kernel spread for GPS fixes
  double sigma_lidar = 0.5;  // m, tighter local sensing
  double rfid_range = 5.0;   // m, antenna range
  int velocity_window = 10;  // GPS poses kept for velocity estimation
};

/// Sliding-window velocity estimate from GPS poses: total displacement over
/// total time across the last `window` fixes. Needs at least two fixes.
class VelocityEstimator {
 public:
  explicit VelocityEstimator(int window = 10) : window_(window) {}

  void push(const Vec2& pose, double timestamp);
  std::optional<Vec2> estimate() const;

 private:
  int window_;
  std::deque<std::pair<Vec2, double>> poses_;
};

Observation gps_to_observation(const TopologicalMap& map, const Vec2& fix,
                               int target_id, VelocityEstimator& estimator,
                               double timestamp, const SensorParams& params = {});

Observation lidar_to_observation(const TopologicalMap& map, const Vec2& detection,
                                 double timestamp, const SensorParams& params = {});

Observation rfid_to_observation(const TopologicalMap& map, const Vec2& robot_position,
                                int target_id, double timestamp,
                                const SensorParams& params = {});

}  // namespace topotrack
