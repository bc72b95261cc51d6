#include "topotrack/sensors.hpp"

#include <cmath>
#include <stdexcept>

namespace topotrack {

std::string to_string(SensorKind kind) {
  switch (kind) {
    case SensorKind::gps:
      return "gps";
    case SensorKind::lidar:
      return "lidar";
    case SensorKind::rfid:
      return "rfid";
  }
  return "?";
}

void VelocityEstimator::push(const Vec2& pose, double timestamp) {
  poses_.emplace_back(pose, timestamp);
  while (static_cast<int>(poses_.size()) > window_) {
    poses_.pop_front();
  }
}

std::optional<Vec2> VelocityEstimator::estimate() const {
  if (poses_.size() < 2) {
    return std::nullopt;
  }
  const auto& [first_pose, first_ts] = poses_.front();
  const auto& [last_pose, last_ts] = poses_.back();
  const double dt = last_ts - first_ts;
  if (dt <= 0.0) {
    return std::nullopt;
  }
  return (last_pose - first_pose) / dt;
}

namespace {

std::vector<double> gaussian_node_kernel(const TopologicalMap& map, const Vec2& center,
                                         double sigma) {
  std::vector<double> likelihood(map.size());
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int n = 0; n < map.size(); ++n) {
    likelihood[n] = std::exp(-(map.position(n) - center).squared_norm() * inv);
  }
  return likelihood;
}

}  // namespace

Observation gps_to_observation(const TopologicalMap& map, const Vec2& fix,
                               int target_id, VelocityEstimator& estimator,
                               double timestamp, const SensorParams& params) {
  estimator.push(fix, timestamp);
  Observation obs;
  obs.likelihood = gaussian_node_kernel(map, fix, params.sigma_gps);
  obs.identifying = true;
  obs.kind = SensorKind::gps;
  obs.target_id = target_id;
  obs.velocity = estimator.estimate();
  obs.timestamp = timestamp;
  return obs;
}

Observation lidar_to_observation(const TopologicalMap& map, const Vec2& detection,
                                 double timestamp, const SensorParams& params) {
  Observation obs;
  obs.likelihood = gaussian_node_kernel(map, detection, params.sigma_lidar);
  obs.identifying = false;
  obs.kind = SensorKind::lidar;
  obs.timestamp = timestamp;
  return obs;
}

Observation rfid_to_observation(const TopologicalMap& map, const Vec2& robot_position,
                                int target_id, double timestamp,
                                const SensorParams& params) {
  Observation obs;
  obs.likelihood.resize(map.size());
  double total = 0.0;
  for (int n = 0; n < map.size(); ++n) {
    const double d = (map.position(n) - robot_position).norm();
    obs.likelihood[n] = std::max(0.0, 1.0 - d / params.rfid_range);
    total += obs.likelihood[n];
  }
  if (total <= 0.0) {
    throw std::runtime_error("rfid observation has empty likelihood: no node in range");
  }
  for (double& l : obs.likelihood) {
    l /= total;
  }
  obs.identifying = true;
  obs.kind = SensorKind::rfid;
  obs.target_id = target_id;
  obs.timestamp = timestamp;
  return obs;
}

}  // namespace topotrack
