#include "topotrack/planner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace topotrack {

FuzzyMeasure::FuzzyMeasure(std::array<double, 16> eta) : eta_(eta) { validate(); }

void FuzzyMeasure::validate() const {
  if (std::abs(eta_[0]) > 1e-9) {
    throw std::invalid_argument("fuzzy measure: eta(empty) must be 0");
  }
  if (std::abs(eta_[15] - 1.0) > 1e-9) {
    throw std::invalid_argument("fuzzy measure: eta(all criteria) must be 1");
  }
  for (unsigned a = 0; a < 16; ++a) {
    if (eta_[a] < -1e-12 || eta_[a] > 1.0 + 1e-12) {
      throw std::invalid_argument("fuzzy measure: eta outside [0,1]");
    }
    for (int i = 0; i < kCriterionCount; ++i) {
      const unsigned b = a | (1u << i);
      if (b != a && eta_[a] > eta_[b] + 1e-12) {
        throw std::invalid_argument("fuzzy measure: not monotone");
      }
    }
  }
}

FuzzyMeasure FuzzyMeasure::additive(const std::array<double, kCriterionCount>& weights) {
  std::array<double, 16> eta{};
  for (unsigned mask = 0; mask < 16; ++mask) {
    double sum = 0.0;
    for (int i = 0; i < kCriterionCount; ++i) {
      if (mask & (1u << i)) {
        sum += weights[i];
      }
    }
    eta[mask] = sum;
  }
  if (std::abs(eta[15] - 1.0) > 1e-9) {
    throw std::invalid_argument("additive measure: criterion weights must sum to 1");
  }
  eta[15] = 1.0;  // absorb rounding
  return FuzzyMeasure(eta);
}

FuzzyMeasure FuzzyMeasure::from_subsets(const std::map<unsigned, double>& eta_map) {
  std::array<double, 16> eta{};
  for (unsigned mask = 1; mask < 16; ++mask) {
    const auto it = eta_map.find(mask);
    if (it == eta_map.end()) {
      throw std::invalid_argument("fuzzy measure: missing subset " + std::to_string(mask));
    }
    eta[mask] = it->second;
  }
  return FuzzyMeasure(eta);
}

double choquet(const Utilities& utilities, const FuzzyMeasure& measure) {
  std::array<int, kCriterionCount> order{0, 1, 2, 3};
  std::sort(order.begin(), order.end(), [&utilities](int a, int b) {
    return utilities[a] != utilities[b] ? utilities[a] < utilities[b] : a < b;
  });
  double score = 0.0;
  double prev = 0.0;
  unsigned remaining = 0;
  for (int j = 0; j < kCriterionCount; ++j) {
    remaining |= 1u << order[j];
  }
  for (int j = 0; j < kCriterionCount; ++j) {
    score += (utilities[order[j]] - prev) * measure(remaining);
    prev = utilities[order[j]];
    remaining &= ~(1u << order[j]);
  }
  return score;
}

Utilities criterion_utilities(const TopologicalMap& map, NodeId candidate,
                              const WorldSnapshot& world, double travel_dist,
                              double max_travel_dist, const PlannerParams& params) {
  if (!std::isfinite(travel_dist)) {
    throw std::invalid_argument("candidate pose unreachable");
  }
  Utilities u{};
  u[static_cast<int>(Criterion::travel_distance)] =
      max_travel_dist > 0.0 ? 1.0 - travel_dist / max_travel_dist : 1.0;

  u[static_cast<int>(Criterion::sensing_time)] =
      std::clamp(1.0 - params.sense_time_s / params.sense_time_max_s, 0.0, 1.0);

  // Expected mass captured by the antenna, discounted linearly with range so
  // the planner closes in on the belief instead of hovering at range edge.
  double captured = 0.0;
  const Vec2& pose = map.position(candidate);
  for (int n = 0; n < map.size(); ++n) {
    const double d = (map.position(n) - pose).norm();
    captured += world.belief_mass.at(n) * std::max(0.0, 1.0 - d / params.rfid_range);
  }
  u[static_cast<int>(Criterion::rfid_gain)] = std::clamp(captured, 0.0, 1.0);

  const double predicted =
      world.battery_pct - params.battery_drain_per_m * travel_dist;
  u[static_cast<int>(Criterion::battery)] = std::clamp(predicted / 100.0, 0.0, 1.0);
  return u;
}

SensingPose select_next_pose(const TopologicalMap& map,
                             std::span<const NodeId> candidates,
                             const WorldSnapshot& world, const FuzzyMeasure& measure,
                             const PlannerParams& params) {
  if (candidates.empty()) {
    throw std::invalid_argument("empty candidate set");
  }
  const auto dists = map.metric_distances_from(world.robot_node);
  double max_dist = 0.0;
  for (const NodeId c : candidates) {
    max_dist = std::max(max_dist, dists.at(c));
  }

  SensingPose best;
  double best_dist = 0.0;
  bool have_best = false;
  for (const NodeId c : candidates) {
    const Utilities u = criterion_utilities(map, c, world, dists[c], max_dist, params);
    const double score = choquet(u, measure);
    const bool better =
        !have_best || score > best.score ||
        (score == best.score &&
         (dists[c] < best_dist || (dists[c] == best_dist && c < best.node)));
    if (better) {
      best.node = c;
      best.utilities = u;
      best.score = score;
      best_dist = dists[c];
      have_best = true;
    }
  }

  // Orientation: direction of the final edge on the path to the goal.
  best.orientation = 0.0;
  if (best.node != world.robot_node) {
    const auto path = map.shortest_path(world.robot_node, best.node);
    if (path.size() >= 2) {
      const Vec2 d =
          map.position(path.back()) - map.position(path[path.size() - 2]);
      best.orientation = std::atan2(d.y, d.x);
    }
  }
  return best;
}

NodeId estimated_node_policy(std::span<const BeliefFilter* const> filters) {
  const BeliefFilter* best = nullptr;
  double best_conf = -1.0;
  for (const BeliefFilter* f : filters) {
    if (f != nullptr && f->initialized() && f->confidence() > best_conf) {
      best = f;
      best_conf = f->confidence();
    }
  }
  if (best == nullptr) {
    throw std::logic_error("estimated_node_policy: no initialized filter");
  }
  return best->estimate();
}

}  // namespace topotrack
