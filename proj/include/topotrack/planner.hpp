#pragma once

#include <array>
#include <map>
#include <span>
#include <vector>

#include "topotrack/belief.hpp"
#include "topotrack/topology.hpp"

namespace topotrack {

/// Sensing-pose criteria, in fixed tie-break order.
enum class Criterion { travel_distance = 0, sensing_time = 1, rfid_gain = 2, battery = 3 };

constexpr int kCriterionCount = 4;

/// Monotone set function over criteria subsets (bitmask indexing, bit i set
/// iff criterion i belongs to the subset). eta(empty) = 0, eta(all) = 1.
class FuzzyMeasure {
 public:
  /// eta(A) = sum of singleton weights in A; weights must sum to 1.
  static FuzzyMeasure additive(const std::array<double, kCriterionCount>& weights);

  /// Full 2^4-entry measure for synergy/redundancy modeling. Missing subsets
  /// are not allowed except the empty set (implicitly 0).
  static FuzzyMeasure from_subsets(const std::map<unsigned, double>& eta);

  double operator()(unsigned subset_mask) const { return eta_.at(subset_mask); }

 private:
  explicit FuzzyMeasure(std::array<double, 16> eta);
  void validate() const;

  std::array<double, 16> eta_{};
};

using Utilities = std::array<double, kCriterionCount>;

/// Discrete Choquet integral of the per-criterion utilities under the given
/// measure. Sorting ties are broken by criterion order; the result does not
/// depend on the tie order.
double choquet(const Utilities& utilities, const FuzzyMeasure& measure);

struct PlannerParams {
  double rfid_range = 5.0;      // m, mass-capture radius of the RFID criterion
  double sense_time_s = 2.0;    // per-node sensing duration
  double sense_time_max_s = 10.0;
  double battery_drain_per_m = 0.1;  // percent points per meter traveled
  double replan_interval_s = 10.0;
};

/// Immutable view of the world a planning decision is made against.
struct WorldSnapshot {
  NodeId robot_node = 0;
  double battery_pct = 100.0;
  /// Belief mass per node summed over all tracked filters, normalized to 1.
  std::vector<double> belief_mass;
};

struct SensingPose {
  NodeId node = -1;
  double orientation = 0.0;  // rad, incoming-edge direction
  Utilities utilities{};
  double score = 0.0;
};

/// Utilities of one candidate node. `travel_dist` is the metric shortest-path
/// distance from the robot; `max_travel_dist` the maximum over the candidate
/// pool (used for normalization).
Utilities criterion_utilities(const TopologicalMap& map, NodeId candidate,
                              const WorldSnapshot& world, double travel_dist,
                              double max_travel_dist, const PlannerParams& params);

/// Greedy argmax of the Choquet score over the candidate pool. Ties go to the
/// smaller travel distance, then the lower NodeId.
SensingPose select_next_pose(const TopologicalMap& map,
                             std::span<const NodeId> candidates,
                             const WorldSnapshot& world, const FuzzyMeasure& measure,
                             const PlannerParams& params);

/// Baseline policy: drive straight to the argmax-mass node of the (most
/// confident) filter.
NodeId estimated_node_policy(std::span<const BeliefFilter* const> filters);

}  // namespace topotrack
