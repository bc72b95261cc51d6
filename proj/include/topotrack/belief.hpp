#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "topotrack/sensors.hpp"
#include "topotrack/topology.hpp"

namespace topotrack {

/// One hypothesis: node the target sits at, its velocity, and how long it has
/// dwelled at that node.
struct Particle {
  NodeId node = 0;
  Vec2 velocity;
  double dwell = 0.0;  // seconds at `node`
};

/// How particle motion is predicted. `estimated` adapts the jump rate to each
/// particle's velocity; `constant` ignores particle velocity and uses a fixed
/// speed (or a fixed jump rate), as in the earlier single-sensor filter.
enum class SpeedModel { estimated, constant };

struct FilterConfig {
  int particle_count = 300;
  int velocity_window = 10;  // V, divisor of the velocity-update gain

  double eps_jsd = 0.975;
  double eps_entropy = 0.6;

  double mu_init = 0.0;
  double var_init = 5e-2;  // (m/s)^2
  double mu_noise = 0.0;
  double var_noise = 5e-4;
  double dwell_init_min = 0.0;
  double dwell_init_max = 1.0;
  double dwell_noise_min = -0.1;
  double dwell_noise_max = 0.1;

  double gamma_q_gps = 1.0;
  double gamma_q_lidar = 0.25;
  double gamma_q_rfid = 1.0;
  double gamma_v_gps = 1.0;
  double gamma_v_lidar = 0.0;
  double gamma_v_rfid = 0.0;

  double prj_reinit = 1e-3;
  double initial_prj = 0.0;
  double prediction_rate = 0.25;  // Hz, predict-only cadence
  double sigma_v_floor = 0.05;    // m/s, floor for the w_v Gaussian spread

  bool monitors_enabled = true;  // JSD re-init + entropy-gated teleporting
  bool systematic_resampling = false;

  SpeedModel speed_model = SpeedModel::estimated;
  double constant_speed = 0.8;            // m/s, used when speed_model == constant
  std::optional<double> fixed_jump_rate;  // overrides the derived rate entirely

  std::uint64_t seed = 0;
};

/// Per-update diagnostics snapshot.
struct UpdateDiagnostics {
  double jsd = 0.0;
  double entropy = 0.0;
  double pr_j = 0.0;
  NodeId estimate = -1;
  bool reinitialized = false;
  bool degenerate_weights = false;
  std::vector<std::pair<NodeId, double>> top_mass;  // top 5 nodes by mass
};

/// Exponential rate of the dwell-based jump probability: the un-normalized
/// probability exp(rate * dwell) reaches 1/2 when the dwell equals the time
/// needed to cover half the edge at the projected speed.
double jump_rate(double projected_speed, double edge_length);

/// Jensen-Shannon distance (sqrt of the divergence, base-2 logs) between two
/// normalized distributions. Always in [0, 1].
double jensen_shannon_distance(std::span<const double> p, std::span<const double> q);

/// Shannon entropy normalized by log2 of the support size, in [0, 1].
double normalized_entropy(std::span<const double> p);

/// Graph-constrained particle filter tracking one person. Particles live on
/// map nodes and move along edges; a small teleport probability pr_j is
/// enabled after a divergence-triggered re-initialization and switched off
/// once the belief entropy drops below threshold.
class BeliefFilter {
 public:
  BeliefFilter(const TopologicalMap& map, FilterConfig config);

  bool initialized() const { return initialized_; }

  void initialize(const Observation& obs);
  void predict(double now);

  /// Per-particle weights plus the argmax of the topological mass.
  std::pair<std::vector<double>, NodeId> weight(const Observation& obs) const;

  void resample(const std::vector<double>& weights);

  /// Full update cycle: (first-call) initialize, predict, JSD monitor,
  /// weight, resample, entropy monitor.
  UpdateDiagnostics update(const Observation& obs);

  /// Prediction without an observation; estimate from node occupancy.
  NodeId predict_only(double now);

  NodeId estimate() const;
  /// Fraction of particles at the current argmax node.
  double confidence() const;

  /// Particle occupancy Q(n), normalized.
  std::vector<double> node_distribution() const;

  const std::vector<Particle>& particles() const { return particles_; }
  double pr_j() const { return pr_j_; }
  double last_update_time() const { return last_ts_; }
  const FilterConfig& config() const { return config_; }

 private:
  void predict_particle(Particle& p, double dt);
  double gamma_q(SensorKind kind) const;
  double gamma_v(SensorKind kind) const;
  std::vector<double> topological_mass(const std::vector<double>& weights) const;

  const TopologicalMap* map_;
  FilterConfig config_;
  std::vector<Particle> particles_;
  double pr_j_;
  double last_ts_ = 0.0;
  bool initialized_ = false;
  mutable std::mt19937_64 rng_;
};

}  // namespace topotrack
