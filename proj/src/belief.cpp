#include "topotrack/belief.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace topotrack {

namespace {

constexpr double kTiny = 1e-12;
const double kSqrt2Pi = std::sqrt(2.0 * M_PI);

double log2_safe(double x) { return std::log2(x); }

}  // namespace

double jump_rate(double projected_speed, double edge_length) {
  if (projected_speed <= 0.0 || edge_length <= 0.0) {
    return 0.0;
  }
  return 2.0 * std::log(0.5) * projected_speed / edge_length;
}

double jensen_shannon_distance(std::span<const double> p, std::span<const double> q) {
  double div = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) {
      div += 0.5 * p[i] * log2_safe(p[i] / m);
    }
    if (q[i] > 0.0) {
      div += 0.5 * q[i] * log2_safe(q[i] / m);
    }
  }
  return std::sqrt(std::clamp(div, 0.0, 1.0));
}

double normalized_entropy(std::span<const double> p) {
  if (p.size() <= 1) {
    return 0.0;
  }
  double h = 0.0;
  for (const double x : p) {
    if (x > 0.0) {
      h -= x * log2_safe(x);
    }
  }
  return std::clamp(h / log2_safe(static_cast<double>(p.size())), 0.0, 1.0);
}

BeliefFilter::BeliefFilter(const TopologicalMap& map, FilterConfig config)
    : map_(&map),
      config_(std::move(config)),
      pr_j_(config_.initial_prj),
      rng_(config_.seed) {
  if (config_.particle_count <= 0) {
    throw std::invalid_argument("particle_count must be positive");
  }
}

void BeliefFilter::initialize(const Observation& obs) {
  std::vector<double> dist;
  if (obs.identifying) {
    dist = obs.likelihood;
    const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
    if (!(total > 0.0)) {
      throw std::runtime_error("cannot initialize from all-zero likelihood");
    }
  } else {
    // Non-identifying readings could be anyone; start uniform.
    dist.assign(map_->size(), 1.0);
  }
  std::discrete_distribution<int> node_dist(dist.begin(), dist.end());
  std::normal_distribution<double> vel_dist(config_.mu_init, std::sqrt(config_.var_init));
  std::uniform_real_distribution<double> dwell_dist(config_.dwell_init_min,
                                                    config_.dwell_init_max);
  particles_.resize(config_.particle_count);
  for (Particle& p : particles_) {
    p.node = node_dist(rng_);
    p.velocity = {vel_dist(rng_), vel_dist(rng_)};
    p.dwell = dwell_dist(rng_);
  }
  last_ts_ = obs.timestamp;
  initialized_ = true;
}

void BeliefFilter::predict_particle(Particle& p, double dt) {
  const auto& edges = map_->edges_from(p.node);
  const size_t deg = edges.size();

  // Per-neighbor alignment factor and dwell-decay rate.
  double sum_b = 0.0;
  double sum_jump = 0.0;
  static thread_local std::vector<double> jump_terms;
  jump_terms.assign(deg, 0.0);
  for (size_t k = 0; k < deg; ++k) {
    double b;
    double rate;
    if (config_.speed_model == SpeedModel::constant) {
      b = 1.0;
      rate = config_.fixed_jump_rate ? -*config_.fixed_jump_rate
                                     : jump_rate(config_.constant_speed, edges[k].length);
    } else {
      b = std::max(0.0, p.velocity.dot(edges[k].direction));
      rate = jump_rate(b, edges[k].length);
    }
    sum_b += b;
    jump_terms[k] = b * (1.0 - std::exp(rate * p.dwell));
    sum_jump += jump_terms[k];
  }

  // Velocity opposing every edge (or zero): the particle stays put.
  const double p_jump = sum_b > 0.0 ? sum_jump / sum_b : 0.0;

  std::uniform_real_distribution<double> uni(0.0, 1.0);
  if (!(p_jump > 0.0) || uni(rng_) >= p_jump) {
    p.dwell += dt;
    return;
  }

  // Destination over the connected nodes, weighted by the same per-neighbor
  // jump terms so aligned edges attract the particle.
  double pick = uni(rng_) * sum_jump;
  size_t dest = deg - 1;
  for (size_t k = 0; k < deg; ++k) {
    pick -= jump_terms[k];
    if (pick <= 0.0) {
      dest = k;
      break;
    }
  }

  const Edge& edge = edges[dest];
  if (config_.speed_model == SpeedModel::estimated) {
    const double dwell_before = p.dwell + dt;
    if (dwell_before > 0.0) {
      const Vec2 edge_velocity = edge.direction * (edge.length / dwell_before);
      const double gain =
          p_jump * (jump_terms[dest] / sum_jump) / config_.velocity_window;
      p.velocity += (edge_velocity - p.velocity) * gain;
    }
  }
  p.node = edge.to;
  p.dwell = 0.0;
}

void BeliefFilter::predict(double now) {
  if (!initialized_) {
    throw std::logic_error("predict before initialization");
  }
  const double dt = now - last_ts_;
  if (dt < 0.0) {
    throw std::invalid_argument("prediction time precedes last update");
  }
  for (Particle& p : particles_) {
    predict_particle(p, dt);
  }
  last_ts_ = now;
}

double BeliefFilter::gamma_q(SensorKind kind) const {
  switch (kind) {
    case SensorKind::gps:
      return config_.gamma_q_gps;
    case SensorKind::lidar:
      return config_.gamma_q_lidar;
    case SensorKind::rfid:
      return config_.gamma_q_rfid;
  }
  return 0.0;
}

double BeliefFilter::gamma_v(SensorKind kind) const {
  switch (kind) {
    case SensorKind::gps:
      return config_.gamma_v_gps;
    case SensorKind::lidar:
      return config_.gamma_v_lidar;
    case SensorKind::rfid:
      return config_.gamma_v_rfid;
  }
  return 0.0;
}

std::pair<std::vector<double>, NodeId> BeliefFilter::weight(const Observation& obs) const {
  const double gq = gamma_q(obs.kind);
  const double gv = gamma_v(obs.kind);
  const bool use_velocity = obs.velocity.has_value() && gv > 0.0;

  double obs_speed = 0.0;
  Vec2 obs_vel;
  double sigma = config_.sigma_v_floor;
  if (use_velocity) {
    obs_vel = *obs.velocity;
    obs_speed = obs_vel.norm();
    sigma = std::max(obs_speed / 2.0, config_.sigma_v_floor);
  }

  std::vector<double> weights(particles_.size());
  for (size_t i = 0; i < particles_.size(); ++i) {
    const Particle& p = particles_[i];
    double w = gq * obs.likelihood.at(p.node);
    if (use_velocity) {
      const double speed = p.velocity.norm();
      const double z = (speed - obs_speed) / sigma;
      const double gauss = std::exp(-0.5 * z * z) / (sigma * kSqrt2Pi);
      double cosine = 0.0;
      if (speed > kTiny && obs_speed > kTiny) {
        cosine = std::clamp(p.velocity.dot(obs_vel) / (speed * obs_speed), -1.0, 1.0);
      }
      w += gv * 0.25 * (gauss + (cosine + 1.0) / 2.0);
    }
    weights[i] = w;
  }

  const auto mass = topological_mass(weights);
  const NodeId best = static_cast<NodeId>(
      std::max_element(mass.begin(), mass.end()) - mass.begin());
  return {std::move(weights), best};
}

std::vector<double> BeliefFilter::topological_mass(const std::vector<double>& weights) const {
  std::vector<double> mass(map_->size(), 0.0);
  for (size_t i = 0; i < particles_.size(); ++i) {
    mass[particles_[i].node] += weights[i];
  }
  return mass;
}

void BeliefFilter::resample(const std::vector<double>& weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<Particle> next;
  next.reserve(particles_.size());

  std::uniform_real_distribution<double> uni(0.0, 1.0);
  if (!(total > 0.0) || !std::isfinite(total)) {
    // Observation disjoint from every particle: keep the set alive with
    // uniform draws.
    next = particles_;
  } else if (config_.systematic_resampling) {
    const double step = total / particles_.size();
    double pointer = uni(rng_) * step;
    double cumulative = weights[0];
    size_t i = 0;
    for (size_t j = 0; j < particles_.size(); ++j) {
      while (cumulative < pointer && i + 1 < particles_.size()) {
        cumulative += weights[++i];
      }
      next.push_back(particles_[i]);
      pointer += step;
    }
  } else {
    std::discrete_distribution<size_t> pick(weights.begin(), weights.end());
    for (size_t j = 0; j < particles_.size(); ++j) {
      next.push_back(particles_[pick(rng_)]);
    }
  }

  std::normal_distribution<double> vel_noise(config_.mu_noise,
                                             std::sqrt(config_.var_noise));
  std::uniform_real_distribution<double> dwell_noise(config_.dwell_noise_min,
                                                     config_.dwell_noise_max);
  std::uniform_int_distribution<int> any_node(0, map_->size() - 1);
  for (Particle& p : next) {
    if (pr_j_ > 0.0 && uni(rng_) < pr_j_) {
      p.node = any_node(rng_);
    }
    p.velocity += {vel_noise(rng_), vel_noise(rng_)};
    p.dwell = std::max(0.0, p.dwell + dwell_noise(rng_));
  }
  particles_ = std::move(next);
}

UpdateDiagnostics BeliefFilter::update(const Observation& obs) {
  UpdateDiagnostics diag;
  if (!initialized_) {
    initialize(obs);
  }
  predict(obs.timestamp);

  const std::vector<double> q_dist = node_distribution();
  std::vector<double> l_dist = obs.likelihood;
  const double l_total = std::accumulate(l_dist.begin(), l_dist.end(), 0.0);
  if (!(l_total > 0.0)) {
    throw std::runtime_error("observation likelihood is all zero");
  }
  for (double& l : l_dist) {
    l /= l_total;
  }
  diag.jsd = jensen_shannon_distance(q_dist, l_dist);

  if (config_.monitors_enabled && diag.jsd > config_.eps_jsd && obs.identifying) {
    initialize(obs);
    pr_j_ = config_.prj_reinit;
    diag.reinitialized = true;
  }

  auto [weights, best] = weight(obs);
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  diag.degenerate_weights = !(total > 0.0) || !std::isfinite(total);

  const auto mass = topological_mass(weights);
  resample(weights);

  diag.entropy = normalized_entropy(node_distribution());
  if (config_.monitors_enabled && diag.entropy < config_.eps_entropy) {
    pr_j_ = 0.0;
  }

  diag.pr_j = pr_j_;
  diag.estimate = diag.degenerate_weights ? estimate() : best;

  std::vector<NodeId> order(mass.size());
  std::iota(order.begin(), order.end(), 0);
  const size_t top = std::min<size_t>(5, order.size());
  std::partial_sort(order.begin(), order.begin() + top, order.end(),
                    [&mass](NodeId a, NodeId b) { return mass[a] > mass[b]; });
  for (size_t i = 0; i < top; ++i) {
    diag.top_mass.emplace_back(order[i], mass[order[i]]);
  }
  return diag;
}

NodeId BeliefFilter::predict_only(double now) {
  if (!initialized_) {
    throw std::logic_error("predict_only before initialization");
  }
  predict(now);
  return estimate();
}

NodeId BeliefFilter::estimate() const {
  if (!initialized_) {
    throw std::logic_error("estimate before initialization");
  }
  std::vector<int> counts(map_->size(), 0);
  for (const Particle& p : particles_) {
    ++counts[p.node];
  }
  return static_cast<NodeId>(std::max_element(counts.begin(), counts.end()) -
                             counts.begin());
}

double BeliefFilter::confidence() const {
  if (!initialized_ || particles_.empty()) {
    return 0.0;
  }
  std::vector<int> counts(map_->size(), 0);
  for (const Particle& p : particles_) {
    ++counts[p.node];
  }
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
         static_cast<double>(particles_.size());
}

std::vector<double> BeliefFilter::node_distribution() const {
  std::vector<double> dist(map_->size(), 0.0);
  if (particles_.empty()) {
    return dist;
  }
  const double unit = 1.0 / static_cast<double>(particles_.size());
  for (const Particle& p : particles_) {
    dist[p.node] += unit;
  }
  return dist;
}

}  // namespace topotrack
