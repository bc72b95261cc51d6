// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Experiment criteria run the default configuration over seeds 0-9.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "topotrack/belief.hpp"
#include "topotrack/planner.hpp"
#include "topotrack/sim.hpp"
#include "topotrack/topology.hpp"

using namespace topotrack;

namespace {

int failures = 0;

void report(int index, const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s: %2d. %s (%s)\n", ok ? "PASS" : "FAIL", index, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!ok) {
    ++failures;
  }
}

std::vector<std::uint64_t> default_seeds() {
  std::vector<std::uint64_t> seeds(10);
  std::iota(seeds.begin(), seeds.end(), 0);
  return seeds;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", x);
  return buf;
}

Observation make_obs(int size, const std::vector<double>& likelihood, bool identifying,
                     SensorKind kind, double ts) {
  Observation obs;
  obs.likelihood = likelihood;
  obs.likelihood.resize(size, 0.0);
  obs.identifying = identifying;
  obs.kind = kind;
  if (identifying) {
    obs.target_id = 0;
  }
  obs.timestamp = ts;
  return obs;
}

// --- 1 & 2: single-picker method comparison -------------------------------

void criteria_exp1() {
  const auto start = std::chrono::steady_clock::now();
  const auto suite = run_suite("exp1-single", SimConfig{}, default_seeds());
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::map<std::string, double> topo;
  for (const auto& row : suite.rows) {
    topo[row.label] = row.mean_topological;
  }
  const double ours = topo.at("rfid+lidar+gps");
  const double lidar_gps = topo.at("lidar+gps");
  const double khan_c = topo.at("khan-connected");
  const double khan_u = topo.at("khan-unconnected");
  const double rfid_gps = topo.at("rfid+gps");

  const bool ordering = ours < lidar_gps && lidar_gps < khan_c &&
                        lidar_gps < khan_u && lidar_gps < rfid_gps;
  const bool margin = ours <= 0.5 * khan_c;
  const bool runtime = elapsed < 300.0;
  report(1, "single-picker ordering with margin and runtime budget",
         ordering && margin && runtime,
         "ours=" + fmt(ours) + " lidar+gps=" + fmt(lidar_gps) + " rfid+gps=" +
             fmt(rfid_gps) + " khan=" + fmt(khan_u) + "/" + fmt(khan_c) +
             " hops, " + fmt(elapsed) + " s");

  const double ratio = khan_u / ours;
  report(2, "improvement ratio over the fixed-rate baseline", ratio >= 2.0,
         "ratio=" + fmt(ratio) + "x (required >= 2.0x)");
}

// --- 3: navigation policy comparison --------------------------------------

void criterion_exp2() {
  const auto suite = run_suite("exp2-policy", SimConfig{}, default_seeds());
  const auto& baseline = suite.rows[0];  // estimated-node
  const auto& nbs = suite.rows[1];       // next-best-sense
  const bool both_lower = nbs.mean_euclidean < baseline.mean_euclidean &&
                          nbs.mean_topological < baseline.mean_topological;
  const double margin = baseline.mean_topological / nbs.mean_topological;
  report(3, "active sensing beats the estimated-node baseline",
         both_lower && margin >= 1.5,
         "topo " + fmt(nbs.mean_topological) + " vs " +
             fmt(baseline.mean_topological) + " hops (x" + fmt(margin) +
             "), euclid " + fmt(nbs.mean_euclidean) + " vs " +
             fmt(baseline.mean_euclidean) + " m");
}

// --- 4: multi-picker ablations --------------------------------------------

void criterion_exp3() {
  const auto suite = run_suite("exp3-multi", SimConfig{}, default_seeds());
  std::map<std::string, double> topo;
  for (const auto& row : suite.rows) {
    topo[row.label] = row.mean_topological;
  }
  const double ours = topo.at("rfid+lidar+gps");
  const double no_monitor = topo.at("no-monitor");
  const double constant = topo.at("constant-speed");
  report(4, "full method beats both ablations with three pickers",
         ours < no_monitor && ours < constant,
         "ours=" + fmt(ours) + " no-monitor=" + fmt(no_monitor) +
             " constant-speed=" + fmt(constant) + " hops");
}

// --- 5: jump-rate midpoint property ---------------------------------------

void criterion_lambda() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> len(0.05, 100.0);
  std::uniform_real_distribution<double> proj(0.001, 10.0);
  double worst = 0.0;
  for (int it = 0; it < 1000; ++it) {
    const double d = len(rng);
    const double p = proj(rng);
    const double tau = d / (2.0 * p);
    worst = std::max(worst, std::abs(std::exp(jump_rate(p, d) * tau) - 0.5));
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "max |exp(rate*tau)-0.5| = %.2e", worst);
  report(5, "jump rate halves the unnormalized probability at the midpoint",
         worst < 1e-12, buf);
}

// --- 6: choquet oracle and property suites --------------------------------

void criterion_choquet() {
  const std::array<double, 4> weights{0.3, 0.1, 0.35, 0.25};
  const auto additive = FuzzyMeasure::additive(weights);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  double worst = 0.0;
  for (int it = 0; it < 10000; ++it) {
    const Utilities u{uni(rng), uni(rng), uni(rng), uni(rng)};
    double dot = 0.0;
    for (int i = 0; i < 4; ++i) {
      dot += u[i] * weights[i];
    }
    worst = std::max(worst, std::abs(choquet(u, additive) - dot));
  }
  const bool oracle_ok = worst < 1e-12;

  // Random monotone measures: max of i.i.d. draws over contained subsets.
  auto random_measure = [&rng, &uni]() {
    std::map<unsigned, double> raw;
    for (unsigned a = 1; a < 16; ++a) {
      raw[a] = a == 15 ? 1.0 : uni(rng);
    }
    std::map<unsigned, double> eta;
    for (unsigned a = 1; a < 16; ++a) {
      double best = 0.0;
      for (unsigned b = a;; b = (b - 1) & a) {
        if (b != 0) {
          best = std::max(best, raw[b]);
        }
        if (b == 0) {
          break;
        }
      }
      eta[a] = best;
    }
    return FuzzyMeasure::from_subsets(eta);
  };

  bool monotone_ok = true;
  bool idempotent_ok = true;
  for (int it = 0; it < 1000 && monotone_ok && idempotent_ok; ++it) {
    const auto eta = random_measure();
    const Utilities u{uni(rng), uni(rng), uni(rng), uni(rng)};
    const double base = choquet(u, eta);
    for (int i = 0; i < 4; ++i) {
      auto raised = u;
      raised[i] = std::min(1.0, raised[i] + uni(rng) * (1.0 - raised[i]));
      if (choquet(raised, eta) < base - 1e-12) {
        monotone_ok = false;
      }
    }
    const double c = uni(rng);
    if (std::abs(choquet({c, c, c, c}, eta) - c) > 1e-12) {
      idempotent_ok = false;
    }
  }

  char buf[96];
  std::snprintf(buf, sizeof(buf),
                "weighted-sum err %.2e, monotone=%s, idempotent=%s", worst,
                monotone_ok ? "yes" : "no", idempotent_ok ? "yes" : "no");
  report(6, "choquet integral matches oracles and properties",
         oracle_ok && monotone_ok && idempotent_ok, buf);
}

// --- 7: filter invariants under fuzz --------------------------------------

void criterion_filter_invariants() {
  const auto map = make_polytunnel_map();
  FilterConfig cfg;
  cfg.particle_count = 300;
  cfg.seed = 7;
  BeliefFilter filter(map, cfg);
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::uniform_int_distribution<int> kind_pick(0, 2);
  std::uniform_real_distribution<double> vel(-1.5, 1.5);

  int violations = 0;
  int updates = 0;
  double t = 0.0;
  for (int it = 0; it < 1100; ++it) {
    t += 0.5;
    std::vector<double> likelihood(map.size());
    double total = 0.0;
    for (double& l : likelihood) {
      l = uni(rng);
      total += l;
    }
    for (double& l : likelihood) {
      l /= total;
    }
    const int k = kind_pick(rng);
    const SensorKind kind =
        k == 0 ? SensorKind::gps : (k == 1 ? SensorKind::lidar : SensorKind::rfid);
    auto obs = make_obs(map.size(), likelihood, kind != SensorKind::lidar, kind, t);
    if (kind == SensorKind::gps) {
      obs.velocity = Vec2{vel(rng), vel(rng)};
    }

    if (filter.initialized()) {
      const auto [w, best] = filter.weight(obs);
      const double w_total = std::accumulate(w.begin(), w.end(), 0.0);
      if (w_total > 0.0) {
        double norm_sum = 0.0;
        std::vector<double> mass(map.size(), 0.0);
        size_t i = 0;
        for (const Particle& p : filter.particles()) {
          norm_sum += w[i] / w_total;
          mass[p.node] += w[i];
          ++i;
        }
        const double mass_total = std::accumulate(mass.begin(), mass.end(), 0.0);
        if (std::abs(norm_sum - 1.0) > 1e-9 ||
            std::abs(mass_total - w_total) > 1e-9 * std::max(1.0, w_total) ||
            mass[best] != *std::max_element(mass.begin(), mass.end())) {
          ++violations;
        }
      }
    }

    const auto diag = filter.update(obs);
    ++updates;
    if (static_cast<int>(filter.particles().size()) != cfg.particle_count ||
        diag.jsd < 0.0 || diag.jsd > 1.0 || diag.entropy < 0.0 || diag.entropy > 1.0) {
      ++violations;
    }
    const auto dist = filter.node_distribution();
    if (std::abs(std::accumulate(dist.begin(), dist.end(), 0.0) - 1.0) > 1e-9) {
      ++violations;
    }
  }

  // Edge-constrained transitions with teleporting off: prediction only ever
  // keeps a particle in place or moves it along an existing edge.
  FilterConfig pcfg;
  pcfg.particle_count = 300;
  pcfg.seed = 72;
  BeliefFilter walker(map, pcfg);
  walker.initialize(make_obs(map.size(), std::vector<double>(map.size(), 1.0), true,
                             SensorKind::gps, 0.0));
  for (int step = 1; step <= 1000; ++step) {
    std::vector<NodeId> before;
    for (const Particle& p : walker.particles()) {
      before.push_back(p.node);
    }
    walker.predict(step * 1.0);
    size_t i = 0;
    for (const Particle& p : walker.particles()) {
      if (p.node != before[i] && !map.adjacent(before[i], p.node)) {
        ++violations;
      }
      ++i;
    }
  }

  char buf[64];
  std::snprintf(buf, sizeof(buf), "%d updates + 1000 predicts, %d violations",
                updates, violations);
  report(7, "filter invariants hold under randomized updates", violations == 0, buf);
}

// --- 8: update-cycle control flow -----------------------------------------

void criterion_control_flow() {
  const auto map = make_polytunnel_map();
  bool ok = true;
  std::string detail;

  std::vector<double> broad(map.size(), 0.0);
  for (int n = 60; n < 120; ++n) {
    broad[n] = 1.0;
  }
  std::vector<double> at3(map.size(), 0.0);
  at3[3] = 1.0;

  {  // Divergent identifying observation re-initializes and arms teleports.
    FilterConfig cfg;
    cfg.particle_count = 1000;
    cfg.seed = 81;
    BeliefFilter f(map, cfg);
    f.initialize(make_obs(map.size(), at3, true, SensorKind::gps, 0.0));
    const auto diag = f.update(make_obs(map.size(), broad, true, SensorKind::gps, 0.1));
    if (!(diag.jsd > 0.975) || !diag.reinitialized || f.pr_j() != 1e-3) {
      ok = false;
      detail += "identifying-divergence path broken; ";
    }
  }
  {  // Same divergence without identity must not re-initialize.
    FilterConfig cfg;
    cfg.particle_count = 1000;
    cfg.seed = 82;
    BeliefFilter f(map, cfg);
    f.initialize(make_obs(map.size(), at3, true, SensorKind::gps, 0.0));
    const auto diag =
        f.update(make_obs(map.size(), broad, false, SensorKind::lidar, 0.1));
    if (diag.reinitialized || f.pr_j() != 0.0) {
      ok = false;
      detail += "non-identifying guard broken; ";
    }
  }
  {  // Mild observation agreeing with the belief must not re-initialize.
    FilterConfig cfg;
    cfg.particle_count = 1000;
    cfg.seed = 83;
    BeliefFilter f(map, cfg);
    f.initialize(make_obs(map.size(), at3, true, SensorKind::gps, 0.0));
    const auto diag = f.update(make_obs(map.size(), at3, true, SensorKind::gps, 0.1));
    if (diag.jsd > 0.975 || diag.reinitialized) {
      ok = false;
      detail += "agreement path broken; ";
    }
  }
  {  // Entropy collapse below 0.6 switches teleporting back off.
    FilterConfig cfg;
    cfg.particle_count = 1000;
    cfg.seed = 84;
    BeliefFilter f(map, cfg);
    f.initialize(make_obs(map.size(), at3, true, SensorKind::gps, 0.0));
    auto diag = f.update(make_obs(map.size(), broad, true, SensorKind::gps, 0.1));
    const bool armed = diag.reinitialized && f.pr_j() == 1e-3 && diag.entropy >= 0.6;
    std::vector<double> at90(map.size(), 0.0);
    at90[90] = 1.0;
    for (int k = 1; k <= 20 && diag.entropy >= 0.6; ++k) {
      diag = f.update(make_obs(map.size(), at90, true, SensorKind::gps, 0.1 + 0.1 * k));
    }
    if (!armed || diag.entropy >= 0.6 || f.pr_j() != 0.0) {
      ok = false;
      detail += "entropy toggle broken; ";
    }
  }
  if (detail.empty()) {
    detail = "re-init guard and pr_j toggle behave as scripted";
  }
  report(8, "update-cycle control flow on scripted sequences", ok, detail);
}

// --- 9: determinism -------------------------------------------------------

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void criterion_determinism() {
  SimConfig config;
  config.duration_s = 180.0;
  config.pickers = 2;
  config.seed = 9;
  const auto base = std::filesystem::temp_directory_path() / "topotrack-acceptance";
  std::filesystem::remove_all(base);
  run_experiment(config, (base / "a").string());
  run_experiment(config, (base / "b").string());
  const std::string a = read_file(base / "a" / "metrics.csv");
  const std::string b = read_file(base / "b" / "metrics.csv");
  const bool ok = !a.empty() && a == b;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%zu bytes, byte-identical=%s", a.size(),
                ok ? "yes" : "no");
  report(9, "identical config and seed give byte-identical metrics", ok, buf);
  std::filesystem::remove_all(base);
}

// --- 10: noise-model statistics -------------------------------------------

void criterion_noise_stats() {
  GpsNoiseConfig cfg;
  std::mt19937_64 rng(10);
  bool ok = true;
  std::string detail;

  {  // Per-axis constant offset ~ U(0, 3.5): 1e5 axis samples.
    const int models = 50000;
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int it = 0; it < models; ++it) {
      GpsNoiseModel m(cfg, 0.0, rng);
      sum += m.offset().x + m.offset().y;
      sum_sq += m.offset().x * m.offset().x + m.offset().y * m.offset().y;
    }
    const double n = 2.0 * models;
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    const double exp_var = 3.5 * 3.5 / 12.0;
    const double sigma_mean = std::sqrt(exp_var / n);
    const double sigma_var = exp_var * std::sqrt(2.0 / n);  // normal approx
    if (std::abs(mean - 1.75) > 3.0 * sigma_mean ||
        std::abs(var - exp_var) > 3.0 * 1.6 * sigma_var) {  // kurtosis margin
      ok = false;
      detail += "offset off; ";
    }
  }
  {  // White noise std 0.1 with drift suppressed.
    GpsNoiseConfig white = cfg;
    white.offset_max = 0.0;
    white.drift_std = 1e-12;
    GpsNoiseModel m(white, 0.0, rng);
    const int n = 50000;
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int it = 0; it < n; ++it) {
      const Vec2 fix = m.corrupt({0.0, 0.0}, rng);
      sum += fix.x + fix.y;
      sum_sq += fix.x * fix.x + fix.y * fix.y;
    }
    const double count = 2.0 * n;
    const double mean = sum / count;
    const double var = sum_sq / count - mean * mean;
    const double sigma_var = 0.01 * std::sqrt(2.0 / count);
    if (std::abs(mean) > 3.0 * 0.1 / std::sqrt(count) ||
        std::abs(var - 0.01) > 3.0 * sigma_var) {
      ok = false;
      detail += "white noise off; ";
    }
  }
  {  // Drift magnitude ~ N(0, 2.5).
    const int n = 100000;
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int it = 0; it < n; ++it) {
      const double d = GpsNoiseModel::stationary_drift_sample(cfg, rng);
      sum += d;
      sum_sq += d * d;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    const double sigma_var = 6.25 * std::sqrt(2.0 / n);
    if (std::abs(mean) > 3.0 * 2.5 / std::sqrt(static_cast<double>(n)) ||
        std::abs(var - 6.25) > 3.0 * sigma_var) {
      ok = false;
      detail += "drift off; ";
    }
  }
  {  // Blackout durations ~ U(30, 60) s at the scheduled cadence.
    int windows = 0;
    double total = 0.0;
    for (int it = 0; it < 400; ++it) {
      GpsNoiseModel m(cfg, 2000.0, rng);
      for (double onset = cfg.blackout_interval_s; onset < 2000.0;
           onset += cfg.blackout_interval_s) {
        if (!m.in_blackout(onset) || m.in_blackout(onset - 0.05) ||
            !m.in_blackout(onset + 29.95) || m.in_blackout(onset + 60.05)) {
          ok = false;
          detail += "blackout bounds off; ";
          break;
        }
        double end = onset + 30.0;
        while (m.in_blackout(end)) {
          end += 0.05;
        }
        total += end - onset;
        ++windows;
      }
    }
    const double mean = total / std::max(1, windows);
    const double sigma = (30.0 / std::sqrt(12.0)) / std::sqrt(std::max(1, windows));
    if (std::abs(mean - 45.0) > 3.0 * sigma + 0.1) {  // grid quantization slack
      ok = false;
      detail += "blackout duration off; ";
    }
  }
  if (detail.empty()) {
    detail = "offset, white noise, drift, blackouts all within 3 sigma";
  }
  report(10, "gps noise statistics match the configured distributions", ok, detail);
}

}  // namespace

int main() {
  criteria_exp1();
  criterion_exp2();
  criterion_exp3();
  criterion_lambda();
  criterion_choquet();
  criterion_filter_invariants();
  criterion_control_flow();
  criterion_determinism();
  criterion_noise_stats();
  if (failures == 0) {
    std::printf("all acceptance criteria passed\n");
  } else {
    std::printf("%d acceptance criteria failed\n", failures);
  }
  return failures == 0 ? 0 : 1;
}
