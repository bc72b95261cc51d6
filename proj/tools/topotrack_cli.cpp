// Command-line harness: map generation, single tracking runs, and the full
// experiment suites.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "topotrack/sim.hpp"
#include "topotrack/topology.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitRuntimeError = 2;

std::vector<std::uint64_t> default_seeds(std::uint64_t base, int count) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < count; ++i) {
    seeds.push_back(base + i);
  }
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topological people tracking: simulation harness"};
  app.require_subcommand(1);

  bool verbose = false;
  app.add_flag("--verbose", verbose, "Print per-step progress information");

  // generate-map
  auto* gen = app.add_subcommand("generate-map", "Write a polytunnel map document");
  std::string map_out = "map.json";
  topotrack::PolytunnelLayout layout;
  gen->add_option("--emit-map,--out", map_out, "Output map path");
  gen->add_option("--tunnels", layout.tunnels);
  gen->add_option("--rows", layout.rows);
  gen->add_option("--nodes-per-row", layout.nodes_per_row);
  gen->add_option("--spacing", layout.node_spacing);
  gen->add_option("--row-gap", layout.row_gap);
  gen->add_option("--tunnel-gap", layout.tunnel_gap);
  gen->add_option("--spur-nodes", layout.spur_nodes);

  // run
  auto* run = app.add_subcommand("run", "Execute a single simulation run");
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> run_emit_map;
  run->add_option("--config", config_path, "Config JSON path")->required();
  run->add_option("--seed", seed_override, "Override the config seed");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--emit-map", run_emit_map, "Also write the resolved map here");

  // suite
  auto* suite = app.add_subcommand("suite", "Run a full experiment suite");
  std::string suite_name;
  std::string suite_out = "suite_out";
  std::optional<std::string> suite_config;
  std::uint64_t suite_seed_base = 0;
  int suite_runs = 10;
  suite->add_option("--suite", suite_name, "exp1-single | exp2-policy | exp3-multi")
      ->required();
  suite->add_option("--config", suite_config, "Base config JSON (optional)");
  suite->add_option("--out", suite_out, "Output directory");
  suite->add_option("--seed", suite_seed_base, "First seed of the run matrix");
  suite->add_option("--runs", suite_runs, "Seeds per method");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto map = topotrack::make_polytunnel_map(layout);
      map.save_file(map_out);
      std::cout << "wrote " << map_out << " (" << map.size() << " nodes)\n";
      return kExitOk;
    }

    if (run->parsed()) {
      topotrack::SimConfig config;
      try {
        config = topotrack::SimConfig::load_file(config_path);
        if (seed_override) {
          config.seed = *seed_override;
        }
      } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
      }
      if (run_emit_map) {
        const auto map = config.map_path
                             ? topotrack::TopologicalMap::load_file(*config.map_path)
                             : topotrack::make_polytunnel_map(config.layout);
        map.save_file(*run_emit_map);
      }
      const auto result = topotrack::run_experiment(config, out_dir);
      if (verbose) {
        std::cout << result.records.size() << " metric rows\n";
      }
      std::cout << "mean euclidean error: " << result.mean_euclidean << " m\n"
                << "mean topological error: " << result.mean_topological << " nodes\n"
                << "artifacts in " << out_dir << " (config hash "
                << config.content_hash() << ")\n";
      return kExitOk;
    }

    if (suite->parsed()) {
      topotrack::SimConfig base;
      try {
        if (suite_config) {
          base = topotrack::SimConfig::load_file(*suite_config);
        }
        if (suite_runs < 1) {
          throw topotrack::ConfigError("--runs must be >= 1");
        }
      } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
      }
      const auto seeds = default_seeds(suite_seed_base, suite_runs);
      const auto result = topotrack::run_suite(suite_name, base, seeds);
      std::filesystem::create_directories(suite_out);
      std::ofstream jout(suite_out + "/summary.json");
      jout << result.to_json_text() << "\n";
      std::ofstream tout(suite_out + "/table.txt");
      tout << result.table_text();
      std::cout << result.table_text();
      return kExitOk;
    }
  } catch (const topotrack::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
  return kExitOk;
}
