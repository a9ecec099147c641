// coalmpc: scenario-driven front end for the coalitional MPC library.
//
// Commands
//   design      per-partition controller design table (CSV)
//   simulate    closed-loop run, fixed partition or switching (CSV + JSON)
//   partitions  partition lattice of M elements as Hasse data (JSON lines)
//   consensus   one partition-selection game trace at a state (CSV)
//   regions     feasibility flags over a state-space grid (CSV)
//
// Exit codes: 0 success; 2 schema or usage errors (bad flags, bad scenario,
// bad partition key); 3 documented run-level failures (start state
// infeasible, partition not designable); 1 anything fatal.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coalmpc/game.hpp"
#include "coalmpc/mpc.hpp"
#include "coalmpc/partition.hpp"
#include "coalmpc/rci.hpp"
#include "coalmpc/scenario.hpp"
#include "coalmpc/simulate.hpp"

namespace {

using namespace coalmpc;

// Writes to <out_dir>/<name> when an output directory is set, stdout
// otherwise. Directories are created on demand.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::string out_dir) : out_dir_(std::move(out_dir)) {}

  template <typename Fn>
  void write(const std::string& name, Fn&& fill) const {
    if (out_dir_.empty()) {
      fill(std::cout);
      return;
    }
    std::filesystem::create_directories(out_dir_);
    const std::string path = out_dir_ + "/" + name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    fill(out);
  }

 private:
  std::string out_dir_;
};

std::vector<Partition> partition_list(const std::string& spec, int M) {
  std::vector<Partition> out;
  if (spec == "all") return enumerate_partitions(M);
  std::stringstream in(spec);
  std::string key;
  while (std::getline(in, key, ',')) {
    if (key.empty()) continue;
    const Partition p = Partition::from_key(key);
    if (p.num_elements() != M) {
      throw std::invalid_argument("partition key '" + key + "' has the wrong length");
    }
    out.push_back(p);
  }
  return out;
}

Vector parse_state(const std::string& text, int dim) {
  std::string cleaned = text;
  for (char& c : cleaned) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(cleaned);
  std::vector<double> entries;
  double v = 0.0;
  while (in >> v) entries.push_back(v);
  if (!in.eof()) throw std::invalid_argument("state '" + text + "' is not a number list");
  if (static_cast<int>(entries.size()) != dim) {
    throw std::invalid_argument("state needs " + std::to_string(dim) + " entries, got " +
                                std::to_string(entries.size()));
  }
  Vector x(dim);
  for (int i = 0; i < dim; ++i) x[i] = entries[static_cast<std::size_t>(i)];
  return x;
}

// One cell of ';'-joined per-coalition values.
std::string joined(const PartitionDesign& design, double CoalitionDesign::* field) {
  std::string out;
  for (std::size_t c = 0; c < design.coalitions.size(); ++c) {
    if (c > 0) out += ';';
    out += format_sig9(design.coalitions[c].*field);
  }
  return out;
}

int cmd_design(const Scenario& sc, const std::string& partition_spec,
               const ArtifactWriter& sink) {
  const SystemModel sys = sc.build_system();
  const std::vector<Partition> partitions = partition_list(partition_spec, sys.num_subsystems());
  sink.write("design.csv", [&](std::ostream& out) {
    out << "partition_key,status,alpha_x,alpha_u,beta_x,beta_u,xi_x,xi_u\n";
    for (const Partition& p : partitions) {
      out << canonical_key(p) << ',';
      try {
        const PartitionDesign d = design_partition(sys, p, sc.mpc.design);
        out << "ok," << joined(d, &CoalitionDesign::alpha_x) << ','
            << joined(d, &CoalitionDesign::alpha_u) << ','
            << joined(d, &CoalitionDesign::beta_x) << ','
            << joined(d, &CoalitionDesign::beta_u) << ','
            << joined(d, &CoalitionDesign::xi_x) << ','
            << joined(d, &CoalitionDesign::xi_u) << '\n';
      } catch (const PartitionDesignError& e) {
        out << "infeasible@" << e.stage << ",,,,,,\n";
      }
    }
  });
  return 0;
}

int cmd_simulate(const Scenario& sc, const std::string& mode, const std::string& partition_key,
                 const ArtifactWriter& sink) {
  const SystemModel sys = sc.build_system();
  const double time_step = sc.discrete ? 1.0 : sc.sample_time;
  SimulationResult result;
  if (mode == "fixed") {
    const RunSetup& run_setup = sc.fixed_run;
    const std::string key =
        partition_key.empty() ? run_setup.initial_partition : partition_key;
    const Partition p = Partition::from_key(key);
    if (p.num_elements() != sys.num_subsystems()) {
      throw std::invalid_argument("partition key '" + key + "' has the wrong length");
    }
    result = fixed_partition_run(sys, run_setup.x0, run_setup.T, p, sc.mpc);
  } else if (mode == "switching") {
    if (!partition_key.empty()) {
      throw std::invalid_argument("--partition only applies to --mode fixed");
    }
    const RunSetup& run_setup = sc.switching_run;
    Profile opinions;
    for (const std::string& key : run_setup.opinions) {
      opinions.opinions.push_back(Partition::from_key(key));
    }
    result = run(sys, run_setup.x0, run_setup.T, Partition::from_key(run_setup.initial_partition),
                 sc.game, sc.switch_cfg, sc.mpc,
                 opinions.opinions.empty() ? nullptr : &opinions);
  } else {
    throw std::invalid_argument("--mode must be 'fixed' or 'switching'");
  }
  sink.write("steps.csv", [&](std::ostream& out) { write_steps_csv(out, result, time_step); });
  sink.write("summary.json",
             [&](std::ostream& out) { out << summary_json(result).dump(2) << '\n'; });
  const StabilityReport report = stability_monitor(result);
  sink.write("stability.json",
             [&](std::ostream& out) { out << stability_json(report).dump(2) << '\n'; });
  return 0;
}

int cmd_partitions(int M, const ArtifactWriter& sink) {
  if (M < 1 || M > 7) {
    throw std::invalid_argument("element count must be between 1 and 7");
  }
  const std::vector<Partition> all = enumerate_partitions(M);
  const auto edges = hasse_edges(M);
  sink.write("hasse.jsonl", [&](std::ostream& out) {
    for (const Partition& p : all) {
      out << nlohmann::ordered_json{{"node", canonical_key(p)}}.dump() << '\n';
    }
    for (const auto& [finer, coarser] : edges) {
      out << nlohmann::ordered_json{{"edge", {finer, coarser}}}.dump() << '\n';
    }
  });
  return 0;
}

int cmd_consensus(const Scenario& sc, const std::string& state_text,
                  const ArtifactWriter& sink) {
  const SystemModel sys = sc.build_system();
  const RunSetup& run_setup = sc.switching_run;
  const Vector x = state_text.empty() ? run_setup.x0
                                      : parse_state(state_text, sys.total_state_dim());
  Profile profile;
  if (run_setup.opinions.empty()) {
    profile.opinions.assign(static_cast<std::size_t>(sys.num_subsystems()),
                            Partition::from_key(run_setup.initial_partition));
  } else {
    for (const std::string& key : run_setup.opinions) {
      profile.opinions.push_back(Partition::from_key(key));
    }
  }
  const ConsensusResult result = run_consensus(sys, profile, x, sc.game);
  if (!result.converged) throw std::runtime_error("consensus did not converge");
  sink.write("consensus.csv", [&](std::ostream& out) {
    out << "update,player,partition_key,local_cost,potential\n";
    for (std::size_t i = 0; i < result.updates.size(); ++i) {
      const ConsensusUpdate& u = result.updates[i];
      out << i << ',' << u.player << ',' << u.chosen_key << ',' << format_sig9(u.cost) << ','
          << format_sig9(u.potential) << '\n';
    }
  });
  return 0;
}

int cmd_regions(const Scenario& sc, const std::string& partition_spec, int resolution,
                const ArtifactWriter& sink) {
  const SystemModel sys = sc.build_system();
  const int n = sys.total_state_dim();
  if (n > 3) {
    throw std::invalid_argument("regions grids are limited to 3 state dimensions, got " +
                                std::to_string(n));
  }
  if (resolution < 2) throw std::invalid_argument("--grid-resolution must be at least 2");
  const std::vector<Partition> partitions = partition_list(partition_spec, sys.num_subsystems());

  std::vector<PartitionDesign> designs;
  std::vector<std::string> keys;
  for (const Partition& p : partitions) {
    designs.push_back(design_partition(sys, p, sc.mpc.design));
    keys.push_back(canonical_key(p));
  }

  Vector halfwidth(n);
  int at = 0;
  for (int i = 0; i < sys.num_subsystems(); ++i) {
    const Vector& h = sys.subsystem(i).state_box.halfwidths;
    halfwidth.segment(at, h.size()) = h;
    at += static_cast<int>(h.size());
  }

  sink.write("regions.csv", [&](std::ostream& out) {
    for (int i = 0; i < n; ++i) out << 'x' << (i + 1) << ',';
    for (std::size_t k = 0; k < keys.size(); ++k) {
      out << "feasible_" << keys[k] << (k + 1 < keys.size() ? "," : "");
    }
    out << '\n';
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    Vector x(n);
    while (true) {
      for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(idx[static_cast<std::size_t>(i)]) /
                         static_cast<double>(resolution - 1);
        x[i] = -halfwidth[i] + 2.0 * halfwidth[i] * t;
      }
      for (int i = 0; i < n; ++i) out << format_sig9(x[i]) << ',';
      for (std::size_t k = 0; k < designs.size(); ++k) {
        out << (is_feasible_with_margin(sys, designs[k], x, 1) ? 1 : 0)
            << (k + 1 < designs.size() ? "," : "");
      }
      out << '\n';
      int axis = n - 1;
      while (axis >= 0 && ++idx[static_cast<std::size_t>(axis)] == resolution) {
        idx[static_cast<std::size_t>(axis)] = 0;
        --axis;
      }
      if (axis < 0) break;
    }
  });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coalitional MPC scenarios: design, simulate, and inspect"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir, partition_spec = "all", mode = "fixed";
  std::string partition_key, state_text;
  int lattice_size = 0, grid_resolution = 21;

  CLI::App* design = app.add_subcommand("design", "per-partition design table");
  design->add_option("--scenario", scenario_path, "scenario file")->required();
  design->add_option("--partition", partition_spec, "'all' or comma-separated keys");
  design->add_option("--out-dir", out_dir, "write design.csv here instead of stdout");

  CLI::App* simulate = app.add_subcommand("simulate", "closed-loop run");
  simulate->add_option("--scenario", scenario_path, "scenario file")->required();
  simulate->add_option("--mode", mode, "'fixed' or 'switching'");
  simulate->add_option("--partition", partition_key, "fixed-mode partition key override");
  simulate->add_option("--out-dir", out_dir, "artifact directory")->required();

  CLI::App* partitions = app.add_subcommand("partitions", "partition lattice");
  partitions->add_option("M", lattice_size, "number of elements")->required();
  partitions->add_option("--out-dir", out_dir, "write hasse.jsonl here instead of stdout");

  CLI::App* consensus = app.add_subcommand("consensus", "partition-selection game trace");
  consensus->add_option("--scenario", scenario_path, "scenario file")->required();
  consensus->add_option("--state", state_text, "state override, comma or space separated");
  consensus->add_option("--out-dir", out_dir, "write consensus.csv here instead of stdout");

  CLI::App* regions = app.add_subcommand("regions", "feasibility grid");
  regions->add_option("--scenario", scenario_path, "scenario file")->required();
  regions->add_option("--partition", partition_spec, "'all' or comma-separated keys");
  regions->add_option("--grid-resolution", grid_resolution, "points per state axis");
  regions->add_option("--out-dir", out_dir, "write regions.csv here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const ArtifactWriter sink(out_dir);
  try {
    if (design->parsed()) return cmd_design(load_scenario(scenario_path), partition_spec, sink);
    if (simulate->parsed()) {
      return cmd_simulate(load_scenario(scenario_path), mode, partition_key, sink);
    }
    if (partitions->parsed()) return cmd_partitions(lattice_size, sink);
    if (consensus->parsed()) return cmd_consensus(load_scenario(scenario_path), state_text, sink);
    if (regions->parsed()) {
      return cmd_regions(load_scenario(scenario_path), partition_spec, grid_resolution, sink);
    }
    return 2;
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const InfeasibleStartError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const PartitionDesignError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "fatal: " << e.what() << '\n';
    return 1;
  }
}
