#pragma once

#include "wchj/coupling.hpp"
#include "wchj/hamiltonian.hpp"
#include "wchj/paths.hpp"
#include "wchj/stopping.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace wchj {

// Flat dotted-key scenario description. Mode indices are 1-based in config
// files and all emitted artifacts; the library uses 0-based indices.
struct ScenarioConfig {
  int dim = 1;
  int n = 64;
  int modes = 1;
  Matrix coupling;                           // (modes, modes)
  std::vector<std::string> potential_spec;   // per mode, textual form

  bool has_alpha = false;
  double alpha = 0.0;
  std::vector<double> epsilon_list = {0.1, 0.05, 0.025};

  Vector pin_y;  // size dim
  Vector pin_b;  // size modes

  double dt = 0.005;
  double dt_curve = 0.01;
  long samples = 10000;
  std::uint64_t seed = 0;

  int velocity_points = 0;  // 0: derived from the speed bound and grid step
  double velocity_max = 0;  // 0: derived from the speed bound

  double tol_solve = 1e-9;
  double tol_alpha = 0.01;
  double tol_admissible = 1e-6;

  std::string rule_spec = "deterministic t=1";
  std::string policy_spec = "constant q=0";
  std::string out_dir = "out";
};

struct ConfigError : std::runtime_error {
  int line;
  ConfigError(int line_, const std::string& msg)
      : std::runtime_error(msg), line(line_) {}
};

ScenarioConfig parse_config(std::istream& is);
ScenarioConfig parse_config_file(const std::string& path);

// Canonical echo: every key, fixed order, shortest round-trip numbers. A
// report written from this text reproduces the run byte for byte.
std::string write_config(const ScenarioConfig& cfg);

Potential parse_potential(const std::string& spec, int dim);
StoppingRule parse_rule(const std::string& spec, int modes);
ControlPolicy parse_policy(const std::string& spec, int dim);

// Assembled scenario objects shared by the CLI subcommands.
struct Scenario {
  ScenarioConfig config;
  TorusGrid grid;
  CouplingMatrix coupling;
  HamiltonianSpec hamiltonians;
  LagrangianTable table;
  SpeedBound bound;
  long pin_node = -1;

  Scenario(const ScenarioConfig& cfg);
};

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace wchj
