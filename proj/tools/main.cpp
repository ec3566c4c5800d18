#include "wchj/action.hpp"
#include "wchj/config.hpp"
#include "wchj/coupling.hpp"
#include "wchj/paths.hpp"
#include "wchj/solver.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliOptions {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool has_seed = false;
  int threads = 1;
  double alpha = 0;
  bool has_alpha = false;
  std::string pin_y;
  long samples = 0;
  bool has_samples = false;
  bool dump_paths = false;
  std::string field_path;
  double gamma_hat = 0;
  bool has_gamma_hat = false;
};

void add_common(CLI::App* cmd, CliOptions& o) {
  cmd->add_option("--config", o.config_path, "scenario config file");
  cmd->add_option("--out", o.out_dir, "output directory (overrides config)");
  cmd->add_option("--seed", o.seed, "RNG seed (overrides config)")->each([&](const std::string&) {
    o.has_seed = true;
  });
  cmd->add_option("--threads", o.threads, "worker threads (must not change results)");
  cmd->add_option("--alpha", o.alpha, "level override")->each([&](const std::string&) {
    o.has_alpha = true;
  });
  cmd->add_option("--pin-y", o.pin_y, "pin point override, comma separated");
  cmd->add_option("--samples", o.samples, "sample count override")->each([&](const std::string&) {
    o.has_samples = true;
  });
  cmd->add_flag("--dump-paths", o.dump_paths, "write sampled paths and curves");
}

wchj::ScenarioConfig load_config(const CliOptions& o, const std::string& fallback) {
  wchj::ScenarioConfig cfg;
  if (!o.config_path.empty()) {
    cfg = wchj::parse_config_file(o.config_path);
  } else if (!fallback.empty()) {
    std::istringstream ss(fallback);
    cfg = wchj::parse_config(ss);
  } else {
    throw wchj::ConfigError(0, "--config is required");
  }
  if (o.has_seed) cfg.seed = o.seed;
  if (o.has_alpha) {
    cfg.alpha = o.alpha;
    cfg.has_alpha = true;
  }
  if (o.has_samples) cfg.samples = o.samples;
  if (!o.pin_y.empty()) {
    std::istringstream ss(o.pin_y);
    std::string piece;
    std::vector<double> vals;
    while (std::getline(ss, piece, ',')) vals.push_back(std::stod(piece));
    if (static_cast<int>(vals.size()) != cfg.dim)
      throw wchj::ConfigError(0, "--pin-y needs one coordinate per axis");
    for (int a = 0; a < cfg.dim; ++a) cfg.pin_y[a] = vals[a];
  }
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  return cfg;
}

json config_json(const wchj::ScenarioConfig& cfg) {
  json j = json::object();
  std::istringstream ss(wchj::write_config(cfg));
  std::string line;
  while (std::getline(ss, line)) {
    auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

void write_report(const wchj::ScenarioConfig& cfg, const std::string& subcommand,
                  const json& results) {
  fs::create_directories(cfg.out_dir);
  json report;
  report["subcommand"] = subcommand;
  report["config"] = config_json(cfg);
  report["results"] = results;
  std::ofstream rf(fs::path(cfg.out_dir) / "report.json", std::ios::binary);
  rf << report.dump(2) << "\n";
  std::ofstream cf(fs::path(cfg.out_dir) / "resolved.cfg", std::ios::binary);
  cf << wchj::write_config(cfg);
}

void write_field_csv(const fs::path& path, const wchj::VectorField& f) {
  std::ofstream os(path, std::ios::binary);
  os << (f.grid.dim == 1 ? "x,mode,value\n" : "x,y,mode,value\n");
  for (long node = 0; node < f.grid.num_nodes(); ++node) {
    wchj::Vector x = f.grid.point(node);
    for (int i = 0; i < f.modes(); ++i) {
      os << wchj::format_double(x[0]);
      if (f.grid.dim == 2) os << "," << wchj::format_double(x[1]);
      os << "," << (i + 1) << "," << wchj::format_double(f.values(node, i)) << "\n";
    }
  }
}

// gnuplot-ready columns: x [y], then one column per mode
void write_field_dat(const fs::path& path, const wchj::VectorField& f) {
  std::ofstream os(path, std::ios::binary);
  os << "# x";
  if (f.grid.dim == 2) os << " y";
  for (int i = 0; i < f.modes(); ++i) os << " v_" << (i + 1);
  os << "\n";
  for (long node = 0; node < f.grid.num_nodes(); ++node) {
    wchj::Vector x = f.grid.point(node);
    os << wchj::format_double(x[0]);
    if (f.grid.dim == 2) os << " " << wchj::format_double(x[1]);
    for (int i = 0; i < f.modes(); ++i) os << " " << wchj::format_double(f.values(node, i));
    os << "\n";
  }
}

wchj::VectorField read_field_csv(const fs::path& path, const wchj::TorusGrid& grid, int modes) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open field file " + path.string());
  wchj::VectorField f(grid, modes);
  std::string line;
  std::getline(is, line);  // header
  long rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string piece;
    std::vector<std::string> cols;
    while (std::getline(ss, piece, ',')) cols.push_back(piece);
    if (static_cast<int>(cols.size()) != grid.dim + 2)
      throw std::runtime_error("bad field row: " + line);
    double x[2] = {std::stod(cols[0]), grid.dim == 2 ? std::stod(cols[1]) : 0.0};
    int mode = std::stoi(cols[grid.dim]) - 1;
    double value = std::stod(cols[grid.dim + 1]);
    if (mode < 0 || mode >= modes) throw std::runtime_error("bad mode in field row: " + line);
    f.values(grid.nearest_node(x), mode) = value;
    ++rows;
  }
  if (rows != grid.num_nodes() * modes)
    throw std::runtime_error("field file does not cover the grid");
  return f;
}

json solve_json(const wchj::SolveReport& rep) {
  json j;
  j["iterations"] = rep.iterations;
  j["final_change"] = rep.final_change;
  j["alpha"] = rep.alpha;
  j["converged"] = rep.converged;
  j["diverged"] = rep.diverged;
  j["note"] = rep.note;
  j["pin_node"] = rep.pin_node;
  j["fixed_point_residual"] = rep.fixed_point_residual;
  j["init_level"] = rep.init_level;
  j["pin_b"] = std::vector<double>(rep.pin_b.data(), rep.pin_b.data() + rep.pin_b.size());
  j["pin_value"] =
      std::vector<double>(rep.pin_value.data(), rep.pin_value.data() + rep.pin_value.size());
  return j;
}

json gamma_json(const wchj::GammaReport& rep) {
  json j;
  j["gamma"] = rep.gamma;
  j["gamma_discounted"] = rep.gamma_discounted;
  j["gamma_bisection"] = rep.gamma_bisection;
  j["bisection_lo"] = rep.bisection_lo;
  j["bisection_hi"] = rep.bisection_hi;
  j["allowance"] = rep.allowance;
  j["estimators_agree"] = rep.estimators_agree;
  json pe = json::array();
  for (auto& [e, g] : rep.per_epsilon) pe.push_back({{"epsilon", e}, {"gamma_epsilon", g}});
  j["per_epsilon"] = pe;
  return j;
}

json action_json(const wchj::ActionEstimate& est) {
  json j;
  j["mean"] = est.mean;
  j["stderr"] = est.std_error;
  j["samples"] = est.samples;
  j["alpha"] = est.alpha;
  j["mean_tau"] = est.mean_tau;
  json br = json::array();
  for (const auto& s : est.breakdown) {
    br.push_back({{"mode", s.mode + 1},
                  {"weight", s.weight},
                  {"mean", s.mean},
                  {"stderr", s.std_error},
                  {"mean_tau", s.mean_tau},
                  {"samples", s.samples}});
  }
  j["breakdown"] = br;
  return j;
}

void dump_action_paths(const wchj::Scenario& sc, const wchj::ControlPolicy& policy,
                       const wchj::StoppingRule& rule) {
  const auto& cfg = sc.config;
  long count = std::min<long>(cfg.samples, 100);
  std::vector<wchj::IndexPath> paths;
  std::ofstream curves(fs::path(cfg.out_dir) / "curves.txt", std::ios::binary);
  wchj::Vector a = wchj::Vector::Zero(cfg.modes);
  a[0] = 1.0;
  double horizon = rule.cap() + 1.0;
  for (long k = 0; k < count; ++k) {
    wchj::RngStream rng(cfg.seed, k);
    wchj::IndexPath omega = wchj::sample_index_path(sc.coupling, a, horizon, rng);
    double tau = rule.evaluate(omega);
    wchj::RealizedControl rc = wchj::realize_control(policy, omega, tau, cfg.dt_curve);
    wchj::write_curve(curves, rc.curve, cfg.modes, cfg.dim);
    paths.push_back(std::move(omega));
  }
  std::ofstream pf(fs::path(cfg.out_dir) / "paths.txt", std::ios::binary);
  wchj::write_paths(pf, paths, cfg.modes, cfg.dim);
}

int run_solve(const wchj::ScenarioConfig& cfg, const CliOptions& o) {
  wchj::Scenario sc(cfg);
  if (!cfg.has_alpha) throw wchj::ConfigError(0, "solve needs alpha (config or --alpha)");
  wchj::SolveOptions opts;
  opts.threads = o.threads;
  opts.tol = cfg.tol_solve;
  wchj::PinnedSolution sol =
      wchj::pinned_value(sc.table, sc.coupling, sc.pin_node, cfg.pin_b, cfg.alpha, cfg.dt, opts);
  fs::create_directories(cfg.out_dir);
  write_field_csv(fs::path(cfg.out_dir) / "field.csv", sol.v);
  write_field_dat(fs::path(cfg.out_dir) / "field.dat", sol.v);
  json results = solve_json(sol.report);
  if (!sol.report.diverged) {
    double tol =
        wchj::default_verify_tolerance(sc.hamiltonians, sc.coupling, cfg.alpha, sc.grid.h(), cfg.dt);
    wchj::VerifyReport vr =
        wchj::subsolution_verify(sol.v, sc.hamiltonians, sc.coupling, cfg.alpha, tol);
    results["verify"] = {{"max_residual", vr.residual.extreme},
                         {"tol", vr.tol},
                         {"pass", vr.pass}};
  }
  write_report(cfg, "solve", results);
  return sol.report.converged || sol.report.diverged ? 0 : 1;
}

int run_gamma(const wchj::ScenarioConfig& cfg, const CliOptions& o) {
  wchj::Scenario sc(cfg);
  wchj::GammaReport rep =
      wchj::critical_value(sc.table, sc.coupling, cfg.dt, cfg.epsilon_list, cfg.tol_alpha, o.threads);
  write_report(cfg, "gamma", gamma_json(rep));
  return 0;
}

int run_verify(const wchj::ScenarioConfig& cfg, const CliOptions& o) {
  wchj::Scenario sc(cfg);
  if (!cfg.has_alpha) throw wchj::ConfigError(0, "verify needs alpha (config or --alpha)");
  wchj::VectorField field;
  if (!o.field_path.empty()) {
    field = read_field_csv(o.field_path, sc.grid, cfg.modes);
  } else {
    wchj::SolveOptions opts;
    opts.threads = o.threads;
    opts.tol = cfg.tol_solve;
    field =
        wchj::pinned_value(sc.table, sc.coupling, sc.pin_node, cfg.pin_b, cfg.alpha, cfg.dt, opts)
            .v;
  }
  double tol =
      wchj::default_verify_tolerance(sc.hamiltonians, sc.coupling, cfg.alpha, sc.grid.h(), cfg.dt);
  wchj::VerifyReport vr = wchj::subsolution_verify(field, sc.hamiltonians, sc.coupling, cfg.alpha, tol);
  fs::create_directories(cfg.out_dir);
  wchj::VectorField residual_field;
  residual_field.grid = sc.grid;
  residual_field.values = vr.residual.values;
  write_field_csv(fs::path(cfg.out_dir) / "residual.csv", residual_field);
  json results;
  results["max_residual"] = vr.residual.extreme;
  results["arg_node"] = vr.residual.arg_node;
  results["arg_mode"] = vr.residual.arg_mode + 1;
  results["tol"] = vr.tol;
  results["pass"] = vr.pass;
  write_report(cfg, "verify", results);
  return vr.pass ? 0 : 1;
}

int run_admissible(const wchj::ScenarioConfig& cfg, const CliOptions& o) {
  wchj::Scenario sc(cfg);
  if (!cfg.has_alpha) throw wchj::ConfigError(0, "admissible needs alpha (config or --alpha)");
  wchj::AdmissibleReport rep = wchj::admissible_check(
      sc.table, sc.coupling, sc.pin_node, cfg.pin_b, cfg.alpha, cfg.dt, cfg.tol_admissible,
      /*battery_draws=*/12, std::max<long>(cfg.samples / 100, 200), cfg.dt_curve, cfg.seed,
      o.threads);
  json results;
  results["admissible"] = rep.admissible;
  results["max_deviation"] = rep.max_deviation;
  results["tol"] = rep.tol;
  results["solve_diverged"] = rep.solve_diverged;
  if (rep.pin_value.size())
    results["pin_value"] =
        std::vector<double>(rep.pin_value.data(), rep.pin_value.data() + rep.pin_value.size());
  results["cycle_min_margin"] = rep.cycle_min_margin;
  results["cycle_margin_stderr"] = rep.cycle_margin_std_error;
  results["battery_draws"] = rep.battery_draws;
  write_report(cfg, "admissible", results);
  return 0;
}

int run_aubry(const wchj::ScenarioConfig& cfg, const CliOptions& o) {
  wchj::Scenario sc(cfg);
  double gamma_hat;
  if (o.has_gamma_hat) {
    gamma_hat = o.gamma_hat;
  } else {
    gamma_hat = wchj::critical_value(sc.table, sc.coupling, cfg.dt, cfg.epsilon_list,
                                     cfg.tol_alpha, o.threads)
                    .bisection_hi;
  }
  double tol = std::max(
      0.1, wchj::default_verify_tolerance(sc.hamiltonians, sc.coupling, gamma_hat, sc.grid.h(),
                                          cfg.dt));
  wchj::AubryReport rep =
      wchj::aubry_indicator(sc.table, sc.hamiltonians, sc.coupling, sc.pin_node, gamma_hat, cfg.dt,
                            tol, cfg.tol_alpha, cfg.seed, o.threads);
  json results;
  results["in_aubry"] = rep.in_aubry;
  results["alpha_used"] = rep.alpha_used;
  results["gamma_hat"] = gamma_hat;
  results["max_sub_residual"] = rep.max_sub_residual;
  results["min_super_residual"] = rep.min_super_residual;
  results["tol"] = rep.tol;
  results["witness_node"] = rep.witness_node;
  results["witness_mode"] = rep.witness_mode + 1;
  results["witness_value"] = rep.witness_value;
  results["probe_in"] = rep.probe_in;
  write_report(cfg, "aubry", results);
  return 0;
}

int run_action(const wchj::ScenarioConfig& cfg, const CliOptions& o) {
  wchj::Scenario sc(cfg);
  double alpha = cfg.has_alpha ? cfg.alpha : 0.0;
  wchj::StoppingRule rule = wchj::parse_rule(cfg.rule_spec, cfg.modes);
  wchj::ControlPolicy policy = wchj::parse_policy(cfg.policy_spec, cfg.dim);
  wchj::Vector a = wchj::Vector::Zero(cfg.modes);
  a[0] = 1.0;
  wchj::ActionEstimate est =
      wchj::action_mc(sc.table, sc.coupling, cfg.pin_y, policy, rule, a, alpha, cfg.samples,
                      cfg.seed, cfg.dt_curve, o.threads);
  fs::create_directories(cfg.out_dir);
  {
    std::ofstream os(fs::path(cfg.out_dir) / "action.dat", std::ios::binary);
    os << "# alpha mean stderr\n";
    os << wchj::format_double(est.alpha) << " " << wchj::format_double(est.mean) << " "
       << wchj::format_double(est.std_error) << "\n";
  }
  if (o.dump_paths) dump_action_paths(sc, policy, rule);
  write_report(cfg, "action", action_json(est));
  return 0;
}

int run_sample(const wchj::ScenarioConfig& cfg, const CliOptions&) {
  wchj::Scenario sc(cfg);
  wchj::Vector a = wchj::Vector::Zero(cfg.modes);
  a[0] = 1.0;
  double horizon = wchj::parse_rule(cfg.rule_spec, cfg.modes).cap() + 1.0;
  long count = std::min<long>(cfg.samples, 1000);
  std::vector<wchj::IndexPath> paths;
  double jump_sum = 0;
  for (long k = 0; k < count; ++k) {
    wchj::RngStream rng(cfg.seed, k);
    paths.push_back(wchj::sample_index_path(sc.coupling, a, horizon, rng));
    jump_sum += static_cast<double>(paths.back().jumps().size());
  }
  fs::create_directories(cfg.out_dir);
  std::ofstream pf(fs::path(cfg.out_dir) / "paths.txt", std::ios::binary);
  wchj::write_paths(pf, paths, cfg.modes, cfg.dim);
  json results;
  results["paths_written"] = count;
  results["horizon"] = horizon;
  results["mean_jumps"] = jump_sum / static_cast<double>(count);
  write_report(cfg, "sample", results);
  return 0;
}

const char* kSelftestConfig = R"(grid.dim = 1
grid.n = 100
modes = 1
coupling.row.1 = 0
potential.1 = cosine amplitude=1 frequency=1 phase=0
alpha = 1
epsilon.list = 0.1 0.05
pin.y = 0
pin.b = 0
dt = 0.01
dt.curve = 0.002
samples = 20000
seed = 7042
tol.alpha = 0.02
out = selftest-out
)";

int run_selftest(const wchj::ScenarioConfig& cfg, const CliOptions& o) {
  wchj::Scenario sc(cfg);
  json results;
  bool ok = true;

  // semigroup spot checks
  {
    double worst = 0;
    for (int trial = 0; trial < 20; ++trial) {
      wchj::RngStream rng(cfg.seed, 900 + trial);
      int m = 1 + static_cast<int>(rng.next_u64() % 4);
      wchj::Matrix lam = wchj::Matrix::Zero(m, m);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
          if (i != j) lam(i, j) = -3.0 * rng.uniform();
      for (int i = 0; i < m; ++i) {
        lam(i, i) = 0;
        lam(i, i) = -lam.row(i).sum();
      }
      wchj::CouplingMatrix cm(lam);
      double t = 5.0 * rng.uniform();
      wchj::Matrix e = wchj::semigroup(cm, t);
      worst = std::max(worst, std::abs(e.rowwise().sum().maxCoeff() - 1.0));
      worst = std::max(worst, std::max(0.0, -e.minCoeff()));
      wchj::Matrix prod = wchj::semigroup(cm, 0.6 * t) * wchj::semigroup(cm, 0.4 * t);
      worst = std::max(worst, (prod - e).cwiseAbs().maxCoeff());
    }
    results["semigroup_worst"] = worst;
    ok = ok && worst < 1e-9;
  }

  // critical value of the scalar cosine is its potential maximum
  {
    wchj::GammaReport g =
        wchj::critical_value(sc.table, sc.coupling, cfg.dt, cfg.epsilon_list, cfg.tol_alpha,
                             o.threads);
    results["gamma"] = gamma_json(g);
    ok = ok && std::abs(g.gamma_bisection - 1.0) < 0.15 &&
         std::abs(g.gamma_discounted - 1.0) < 0.15;
  }

  // pinned value against the closed form
  {
    wchj::SolveOptions opts;
    opts.threads = o.threads;
    wchj::PinnedSolution sol =
        wchj::pinned_value(sc.table, sc.coupling, sc.pin_node, cfg.pin_b, 1.0, cfg.dt, opts);
    double worst = 0;
    for (long node = 0; node < sc.grid.num_nodes(); ++node) {
      double x = sc.grid.point(node)[0];
      double dist = std::min(x, 1.0 - x);
      double exact = (2.0 / std::numbers::pi) * (1.0 - std::cos(std::numbers::pi * dist));
      worst = std::max(worst, std::abs(sol.v.values(node, 0) - exact));
    }
    results["pinned_error"] = worst;
    results["pinned_iterations"] = sol.report.iterations;
    ok = ok && sol.report.converged && worst < 0.08;
  }

  // Monte Carlo action against the exact cylinder expansion
  {
    wchj::SimpleRuleSpec rule;
    rule.times = {0.35, 0.7};
    rule.stop_sets = {{false}, {true}};
    wchj::StagedControlSpec control;
    control.times = rule.times;
    control.velocity = {wchj::Matrix::Constant(1, 1, 0.5), wchj::Matrix::Constant(1, 1, -0.25)};
    wchj::Vector a = wchj::Vector::Ones(1);
    wchj::Vector x0 = wchj::Vector::Constant(1, 0.2);
    wchj::ExactAction exact =
        wchj::action_exact_simple(sc.table, sc.coupling, x0, control, rule, a, 1.0);
    wchj::ActionEstimate mc =
        wchj::action_mc(sc.table, sc.coupling, x0, control.policy(), rule.rule(), a, 1.0,
                        cfg.samples, cfg.seed, cfg.dt_curve, o.threads);
    double diff = std::abs(mc.mean - exact.value);
    results["action_exact"] = exact.value;
    results["action_mc"] = mc.mean;
    results["action_diff"] = diff;
    results["action_stderr"] = mc.std_error;
    ok = ok && diff <= 3.0 * mc.std_error + 0.01;
  }

  results["pass"] = ok;
  write_report(cfg, "selftest", results);
  std::cout << (ok ? "selftest: pass" : "selftest: FAIL") << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weakly coupled Hamilton-Jacobi systems: random switching, action functionals, "
               "and pinned subsolution solves on the torus"};
  app.require_subcommand(1);

  CliOptions o;
  auto* solve = app.add_subcommand("solve", "pinned value function at a fixed level");
  auto* gamma = app.add_subcommand("gamma", "critical value, two estimators");
  auto* verify = app.add_subcommand("verify", "subsolution residuals of a field");
  auto* admissible = app.add_subcommand("admissible", "is the pin vector attainable");
  auto* aubry = app.add_subcommand("aubry", "Aubry-set indicator at the pin");
  auto* action = app.add_subcommand("action", "Monte Carlo action functional");
  auto* sample = app.add_subcommand("sample", "dump switching paths");
  auto* selftest = app.add_subcommand("selftest", "built-in scalar-cosine checks");
  for (auto* cmd : {solve, gamma, verify, admissible, aubry, action, sample, selftest})
    add_common(cmd, o);
  verify->add_option("--field", o.field_path, "field CSV to verify (defaults to a fresh solve)");
  aubry->add_option("--gamma-hat", o.gamma_hat, "use this critical value estimate")
      ->each([&](const std::string&) { o.has_gamma_hat = true; });

  CLI11_PARSE(app, argc, argv);

  try {
    if (selftest->parsed()) return run_selftest(load_config(o, kSelftestConfig), o);
    wchj::ScenarioConfig cfg = load_config(o, "");
    if (solve->parsed()) return run_solve(cfg, o);
    if (gamma->parsed()) return run_gamma(cfg, o);
    if (verify->parsed()) return run_verify(cfg, o);
    if (admissible->parsed()) return run_admissible(cfg, o);
    if (aubry->parsed()) return run_aubry(cfg, o);
    if (action->parsed()) return run_action(cfg, o);
    if (sample->parsed()) return run_sample(cfg, o);
  } catch (const wchj::ConfigError& e) {
    std::cerr << "config";
    if (e.line > 0) std::cerr << ":" << e.line;
    std::cerr << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
