#include "wchj/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace wchj {

std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::vector<double> parse_doubles(const std::string& s, int line) {
  std::istringstream ss(s);
  std::vector<double> out;
  double v;
  while (ss >> v) out.push_back(v);
  if (out.empty()) throw ConfigError(line, "expected numbers, got '" + s + "'");
  return out;
}

struct KeyValue {
  std::string value;
  int line;
  bool used = false;
};

// named arguments of the form "key=value key=value ..."
std::map<std::string, std::string> named_args(const std::string& s) {
  std::map<std::string, std::string> out;
  std::istringstream ss(s);
  std::string tok;
  while (ss >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    out[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return out;
}

double arg_double(const std::map<std::string, std::string>& args, const std::string& key,
                  bool required, double fallback) {
  auto it = args.find(key);
  if (it == args.end()) {
    if (required) throw std::invalid_argument("missing argument '" + key + "'");
    return fallback;
  }
  return std::stod(it->second);
}

std::vector<int> arg_modes(const std::map<std::string, std::string>& args, int modes) {
  auto it = args.find("modes");
  if (it == args.end()) throw std::invalid_argument("missing argument 'modes'");
  std::vector<int> out;
  for (const auto& piece : split(it->second, ',')) {
    int m = std::stoi(piece);
    if (m < 1 || m > modes) throw std::invalid_argument("mode index out of range: " + piece);
    out.push_back(m - 1);
  }
  return out;
}

}  // namespace

Potential parse_potential(const std::string& spec, int dim) {
  std::istringstream ss(spec);
  std::string kind;
  ss >> kind;
  std::string rest;
  std::getline(ss, rest);
  rest = trim(rest);
  if (kind == "constant") {
    auto args = named_args(rest);
    return Potential::constant(dim, arg_double(args, "c", true, 0));
  }
  if (kind == "cosine") {
    auto args = named_args(rest);
    double amp = arg_double(args, "amplitude", true, 0);
    double phase = arg_double(args, "phase", false, 0);
    auto fit = args.find("frequency");
    if (fit == args.end()) throw std::invalid_argument("cosine needs frequency=");
    Eigen::VectorXi f(dim);
    auto parts = split(fit->second, ',');
    if (static_cast<int>(parts.size()) != dim)
      throw std::invalid_argument("cosine frequency needs one integer per axis");
    for (int a = 0; a < dim; ++a) f[a] = std::stoi(parts[a]);
    return Potential::cosine(dim, amp, f, phase);
  }
  if (kind == "sum-of-cosines") {
    std::vector<CosineTerm> terms;
    for (const auto& term : split(rest, ';')) {
      if (term.empty()) continue;
      std::vector<double> nums = parse_doubles(term, 0);
      if (static_cast<int>(nums.size()) != dim + 2)
        throw std::invalid_argument("sum-of-cosines term needs: amplitude f1 [f2] phase");
      CosineTerm t;
      t.amplitude = nums[0];
      t.frequency.resize(dim);
      for (int a = 0; a < dim; ++a) t.frequency[a] = static_cast<int>(std::lround(nums[1 + a]));
      t.phase = nums[dim + 1];
      terms.push_back(std::move(t));
    }
    return Potential(dim, 0.0, std::move(terms));
  }
  throw std::invalid_argument("unknown potential kind '" + kind + "'");
}

StoppingRule parse_rule(const std::string& spec, int modes) {
  std::istringstream ss(spec);
  std::string kind;
  ss >> kind;
  std::string rest;
  std::getline(ss, rest);
  rest = trim(rest);
  if (kind == "deterministic") {
    auto args = named_args(rest);
    return StoppingRule::deterministic(arg_double(args, "t", true, 0));
  }
  if (kind == "hit") {
    auto args = named_args(rest);
    return StoppingRule::hitting(arg_modes(args, modes), arg_double(args, "cap", true, 0),
                                 arg_double(args, "floor", false, 0));
  }
  if (kind == "jump") {
    auto args = named_args(rest);
    return StoppingRule::nth_jump(static_cast<int>(arg_double(args, "n", true, 0)),
                                  arg_double(args, "cap", true, 0),
                                  arg_double(args, "floor", false, 0));
  }
  if (kind == "grid-hit") {
    auto args = named_args(rest);
    return StoppingRule::grid_hitting(arg_modes(args, modes), modes,
                                      arg_double(args, "step", true, 0),
                                      static_cast<int>(arg_double(args, "levels", true, 0)));
  }
  if (kind == "dyadic") {
    auto level_pos = rest.find("level=");
    auto of_pos = rest.find("of=");
    if (level_pos == std::string::npos || of_pos == std::string::npos)
      throw std::invalid_argument("dyadic rule needs level= and of=");
    int level = std::stoi(rest.substr(level_pos + 6));
    return StoppingRule::dyadic(level, parse_rule(trim(rest.substr(of_pos + 3)), modes));
  }
  throw std::invalid_argument("unknown stopping rule '" + kind + "'");
}

ControlPolicy parse_policy(const std::string& spec, int dim) {
  std::istringstream ss(spec);
  std::string kind;
  ss >> kind;
  std::string rest;
  std::getline(ss, rest);
  rest = trim(rest);
  if (kind == "constant") {
    auto args = named_args(rest);
    auto it = args.find("q");
    if (it == args.end()) throw std::invalid_argument("constant policy needs q=");
    auto parts = split(it->second, ',');
    if (static_cast<int>(parts.size()) != dim)
      throw std::invalid_argument("constant policy needs one velocity component per axis");
    Vector q(dim);
    for (int a = 0; a < dim; ++a) q[a] = std::stod(parts[a]);
    return ControlPolicy::constant(q);
  }
  if (kind == "open-loop") {
    PiecewiseConstantControl xi;
    for (const auto& piece : split(rest, ';')) {
      if (piece.empty()) continue;
      auto colon = piece.find(':');
      if (colon == std::string::npos)
        throw std::invalid_argument("open-loop piece needs time:velocity");
      double t = std::stod(trim(piece.substr(0, colon)));
      auto comps = split(piece.substr(colon + 1), ',');
      if (static_cast<int>(comps.size()) != dim)
        throw std::invalid_argument("open-loop velocity needs one component per axis");
      Vector q(dim);
      for (int a = 0; a < dim; ++a) q[a] = std::stod(comps[a]);
      xi.knots.push_back(t);
      xi.values.push_back(q);
    }
    return ControlPolicy::open_loop(std::move(xi));
  }
  throw std::invalid_argument("unknown policy kind '" + kind + "'");
}

ScenarioConfig parse_config(std::istream& is) {
  std::map<std::string, KeyValue> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(lineno, "expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(lineno, "empty key");
    if (kv.count(key)) throw ConfigError(lineno, "duplicate key '" + key + "'");
    kv[key] = KeyValue{value, lineno};
  }

  auto take = [&](const std::string& key) -> KeyValue* {
    auto it = kv.find(key);
    if (it == kv.end()) return nullptr;
    it->second.used = true;
    return &it->second;
  };
  auto require = [&](const std::string& key) -> KeyValue& {
    KeyValue* v = take(key);
    if (!v) throw ConfigError(0, "missing required key '" + key + "'");
    return *v;
  };

  ScenarioConfig cfg;
  if (auto* v = take("grid.dim")) cfg.dim = std::stoi(v->value);
  if (auto* v = take("grid.n")) cfg.n = std::stoi(v->value);
  cfg.modes = std::stoi(require("modes").value);
  if (cfg.modes < 1) throw ConfigError(0, "modes must be >= 1");

  cfg.coupling = Matrix::Zero(cfg.modes, cfg.modes);
  int rows_seen = 0;
  for (int i = 0; i < cfg.modes; ++i) {
    KeyValue* v = take("coupling.row." + std::to_string(i + 1));
    if (!v) continue;
    auto nums = parse_doubles(v->value, v->line);
    if (static_cast<int>(nums.size()) != cfg.modes)
      throw ConfigError(v->line, "coupling row length != modes");
    for (int j = 0; j < cfg.modes; ++j) cfg.coupling(i, j) = nums[j];
    ++rows_seen;
  }
  if (rows_seen != cfg.modes) throw ConfigError(0, "coupling row count != modes");

  cfg.potential_spec.resize(cfg.modes);
  for (int i = 0; i < cfg.modes; ++i)
    cfg.potential_spec[i] = require("potential." + std::to_string(i + 1)).value;

  if (auto* v = take("alpha")) {
    cfg.alpha = std::stod(v->value);
    cfg.has_alpha = true;
  }
  if (auto* v = take("epsilon.list")) cfg.epsilon_list = parse_doubles(v->value, v->line);

  cfg.pin_y = Vector::Zero(cfg.dim);
  if (auto* v = take("pin.y")) {
    auto nums = parse_doubles(v->value, v->line);
    if (static_cast<int>(nums.size()) != cfg.dim)
      throw ConfigError(v->line, "pin.y needs one coordinate per axis");
    for (int a = 0; a < cfg.dim; ++a) cfg.pin_y[a] = nums[a];
  }
  cfg.pin_b = Vector::Zero(cfg.modes);
  if (auto* v = take("pin.b")) {
    auto nums = parse_doubles(v->value, v->line);
    if (static_cast<int>(nums.size()) != cfg.modes)
      throw ConfigError(v->line, "pin.b needs one value per mode");
    for (int i = 0; i < cfg.modes; ++i) cfg.pin_b[i] = nums[i];
  }

  if (auto* v = take("dt")) cfg.dt = std::stod(v->value);
  if (auto* v = take("dt.curve")) cfg.dt_curve = std::stod(v->value);
  if (auto* v = take("samples")) cfg.samples = std::stol(v->value);
  cfg.seed = std::stoull(require("seed").value);
  if (auto* v = take("velocity.points")) cfg.velocity_points = std::stoi(v->value);
  if (auto* v = take("velocity.max")) cfg.velocity_max = std::stod(v->value);
  if (auto* v = take("tol.solve")) cfg.tol_solve = std::stod(v->value);
  if (auto* v = take("tol.alpha")) cfg.tol_alpha = std::stod(v->value);
  if (auto* v = take("tol.admissible")) cfg.tol_admissible = std::stod(v->value);
  if (auto* v = take("rule")) cfg.rule_spec = v->value;
  if (auto* v = take("policy")) cfg.policy_spec = v->value;
  if (auto* v = take("out")) cfg.out_dir = v->value;

  for (const auto& [key, v] : kv)
    if (!v.used) throw ConfigError(v.line, "unknown key '" + key + "'");

  if (cfg.dt <= 0 || cfg.dt_curve <= 0 || cfg.tol_solve <= 0 || cfg.tol_alpha <= 0 ||
      cfg.tol_admissible <= 0)
    throw ConfigError(0, "steps and tolerances must be positive");
  if (cfg.samples < 1) throw ConfigError(0, "samples must be positive");
  return cfg;
}

ScenarioConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(0, "cannot open config file '" + path + "'");
  return parse_config(f);
}

std::string write_config(const ScenarioConfig& cfg) {
  std::ostringstream os;
  os << "grid.dim = " << cfg.dim << "\n";
  os << "grid.n = " << cfg.n << "\n";
  os << "modes = " << cfg.modes << "\n";
  for (int i = 0; i < cfg.modes; ++i) {
    os << "coupling.row." << (i + 1) << " =";
    for (int j = 0; j < cfg.modes; ++j) os << " " << format_double(cfg.coupling(i, j));
    os << "\n";
  }
  for (int i = 0; i < cfg.modes; ++i)
    os << "potential." << (i + 1) << " = " << cfg.potential_spec[i] << "\n";
  if (cfg.has_alpha) os << "alpha = " << format_double(cfg.alpha) << "\n";
  os << "epsilon.list =";
  for (double e : cfg.epsilon_list) os << " " << format_double(e);
  os << "\n";
  os << "pin.y =";
  for (int a = 0; a < cfg.dim; ++a) os << " " << format_double(cfg.pin_y[a]);
  os << "\n";
  os << "pin.b =";
  for (int i = 0; i < cfg.modes; ++i) os << " " << format_double(cfg.pin_b[i]);
  os << "\n";
  os << "dt = " << format_double(cfg.dt) << "\n";
  os << "dt.curve = " << format_double(cfg.dt_curve) << "\n";
  os << "samples = " << cfg.samples << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "velocity.points = " << cfg.velocity_points << "\n";
  os << "velocity.max = " << format_double(cfg.velocity_max) << "\n";
  os << "tol.solve = " << format_double(cfg.tol_solve) << "\n";
  os << "tol.alpha = " << format_double(cfg.tol_alpha) << "\n";
  os << "tol.admissible = " << format_double(cfg.tol_admissible) << "\n";
  os << "rule = " << cfg.rule_spec << "\n";
  os << "policy = " << cfg.policy_spec << "\n";
  os << "out = " << cfg.out_dir << "\n";
  return os.str();
}

namespace {

HamiltonianSpec build_hamiltonians(const ScenarioConfig& cfg, const TorusGrid& grid) {
  std::vector<HamiltonianSpec::Mode> modes;
  for (int i = 0; i < cfg.modes; ++i)
    modes.push_back(QuadraticMode{parse_potential(cfg.potential_spec[i], cfg.dim)});
  return HamiltonianSpec(grid, std::move(modes));
}

}  // namespace

Scenario::Scenario(const ScenarioConfig& cfg)
    : config(cfg),
      grid(cfg.dim, cfg.n),
      coupling(cfg.coupling),
      hamiltonians(build_hamiltonians(cfg, grid)) {
  // The velocity box must cover the dynamics at the highest level the run can
  // touch; without an explicit alpha that is the top of the zero-momentum
  // Hamiltonian range (the critical value never exceeds it).
  double box_level = cfg.has_alpha ? cfg.alpha : -1e300;
  double top = -1e300;
  for (int i = 0; i < cfg.modes; ++i)
    top = std::max(top, hamiltonians.potential(i).grid_max());
  box_level = std::max(box_level, top) + 0.25;
  bound = resolved_speed_bound(hamiltonians, coupling, box_level);
  double qmax = cfg.velocity_max > 0 ? cfg.velocity_max : bound.q_max;
  int nq = cfg.velocity_points;
  if (nq <= 0) {
    double target = 5.0 * grid.h();  // velocity resolution tied to the spatial step
    nq = 2 * static_cast<int>(std::ceil(qmax / target)) + 1;
  }
  if (nq % 2 == 0) ++nq;
  nq = std::max(nq, 5);
  table = legendre_transform(hamiltonians, grid, qmax, nq);
  pin_node = grid.nearest_node(cfg.pin_y);
}

}  // namespace wchj
