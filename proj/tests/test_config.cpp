#include "wchj/config.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace wchj;

namespace {

const char* kTwoModeText = R"(# two switching modes
grid.dim = 1
grid.n = 64
modes = 2
coupling.row.1 = 1 -1
coupling.row.2 = -1 1
potential.1 = cosine amplitude=1 frequency=1 phase=0
potential.2 = cosine amplitude=1 frequency=1 phase=-1.8849555921538759
alpha = 1.2
epsilon.list = 0.1 0.05
pin.y = 0
pin.b = 0 0
dt = 0.01
dt.curve = 0.005
samples = 5000
seed = 99
rule = hit modes=2 cap=2 floor=0.2
policy = constant q=0.4
out = out-test
)";

}  // namespace

TEST_SUITE_BEGIN("config");

TEST_CASE("config parses and echoes canonically") {
  std::istringstream ss(kTwoModeText);
  ScenarioConfig cfg = parse_config(ss);
  CHECK(cfg.modes == 2);
  CHECK(cfg.n == 64);
  CHECK(cfg.coupling(0, 1) == -1.0);
  CHECK(cfg.has_alpha);
  CHECK(cfg.alpha == 1.2);
  CHECK(cfg.seed == 99);
  CHECK(cfg.rule_spec == "hit modes=2 cap=2 floor=0.2");

  std::string echoed = write_config(cfg);
  std::istringstream ss2(echoed);
  ScenarioConfig cfg2 = parse_config(ss2);
  CHECK(write_config(cfg2) == echoed);  // canonical form is a fixed point
}

TEST_CASE("validation errors carry useful messages") {
  auto expect_error = [](const std::string& text, const std::string& needle) {
    std::istringstream ss(text);
    try {
      parse_config(ss);
      FAIL_CHECK("expected a config error containing '" << needle << "'");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  expect_error("modes = 2\nseed = 1\ncoupling.row.1 = 1 -1\n"
               "potential.1 = constant c=0\npotential.2 = constant c=0\n",
               "coupling row count != modes");
  expect_error("modes = 2\nseed = 1\ncoupling.row.1 = 1 -1\ncoupling.row.2 = -1\n"
               "potential.1 = constant c=0\npotential.2 = constant c=0\n",
               "coupling row length != modes");
  expect_error("modes = 1\ncoupling.row.1 = 0\npotential.1 = constant c=0\n", "seed");
  expect_error("modes = 1\nseed = 1\ncoupling.row.1 = 0\npotential.1 = constant c=0\nbogus = 3\n",
               "unknown key");
}

TEST_CASE("potential forms evaluate as written") {
  Potential c = parse_potential("constant c=0.7", 1);
  CHECK(c(Vector::Constant(1, 0.3)) == 0.7);

  Potential cos1 = parse_potential("cosine amplitude=2 frequency=1 phase=0.5", 1);
  CHECK(cos1(Vector::Zero(1)) == doctest::Approx(2.0 * std::cos(0.5)));

  Potential sum = parse_potential("sum-of-cosines 1 1 0; 0.5 2 1.5707963267948966", 1);
  double x = 0.2;
  double expect = std::cos(2.0 * std::numbers::pi * x) +
                  0.5 * std::cos(4.0 * std::numbers::pi * x + 0.5 * std::numbers::pi);
  CHECK(sum(Vector::Constant(1, x)) == doctest::Approx(expect).epsilon(1e-14));

  Potential two = parse_potential("cosine amplitude=1 frequency=1,0 phase=0", 2);
  Vector xy(2);
  xy << 0.25, 0.9;
  CHECK(two(xy) == doctest::Approx(std::cos(0.5 * std::numbers::pi)).epsilon(1e-14));

  CHECK_THROWS_AS(parse_potential("wavelet a=1", 1), std::invalid_argument);
}

TEST_CASE("rule and policy forms build the right kinds") {
  StoppingRule det = parse_rule("deterministic t=1.5", 2);
  CHECK(det.cap() == 1.5);

  StoppingRule hit = parse_rule("hit modes=1,2 cap=3 floor=0.5", 2);
  IndexPath at_start(0, {}, 5.0);
  CHECK(hit.evaluate(at_start) == 0.5);  // hits immediately, lifted by the floor

  StoppingRule jump = parse_rule("jump n=1 cap=4", 2);
  CHECK(jump.evaluate(IndexPath(0, {Jump{0.7, 1}}, 5.0)) == 0.7);

  StoppingRule grid = parse_rule("grid-hit modes=2 step=0.5 levels=4", 2);
  CHECK(grid.cap() == 2.0);

  StoppingRule dy = parse_rule("dyadic level=2 of=deterministic t=0.3", 2);
  CHECK(dy.evaluate(at_start) == 0.5);  // next quarter-integer above 0.3

  CHECK_THROWS_AS(parse_rule("hit modes=3 cap=1", 2), std::invalid_argument);

  ControlPolicy constant = parse_policy("constant q=0.25", 1);
  CHECK(constant.velocity(0.0, at_start, Vector::Zero(1))[0] == 0.25);

  ControlPolicy open = parse_policy("open-loop 0:0.5; 0.4:-0.25", 1);
  CHECK(open.velocity(0.1, at_start, Vector::Zero(1))[0] == 0.5);
  CHECK(open.velocity(0.5, at_start, Vector::Zero(1))[0] == -0.25);
}

TEST_CASE("scenario assembly derives a covering velocity box") {
  std::istringstream ss(kTwoModeText);
  ScenarioConfig cfg = parse_config(ss);
  Scenario sc(cfg);
  CHECK(sc.grid.n == 64);
  CHECK(sc.pin_node == 0);
  CHECK(sc.table.modes() == 2);
  CHECK(sc.table.points_per_axis() % 2 == 1);
  // box covers the subsolution speeds at the configured level with slack
  CHECK(sc.table.q_max() >= sc.bound.ell_alpha);
  CHECK(sc.bound.ell_alpha > 2.0);
}

TEST_SUITE_END();
