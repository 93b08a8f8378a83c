#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "snell/config.hpp"
#include "snell/errors.hpp"

using namespace snell;

TEST_CASE("ini parsing: sections, comments, quoting") {
    auto cfg = RunConfig::parse(
        "# comment\n"
        "[problem]\n"
        "preset = gbm\n"
        "g = \"max(100 - x, 0)\"   # payoff\n"
        "T = 1.5\n"
        "d = 1\n"
        "[mc]\n"
        "n_paths = 5000 ; trailing\n"
        "out_of_sample = true\n");
    CHECK(cfg.get_string("problem", "preset", "") == "gbm");
    CHECK(cfg.get_string("problem", "g", "") == "max(100 - x, 0)");
    CHECK(cfg.get_double("problem", "T", 0.0) == doctest::Approx(1.5));
    CHECK(cfg.get_int("mc", "n_paths", 0) == 5000);
    CHECK(cfg.get_bool("mc", "out_of_sample", false));
    CHECK(cfg.get_int("mc", "missing", 42) == 42);
}

TEST_CASE("parse errors carry line context") {
    CHECK_THROWS_AS(RunConfig::parse("[bad\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("[s]\nno_equals_here\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("orphan = 1\n"), ConfigError);
    auto cfg = RunConfig::parse("[s]\nk = abc\n");
    CHECK_THROWS_AS(cfg.get_double("s", "k", 0.0), ConfigError);
    CHECK_THROWS_AS(cfg.get_int("s", "k", 0), ConfigError);
    CHECK_THROWS_AS(cfg.get_bool("s", "k", false), ConfigError);
}

TEST_CASE("overrides replace file values") {
    auto cfg = RunConfig::parse("[solver]\nn_space = 100\n");
    cfg.set("solver.n_space", "250");
    cfg.set("output.dir", "elsewhere");
    CHECK(cfg.get_int("solver", "n_space", 0) == 250);
    CHECK(cfg.get_string("output", "dir", "") == "elsewhere");
    CHECK_THROWS_AS(cfg.set("no_dot", "1"), ConfigError);
}

TEST_CASE("problem building from presets") {
    auto cfg = RunConfig::parse(
        "[problem]\n"
        "preset = gbm\n"
        "mu = -0.06\n"
        "nu = 0.2\n"
        "T = 1\n"
        "x0 = 100\n"
        "g = \"max(100 - x, 0)\"\n");
    auto [p, x0] = build_problem(cfg);
    CHECK(p.d == 1);
    CHECK(x0[0] == doctest::Approx(100.0));
    std::vector<double> x{50.0};
    CHECK(p.drift(0.0, x)[0] == doctest::Approx(-3.0));
    CHECK(p.diffusion(0.0, x)[0] == doctest::Approx(10.0));
    CHECK(p.terminal_gain(x) == doctest::Approx(50.0));
}

TEST_CASE("custom problems require their expressions") {
    auto cfg = RunConfig::parse(
        "[problem]\n"
        "preset = custom\n"
        "d = 2\n"
        "m = 1\n"
        "g = \"x_1 + x_2\"\n"
        "b_1 = \"0\"\n"
        "b_2 = \"0\"\n"
        "sigma_1_1 = \"1\"\n");
    CHECK_THROWS_AS(build_problem(cfg), ConfigError);  // sigma_2_1 missing
    cfg.set("problem.sigma_2_1", "1");
    auto [p, x0] = build_problem(cfg);
    CHECK(p.d == 2);
    CHECK(p.m == 1);
    CHECK(x0.size() == 2);
}

TEST_CASE("grid building: explicit box and auto sizing") {
    auto cfg = RunConfig::parse(
        "[problem]\npreset = bachelier\nvol = 1\nmu = 0\nx0 = 0\ng = \"x^2\"\n"
        "[solver]\nn_space = 101\nn_time = 50\n");
    auto [p, x0] = build_problem(cfg);
    Grid g = build_grid(cfg, p, x0);
    CHECK(g.lo[0] == doctest::Approx(-6.0));  // six standard deviations
    CHECK(g.hi[0] == doctest::Approx(6.0));

    cfg.set("solver.box_lo", "-2");
    cfg.set("solver.box_hi", "3");
    Grid g2 = build_grid(cfg, p, x0);
    CHECK(g2.lo[0] == doctest::Approx(-2.0));
    CHECK(g2.hi[0] == doctest::Approx(3.0));
}

TEST_CASE("solver and lattice options") {
    auto cfg = RunConfig::parse(
        "[solver]\nscheme = policy-iteration\ntheta = 1\ntol = 1e-10\nrannacher = false\n"
        "lattice_scheme = trinomial\nlattice_steps = 123\nlattice_spacing = additive\n");
    auto opt = build_solve_options(cfg);
    CHECK(opt.scheme == PdeScheme::PolicyIteration);
    CHECK(opt.theta == doctest::Approx(1.0));
    CHECK(opt.tol == doctest::Approx(1e-10));
    CHECK(!opt.rannacher);
    auto lc = build_lattice_config(cfg);
    CHECK(lc.scheme == LatticeScheme::Trinomial);
    CHECK(lc.n_steps == 123);
    CHECK(lc.spacing == LatticeSpacing::Additive);

    cfg.set("solver.scheme", "bogus");
    CHECK_THROWS_AS(build_solve_options(cfg), ConfigError);
}
