#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "snell/errors.hpp"
#include "snell/montecarlo.hpp"

using namespace snell;

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// undiscounted Black-76 call: E[(X_T - K)^+] for lognormal X_T
double euro_call(double forward, double strike, double vol, double T) {
    double sd = vol * std::sqrt(T);
    double d1 = (std::log(forward / strike) + 0.5 * sd * sd) / sd;
    return forward * normal_cdf(d1) - strike * normal_cdf(d1 - sd);
}

}  // namespace

TEST_CASE("deterministic rate-only problem is priced exactly") {
    auto p = presets::custom(1, 1, 1.0, {"0"}, {"0"}, "1", "0", 2.0);
    std::vector<double> x0{5.0};
    auto bundle = simulate(p, 0.0, x0, 20, 64, 3);
    auto est = longstaff_schwartz(p, bundle, 2);
    CHECK(est.mean == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(est.std_error == 0.0);
}

TEST_CASE("convex payoff on a driftless exponential: early exercise is worthless") {
    auto p = presets::gbm(1, 1.0, 0.0, 0.2, "0", "max(x - 100, 0)", 2.0);
    std::vector<double> x0{100.0};
    auto bundle = simulate(p, 0.0, x0, 200, 20000, 71);
    auto est = longstaff_schwartz(p, bundle, 3);
    double target = euro_call(100.0, 100.0, 0.2, 1.0);
    CHECK(std::fabs(est.mean - target) <= 3.0 * est.std_error + 0.05);
}

TEST_CASE("degree must be positive") {
    auto p = presets::gbm(1, 1.0, 0.0, 0.2, "0", "x", 2.0);
    std::vector<double> x0{1.0};
    auto bundle = simulate(p, 0.0, x0, 4, 16, 1);
    CHECK_THROWS_AS(longstaff_schwartz(p, bundle, 0), ConfigError);
}

TEST_CASE("out-of-sample replay stays near the in-sample estimate") {
    auto p = presets::gbm(1, 1.0, -0.06, 0.2, "0", "max(100 - x, 0)", 2.0);
    std::vector<double> x0{100.0};
    auto fit = simulate(p, 0.0, x0, 50, 8000, 5);
    auto fresh = simulate(p, 0.0, x0, 50, 8000, 6);
    auto insample = longstaff_schwartz(p, fit, 3);
    auto out = longstaff_schwartz(p, fit, 3, &fresh);
    CHECK(std::fabs(insample.mean - out.mean) <=
          3.0 * (insample.std_error + out.std_error) + 0.05);
    CHECK(out.method_tag.find("outofsample") != std::string::npos);
}

TEST_CASE("immediate rule pays the payoff at the start exactly") {
    auto p = presets::gbm(1, 1.0, 0.05, 0.3, "0", "max(100 - x, 0) + 3", 2.0);
    std::vector<double> x0{90.0};
    auto bundle = simulate(p, 0.0, x0, 10, 500, 9);
    auto est = evaluate_rule(p, bundle, RuleSource::immediate(), 0.0);
    CHECK(est.mean == doctest::Approx(13.0));
    CHECK(est.std_error == 0.0);
    CHECK(est.offgrid_fraction == 0.0);
}

TEST_CASE("terminal rule on a driftless linear payoff recovers the start state") {
    auto p = presets::gbm(1, 1.0, 0.0, 0.2, "0", "x", 2.0);
    std::vector<double> x0{50.0};
    auto bundle = simulate(p, 0.0, x0, 100, 20000, 12);
    auto est = evaluate_rule(p, bundle, RuleSource::terminal(), 0.0);
    CHECK(std::fabs(est.mean - 50.0) <= 3.0 * est.std_error);
}

TEST_CASE("rule from the quadratic surface recovers x0^2 + T") {
    auto p = presets::custom(1, 1, 1.0, {"0"}, {"1"}, "0", "x^2", 2.0);
    std::vector<double> x0{0.0};
    Grid grid;
    grid.lo = {-6.0};
    grid.hi = {6.0};
    grid.n_space = 201;
    grid.n_time = 100;
    auto surface = solve_variational_inequality(p, grid, SolveOptions{});
    auto bundle = simulate(p, 0.0, x0, 100, 20000, 31);
    auto est = evaluate_rule(p, bundle, RuleSource::pde(surface, grid), 1e-7);
    CHECK(std::fabs(est.mean - 1.0) <= 3.0 * est.std_error + 0.02);  // + O(dt) allowance
    CHECK(est.offgrid_fraction <= 0.001);
}

TEST_CASE("lattice rule source matches the pde rule on the put") {
    auto p = presets::gbm(1, 1.0, -0.06, 0.2, "0", "max(100 - x, 0)", 2.0);
    std::vector<double> x0{100.0};
    Chain chain = build_chain(p, 0.0, x0, 200, LatticeScheme::Binomial);
    auto tree_surface = snell_envelope(chain, p);
    auto bundle = simulate(p, 0.0, x0, 100, 10000, 77);
    auto est = evaluate_rule(p, bundle, RuleSource::lattice(chain, tree_surface),
                             default_rule_epsilon(tree_surface));
    // no early exercise under this drift: the rule should ride to the horizon
    CHECK(std::fabs(est.mean - tree_surface.value[0][0]) <= 3.0 * est.std_error + 0.1);
}

TEST_CASE("suboptimal rules never beat the solved value (statistically)") {
    auto p = presets::gbm(1, 1.0, -0.06, 0.2, "0", "max(100 - x, 0)", 2.0);
    std::vector<double> x0{100.0};
    Grid grid;
    grid.lo = {0.0};
    grid.hi = {300.0};
    grid.n_space = 201;
    grid.n_time = 100;
    auto surface = solve_variational_inequality(p, grid, SolveOptions{});
    double solver_value = surface_value_at(surface, grid, 0, x0);

    auto bundle = simulate(p, 0.0, x0, 100, 20000, 13);
    for (auto rule : {RuleSource::immediate(), RuleSource::terminal()}) {
        auto est = evaluate_rule(p, bundle, rule, 0.0);
        CHECK(est.mean <= solver_value + 3.0 * est.std_error + 0.05);
    }

    // the extracted rule performs at least as well as the regression rule
    auto rule_est = evaluate_rule(p, bundle, RuleSource::pde(surface, grid), 1e-7);
    auto lsmc = longstaff_schwartz(p, bundle, 4);
    CHECK(rule_est.mean >= lsmc.mean - 3.0 * (rule_est.std_error + lsmc.std_error) - 0.05);
}

TEST_CASE("constant obstacle shift moves the rule estimate by the shift exactly") {
    auto base = presets::gbm(1, 1.0, 0.02, 0.25, "0", "max(90 - x, 0)", 2.0);
    auto shifted = presets::gbm(1, 1.0, 0.02, 0.25, "0", "max(90 - x, 0) + 2", 2.0);
    std::vector<double> x0{100.0};
    Chain c1 = build_chain(base, 0.0, x0, 60, LatticeScheme::Binomial);
    Chain c2 = build_chain(shifted, 0.0, x0, 60, LatticeScheme::Binomial);
    auto s1 = snell_envelope(c1, base);
    auto s2 = snell_envelope(c2, shifted);
    auto bundle = simulate(base, 0.0, x0, 60, 4000, 17);

    auto e1 = evaluate_rule(base, bundle, RuleSource::lattice(c1, s1), 1e-9);
    auto e2 = evaluate_rule(shifted, bundle, RuleSource::lattice(c2, s2), 1e-9);
    // same stop times on the same bundle; payoff differs by the constant
    CHECK(e2.mean == doctest::Approx(e1.mean + 2.0).epsilon(1e-12));
}

TEST_CASE("coverage error when the box misses the paths") {
    auto p = presets::gbm(1, 1.0, 0.0, 0.5, "0", "max(100 - x, 0)", 2.0);
    std::vector<double> x0{100.0};
    Grid tiny;
    tiny.lo = {95.0};
    tiny.hi = {105.0};
    tiny.n_space = 11;
    tiny.n_time = 10;
    auto surface = solve_variational_inequality(p, tiny, SolveOptions{});
    auto bundle = simulate(p, 0.0, x0, 50, 2000, 23);
    CHECK_THROWS_AS(evaluate_rule(p, bundle, RuleSource::pde(surface, tiny), 1e-9), CoverageError);
}

TEST_CASE("estimate serialization is stable") {
    ValueEstimate e;
    e.method_tag = "rule-pde";
    e.mean = 1.5;
    e.std_error = 0.25;
    e.n_paths = 100;
    e.seed = 7;
    CHECK(estimate_json(e) == estimate_json(e));
    CHECK(estimate_json(e).find("\"method\":\"rule-pde\"") != std::string::npos);
    CHECK(estimate_csv_row(e) == "rule-pde,1.5,0.25,100,7,0");
}
