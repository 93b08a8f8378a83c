#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "snell/errors.hpp"
#include "snell/pde.hpp"

using namespace snell;

namespace {

StoppingProblem make1d(const std::string& b, const std::string& sigma, const std::string& f,
                       const std::string& g) {
    return presets::custom(1, 1, 1.0, {b}, {sigma}, f, g, 2.0);
}

Grid grid1d(double lo, double hi, int n_space, int n_time,
            Grid::Boundary boundary = Grid::Boundary::DirichletG) {
    Grid g;
    g.lo = {lo};
    g.hi = {hi};
    g.n_space = n_space;
    g.n_time = n_time;
    g.boundary = boundary;
    return g;
}

}  // namespace

TEST_CASE("generator: constants, linears, quadratics") {
    auto p = make1d("1", "1", "0", "x");
    Grid grid = grid1d(-2.0, 2.0, 41, 10);
    const int n = grid.n_nodes();
    std::vector<double> constant(n, 3.0), linear(n), quad(n);
    for (int i = 0; i < n; ++i) {
        linear[i] = grid.coord(0, i);
        quad[i] = grid.coord(0, i) * grid.coord(0, i);
    }
    CHECK(generator_apply(p, grid, constant, 20, 0.0) == doctest::Approx(0.0));
    CHECK(generator_apply(p, grid, linear, 20, 0.0) == doctest::Approx(1.0));  // b dphi = 1

    auto p2 = make1d("0", "1", "0", "x");
    CHECK(generator_apply(p2, grid, quad, 20, 0.0) == doctest::Approx(1.0));  // 1/2 * 2 = 1 exact
    CHECK_THROWS_AS(generator_apply(p2, grid, quad, 0, 0.0), StencilError);
    CHECK_THROWS_AS(generator_apply(p2, grid, quad, n - 1, 0.0), StencilError);
}

TEST_CASE("quadratic obstacle: closed-form value x^2 + (T - t)") {
    auto p = make1d("0", "1", "0", "x^2");
    Grid grid = grid1d(-6.0, 6.0, 201, 200);
    SolveOptions opt;
    auto s = solve_variational_inequality(p, grid, opt);
    std::vector<double> x0{0.0};
    CHECK(surface_value_at(s, grid, 0, x0) == doctest::Approx(1.0).epsilon(0.01));

    // interior nodes stay in the continuation region before the horizon
    int mid = grid.n_nodes() / 2;
    CHECK(s.active[0][mid] == 0);
    CHECK(s.active[grid.n_time][mid] == 1);
}

TEST_CASE("injected analytic surface has tiny interior residual") {
    auto p = make1d("0", "1", "0", "x^2");
    Grid grid = grid1d(-6.0, 6.0, 101, 50);
    PdeSurface s;
    s.t0 = 0.0;
    s.dt = 1.0 / grid.n_time;
    s.solver_tol = 1e-12;
    const int n = grid.n_nodes();
    s.obstacle.resize(n);
    for (int i = 0; i < n; ++i) s.obstacle[i] = grid.coord(0, i) * grid.coord(0, i);
    s.v.assign(grid.n_time + 1, std::vector<double>(n));
    s.active.assign(grid.n_time + 1, std::vector<char>(n, 0));
    for (int k = 0; k <= grid.n_time; ++k)
        for (int i = 0; i < n; ++i) s.v[k][i] = s.obstacle[i] + (1.0 - k * s.dt);

    auto rep = viscosity_residual_report(s, p, grid);
    CHECK(rep.interior_pde_residual_on_continuation <= 1e-10);
    CHECK(rep.obstacle_violation <= 1e-12);
}

TEST_CASE("terminal layer equals the obstacle exactly") {
    auto p = make1d("0", "1", "0", "max(1 - x, 0)");
    Grid grid = grid1d(-4.0, 5.0, 81, 40);
    auto s = solve_variational_inequality(p, grid, SolveOptions{});
    auto rep = viscosity_residual_report(s, p, grid);
    CHECK(rep.terminal_gap == 0.0);
    CHECK(rep.obstacle_violation <= 1e-9);
}

TEST_CASE("concave obstacle binds everywhere (immediate stopping)") {
    auto p = make1d("0", "1", "0", "4 - x^2");
    Grid grid = grid1d(-5.0, 5.0, 161, 80);
    auto s = solve_variational_inequality(p, grid, SolveOptions{});
    double scale = 4.0;
    int interior = 0, active0 = 0;
    double worst = 0.0;
    for (int node = 0; node < grid.n_nodes(); ++node) {
        if (!grid.interior(node)) continue;
        ++interior;
        if (s.active[0][node]) ++active0;
        worst = std::max(worst, std::fabs(s.v[0][node] - s.obstacle[node]));
    }
    CHECK(worst <= 0.01 * scale);
    CHECK(active0 >= (99 * interior) / 100);
}

TEST_CASE("psor and policy iteration agree within 10x tolerance") {
    auto p = presets::gbm(1, 1.0, -0.06, 0.2, "0", "max(100 - x, 0)", 2.0);
    Grid grid = grid1d(0.0, 300.0, 151, 60);
    SolveOptions psor;
    psor.tol = 1e-9;
    SolveOptions policy;
    policy.scheme = PdeScheme::PolicyIteration;
    policy.tol = 1e-9;
    auto a = solve_variational_inequality(p, grid, psor);
    auto b = solve_variational_inequality(p, grid, policy);
    double worst = 0.0;
    for (int k = 0; k <= grid.n_time; ++k)
        for (int node = 0; node < grid.n_nodes(); ++node)
            worst = std::max(worst, std::fabs(a.v[k][node] - b.v[k][node]));
    CHECK(worst <= 10.0 * 1e-9 * 100.0);  // scaled by the payoff size
}

TEST_CASE("explicit projection respects the CFL bound") {
    auto p = make1d("0", "1", "0", "x^2");
    Grid fine_time = grid1d(-3.0, 3.0, 31, 200);  // dt = 1/200, h = 0.2: stable
    SolveOptions opt;
    opt.scheme = PdeScheme::ExplicitProjection;
    auto s = solve_variational_inequality(p, fine_time, opt);
    std::vector<double> x0{0.0};
    CHECK(surface_value_at(s, fine_time, 0, x0) == doctest::Approx(1.0).epsilon(0.05));

    Grid coarse_time = grid1d(-3.0, 3.0, 121, 40);  // dt = 1/40, h = 0.05: unstable
    CHECK_THROWS_AS(solve_variational_inequality(p, coarse_time, opt), StabilityError);
}

TEST_CASE("obstacle monotonicity on a solved pair") {
    auto lo = make1d("0", "1", "0", "max(1 - x, 0)");
    auto hi = make1d("0", "1", "0", "max(1 - x, 0) + 1");
    Grid grid = grid1d(-4.0, 5.0, 81, 40);
    auto a = solve_variational_inequality(lo, grid, SolveOptions{});
    auto b = solve_variational_inequality(hi, grid, SolveOptions{});
    for (int k = 0; k <= grid.n_time; ++k)
        for (int node = 0; node < grid.n_nodes(); ++node)
            CHECK(b.v[k][node] >= a.v[k][node] - 1e-9);
}

TEST_CASE("continuation region extraction") {
    SUBCASE("constant obstacle leaves the region empty") {
        auto p = make1d("0", "1", "0", "2");
        Grid grid = grid1d(-3.0, 3.0, 61, 30);
        auto s = solve_variational_inequality(p, grid, SolveOptions{});
        auto region = extract_continuation_region(s, grid, 1e-7);
        for (const auto& layer : region.nodes) CHECK(layer.empty());
    }
    SUBCASE("quadratic obstacle continues everywhere inside") {
        auto p = make1d("0", "1", "0", "x^2");
        Grid grid = grid1d(-6.0, 6.0, 101, 50);
        auto s = solve_variational_inequality(p, grid, SolveOptions{});
        auto region = extract_continuation_region(s, grid, 1e-7);
        CHECK(region.nodes[0].size() >= 95u);  // nearly all interior nodes
        CHECK(region.nodes[grid.n_time].empty());
    }
}

TEST_CASE("put-style problem: boundary rises toward the strike near the horizon") {
    // positive drift makes early exercise genuinely optimal deep in the money
    auto p = presets::gbm(1, 1.0, 0.06, 0.2, "0", "max(100 - x, 0)", 2.0);
    Grid grid = grid1d(0.0, 300.0, 301, 150);
    auto s = solve_variational_inequality(p, grid, SolveOptions{});
    auto region = extract_continuation_region(s, grid, 1e-7);

    REQUIRE(!region.boundary[0].empty());
    REQUIRE(!region.boundary[grid.n_time - 1].empty());
    double early = region.boundary[0].front();
    double late = region.boundary[grid.n_time - 1].front();
    CHECK(early < late);       // boundary increases toward the strike
    CHECK(late < 100.0 + 1.0);
    CHECK(early > 0.0);
}

TEST_CASE("lattice and pde agree on the put value") {
    auto p = presets::gbm(1, 1.0, -0.06, 0.2, "0", "max(100 - x, 0)", 2.0);
    Grid grid = grid1d(0.0, 300.0, 301, 150);
    auto s = solve_variational_inequality(p, grid, SolveOptions{});
    std::vector<double> x0{100.0};
    double pde_value = surface_value_at(s, grid, 0, x0);
    CHECK(pde_value == doctest::Approx(10.98).epsilon(0.02));  // Black-76 put, no early exercise
}

TEST_CASE("linear extrapolation boundary handles the quadratic case") {
    auto p = make1d("0", "1", "0", "x^2");
    Grid grid = grid1d(-6.0, 6.0, 201, 100, Grid::Boundary::LinearExtrapolation);
    auto s = solve_variational_inequality(p, grid, SolveOptions{});
    std::vector<double> x0{0.0};
    CHECK(surface_value_at(s, grid, 0, x0) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("complementarity shrinks under refinement of the put") {
    auto p = presets::gbm(1, 1.0, -0.06, 0.2, "0", "max(100 - x, 0)", 2.0);
    auto run = [&](int n_space, int n_time) {
        Grid grid = grid1d(0.0, 300.0, n_space, n_time);
        auto s = solve_variational_inequality(p, grid, SolveOptions{});
        return viscosity_residual_report(s, p, grid).complementarity_max;
    };
    double coarse = run(76, 25);
    double fine = run(151, 50);
    CHECK(fine < coarse);
}

TEST_CASE("convergence budget raises ConvergenceError with the residual") {
    auto p = presets::gbm(1, 1.0, -0.06, 0.2, "0", "max(100 - x, 0)", 2.0);
    Grid grid = grid1d(0.0, 300.0, 201, 50);
    SolveOptions opt;
    opt.max_iter = 1;
    opt.tol = 1e-14;
    try {
        solve_variational_inequality(p, grid, opt);
        CHECK(false);
    } catch (const ConvergenceError& e) {
        CHECK(e.final_residual > 0.0);
    }
}

TEST_CASE("csv and report exports are deterministic") {
    auto p = make1d("0", "1", "0", "x^2");
    Grid grid = grid1d(-3.0, 3.0, 21, 8);
    auto s = solve_variational_inequality(p, grid, SolveOptions{});
    std::ostringstream a, b;
    write_pde_surface_csv(a, s, grid);
    write_pde_surface_csv(b, s, grid);
    CHECK(a.str() == b.str());
    CHECK(a.str().rfind("layer,time,node_index,x_1,value,obstacle,active\n", 0) == 0);

    auto rep = viscosity_residual_report(s, p, grid);
    CHECK(residual_report_json(rep) == residual_report_json(rep));
    CHECK(residual_report_json(rep).find("complementarity_max") != std::string::npos);
}

TEST_CASE("auto-sized box spans six standard deviations") {
    auto p = make1d("0", "1", "0", "x^2");
    std::vector<double> x0{0.0};
    Grid g = Grid::sized_for(p, x0, 101, 50);
    CHECK(g.lo[0] == doctest::Approx(-6.0));
    CHECK(g.hi[0] == doctest::Approx(6.0));
}
