// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances are fixed here, not tuned at run time.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "snell/config.hpp"
#include "snell/enumeration.hpp"
#include "snell/errors.hpp"
#include "snell/lattice.hpp"
#include "snell/model.hpp"
#include "snell/montecarlo.hpp"
#include "snell/pde.hpp"
#include "snell/sde.hpp"

namespace fs = std::filesystem;
using namespace snell;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int index, const std::string& name, bool pass, const std::string& detail) {
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << index << ". " << name;
    if (!detail.empty()) std::cout << " — " << detail;
    std::cout << "\n" << std::flush;
    if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// 1. key equality + restricted/unrestricted agreement on 100 random product
//    spaces; exact zero gap; under 60 s
void criterion_key_equality() {
    auto start = Clock::now();
    SpaceGenParams gp;  // G atoms <= 3, depth <= 3, branching <= 3
    const int n_spaces = 100;
    const std::uint64_t seed = 7;
    int ok = 0;
    Rational worst(0);
    for (int i = 0; i < n_spaces; ++i) {
        Rng rng(seed, static_cast<std::uint64_t>(i));
        auto space = random_product_space(rng, gp);
        auto gains = random_gain_table(space, rng, gp);
        auto theta = random_adapted_time(space, rng);
        auto rep = verify_key_equality(space, theta, gains);
        bool pass = rep.max_gap == Rational(0);
        for (int a = 0; a < space.n_atoms() && pass; ++a)
            pass = rep.full_values[a] == rep.restricted_values[a];
        if (pass) ++ok;
        worst = Rational::max(worst, rep.max_gap);
    }
    double elapsed = seconds_since(start);
    std::ostringstream detail;
    detail << ok << "/" << n_spaces << " spaces, gap=" << worst.str() << ", " << elapsed << "s";
    report(1, "key-equality suite (exact, seed 7)", ok == n_spaces && elapsed < 60.0,
           detail.str());
}

// 2. smallest optimality on all binary spaces of depth <= 3, 50 gain tables
//    each, exact
void criterion_smallest_optimal() {
    auto start = Clock::now();
    SpaceGenParams gp;
    const std::uint64_t seed = 11;
    int total = 0, ok = 0;
    for (int depth = 1; depth <= 3; ++depth) {
        for (int i = 0; i < 50; ++i) {
            Rng rng(seed, static_cast<std::uint64_t>(depth) * 1000 + i);
            auto space = binary_space(depth, rng);
            auto gains = random_gain_table(space, rng, gp);
            auto rep = verify_smallest_optimal(space, gains);
            ++total;
            if (rep.is_smallest) ++ok;
        }
    }
    double elapsed = seconds_since(start);
    std::ostringstream detail;
    detail << ok << "/" << total << " checks, " << elapsed << "s";
    report(2, "smallest-optimality suite (exact, seed 11)", ok == total && elapsed < 60.0,
           detail.str());
}

// 3. DPP residual on depth-4 chains: zero in rational mode, <= 1e-12
//    relative in float mode, 20 random freezes per chain
void criterion_dpp() {
    const std::uint64_t seed = 13;
    int total = 0, ok = 0;
    Rational worst_exact(0);
    double worst_float = 0.0;
    for (int c = 0; c < 5; ++c) {
        Rng rng(seed, static_cast<std::uint64_t>(c));
        auto chain = random_rational_chain(rng, 4);
        auto gains = random_rational_chain_gain(chain, rng);
        auto surface = snell_envelope_core(chain, gains);
        auto tree = chain_paths(chain);

        Chain fchain;
        fchain.t0 = 0.0;
        fchain.dt = 1.0;
        fchain.d = 1;
        fchain.layers.resize(chain.n_layers());
        ChainGain fgains;
        fgains.run_inc.resize(chain.n_layers());
        fgains.obstacle.resize(chain.n_layers());
        for (int k = 0; k < chain.n_layers(); ++k) {
            for (const auto& node : chain.layers[k]) {
                Chain::Node fn;
                fn.state = {node.state[0].to_double()};
                for (const auto& tr : node.next) fn.next.push_back({tr.child, tr.prob.to_double()});
                fchain.layers[k].push_back(std::move(fn));
            }
            for (std::size_t i = 0; i < chain.layers[k].size(); ++i) {
                fgains.run_inc[k].push_back(gains.run_inc[k][i].to_double());
                fgains.obstacle[k].push_back(gains.obstacle[k][i].to_double());
            }
        }
        auto fsurface = snell_envelope_core(fchain, fgains);
        double fscale = std::max(1.0, std::fabs(fsurface.value[0][0]));

        for (int i = 0; i < 20; ++i) {
            auto tau = random_chain_time(tree, rng);
            Rational exact = verify_dpp_core(chain, gains, surface, tau);
            double rel = verify_dpp_core(fchain, fgains, fsurface, tau) / fscale;
            ++total;
            if (exact == Rational(0) && rel <= 1e-12) ++ok;
            worst_exact = Rational::max(worst_exact, exact);
            worst_float = std::max(worst_float, rel);
        }
    }
    std::ostringstream detail;
    detail << ok << "/" << total << ", exact=" << worst_exact.str()
           << ", float rel=" << worst_float;
    report(3, "DPP suite on depth-4 chains (seed 13)", ok == total, detail.str());
}

// 4. stopping-time decomposition reconstructs every adapted time on 50
//    random product spaces, all exact
void criterion_approximation() {
    SpaceGenParams gp;
    gp.max_stopping_times = 600;
    const std::uint64_t seed = 17;
    int total = 0, ok = 0;
    for (int i = 0; i < 50; ++i) {
        Rng rng(seed, static_cast<std::uint64_t>(i));
        auto space = random_product_space(rng, gp);
        auto taus = enumerate_stopping_times(space, gp.max_stopping_times);
        for (const auto& tau : taus) {
            auto trace = approximate_stopping_time(space, tau);
            ++total;
            if (trace.all_checks_pass()) ++ok;
        }
    }
    std::ostringstream detail;
    detail << ok << "/" << total << " stopping times reconstructed exactly";
    report(4, "approximation suite on 50 product spaces (seed 17)", ok == total, detail.str());
}

// 5. closed-form quadratic check on the 400x400 grid, and the injected
//    analytic surface residual
void criterion_quadratic_pde() {
    auto start = Clock::now();
    auto p = presets::custom(1, 1, 1.0, {"0"}, {"1"}, "0", "x^2", 2.0);
    Grid grid;
    grid.lo = {-6.0};
    grid.hi = {6.0};
    grid.n_space = 400;
    grid.n_time = 400;
    auto s = solve_variational_inequality(p, grid, SolveOptions{});
    std::vector<double> x0{0.0};
    double v0 = surface_value_at(s, grid, 0, x0);
    bool value_ok = std::fabs(v0 - 1.0) <= 0.01;

    PdeSurface analytic;
    analytic.t0 = 0.0;
    analytic.dt = 1.0 / grid.n_time;
    analytic.obstacle.resize(grid.n_nodes());
    for (int i = 0; i < grid.n_nodes(); ++i)
        analytic.obstacle[i] = grid.coord(0, i) * grid.coord(0, i);
    analytic.v.assign(grid.n_time + 1, std::vector<double>(grid.n_nodes()));
    analytic.active.assign(grid.n_time + 1, std::vector<char>(grid.n_nodes(), 0));
    for (int k = 0; k <= grid.n_time; ++k)
        for (int i = 0; i < grid.n_nodes(); ++i)
            analytic.v[k][i] = analytic.obstacle[i] + (1.0 - k * analytic.dt);
    auto rep = viscosity_residual_report(analytic, p, grid);
    bool residual_ok = rep.interior_pde_residual_on_continuation <= 1e-10;

    double elapsed = seconds_since(start);
    std::ostringstream detail;
    detail << "v(0,0)=" << v0 << " (target 1 +- 0.01), injected residual="
           << rep.interior_pde_residual_on_continuation << ", " << elapsed << "s";
    report(5, "closed-form PDE check (400x400)", value_ok && residual_ok && elapsed < 30.0,
           detail.str());
}

// 6. concave obstacle: immediate stopping within 1% of scale, rule stops at
//    layer 0 on at least 99% of interior nodes
void criterion_jensen() {
    auto p = presets::custom(1, 1, 1.0, {"0"}, {"1"}, "0", "4 - x^2", 2.0);
    Grid grid;
    grid.lo = {-5.0};
    grid.hi = {5.0};
    grid.n_space = 201;
    grid.n_time = 100;
    auto s = solve_variational_inequality(p, grid, SolveOptions{});

    double scale = 0.0;
    for (double g : s.obstacle) scale = std::max(scale, std::fabs(g));
    double worst = 0.0;
    int interior = 0, stopped = 0;
    for (int node = 0; node < grid.n_nodes(); ++node) {
        if (!grid.interior(node)) continue;
        ++interior;
        worst = std::max(worst, std::fabs(s.v[0][node] - s.obstacle[node]));
        if (s.active[0][node]) ++stopped;
    }
    bool gap_ok = worst <= 0.01 * scale;
    bool rule_ok = stopped * 100 >= interior * 99;
    std::ostringstream detail;
    detail << "max|v-g|=" << worst << " (<= " << 0.01 * scale << "), stop fraction "
           << stopped << "/" << interior;
    report(6, "Jensen immediate-stopping check", gap_ok && rule_ok, detail.str());
}

// 7. cross-method agreement on the drifted exponential put
void criterion_cross_method() {
    auto start = Clock::now();
    auto p = presets::gbm(1, 1.0, -0.06, 0.2, "0", "max(100 - x, 0)", 2.0);
    std::vector<double> x0{100.0};

    Grid grid;
    grid.lo = {0.0};
    grid.hi = {300.0};
    grid.n_space = 400;
    grid.n_time = 400;
    auto surface = solve_variational_inequality(p, grid, SolveOptions{});
    double pde_value = surface_value_at(surface, grid, 0, x0);

    Chain chain = build_chain(p, 0.0, x0, 2000, LatticeScheme::Binomial);
    auto tree_surface = snell_envelope(chain, p);
    double lattice_value = tree_surface.value[0][0];

    PathBundle bundle = simulate(p, 0.0, x0, 250, 100000, 20240811);
    ValueEstimate lsmc = longstaff_schwartz(p, bundle, 4);
    ValueEstimate rule_est = evaluate_rule(p, bundle, RuleSource::pde(surface, grid), 1e-7);

    auto agree = [](double a, double b, double se) {
        double tol = std::max(3.0 * se, 0.005 * std::max(std::fabs(a), std::fabs(b)));
        return std::fabs(a - b) <= tol;
    };
    bool ok = agree(pde_value, lattice_value, 0.0) && agree(pde_value, lsmc.mean, lsmc.std_error) &&
              agree(lattice_value, lsmc.mean, lsmc.std_error) &&
              agree(pde_value, rule_est.mean, rule_est.std_error);

    double elapsed = seconds_since(start);
    std::ostringstream detail;
    detail << "pde=" << pde_value << " lattice=" << lattice_value << " lsmc=" << lsmc.mean
           << "(se " << lsmc.std_error << ") rule=" << rule_est.mean << "(se "
           << rule_est.std_error << "), " << elapsed << "s";
    report(7, "cross-method agreement on the put", ok && elapsed < 300.0, detail.str());
}

// 8. complementarity halves (+-30%) under joint (h, dt) halving over three
//    refinement levels of the put
void criterion_residual_scaling() {
    auto p = presets::gbm(1, 1.0, -0.06, 0.2, "0", "max(100 - x, 0)", 2.0);
    auto level = [&](int n_space, int n_time) {
        Grid grid;
        grid.lo = {0.0};
        grid.hi = {300.0};
        grid.n_space = n_space;
        grid.n_time = n_time;
        auto s = solve_variational_inequality(p, grid, SolveOptions{});
        return viscosity_residual_report(s, p, grid).complementarity_max;
    };
    double c0 = level(100, 50);
    double c1 = level(200, 100);
    double c2 = level(400, 200);
    double r1 = c1 / c0, r2 = c2 / c1;
    bool ok = r1 >= 0.35 && r1 <= 0.65 && r2 >= 0.35 && r2 <= 0.65;
    std::ostringstream detail;
    detail << "levels " << c0 << " -> " << c1 << " -> " << c2 << ", ratios " << r1 << ", " << r2
           << " (target 0.5 +- 0.15)";
    report(8, "viscosity residual scaling on the put", ok, detail.str());
}

// 9. byte-identical artifacts when each subcommand re-runs with the same
//    config and seed (drives the real binary)
void criterion_determinism() {
    const char* bin = std::getenv("SNELL_BIN");
    if (!bin) {
        report(9, "determinism of CLI artifacts", false, "SNELL_BIN not set");
        return;
    }
    fs::path tmp = fs::temp_directory_path() / "snell_acceptance_det";
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    const std::string config =
        "[problem]\n"
        "preset = gbm\n"
        "mu = -0.06\n"
        "nu = 0.2\n"
        "x0 = 100\n"
        "T = 1\n"
        "g = \"max(100 - x, 0)\"\n"
        "[solver]\n"
        "n_space = 101\n"
        "n_time = 40\n"
        "box_lo = 0\n"
        "box_hi = 300\n"
        "lattice_scheme = binomial\n"
        "lattice_steps = 64\n"
        "[mc]\n"
        "n_paths = 2000\n"
        "n_steps = 50\n"
        "seed = 20240811\n"
        "basis_degree = 3\n"
        "[verify]\n"
        "spaces = 5\n"
        "seed = 7\n";
    {
        std::ofstream os(tmp / "run.ini", std::ios::binary);
        os << config;
    }

    auto slurp = [](const fs::path& f) {
        std::ifstream is(f, std::ios::binary);
        std::ostringstream ss;
        ss << is.rdbuf();
        return ss.str();
    };

    bool all_ok = true;
    std::string failing;
    const std::vector<std::string> subs = {
        "simulate",         "solve",       "tree",
        "price",            "compare",     "verify key-equality",
        "verify dpp",       "verify approx", "verify smallest-optimal"};
    for (const std::string& sub : subs) {
        std::string tag = sub;
        for (char& c : tag)
            if (c == ' ') c = '_';
        for (int run = 1; run <= 2; ++run) {
            std::string out = (tmp / (tag + std::to_string(run))).string();
            std::string cmd = std::string("\"") + bin + "\" " + sub + " --config " +
                              (tmp / "run.ini").string() + " --out " + out + " > /dev/null 2>&1";
            if (std::system(cmd.c_str()) != 0) {
                all_ok = false;
                failing = sub + " (nonzero exit)";
            }
        }
        fs::path a = tmp / (tag + "1");
        fs::path b = tmp / (tag + "2");
        if (!fs::exists(a) || !fs::exists(b)) continue;
        for (const auto& entry : fs::directory_iterator(a)) {
            fs::path twin = b / entry.path().filename();
            if (!fs::exists(twin) || slurp(entry.path()) != slurp(twin)) {
                all_ok = false;
                failing = sub + ": " + entry.path().filename().string();
            }
        }
    }
    fs::remove_all(tmp);
    report(9, "determinism of CLI artifacts", all_ok,
           all_ok ? std::to_string(subs.size()) + " subcommands byte-stable" : failing);
}

}  // namespace

int main() {
    try {
        criterion_key_equality();
        criterion_smallest_optimal();
        criterion_dpp();
        criterion_approximation();
        criterion_quadratic_pde();
        criterion_jensen();
        criterion_cross_method();
        criterion_residual_scaling();
        criterion_determinism();
    } catch (const std::exception& e) {
        std::cout << "[FAIL] acceptance aborted: " << e.what() << "\n";
        return 1;
    }
    if (g_failures == 0) {
        std::cout << "acceptance: all criteria passed\n";
        return 0;
    }
    std::cout << "acceptance: " << g_failures << " criterion(s) failed\n";
    return 1;
}
