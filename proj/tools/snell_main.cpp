// snell: finite-horizon optimal stopping toolkit CLI.
//
// Subcommands: solve, tree, simulate, price, compare, verify.
// Exit codes: 0 success, 1 verification failure, 2 usage/config error,
// 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "snell/config.hpp"
#include "snell/enumeration.hpp"
#include "snell/errors.hpp"
#include "snell/io.hpp"
#include "snell/lattice.hpp"
#include "snell/model.hpp"
#include "snell/montecarlo.hpp"
#include "snell/pde.hpp"
#include "snell/sde.hpp"

namespace fs = std::filesystem;
using namespace snell;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir;
    long long seed = -1;
    std::string format;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "run configuration file");
    cmd->add_option("--set", c.sets, "override: section.key=value")->take_all();
    cmd->add_option("--out", c.out_dir, "output directory");
    cmd->add_option("--seed", c.seed, "override mc.seed and verify.seed");
    cmd->add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
}

RunConfig load_config(const Common& c) {
    RunConfig cfg = c.config_path.empty() ? RunConfig::parse("") : RunConfig::load(c.config_path);
    for (const auto& s : c.sets) {
        auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects section.key=value");
        cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (c.seed >= 0) {
        cfg.set("mc.seed", std::to_string(c.seed));
        cfg.set("verify.seed", std::to_string(c.seed));
    }
    if (!c.out_dir.empty()) cfg.set("output.dir", c.out_dir);
    if (!c.format.empty()) cfg.set("output.format", c.format);
    return cfg;
}

std::string out_dir(const RunConfig& cfg) {
    std::string dir = cfg.get_string("output", "dir", "out");
    fs::create_directories(dir);
    return dir;
}

void write_text(const std::string& dir, const std::string& name, const std::string& content) {
    io::write_file(dir + "/" + name, content);
}

SpaceGenParams gen_params(const RunConfig& cfg) {
    SpaceGenParams gp;
    gp.max_g_atoms = static_cast<int>(cfg.get_int("verify", "max_g_atoms", 3));
    gp.max_depth = static_cast<int>(cfg.get_int("verify", "max_depth", 3));
    gp.max_branching = static_cast<int>(cfg.get_int("verify", "max_branching", 3));
    return gp;
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int run_simulate(const RunConfig& cfg) {
    auto [problem, x0] = build_problem(cfg);
    const int n_paths = static_cast<int>(cfg.get_int("mc", "n_paths", 1000));
    const int n_steps = static_cast<int>(cfg.get_int("mc", "n_steps", 100));
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("mc", "seed", 1));

    PathBundle bundle = simulate(problem, 0.0, x0, n_steps, n_paths, seed);
    std::string dir = out_dir(cfg);
    std::ostringstream csv;
    write_bundle_csv(csv, bundle);
    write_text(dir, "bundle.csv", csv.str());

    auto mc2 = moment_check(bundle, 2);
    io::JsonWriter w;
    w.begin_object()
        .field("n_paths", n_paths)
        .field("n_steps", n_steps)
        .field("seed", static_cast<unsigned long long>(seed))
        .field("sup_moment_p2", mc2.sup_moment)
        .field("bound_ratio_p2", mc2.bound_ratio)
        .end_object();
    write_text(dir, "simulate_report.json", w.str() + "\n");
    std::cout << "simulate: wrote " << dir << "/bundle.csv (" << n_paths << " paths, " << n_steps
              << " steps)\n";
    return 0;
}

int run_solve(const RunConfig& cfg) {
    auto [problem, x0] = build_problem(cfg);
    Grid grid = build_grid(cfg, problem, x0);
    SolveOptions opt = build_solve_options(cfg);

    // advisory only: empirical Lipschitz/growth estimates over the solve box
    Box box{grid.lo, grid.hi};
    auto assumptions = spot_check_assumptions(problem, box,
                                              static_cast<int>(cfg.get_int("problem", "spot_samples", 48)),
                                              static_cast<std::uint64_t>(cfg.get_int("problem", "spot_seed", 17)));

    PdeSurface surface = solve_variational_inequality(problem, grid, opt);
    auto report = viscosity_residual_report(surface, problem, grid);
    double eps = cfg.get_double("solver", "rule_epsilon", -1.0);
    if (eps < 0.0) eps = std::max(opt.tol, 1e-12);
    auto region = extract_continuation_region(surface, grid, eps);

    std::string dir = out_dir(cfg);
    {
        std::ostringstream os;
        write_pde_surface_csv(os, surface, grid);
        write_text(dir, "surface.csv", os.str());
    }
    write_text(dir, "residual_report.json", residual_report_json(report));
    if (grid.dim() == 1) {
        std::ostringstream os;
        write_plot_data_csv(os, surface, grid, 0);
        write_text(dir, "plot_layer0.csv", os.str());
        std::ostringstream ob;
        write_boundary_csv(ob, region, surface);
        write_text(dir, "boundary.csv", ob.str());
    }

    double v0 = surface_value_at(surface, grid, 0, x0);
    io::JsonWriter w;
    w.begin_object()
        .field("value_at_x0", v0)
        .field("terminal_gap", report.terminal_gap)
        .field("obstacle_violation", report.obstacle_violation)
        .field("interior_pde_residual_on_continuation",
               report.interior_pde_residual_on_continuation)
        .field("complementarity_max", report.complementarity_max);
    w.key_object("assumption_check")
        .field("lipschitz_b", assumptions.lipschitz_estimate_b)
        .field("lipschitz_sigma", assumptions.lipschitz_estimate_sigma)
        .field("growth_fg", assumptions.growth_estimate_fg);
    w.begin_array("flags");
    for (const auto& v : assumptions.violations) w.element(v);
    w.end_array().end_object();
    w.end_object();
    write_text(dir, "solve_report.json", w.str() + "\n");
    std::cout << "solve: v(0, x0) = " << io::fmt17(v0) << "\n";
    for (const auto& v : assumptions.violations) std::cout << "  note: " << v << "\n";
    return 0;
}

int run_tree(const RunConfig& cfg) {
    auto [problem, x0] = build_problem(cfg);
    LatticeConfig lc = build_lattice_config(cfg);

    Chain chain = build_chain(problem, 0.0, x0, lc.n_steps, lc.scheme, lc.spacing);
    ValueSurface surface = snell_envelope(chain, problem);
    auto super = verify_supermartingale(surface, chain, problem);
    double eps = cfg.get_double("solver", "rule_epsilon", -1.0);
    if (eps < 0.0) eps = default_rule_epsilon(surface);
    StoppingRule rule = smallest_optimal_rule(surface, eps);

    std::string dir = out_dir(cfg);
    {
        std::ostringstream os;
        write_surface_csv(os, chain, surface);
        write_text(dir, "tree_surface.csv", os.str());
    }
    {
        std::ostringstream os;
        write_rule_csv(os, chain, rule);
        write_text(dir, "tree_rule.csv", os.str());
    }
    io::JsonWriter w;
    w.begin_object()
        .field("root_value", surface.value[0][0])
        .field("scheme", chain.scheme_tag)
        .field("n_steps", lc.n_steps)
        .field("rule_epsilon", eps)
        .field("supermartingale_violation", super.max_violation)
        .field("continuation_equality_gap", super.equality_gap_on_continuation)
        .end_object();
    write_text(dir, "tree_report.json", w.str() + "\n");
    std::cout << "tree: root value = " << io::fmt17(surface.value[0][0]) << " (" << chain.scheme_tag
              << ")\n";
    return 0;
}

int run_price(const RunConfig& cfg) {
    auto [problem, x0] = build_problem(cfg);
    Grid grid = build_grid(cfg, problem, x0);
    SolveOptions opt = build_solve_options(cfg);
    const int n_paths = static_cast<int>(cfg.get_int("mc", "n_paths", 20000));
    const int n_steps = static_cast<int>(cfg.get_int("mc", "n_steps", 200));
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("mc", "seed", 1));
    const int degree = static_cast<int>(cfg.get_int("mc", "basis_degree", 3));

    PdeSurface surface = solve_variational_inequality(problem, grid, opt);
    double v0 = surface_value_at(surface, grid, 0, x0);

    PathBundle bundle = simulate(problem, 0.0, x0, n_steps, n_paths, seed);
    double eps = cfg.get_double("solver", "rule_epsilon", -1.0);
    if (eps < 0.0) eps = std::max(opt.tol * 10.0, 1e-10);
    ValueEstimate rule_est = evaluate_rule(problem, bundle, RuleSource::pde(surface, grid), eps);
    ValueEstimate lsmc = longstaff_schwartz(problem, bundle, degree);
    if (cfg.get_bool("mc", "out_of_sample", false)) {
        PathBundle fresh = simulate(problem, 0.0, x0, n_steps, n_paths, seed + 1);
        lsmc = longstaff_schwartz(problem, bundle, degree, &fresh);
    }

    std::string dir = out_dir(cfg);
    std::ostringstream table;
    table << estimate_csv_header() << "\n";
    ValueEstimate pde_row;
    pde_row.method_tag = "pde";
    pde_row.mean = v0;
    pde_row.n_paths = 0;
    table << estimate_csv_row(pde_row) << "\n"
          << estimate_csv_row(rule_est) << "\n"
          << estimate_csv_row(lsmc) << "\n";
    write_text(dir, "price_table.csv", table.str());

    io::JsonWriter w;
    w.begin_object().field("pde_value", v0);
    w.key_object("rule")
        .field("mean", rule_est.mean)
        .field("std_error", rule_est.std_error)
        .field("offgrid_fraction", rule_est.offgrid_fraction)
        .end_object();
    w.key_object("lsmc")
        .field("method", lsmc.method_tag)
        .field("mean", lsmc.mean)
        .field("std_error", lsmc.std_error)
        .end_object();
    w.end_object();
    write_text(dir, "price_report.json", w.str() + "\n");

    std::cout << "price: pde=" << io::fmt17(v0) << " rule=" << io::fmt17(rule_est.mean)
              << " (se " << io::fmt17(rule_est.std_error) << ") lsmc=" << io::fmt17(lsmc.mean)
              << " (se " << io::fmt17(lsmc.std_error) << ")\n";
    return 0;
}

int run_compare(const RunConfig& cfg) {
    auto [problem, x0] = build_problem(cfg);
    Grid grid = build_grid(cfg, problem, x0);
    SolveOptions opt = build_solve_options(cfg);
    LatticeConfig lc = build_lattice_config(cfg);
    const int n_paths = static_cast<int>(cfg.get_int("mc", "n_paths", 20000));
    const int n_steps = static_cast<int>(cfg.get_int("mc", "n_steps", 200));
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("mc", "seed", 1));
    const int degree = static_cast<int>(cfg.get_int("mc", "basis_degree", 3));

    PdeSurface surface = solve_variational_inequality(problem, grid, opt);
    double pde_value = surface_value_at(surface, grid, 0, x0);

    Chain chain = build_chain(problem, 0.0, x0, lc.n_steps, lc.scheme, lc.spacing);
    ValueSurface tree_surface = snell_envelope(chain, problem);
    double tree_value = tree_surface.value[0][0];

    PathBundle bundle = simulate(problem, 0.0, x0, n_steps, n_paths, seed);
    ValueEstimate lsmc = longstaff_schwartz(problem, bundle, degree);
    double eps = cfg.get_double("solver", "rule_epsilon", -1.0);
    if (eps < 0.0) eps = std::max(opt.tol * 10.0, 1e-10);
    ValueEstimate rule_est = evaluate_rule(problem, bundle, RuleSource::pde(surface, grid), eps);

    std::string dir = out_dir(cfg);
    if (cfg.get_string("output", "format", "csv") == "json") {
        io::JsonWriter w;
        w.begin_object()
            .field("pde", pde_value)
            .field("lattice", tree_value);
        w.key_object("lsmc").field("mean", lsmc.mean).field("std_error", lsmc.std_error).end_object();
        w.key_object("rule_pde")
            .field("mean", rule_est.mean)
            .field("std_error", rule_est.std_error)
            .end_object();
        w.end_object();
        write_text(dir, "compare.json", w.str() + "\n");
    } else {
        std::ostringstream table;
        table << "method,value,std_error\n";
        table << "pde," << io::fmt17(pde_value) << ",0\n";
        table << "lattice," << io::fmt17(tree_value) << ",0\n";
        table << "lsmc," << io::fmt17(lsmc.mean) << "," << io::fmt17(lsmc.std_error) << "\n";
        table << "rule-pde," << io::fmt17(rule_est.mean) << "," << io::fmt17(rule_est.std_error)
              << "\n";
        write_text(dir, "compare.csv", table.str());
    }

    std::cout << "compare: pde=" << io::fmt17(pde_value) << " lattice=" << io::fmt17(tree_value)
              << " lsmc=" << io::fmt17(lsmc.mean) << " rule=" << io::fmt17(rule_est.mean) << "\n";
    return 0;
}

// --------------------------- verification suites ---------------------------

int verify_key_equality_suite(const RunConfig& cfg) {
    const int n_spaces = static_cast<int>(cfg.get_int("verify", "spaces", 100));
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("verify", "seed", 7));
    SpaceGenParams gp = gen_params(cfg);

    std::string dir0 = out_dir(cfg);
    int pass = 0;
    Rational worst(0);
    for (int i = 0; i < n_spaces; ++i) {
        Rng rng(seed, static_cast<std::uint64_t>(i));
        FiniteFilteredSpace space = random_product_space(rng, gp);
        if (i == 0) {
            // store/load round trip through the JSON schema; the reloaded
            // space drives the first verification
            write_text(dir0, "space_sample.json", space_to_json(space));
            space = space_from_json(io::read_file(dir0 + "/space_sample.json"));
        }
        GainTable gains = random_gain_table(space, rng, gp);
        StoppingTimeTable theta = random_adapted_time(space, rng);

        auto rep = verify_key_equality(space, theta, gains);
        bool ok = rep.max_gap == Rational(0);
        // restricted and unrestricted values must agree atomwise as well
        for (int a = 0; a < space.n_atoms() && ok; ++a)
            ok = rep.full_values[a] == rep.restricted_values[a];
        if (ok) ++pass;
        worst = Rational::max(worst, rep.max_gap);
    }
    std::string dir = out_dir(cfg);
    io::JsonWriter w;
    w.begin_object()
        .field("suite", "key-equality")
        .field("manifest", kSpaceGenManifestVersion)
        .field("seed", static_cast<unsigned long long>(seed))
        .field("spaces", n_spaces)
        .field("passed", pass)
        .field("max_gap", worst.str())
        .end_object();
    write_text(dir, "verify_key_equality.json", w.str() + "\n");
    std::cout << "key-equality: " << pass << "/" << n_spaces << " gap=" << worst.str() << "\n";
    return pass == n_spaces ? 0 : 1;
}

int verify_smallest_optimal_suite(const RunConfig& cfg) {
    const int per_space = static_cast<int>(cfg.get_int("verify", "gains_per_space", 50));
    const int max_depth = static_cast<int>(cfg.get_int("verify", "max_depth", 3));
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("verify", "seed", 11));
    SpaceGenParams gp = gen_params(cfg);

    int total = 0, pass = 0;
    for (int depth = 1; depth <= max_depth; ++depth) {
        for (int i = 0; i < per_space; ++i) {
            Rng rng(seed, static_cast<std::uint64_t>(depth) * 1000 + i);
            FiniteFilteredSpace space = binary_space(depth, rng);
            GainTable gains = random_gain_table(space, rng, gp);
            auto rep = verify_smallest_optimal(space, gains);
            ++total;
            if (rep.is_smallest) ++pass;
        }
    }
    std::string dir = out_dir(cfg);
    io::JsonWriter w;
    w.begin_object()
        .field("suite", "smallest-optimal")
        .field("seed", static_cast<unsigned long long>(seed))
        .field("checks", total)
        .field("passed", pass)
        .end_object();
    write_text(dir, "verify_smallest_optimal.json", w.str() + "\n");
    std::cout << "smallest-optimal: " << pass << "/" << total << "\n";
    return pass == total ? 0 : 1;
}

int verify_dpp_suite(const RunConfig& cfg) {
    const int n_chains = static_cast<int>(cfg.get_int("verify", "chains", 5));
    const int per_chain = static_cast<int>(cfg.get_int("verify", "tau_per_chain", 20));
    const int depth = static_cast<int>(cfg.get_int("verify", "chain_depth", 4));
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("verify", "seed", 13));

    int total = 0, pass = 0;
    Rational worst_exact(0);
    double worst_float = 0.0;
    for (int c = 0; c < n_chains; ++c) {
        Rng rng(seed, static_cast<std::uint64_t>(c));
        RationalChain chain = random_rational_chain(rng, depth);
        RationalChainGain gains = random_rational_chain_gain(chain, rng);
        auto surface = snell_envelope_core(chain, gains);
        auto tree = chain_paths(chain);

        // float twin of the same chain
        Chain fchain;
        fchain.t0 = chain.t0.to_double();
        fchain.dt = chain.dt.to_double();
        fchain.d = 1;
        fchain.scheme_tag = chain.scheme_tag;
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
            fgains.run_inc[k].resize(chain.layers[k].size());
            fgains.obstacle[k].resize(chain.layers[k].size());
            for (std::size_t i = 0; i < chain.layers[k].size(); ++i) {
                fgains.run_inc[k][i] = gains.run_inc[k][i].to_double();
                fgains.obstacle[k][i] = gains.obstacle[k][i].to_double();
            }
        }
        auto fsurface = snell_envelope_core(fchain, fgains);
        double fscale = std::max(1.0, std::fabs(fsurface.value[0][0]));

        for (int i = 0; i < per_chain; ++i) {
            auto tau = random_chain_time(tree, rng);
            Rational r = verify_dpp_core(chain, gains, surface, tau);
            double fr = verify_dpp_core(fchain, fgains, fsurface, tau);
            ++total;
            if (r == Rational(0) && fr / fscale <= 1e-12) ++pass;
            worst_exact = Rational::max(worst_exact, r);
            worst_float = std::max(worst_float, fr / fscale);
        }
    }
    std::string dir = out_dir(cfg);
    io::JsonWriter w;
    w.begin_object()
        .field("suite", "dpp")
        .field("seed", static_cast<unsigned long long>(seed))
        .field("checks", total)
        .field("passed", pass)
        .field("max_residual_exact", worst_exact.str())
        .field("max_residual_float_rel", worst_float)
        .end_object();
    write_text(dir, "verify_dpp.json", w.str() + "\n");
    std::cout << "dpp: " << pass << "/" << total << " exact residual=" << worst_exact.str()
              << " float rel=" << io::fmt17(worst_float) << "\n";
    return pass == total ? 0 : 1;
}

int verify_approx_suite(const RunConfig& cfg) {
    const int n_spaces = static_cast<int>(cfg.get_int("verify", "spaces", 50));
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("verify", "seed", 17));
    SpaceGenParams gp = gen_params(cfg);
    gp.max_stopping_times =
        static_cast<unsigned long long>(cfg.get_int("verify", "stopping_cap", 600));

    int total = 0, pass = 0;
    std::string first_trace;
    for (int i = 0; i < n_spaces; ++i) {
        Rng rng(seed, static_cast<std::uint64_t>(i));
        FiniteFilteredSpace space = random_product_space(rng, gp);
        auto all_taus = enumerate_stopping_times(space, gp.max_stopping_times);
        for (const auto& tau : all_taus) {
            auto trace = approximate_stopping_time(space, tau);
            ++total;
            if (trace.all_checks_pass()) ++pass;
            if (first_trace.empty()) first_trace = trace_to_json(trace, space, tau);
        }
    }
    std::string dir = out_dir(cfg);
    if (!first_trace.empty()) write_text(dir, "verify_approx_trace_sample.json", first_trace);
    io::JsonWriter w;
    w.begin_object()
        .field("suite", "approx")
        .field("manifest", kSpaceGenManifestVersion)
        .field("seed", static_cast<unsigned long long>(seed))
        .field("spaces", n_spaces)
        .field("stopping_times_checked", total)
        .field("passed", pass)
        .end_object();
    write_text(dir, "verify_approx.json", w.str() + "\n");
    std::cout << "approx: " << pass << "/" << total << " reconstructions exact\n";
    return pass == total ? 0 : 1;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParseError*>(&e)) return 2;
    return 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"finite-horizon optimal stopping toolkit"};
    app.require_subcommand(1);

    Common c_solve, c_tree, c_sim, c_price, c_compare, c_verify;
    auto* cmd_solve = app.add_subcommand("solve", "PDE obstacle solve + residual report");
    add_common(cmd_solve, c_solve);
    auto* cmd_tree = app.add_subcommand("tree", "lattice build + Snell envelope + rule surface");
    add_common(cmd_tree, c_tree);
    auto* cmd_sim = app.add_subcommand("simulate", "Euler-Maruyama path bundle CSV");
    add_common(cmd_sim, c_sim);
    auto* cmd_price = app.add_subcommand("price", "solve + rule evaluation + LSMC table");
    add_common(cmd_price, c_price);
    auto* cmd_compare = app.add_subcommand("compare", "pde vs lattice vs MC summary");
    add_common(cmd_compare, c_compare);

    auto* cmd_verify = app.add_subcommand("verify", "theorem verification suites");
    std::string suite;
    cmd_verify
        ->add_option("suite", suite, "dpp | key-equality | smallest-optimal | approx")
        ->required();
    add_common(cmd_verify, c_verify);

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_solve->parsed()) return run_solve(load_config(c_solve));
        if (cmd_tree->parsed()) return run_tree(load_config(c_tree));
        if (cmd_sim->parsed()) return run_simulate(load_config(c_sim));
        if (cmd_price->parsed()) return run_price(load_config(c_price));
        if (cmd_compare->parsed()) return run_compare(load_config(c_compare));
        if (cmd_verify->parsed()) {
            RunConfig cfg = load_config(c_verify);
            if (suite == "key-equality") return verify_key_equality_suite(cfg);
            if (suite == "smallest-optimal") return verify_smallest_optimal_suite(cfg);
            if (suite == "dpp") return verify_dpp_suite(cfg);
            if (suite == "approx") return verify_approx_suite(cfg);
            throw ConfigError("unknown verify suite '" + suite + "'");
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return 2;
}
