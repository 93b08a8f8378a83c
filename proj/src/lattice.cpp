#include "snell/lattice.hpp"

#include <algorithm>
#include <ostream>

#include "snell/io.hpp"

namespace snell {

LatticeScheme lattice_scheme_from_string(const std::string& s) {
    if (s == "binomial") return LatticeScheme::Binomial;
    if (s == "trinomial") return LatticeScheme::Trinomial;
    if (s == "tensor-trinomial") return LatticeScheme::TensorTrinomial;
    throw ConfigError("unknown lattice scheme '" + s + "'");
}

namespace {

double sigma_row_norm(const StoppingProblem& p, double t, std::span<const double> x, int row) {
    auto s = p.diffusion(t, x);
    double acc = 0.0;
    for (int j = 0; j < p.m; ++j) acc += s[static_cast<std::size_t>(row) * p.m + j] *
                                         s[static_cast<std::size_t>(row) * p.m + j];
    return std::sqrt(acc);
}

bool sigma_scales_with_state(const StoppingProblem& p, double t0, std::span<const double> x0) {
    for (int i = 0; i < p.d; ++i)
        if (!(x0[i] > 0.0)) return false;
    double base = 0.0;
    for (int i = 0; i < p.d; ++i) base = std::max(base, sigma_row_norm(p, t0, x0, i));
    if (base == 0.0) return false;
    std::vector<double> xs(x0.begin(), x0.end());
    for (double scale : {0.5, 1.5}) {
        for (int i = 0; i < p.d; ++i) xs[i] = scale * x0[i];
        for (int i = 0; i < p.d; ++i) {
            double got = sigma_row_norm(p, t0, xs, i);
            double want = scale * sigma_row_norm(p, t0, x0, i);
            double denom = std::max(1e-300, std::fabs(want));
            if (std::fabs(got - want) / denom > 1e-9) return false;
        }
    }
    return true;
}

void check_probability(double prob, const char* branch) {
    if (!(prob >= -1e-14 && prob <= 1.0 + 1e-14))
        throw StabilityError(std::string("lattice ") + branch + " probability " +
                             std::to_string(prob) +
                             " outside [0,1]; use a smaller time step or wider spacing");
}

Chain deterministic_chain(const StoppingProblem& p, double t0, std::span<const double> x0,
                          int n_steps, const char* tag) {
    Chain chain;
    chain.t0 = t0;
    chain.dt = (p.T - t0) / n_steps;
    chain.d = p.d;
    chain.scheme_tag = std::string(tag) + "-deterministic";
    chain.layers.resize(n_steps + 1);

    std::vector<double> x(x0.begin(), x0.end());
    for (int k = 0; k <= n_steps; ++k) {
        Chain::Node node;
        node.state = x;
        chain.layers[k].push_back(node);
        if (k < n_steps) {
            auto b = p.drift(t0 + k * chain.dt, x);
            for (int i = 0; i < p.d; ++i) x[i] += b[i] * chain.dt;
            chain.layers[k].back().next.push_back({0, 1.0});
        }
    }
    return chain;
}

Chain build_binomial(const StoppingProblem& p, double t0, std::span<const double> x0, int n_steps,
                     bool multiplicative) {
    Chain chain;
    chain.t0 = t0;
    chain.dt = (p.T - t0) / n_steps;
    chain.d = 1;
    chain.scheme_tag = multiplicative ? "binomial-multiplicative" : "binomial-additive";
    chain.layers.resize(n_steps + 1);

    const double sig0 = sigma_row_norm(p, t0, x0, 0);
    const double h = sig0 * std::sqrt(chain.dt);
    const double u = multiplicative ? std::exp(sig0 / x0[0] * std::sqrt(chain.dt)) : 1.0;

    for (int k = 0; k <= n_steps; ++k) {
        chain.layers[k].resize(k + 1);
        for (int j = 0; j <= k; ++j) {
            double x = multiplicative ? x0[0] * std::pow(u, 2 * j - k)
                                      : x0[0] + (2 * j - k) * h;
            chain.layers[k][j].state = {x};
        }
    }
    for (int k = 0; k < n_steps; ++k) {
        double t = t0 + k * chain.dt;
        for (int j = 0; j <= k; ++j) {
            auto& node = chain.layers[k][j];
            double b = p.drift(t, node.state)[0];
            double pu;
            if (multiplicative) {
                double d = 1.0 / u;
                pu = (std::exp(b / node.state[0] * chain.dt) - d) / (u - d);
            } else {
                pu = 0.5 * (1.0 + b * chain.dt / h);
            }
            check_probability(pu, "up");
            check_probability(1.0 - pu, "down");
            node.next.push_back({j + 1, pu});
            node.next.push_back({j, 1.0 - pu});
        }
    }
    return chain;
}

// trinomial branch probabilities matching E[dX] and E[dX^2] for moves
// (a_up, a_dn) away from the node
std::pair<double, double> trinomial_probs(double a_up, double a_dn, double mean, double second) {
    const double det = a_up * a_dn * (a_dn - a_up);
    double pu = (mean * a_dn * a_dn - second * a_dn) / det;
    double pd = (second * a_up - mean * a_up * a_up) / det;
    return {pu, pd};
}

Chain build_trinomial(const StoppingProblem& p, double t0, std::span<const double> x0, int n_steps,
                      bool multiplicative) {
    Chain chain;
    chain.t0 = t0;
    chain.dt = (p.T - t0) / n_steps;
    chain.d = 1;
    chain.scheme_tag = multiplicative ? "trinomial-multiplicative" : "trinomial-additive";
    chain.layers.resize(n_steps + 1);

    const double sig0 = sigma_row_norm(p, t0, x0, 0);
    const double h = sig0 * std::sqrt(3.0 * chain.dt);
    const double u = multiplicative ? std::exp(sig0 / x0[0] * std::sqrt(3.0 * chain.dt)) : 1.0;

    for (int k = 0; k <= n_steps; ++k) {
        chain.layers[k].resize(2 * k + 1);
        for (int j = 0; j <= 2 * k; ++j) {
            double x = multiplicative ? x0[0] * std::pow(u, j - k) : x0[0] + (j - k) * h;
            chain.layers[k][j].state = {x};
        }
    }
    for (int k = 0; k < n_steps; ++k) {
        double t = t0 + k * chain.dt;
        for (int j = 0; j <= 2 * k; ++j) {
            auto& node = chain.layers[k][j];
            double x = node.state[0];
            double b = p.drift(t, node.state)[0];
            double sig = sigma_row_norm(p, t, node.state, 0);
            double mean = b * chain.dt;
            double second = sig * sig * chain.dt + mean * mean;
            double a_up = multiplicative ? x * (u - 1.0) : h;
            double a_dn = multiplicative ? x * (1.0 / u - 1.0) : -h;
            auto [pu, pd] = trinomial_probs(a_up, a_dn, mean, second);
            double pm = 1.0 - pu - pd;
            check_probability(pu, "up");
            check_probability(pm, "middle");
            check_probability(pd, "down");
            node.next.push_back({j + 2, pu});
            node.next.push_back({j + 1, pm});
            node.next.push_back({j, 1.0 - (pu + pm)});  // exact unit sum
        }
    }
    return chain;
}

Chain build_tensor_trinomial(const StoppingProblem& p, double t0, std::span<const double> x0,
                             int n_steps) {
    Chain chain;
    chain.t0 = t0;
    chain.dt = (p.T - t0) / n_steps;
    chain.d = 2;
    chain.scheme_tag = "tensor-trinomial";
    chain.layers.resize(n_steps + 1);

    double h1 = sigma_row_norm(p, t0, x0, 0) * std::sqrt(3.0 * chain.dt);
    double h2 = sigma_row_norm(p, t0, x0, 1) * std::sqrt(3.0 * chain.dt);
    if (h1 == 0.0 || h2 == 0.0)
        throw StabilityError("tensor-trinomial needs nonzero diffusion in both components");

    auto width = [](int k) { return 2 * k + 1; };
    auto flat = [&](int k, int j1, int j2) { return j1 * width(k) + j2; };

    for (int k = 0; k <= n_steps; ++k) {
        chain.layers[k].resize(static_cast<std::size_t>(width(k)) * width(k));
        for (int j1 = 0; j1 < width(k); ++j1)
            for (int j2 = 0; j2 < width(k); ++j2)
                chain.layers[k][flat(k, j1, j2)].state = {x0[0] + (j1 - k) * h1,
                                                          x0[1] + (j2 - k) * h2};
    }
    std::vector<double> sig(static_cast<std::size_t>(p.d) * p.m);
    for (int k = 0; k < n_steps; ++k) {
        double t = t0 + k * chain.dt;
        for (int j1 = 0; j1 < width(k); ++j1) {
            for (int j2 = 0; j2 < width(k); ++j2) {
                auto& node = chain.layers[k][flat(k, j1, j2)];
                auto b = p.drift(t, node.state);
                p.sigma.evaluate(t, node.state, sig);
                // local covariance a = sigma sigma^T; the product lattice only
                // represents diagonal diffusion
                double a11 = 0.0, a22 = 0.0, a12 = 0.0;
                for (int j = 0; j < p.m; ++j) {
                    a11 += sig[j] * sig[j];
                    a22 += sig[static_cast<std::size_t>(p.m) + j] * sig[static_cast<std::size_t>(p.m) + j];
                    a12 += sig[j] * sig[static_cast<std::size_t>(p.m) + j];
                }
                if (std::fabs(a12) > 1e-10 * std::max(1.0, std::sqrt(a11 * a22)))
                    throw StabilityError("tensor-trinomial requires diagonal sigma sigma^T");

                auto [pu1, pd1] = trinomial_probs(h1, -h1, b[0] * chain.dt,
                                                  a11 * chain.dt + b[0] * b[0] * chain.dt * chain.dt);
                auto [pu2, pd2] = trinomial_probs(h2, -h2, b[1] * chain.dt,
                                                  a22 * chain.dt + b[1] * b[1] * chain.dt * chain.dt);
                double pm1 = 1.0 - pu1 - pd1, pm2 = 1.0 - pu2 - pd2;
                for (double q : {pu1, pm1, pd1, pu2, pm2, pd2}) check_probability(q, "tensor");

                const double q1[3] = {pd1, pm1, pu1};
                const double q2[3] = {pd2, pm2, pu2};
                double partial = 0.0;
                for (int m1 = 0; m1 < 3; ++m1)
                    for (int m2 = 0; m2 < 3; ++m2) {
                        double q = (m1 == 2 && m2 == 2) ? 1.0 - partial : q1[m1] * q2[m2];
                        partial += q;
                        node.next.push_back({flat(k + 1, j1 + m1, j2 + m2), q});
                    }
            }
        }
    }
    return chain;
}

}  // namespace

Chain build_chain(const StoppingProblem& p, double t0, std::span<const double> x0, int n_steps,
                  LatticeScheme scheme, LatticeSpacing spacing) {
    p.validate();
    if (n_steps < 1) throw ConfigError("build_chain: n_steps >= 1 required");
    if (static_cast<int>(x0.size()) != p.d) throw DimensionError("build_chain: x0 dimension mismatch");
    if (scheme == LatticeScheme::TensorTrinomial) {
        if (p.d != 2) throw ConfigError("tensor-trinomial needs d = 2");
    } else if (p.d != 1) {
        throw ConfigError("binomial/trinomial lattices need d = 1 (use tensor-trinomial for d = 2)");
    }

    double sig_max = 0.0;
    for (int i = 0; i < p.d; ++i) sig_max = std::max(sig_max, sigma_row_norm(p, t0, x0, i));
    const char* tag = scheme == LatticeScheme::Binomial ? "binomial"
                      : scheme == LatticeScheme::Trinomial ? "trinomial"
                                                           : "tensor-trinomial";
    if (sig_max == 0.0) return deterministic_chain(p, t0, x0, n_steps, tag);

    bool multiplicative;
    switch (spacing) {
        case LatticeSpacing::Additive: multiplicative = false; break;
        case LatticeSpacing::Multiplicative: multiplicative = true; break;
        default: multiplicative = sigma_scales_with_state(p, t0, x0); break;
    }
    if (multiplicative && scheme == LatticeScheme::TensorTrinomial)
        multiplicative = false;  // tensor lattice is additive only
    if (multiplicative)
        for (int i = 0; i < p.d; ++i)
            if (!(x0[i] > 0.0))
                throw ConfigError("multiplicative spacing needs a strictly positive start state");

    switch (scheme) {
        case LatticeScheme::Binomial: return build_binomial(p, t0, x0, n_steps, multiplicative);
        case LatticeScheme::Trinomial: return build_trinomial(p, t0, x0, n_steps, multiplicative);
        case LatticeScheme::TensorTrinomial: return build_tensor_trinomial(p, t0, x0, n_steps);
    }
    throw ConfigError("unreachable lattice scheme");
}

ChainGain evaluate_chain_gain(const Chain& chain, const StoppingProblem& p) {
    ChainGain g;
    const int N = chain.last_layer();
    g.run_inc.resize(N + 1);
    g.obstacle.resize(N + 1);
    for (int k = 0; k <= N; ++k) {
        double t = chain.t0 + k * chain.dt;
        const auto& layer = chain.layers[k];
        g.run_inc[k].resize(layer.size(), 0.0);
        g.obstacle[k].resize(layer.size());
        for (std::size_t i = 0; i < layer.size(); ++i) {
            if (k < N) g.run_inc[k][i] = p.gain_rate(t, layer[i].state) * chain.dt;
            g.obstacle[k][i] = p.terminal_gain(layer[i].state);
        }
    }
    return g;
}

MomentDiagnostics moment_diagnostics(const Chain& chain, const StoppingProblem& p) {
    MomentDiagnostics diag;
    std::vector<double> sig(static_cast<std::size_t>(p.d) * p.m);
    for (int k = 0; k < chain.last_layer(); ++k) {
        double t = chain.t0 + k * chain.dt;
        for (const auto& node : chain.layers[k]) {
            auto b = p.drift(t, node.state);
            p.sigma.evaluate(t, node.state, sig);
            for (int i = 0; i < p.d; ++i) {
                double mean = 0.0, second = 0.0;
                for (const auto& tr : node.next) {
                    double dx = chain.layers[k + 1][tr.child].state[i] - node.state[i];
                    mean += tr.prob * dx;
                    second += tr.prob * dx * dx;
                }
                double var = second - mean * mean;
                double a_ii = 0.0;
                for (int j = 0; j < p.m; ++j)
                    a_ii += sig[static_cast<std::size_t>(i) * p.m + j] *
                            sig[static_cast<std::size_t>(i) * p.m + j];
                diag.max_mean_error = std::max(diag.max_mean_error,
                                               std::fabs(mean - b[i] * chain.dt));
                diag.max_var_error = std::max(diag.max_var_error,
                                              std::fabs(var - a_ii * chain.dt));
            }
        }
    }
    return diag;
}

ValueSurface snell_envelope(const Chain& chain, const StoppingProblem& p) {
    return snell_envelope_core(chain, evaluate_chain_gain(chain, p));
}

double default_rule_epsilon(const ValueSurface& surface) {
    double scale = 0.0;
    for (const auto& layer : surface.value)
        for (double v : layer) scale = std::max(scale, std::fabs(v));
    return 10.0 * std::numeric_limits<double>::epsilon() * scale;
}

StoppingRule smallest_optimal_rule(const ValueSurface& surface, double epsilon) {
    StoppingRule rule;
    rule.epsilon = epsilon;
    rule.stop.resize(surface.value.size());
    for (std::size_t k = 0; k < surface.value.size(); ++k) {
        rule.stop[k].resize(surface.value[k].size());
        for (std::size_t i = 0; i < surface.value[k].size(); ++i)
            rule.stop[k][i] = (surface.value[k][i] - surface.obstacle[k][i] <= epsilon) ? 1 : 0;
    }
    return rule;
}

std::vector<std::vector<char>> smallest_optimal_rule_exact(const RationalValueSurface& surface,
                                                           const Rational& epsilon) {
    std::vector<std::vector<char>> stop(surface.value.size());
    for (std::size_t k = 0; k < surface.value.size(); ++k) {
        stop[k].resize(surface.value[k].size());
        for (std::size_t i = 0; i < surface.value[k].size(); ++i)
            stop[k][i] = (surface.value[k][i] - surface.obstacle[k][i] <= epsilon) ? 1 : 0;
    }
    return stop;
}

double verify_dpp(const Chain& chain, const StoppingProblem& p, const ValueSurface& surface,
                  const std::vector<int>& tau_prime) {
    return verify_dpp_core(chain, evaluate_chain_gain(chain, p), surface, tau_prime);
}

SupermartingaleReport<double> verify_supermartingale(const ValueSurface& surface,
                                                     const Chain& chain,
                                                     const StoppingProblem& p) {
    return verify_supermartingale(surface, chain, evaluate_chain_gain(chain, p));
}

UnrolledChain unroll_chain(const RationalChain& chain, const RationalChainGain& gains) {
    UnrolledChain out;
    out.tree = chain_paths(chain);
    const int n = static_cast<int>(out.tree.node_at.size());
    const int N = chain.last_layer();

    out.space.atom_prob = out.tree.prob;
    for (int k = 0; k <= N; ++k) out.space.times.push_back(chain.t0 + Rational(k) * chain.dt);

    out.space.filtration.resize(N + 1);
    for (int k = 0; k <= N; ++k) {
        // paths are in DFS order, so equal prefixes are contiguous
        int start = 0;
        while (start < n) {
            int end = start + 1;
            auto same_prefix = [&](int a, int b) {
                for (int j = 0; j <= k; ++j)
                    if (out.tree.node_at[a][j] != out.tree.node_at[b][j]) return false;
                return true;
            };
            while (end < n && same_prefix(start, end)) ++end;
            std::vector<int> block;
            for (int i = start; i < end; ++i) block.push_back(i);
            out.space.filtration[k].push_back(std::move(block));
            start = end;
        }
    }
    out.space.validate();

    out.gains.running.assign(N, std::vector<Rational>(n, Rational(0)));
    out.gains.terminal.assign(N + 1, std::vector<Rational>(n, Rational(0)));
    for (int path = 0; path < n; ++path) {
        for (int k = 0; k <= N; ++k) {
            int node = out.tree.node_at[path][k];
            if (k < N) out.gains.running[k][path] = gains.run_inc[k][node];
            out.gains.terminal[k][path] = gains.obstacle[k][node];
        }
    }
    return out;
}

RationalChain random_rational_chain(Rng& rng, int depth) {
    RationalChain chain;
    chain.t0 = Rational(0);
    chain.dt = Rational(1);
    chain.d = 1;
    chain.scheme_tag = "binomial-random-rational";
    chain.layers.resize(depth + 1);
    for (int k = 0; k <= depth; ++k) {
        chain.layers[k].resize(k + 1);
        for (int j = 0; j <= k; ++j) chain.layers[k][j].state = {Rational(2 * j - k)};
    }
    for (int k = 0; k < depth; ++k) {
        for (int j = 0; j <= k; ++j) {
            long long den = rng.next_int(2, 8);
            long long num = rng.next_int(1, den - 1);
            Rational pu(num, den);
            chain.layers[k][j].next.push_back({j + 1, pu});
            chain.layers[k][j].next.push_back({j, Rational(1) - pu});
        }
    }
    return chain;
}

RationalChainGain random_rational_chain_gain(const RationalChain& chain, Rng& rng, int num_range,
                                             int den_max) {
    RationalChainGain g;
    const int N = chain.last_layer();
    g.run_inc.resize(N + 1);
    g.obstacle.resize(N + 1);
    auto draw = [&]() {
        return Rational(rng.next_int(-num_range, num_range), rng.next_int(1, den_max));
    };
    for (int k = 0; k <= N; ++k) {
        g.run_inc[k].resize(chain.layers[k].size(), Rational(0));
        g.obstacle[k].resize(chain.layers[k].size());
        for (std::size_t i = 0; i < chain.layers[k].size(); ++i) {
            if (k < N) g.run_inc[k][i] = draw();
            g.obstacle[k][i] = draw();
        }
    }
    return g;
}

void write_rule_csv(std::ostream& os, const Chain& chain, const StoppingRule& rule) {
    os << "layer,time,node";
    for (int i = 1; i <= chain.d; ++i) os << ",x_" << i;
    os << ",stop\n";
    for (int k = 0; k < chain.n_layers(); ++k) {
        double t = chain.t0 + k * chain.dt;
        for (std::size_t i = 0; i < chain.layers[k].size(); ++i) {
            os << k << "," << io::fmt17(t) << "," << i;
            for (double x : chain.layers[k][i].state) os << "," << io::fmt17(x);
            os << "," << int(rule.stop[k][i]) << "\n";
        }
    }
}

void write_surface_csv(std::ostream& os, const Chain& chain, const ValueSurface& surface) {
    os << "layer,time,node";
    for (int i = 1; i <= chain.d; ++i) os << ",x_" << i;
    os << ",value,obstacle,continuation\n";
    for (int k = 0; k < chain.n_layers(); ++k) {
        double t = chain.t0 + k * chain.dt;
        for (std::size_t i = 0; i < chain.layers[k].size(); ++i) {
            os << k << "," << io::fmt17(t) << "," << i;
            for (double x : chain.layers[k][i].state) os << "," << io::fmt17(x);
            os << "," << io::fmt17(surface.value[k][i]) << "," << io::fmt17(surface.obstacle[k][i])
               << "," << int(surface.continuation[k][i]) << "\n";
        }
    }
}

}  // namespace snell
