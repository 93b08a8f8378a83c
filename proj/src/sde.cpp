#include "snell/sde.hpp"

#include <cmath>
#include <ostream>

#include "snell/errors.hpp"
#include "snell/io.hpp"
#include "snell/rng.hpp"

namespace snell {

namespace {

// One Euler step: x += b dt + sigma dW. Buffers are caller-owned scratch.
// A coefficient blowing up mid-path is reported as divergence of that path.
void euler_step(const StoppingProblem& p, double t, double dt, std::span<const double> x,
                std::span<const double> dw, std::span<double> xn, std::vector<double>& bbuf,
                std::vector<double>& sbuf, int path, int step) {
    try {
        p.b.evaluate(t, x, bbuf);
        p.sigma.evaluate(t, x, sbuf);
    } catch (const EvalError& e) {
        throw DivergenceError("simulation diverged on path " + std::to_string(path) +
                              " at step " + std::to_string(step) + ": " + e.what());
    }
    for (int i = 0; i < p.d; ++i) {
        double v = x[i] + bbuf[i] * dt;
        const double* row = sbuf.data() + static_cast<std::size_t>(i) * p.m;
        for (int j = 0; j < p.m; ++j) v += row[j] * dw[j];
        xn[i] = v;
    }
}

void check_finite(std::span<const double> x, int path, int step) {
    for (double v : x) {
        if (!std::isfinite(v))
            throw DivergenceError("simulation diverged: non-finite state on path " +
                                  std::to_string(path) + " at step " + std::to_string(step));
    }
}

}  // namespace

PathBundle simulate(const StoppingProblem& p, double t0, std::span<const double> x0, int n_steps,
                    int n_paths, std::uint64_t seed) {
    p.validate();
    if (static_cast<int>(x0.size()) != p.d) throw DimensionError("simulate: x0 has wrong dimension");
    if (!(t0 >= 0.0 && t0 < p.T)) throw ConfigError("simulate: t0 must lie in [0, T)");
    if (n_steps < 1 || n_paths < 1) throw ConfigError("simulate: need n_steps >= 1 and n_paths >= 1");

    PathBundle b;
    b.t0 = t0;
    b.n_paths = n_paths;
    b.n_steps = n_steps;
    b.d = p.d;
    b.m = p.m;
    b.seed = seed;
    b.times.resize(static_cast<std::size_t>(n_steps) + 1);
    const double dt = (p.T - t0) / n_steps;
    for (int k = 0; k <= n_steps; ++k) b.times[k] = t0 + dt * k;
    b.times.back() = p.T;

    b.states.assign(static_cast<std::size_t>(n_paths) * (n_steps + 1) * p.d, 0.0);
    b.increments.assign(static_cast<std::size_t>(n_paths) * n_steps * p.m, 0.0);

    const double sqrt_dt = std::sqrt(dt);
    std::vector<double> bbuf(static_cast<std::size_t>(p.d));
    std::vector<double> sbuf(static_cast<std::size_t>(p.d) * p.m);

    for (int path = 0; path < n_paths; ++path) {
        Rng rng(seed, static_cast<std::uint64_t>(path));
        double* row = b.states.data() + static_cast<std::size_t>(path) * (n_steps + 1) * p.d;
        double* inc = b.increments.data() + static_cast<std::size_t>(path) * n_steps * p.m;
        for (int i = 0; i < p.d; ++i) row[i] = x0[i];
        for (int k = 0; k < n_steps; ++k) {
            double* dw = inc + static_cast<std::size_t>(k) * p.m;
            for (int j = 0; j < p.m; ++j) dw[j] = rng.next_normal() * sqrt_dt;
            std::span<const double> xk(row + static_cast<std::size_t>(k) * p.d,
                                       static_cast<std::size_t>(p.d));
            std::span<double> xk1(row + static_cast<std::size_t>(k + 1) * p.d,
                                  static_cast<std::size_t>(p.d));
            euler_step(p, b.times[k], b.times[k + 1] - b.times[k], xk,
                       std::span<const double>(dw, static_cast<std::size_t>(p.m)), xk1, bbuf, sbuf,
                       path, k);
            check_finite(xk1, path, k + 1);
        }
    }
    return b;
}

PathBundle restart_at(const StoppingProblem& p, const PathBundle& bundle,
                      std::span<const int> stop_indices) {
    if (static_cast<int>(stop_indices.size()) != bundle.n_paths)
        throw DimensionError("restart_at: one stop index per path required");
    for (int i = 0; i < bundle.n_paths; ++i)
        if (stop_indices[i] < 0 || stop_indices[i] > bundle.n_steps)
            throw DimensionError("restart_at: stop index out of range on path " + std::to_string(i));

    PathBundle out = bundle;
    std::vector<double> bbuf(static_cast<std::size_t>(p.d));
    std::vector<double> sbuf(static_cast<std::size_t>(p.d) * p.m);

    for (int path = 0; path < bundle.n_paths; ++path) {
        const int k0 = stop_indices[path];
        double* row = out.states.data() + static_cast<std::size_t>(path) * (bundle.n_steps + 1) * p.d;
        const double* inc =
            bundle.increments.data() + static_cast<std::size_t>(path) * bundle.n_steps * p.m;
        for (int k = k0; k < bundle.n_steps; ++k) {
            std::span<const double> xk(row + static_cast<std::size_t>(k) * p.d,
                                       static_cast<std::size_t>(p.d));
            std::span<double> xk1(row + static_cast<std::size_t>(k + 1) * p.d,
                                  static_cast<std::size_t>(p.d));
            std::span<const double> dw(inc + static_cast<std::size_t>(k) * p.m,
                                       static_cast<std::size_t>(p.m));
            euler_step(p, bundle.times[k], bundle.times[k + 1] - bundle.times[k], xk, dw, xk1, bbuf,
                       sbuf, path, k);
            check_finite(xk1, path, k + 1);
        }
    }
    return out;
}

MomentCheck moment_check(const PathBundle& bundle, int p_exponent) {
    if (p_exponent < 2 || p_exponent % 2 != 0)
        throw ConfigError("moment_check: exponent must be an even integer >= 2");

    double acc = 0.0;
    for (int path = 0; path < bundle.n_paths; ++path) {
        double best = 0.0;
        for (int k = 0; k <= bundle.n_steps; ++k) {
            auto x = bundle.state(path, k);
            double n2 = 0.0;
            for (double v : x) n2 += v * v;
            best = std::max(best, n2);
        }
        acc += std::pow(best, p_exponent / 2.0);
    }

    MomentCheck out;
    out.sup_moment = acc / bundle.n_paths;
    auto x0 = bundle.state(0, 0);
    double n2 = 0.0;
    for (double v : x0) n2 += v * v;
    out.bound_ratio = out.sup_moment / (1.0 + std::pow(n2, p_exponent / 2.0));
    return out;
}

void write_bundle_csv(std::ostream& os, const PathBundle& bundle) {
    os << "path,step,time";
    for (int i = 1; i <= bundle.d; ++i) os << ",x_" << i;
    os << "\n";
    for (int path = 0; path < bundle.n_paths; ++path) {
        for (int k = 0; k <= bundle.n_steps; ++k) {
            os << path << "," << k << "," << io::fmt17(bundle.times[k]);
            for (double v : bundle.state(path, k)) os << "," << io::fmt17(v);
            os << "\n";
        }
    }
}

}  // namespace snell
