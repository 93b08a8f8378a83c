#ifndef SNELL_SDE_HPP
#define SNELL_SDE_HPP

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "snell/model.hpp"

namespace snell {

/**
 * Euler-Maruyama sample paths on a shared uniform grid, together with the
 * Brownian increments that produced them. Keeping the increments makes the
 * discrete flow property an exact identity: re-integrating any path from any
 * index with the same increments reproduces the stored tail bit for bit.
 *
 * Layout: states[path][step][component] and increments[path][step][noise],
 * both flattened row-major.
 */
struct PathBundle {
    double t0 = 0.0;
    std::vector<double> times;       // n_steps + 1 entries, times[0] = t0, back() = T
    std::vector<double> states;      // n_paths * (n_steps+1) * d
    std::vector<double> increments;  // n_paths * n_steps * m
    int n_paths = 0;
    int n_steps = 0;
    int d = 1;
    int m = 1;
    std::uint64_t seed = 0;

    std::span<const double> state(int path, int step) const {
        return std::span<const double>(states)
            .subspan((static_cast<std::size_t>(path) * (n_steps + 1) + step) * d, d);
    }
    std::span<const double> path_states(int path) const {
        return std::span<const double>(states)
            .subspan(static_cast<std::size_t>(path) * (n_steps + 1) * d,
                     static_cast<std::size_t>(n_steps + 1) * d);
    }
};

/**
 * Simulates n_paths Euler-Maruyama paths of the problem's diffusion from
 * (t0, x0) to T on a uniform grid with n_steps steps.
 *
 * Each path consumes its own counter-based substream of the seed, so the
 * output is a pure function of (inputs, seed) regardless of evaluation
 * order. Throws DivergenceError naming the path and step if a state goes
 * non-finite.
 */
PathBundle simulate(const StoppingProblem& p, double t0, std::span<const double> x0, int n_steps,
                    int n_paths, std::uint64_t seed);

/**
 * Re-integrates every path from its stop index onward, reusing the retained
 * increments in the original arithmetic order. States before the stop index
 * are copied through, so the result must equal the input bundle exactly;
 * tests assert bitwise equality of the tails.
 */
PathBundle restart_at(const StoppingProblem& p, const PathBundle& bundle,
                      std::span<const int> stop_indices);

struct MomentCheck {
    double sup_moment = 0.0;  // mean over paths of max_k |X_k|^p
    double bound_ratio = 0.0; // sup_moment / (1 + |x0|^p)
};

/// p_exponent must be an even integer >= 2.
MomentCheck moment_check(const PathBundle& bundle, int p_exponent);

/// CSV with header `path,step,time,x_1..x_d`, floats at 17 significant digits.
void write_bundle_csv(std::ostream& os, const PathBundle& bundle);

}  // namespace snell

#endif  // SNELL_SDE_HPP
