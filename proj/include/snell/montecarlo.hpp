#ifndef SNELL_MONTECARLO_HPP
#define SNELL_MONTECARLO_HPP

#include <cstdint>
#include <string>

#include "snell/lattice.hpp"
#include "snell/pde.hpp"
#include "snell/sde.hpp"

namespace snell {

struct ValueEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    long long n_paths = 0;
    std::uint64_t seed = 0;
    std::string method_tag;
    double offgrid_fraction = 0.0;
};

std::string estimate_json(const ValueEstimate& e);
std::string estimate_csv_row(const ValueEstimate& e);
inline const char* estimate_csv_header() {
    return "method,mean,std_error,n_paths,seed,offgrid_fraction";
}

/**
 * Regression Monte Carlo estimate of the stopping value on a simulated
 * bundle. Continuation values are regressed on a polynomial basis of the
 * (per-step standardized) state; the induced rule is evaluated on the same
 * paths, so the estimate carries the usual low bias. Deterministic for a
 * fixed bundle. eval_bundle, when given, re-prices the fitted rule on those
 * fresh paths instead (out-of-sample mode).
 *
 * When a fifth or more of a payoff slice sits on its minimum plateau (a
 * kinked out-of-the-money region), regression and exercise restrict to the
 * paths above it, the classical in-the-money filter; smooth payoffs use
 * every path. Degenerate regressors (zero-variance state slices) fall back
 * to the surviving columns; a genuinely ill-conditioned fit raises
 * ConditioningError suggesting a lower degree.
 */
ValueEstimate longstaff_schwartz(const StoppingProblem& p, const PathBundle& bundle, int degree,
                                 const PathBundle* eval_bundle = nullptr);

/// Where evaluate_rule reads its stop/continue decision from.
struct RuleSource {
    enum class Kind { Immediate, Terminal, Pde, Lattice } kind = Kind::Terminal;
    const PdeSurface* pde_surface = nullptr;
    const Grid* pde_grid = nullptr;
    const Chain* chain = nullptr;
    const ValueSurface* lattice_surface = nullptr;

    static RuleSource immediate() { return {Kind::Immediate, nullptr, nullptr, nullptr, nullptr}; }
    static RuleSource terminal() { return {Kind::Terminal, nullptr, nullptr, nullptr, nullptr}; }
    static RuleSource pde(const PdeSurface& s, const Grid& g) {
        return {Kind::Pde, &s, &g, nullptr, nullptr};
    }
    static RuleSource lattice(const Chain& c, const ValueSurface& s) {
        return {Kind::Lattice, nullptr, nullptr, &c, &s};
    }
};

/**
 * Forward evaluation of the epsilon-thresholded first-hitting rule: each
 * path stops at the first grid time where the interpolated surface value
 * exceeds the payoff by at most epsilon. Interpolation is multilinear in
 * space at the latest surface layer not after the current time, so the
 * decision never peeks forward.
 *
 * Off-grid handling: a path outside the surface's box stops with the
 * boundary payoff and is counted; more than 5% off-grid raises
 * CoverageError. A lattice's box is its overall state range; queries inside
 * it but beyond the narrow early layers read the nearest node.
 */
ValueEstimate evaluate_rule(const StoppingProblem& p, const PathBundle& bundle,
                            const RuleSource& rule, double epsilon);

}  // namespace snell

#endif  // SNELL_MONTECARLO_HPP
