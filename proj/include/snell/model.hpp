#ifndef SNELL_MODEL_HPP
#define SNELL_MODEL_HPP

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "snell/expr.hpp"

namespace snell {

/// Declared output shape of a coefficient: scalar, d-vector, or d x m matrix.
struct CoeffShape {
    enum class Kind { Scalar, Vector, Matrix } kind = Kind::Scalar;
    int rows = 1;
    int cols = 1;
    int size() const { return rows * cols; }
};

/**
 * Total function of (t, x) with a declared shape.
 *
 * Built either from a closed-form evaluator (model presets) or from one
 * parsed expression per output component (row-major for matrices).
 * Evaluation checks every output for finiteness and throws EvalError with
 * the coefficient's name and the offending point otherwise.
 */
class CoefficientFn {
public:
    using Evaluator = std::function<void(double t, std::span<const double> x, std::span<double> out)>;

    CoefficientFn() = default;
    CoefficientFn(std::string name, CoeffShape shape, Evaluator ev);

    /// One expression per component; each may reference t and x_1..x_d.
    static CoefficientFn from_expressions(std::string name, CoeffShape shape,
                                          const std::vector<std::string>& sources, int dim);

    static CoefficientFn constant(std::string name, CoeffShape shape, std::vector<double> values);

    void evaluate(double t, std::span<const double> x, std::span<double> out) const;
    double evaluate_scalar(double t, std::span<const double> x) const;

    const CoeffShape& shape() const { return shape_; }
    const std::string& name() const { return name_; }

private:
    std::string name_;
    CoeffShape shape_;
    Evaluator eval_;
};

/**
 * Finite-horizon optimal stopping problem for a d-dimensional diffusion
 * driven by m Brownian components:
 *
 *   dX = b(t, X) dt + sigma(t, X) dW   on [0, T],
 *   reward = integral of f(s, X_s) ds up to the stop plus g(X) at the stop.
 *
 * g ignores its time argument. growth_hint_q is the polynomial growth
 * exponent used only by the assumption spot-check.
 */
struct StoppingProblem {
    int d = 1;
    int m = 1;
    double T = 1.0;
    CoefficientFn b;       // vector(d)
    CoefficientFn sigma;   // matrix(d x m)
    CoefficientFn f;       // scalar gain rate
    CoefficientFn g;       // scalar terminal gain, state-only
    double growth_hint_q = 2.0;

    void validate() const;  // throws ConfigError / DimensionError

    // convenience evaluators (allocate small vectors; fine off hot paths)
    std::vector<double> drift(double t, std::span<const double> x) const;
    std::vector<double> diffusion(double t, std::span<const double> x) const;  // row-major d x m
    double gain_rate(double t, std::span<const double> x) const;
    double terminal_gain(std::span<const double> x) const;
};

/// Model presets with closed-form coefficient oracles.
namespace presets {

/// dX = mu dt + vol dW (componentwise), constant coefficients.
StoppingProblem bachelier(int d, double T, double mu, double vol,
                          const std::string& f_src, const std::string& g_src, double q);

/// dX_i = mu X_i dt + nu X_i dW_i.
StoppingProblem gbm(int d, double T, double mu, double nu,
                    const std::string& f_src, const std::string& g_src, double q);

/// dX = kappa (theta_bar - X) dt + vol dW.
StoppingProblem ornstein_uhlenbeck(int d, double T, double kappa, double theta_bar, double vol,
                                   const std::string& f_src, const std::string& g_src, double q);

/// Fully expression-specified problem. b_src has d entries, sigma_src d*m
/// entries (row-major).
StoppingProblem custom(int d, int m, double T, const std::vector<std::string>& b_src,
                       const std::vector<std::string>& sigma_src, const std::string& f_src,
                       const std::string& g_src, double q);

}  // namespace presets

/// Realized reward along one discrete path, split into its two parts.
struct RealizedGain {
    double integral_part = 0.0;
    double terminal_part = 0.0;
    double total = 0.0;
};

/**
 * Left-Riemann accumulation of f along the path up to stop_index, plus g at
 * the stopped state. path is row-major [len(times)][d].
 */
RealizedGain realized_gain(const StoppingProblem& p, std::span<const double> times,
                           std::span<const double> path, int stop_index);

/// Axis-aligned sampling region for the assumption spot-check.
struct Box {
    std::vector<double> lo;
    std::vector<double> hi;
};

struct AssumptionReport {
    double lipschitz_estimate_b = 0.0;
    double lipschitz_estimate_sigma = 0.0;
    double growth_estimate_fg = 0.0;
    std::vector<std::string> violations;  // advisory flags, never fatal
};

/**
 * Empirical check of the standing assumptions: max finite-difference
 * quotients of b and sigma over sampled point pairs, and the growth ratio
 * (|f|+|g|) / (1+|x|^q) over sampled points. Estimates that keep growing
 * when the sample count doubles are flagged. Deterministic in the seed, and
 * sample sets extend under growing n_samples, so estimates are monotone.
 */
AssumptionReport spot_check_assumptions(const StoppingProblem& p, const Box& box, int n_samples,
                                        std::uint64_t seed);

}  // namespace snell

#endif  // SNELL_MODEL_HPP
