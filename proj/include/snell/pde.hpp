#ifndef SNELL_PDE_HPP
#define SNELL_PDE_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "snell/model.hpp"

namespace snell {

/**
 * Uniform tensor grid on a truncated box, d <= 2. Boundary values follow
 * either the obstacle (dirichlet-g) or a linear extrapolation of the two
 * adjacent interior nodes (d = 1 only).
 */
struct Grid {
    std::vector<double> lo;
    std::vector<double> hi;
    int n_space = 101;  // points per dimension, boundaries included
    int n_time = 100;
    enum class Boundary { DirichletG, LinearExtrapolation };
    Boundary boundary = Boundary::DirichletG;

    int dim() const { return static_cast<int>(lo.size()); }
    int n_nodes() const;
    double spacing(int axis) const { return (hi[axis] - lo[axis]) / (n_space - 1); }
    double coord(int axis, int index) const { return lo[axis] + spacing(axis) * index; }
    std::vector<double> node_coords(int node) const;
    bool interior(int node) const;
    void validate(int d) const;

    /// Default truncation: x0 +- 6 local standard deviations of the
    /// driftless linearized process, per axis.
    static Grid sized_for(const StoppingProblem& p, std::span<const double> x0, int n_space,
                          int n_time);
};

struct PdeSurface {
    std::vector<std::vector<double>> v;     // [time layer 0..n_time][node]
    std::vector<double> obstacle;           // [node]
    std::vector<std::vector<char>> active;  // obstacle binding per layer/node
    double t0 = 0.0;
    double dt = 0.0;
    double solver_tol = 0.0;
};

enum class PdeScheme { Psor, PolicyIteration, ExplicitProjection };

PdeScheme pde_scheme_from_string(const std::string& s);

struct SolveOptions {
    PdeScheme scheme = PdeScheme::Psor;
    double theta = 0.5;      // 0 explicit .. 1 implicit; 1/2 Crank-Nicolson
    double tol = 1e-8;
    int max_iter = 20000;
    bool rannacher = true;   // two fully implicit startup steps
    double omega = 1.2;      // PSOR relaxation
};

/**
 * Backward solve of the obstacle problem
 *   max( d_t v + L_t v + f, g - v ) = 0,   v(T, .) = g
 * on the grid's box. Each time step solves the discrete linear
 * complementarity system to `tol` with the chosen scheme. Throws
 * ConvergenceError (with the final residual) when the iteration budget runs
 * out and StabilityError on a CFL breach of the explicit scheme.
 */
PdeSurface solve_variational_inequality(const StoppingProblem& p, const Grid& grid,
                                        const SolveOptions& options);

inline PdeSurface solve_variational_inequality(const StoppingProblem& p, const Grid& grid,
                                               PdeScheme scheme, double theta_weight, double tol,
                                               int max_iter) {
    SolveOptions opt;
    opt.scheme = scheme;
    opt.theta = theta_weight;
    opt.tol = tol;
    opt.max_iter = max_iter;
    return solve_variational_inequality(p, grid, opt);
}

/// Second-order central-difference generator  L phi = <b, grad phi> + 1/2 tr(a D2 phi)
/// at one interior node of a layer field. Throws StencilError on boundary nodes.
double generator_apply(const StoppingProblem& p, const Grid& grid, std::span<const double> phi,
                       int node, double t);

struct ViscosityResidualReport {
    double terminal_gap = 0.0;
    double obstacle_violation = 0.0;
    double interior_pde_residual_on_continuation = 0.0;
    double complementarity_max = 0.0;
};

/**
 * Discrete consistency report. The time derivative uses the first-order
 * quotient (v[k+1]-v[k])/dt and the generator is evaluated at t_k on layer
 * k, which cancels exactly on fields linear in t and quadratic in x.
 * complementarity_max is max over interior nodes of
 * min(|pde residual|, v - g).
 */
ViscosityResidualReport viscosity_residual_report(const PdeSurface& surface,
                                                  const StoppingProblem& p, const Grid& grid);

struct ContinuationRegion {
    std::vector<std::vector<int>> nodes;        // per layer, nodes with v - g > epsilon
    std::vector<std::vector<double>> boundary;  // d = 1: sign-change abscissas per layer
    std::vector<std::string> monotonicity_flags;  // advisory only
};

ContinuationRegion extract_continuation_region(const PdeSurface& surface, const Grid& grid,
                                               double epsilon);

/// Multilinear interpolation of layer k at a point inside the box.
double surface_value_at(const PdeSurface& surface, const Grid& grid, int layer,
                        std::span<const double> x);

/// CSV: layer,time,node_index,x_1[,x_2],value,obstacle,active
void write_pde_surface_csv(std::ostream& os, const PdeSurface& surface, const Grid& grid);

std::string residual_report_json(const ViscosityResidualReport& report);

/// Plot data for d = 1: per requested layer, columns x,value,obstacle.
void write_plot_data_csv(std::ostream& os, const PdeSurface& surface, const Grid& grid, int layer);

/// Free-boundary curve: time,abscissa rows (first crossing per layer).
void write_boundary_csv(std::ostream& os, const ContinuationRegion& region,
                        const PdeSurface& surface);

}  // namespace snell

#endif  // SNELL_PDE_HPP
