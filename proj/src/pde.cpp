#include "snell/pde.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "snell/errors.hpp"
#include "snell/io.hpp"

namespace snell {

int Grid::n_nodes() const {
    int n = 1;
    for (int i = 0; i < dim(); ++i) n *= n_space;
    return n;
}

std::vector<double> Grid::node_coords(int node) const {
    std::vector<double> x(dim());
    if (dim() == 1) {
        x[0] = coord(0, node);
    } else {
        x[0] = coord(0, node / n_space);
        x[1] = coord(1, node % n_space);
    }
    return x;
}

bool Grid::interior(int node) const {
    if (dim() == 1) return node > 0 && node < n_space - 1;
    int i = node / n_space, j = node % n_space;
    return i > 0 && i < n_space - 1 && j > 0 && j < n_space - 1;
}

void Grid::validate(int d) const {
    if (dim() != d || static_cast<int>(hi.size()) != d)
        throw ConfigError("grid box dimension does not match the problem");
    if (d < 1 || d > 2) throw ConfigError("pde solver covers d <= 2");
    for (int i = 0; i < d; ++i)
        if (!(lo[i] < hi[i])) throw ConfigError("grid box must have lo < hi");
    if (n_space < 3) throw ConfigError("grid needs at least 3 points per dimension");
    if (n_time < 1) throw ConfigError("grid needs at least 1 time step");
    if (boundary == Boundary::LinearExtrapolation && d != 1)
        throw ConfigError("linear-extrapolation boundary is implemented for d = 1 only");
}

Grid Grid::sized_for(const StoppingProblem& p, std::span<const double> x0, int n_space,
                     int n_time) {
    Grid g;
    g.n_space = n_space;
    g.n_time = n_time;
    auto sig = p.diffusion(0.0, x0);
    for (int i = 0; i < p.d; ++i) {
        double a = 0.0;
        for (int j = 0; j < p.m; ++j)
            a += sig[static_cast<std::size_t>(i) * p.m + j] * sig[static_cast<std::size_t>(i) * p.m + j];
        double radius = 6.0 * std::sqrt(a * p.T);
        if (radius == 0.0) radius = 1.0 + std::fabs(x0[i]);
        g.lo.push_back(x0[i] - radius);
        g.hi.push_back(x0[i] + radius);
    }
    return g;
}

PdeScheme pde_scheme_from_string(const std::string& s) {
    if (s == "psor") return PdeScheme::Psor;
    if (s == "policy-iteration") return PdeScheme::PolicyIteration;
    if (s == "explicit-projection") return PdeScheme::ExplicitProjection;
    throw ConfigError("unknown pde scheme '" + s + "'");
}

namespace {

// Per-node coefficients of L at a fixed time: a = sigma sigma^T, b drift.
struct Coeffs {
    std::vector<double> b1, b2;    // drift per node (b2 empty for d = 1)
    std::vector<double> a11, a22, a12;
    std::vector<double> f;
};

Coeffs eval_coeffs(const StoppingProblem& p, const Grid& grid, double t) {
    const int n = grid.n_nodes();
    Coeffs c;
    c.b1.resize(n);
    c.a11.resize(n);
    c.f.resize(n);
    if (p.d == 2) {
        c.b2.resize(n);
        c.a22.resize(n);
        c.a12.resize(n);
    }
    std::vector<double> sig(static_cast<std::size_t>(p.d) * p.m);
    for (int node = 0; node < n; ++node) {
        auto x = grid.node_coords(node);
        auto b = p.drift(t, x);
        p.sigma.evaluate(t, x, sig);
        c.b1[node] = b[0];
        double a11 = 0.0;
        for (int j = 0; j < p.m; ++j) a11 += sig[j] * sig[j];
        c.a11[node] = a11;
        if (p.d == 2) {
            c.b2[node] = b[1];
            double a22 = 0.0, a12 = 0.0;
            for (int j = 0; j < p.m; ++j) {
                a22 += sig[static_cast<std::size_t>(p.m) + j] * sig[static_cast<std::size_t>(p.m) + j];
                a12 += sig[j] * sig[static_cast<std::size_t>(p.m) + j];
            }
            c.a22[node] = a22;
            c.a12[node] = a12;
        }
        c.f[node] = p.gain_rate(t, x);
    }
    return c;
}

// (L v)[node] with central differences; node must be interior.
double apply_L(const Grid& grid, const Coeffs& c, std::span<const double> v, int node) {
    if (grid.dim() == 1) {
        const double h = grid.spacing(0);
        return c.b1[node] * (v[node + 1] - v[node - 1]) / (2.0 * h) +
               0.5 * c.a11[node] * (v[node + 1] - 2.0 * v[node] + v[node - 1]) / (h * h);
    }
    const int n = grid.n_space;
    const double h1 = grid.spacing(0), h2 = grid.spacing(1);
    const int up = node + n, dn = node - n, rt = node + 1, lf = node - 1;
    double out = c.b1[node] * (v[up] - v[dn]) / (2.0 * h1) +
                 c.b2[node] * (v[rt] - v[lf]) / (2.0 * h2) +
                 0.5 * c.a11[node] * (v[up] - 2.0 * v[node] + v[dn]) / (h1 * h1) +
                 0.5 * c.a22[node] * (v[rt] - 2.0 * v[node] + v[lf]) / (h2 * h2);
    if (c.a12[node] != 0.0)
        out += c.a12[node] *
               (v[up + 1] - v[up - 1] - v[dn + 1] + v[dn - 1]) / (4.0 * h1 * h2);
    return out;
}

// Sparse row of the implicit matrix (I - theta dt L) at an interior node.
struct Row {
    int cols[9];
    double vals[9];
    int len = 0;
    double diag = 0.0;

    void add(int col, double v, int self) {
        if (col == self) {
            diag += v;
            return;
        }
        cols[len] = col;
        vals[len] = v;
        ++len;
    }
};

Row implicit_row(const Grid& grid, const Coeffs& c, int node, double theta_dt) {
    Row r;
    r.diag = 1.0;
    if (grid.dim() == 1) {
        const double h = grid.spacing(0);
        double lo_c = c.a11[node] / (2.0 * h * h) - c.b1[node] / (2.0 * h);
        double di_c = -c.a11[node] / (h * h);
        double up_c = c.a11[node] / (2.0 * h * h) + c.b1[node] / (2.0 * h);
        r.add(node - 1, -theta_dt * lo_c, node);
        r.diag += -theta_dt * di_c;
        r.add(node + 1, -theta_dt * up_c, node);
        return r;
    }
    const int n = grid.n_space;
    const double h1 = grid.spacing(0), h2 = grid.spacing(1);
    double c_up = 0.5 * c.a11[node] / (h1 * h1) + c.b1[node] / (2.0 * h1);
    double c_dn = 0.5 * c.a11[node] / (h1 * h1) - c.b1[node] / (2.0 * h1);
    double c_rt = 0.5 * c.a22[node] / (h2 * h2) + c.b2[node] / (2.0 * h2);
    double c_lf = 0.5 * c.a22[node] / (h2 * h2) - c.b2[node] / (2.0 * h2);
    double c_di = -c.a11[node] / (h1 * h1) - c.a22[node] / (h2 * h2);
    r.add(node + n, -theta_dt * c_up, node);
    r.add(node - n, -theta_dt * c_dn, node);
    r.add(node + 1, -theta_dt * c_rt, node);
    r.add(node - 1, -theta_dt * c_lf, node);
    r.diag += -theta_dt * c_di;
    if (c.a12[node] != 0.0) {
        double cx = c.a12[node] / (4.0 * h1 * h2);
        r.add(node + n + 1, -theta_dt * cx, node);
        r.add(node - n - 1, -theta_dt * cx, node);
        r.add(node + n - 1, theta_dt * cx, node);
        r.add(node - n + 1, theta_dt * cx, node);
    }
    return r;
}

double row_apply(const Row& r, std::span<const double> v, int node) {
    double acc = r.diag * v[node];
    for (int i = 0; i < r.len; ++i) acc += r.vals[i] * v[r.cols[i]];
    return acc;
}

struct StepSystem {
    std::vector<Row> rows;        // per interior node (indexed by node id)
    std::vector<double> rhs;      // per node (boundary nodes carry their fixed value)
    std::vector<int> interior;    // interior node ids
};

// LCP residual: interior nodes satisfy min(Mv - rhs, v - g) = 0.
double lcp_residual(const StepSystem& sys, std::span<const double> v, std::span<const double> g) {
    double worst = 0.0;
    for (int node : sys.interior) {
        double r = row_apply(sys.rows[node], v, node) - sys.rhs[node];
        double slack = v[node] - g[node];
        worst = std::max(worst, std::fabs(std::min(r, slack)));
    }
    return worst;
}

void psor_solve(const StepSystem& sys, std::vector<double>& v, std::span<const double> g,
                double tol, int max_iter, double omega) {
    for (int iter = 0; iter < max_iter; ++iter) {
        for (int node : sys.interior) {
            const Row& r = sys.rows[node];
            double acc = sys.rhs[node];
            for (int i = 0; i < r.len; ++i) acc -= r.vals[i] * v[r.cols[i]];
            double gs = acc / r.diag;
            double cand = (1.0 - omega) * v[node] + omega * gs;
            v[node] = std::max(g[node], cand);
        }
        if (lcp_residual(sys, v, g) < tol) return;
    }
    throw ConvergenceError("psor did not reach tolerance within the iteration budget",
                           lcp_residual(sys, v, g));
}

// Thomas elimination on the (possibly row-replaced) tridiagonal system, d = 1.
void solve_tridiagonal(const std::vector<double>& low, const std::vector<double>& diag,
                       const std::vector<double>& up, const std::vector<double>& rhs,
                       std::vector<double>& out) {
    const int n = static_cast<int>(diag.size());
    std::vector<double> c(n), d(n);
    c[0] = up[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for (int i = 1; i < n; ++i) {
        double m = diag[i] - low[i] * c[i - 1];
        c[i] = up[i] / m;
        d[i] = (rhs[i] - low[i] * d[i - 1]) / m;
    }
    out[n - 1] = d[n - 1];
    for (int i = n - 2; i >= 0; --i) out[i] = d[i] - c[i] * out[i + 1];
}

void policy_iteration_solve_1d(const StepSystem& sys, std::vector<double>& v,
                               std::span<const double> g, double tol, int max_iter) {
    const int ni = static_cast<int>(sys.interior.size());
    std::vector<char> active(ni, 0);
    for (int i = 0; i < ni; ++i) active[i] = (v[sys.interior[i]] <= g[sys.interior[i]]) ? 1 : 0;

    std::vector<double> low(ni), diag(ni), up(ni), rhs(ni), sol(ni);
    for (int iter = 0; iter < max_iter; ++iter) {
        for (int i = 0; i < ni; ++i) {
            int node = sys.interior[i];
            if (active[i]) {
                low[i] = 0.0;
                diag[i] = 1.0;
                up[i] = 0.0;
                rhs[i] = g[node];
                continue;
            }
            const Row& r = sys.rows[node];
            diag[i] = r.diag;
            low[i] = up[i] = 0.0;
            rhs[i] = sys.rhs[node];
            for (int j = 0; j < r.len; ++j) {
                if (r.cols[j] == node - 1) {
                    if (i == 0) rhs[i] -= r.vals[j] * v[node - 1];  // fixed boundary
                    else low[i] = r.vals[j];
                } else if (r.cols[j] == node + 1) {
                    if (i == ni - 1) rhs[i] -= r.vals[j] * v[node + 1];
                    else up[i] = r.vals[j];
                }
            }
        }
        solve_tridiagonal(low, diag, up, rhs, sol);
        for (int i = 0; i < ni; ++i) v[sys.interior[i]] = sol[i];

        bool changed = false;
        for (int i = 0; i < ni; ++i) {
            int node = sys.interior[i];
            double resid = row_apply(sys.rows[node], v, node) - sys.rhs[node];
            char want = (v[node] - g[node] < resid) ? 1 : 0;
            if (want != active[i]) {
                active[i] = want;
                changed = true;
            }
        }
        // clip below the obstacle so the residual check sees the projection
        for (int i = 0; i < ni; ++i) {
            int node = sys.interior[i];
            v[node] = std::max(v[node], g[node]);
        }
        if (!changed && lcp_residual(sys, v, g) < tol) return;
    }
    throw ConvergenceError("policy iteration did not settle within the iteration budget",
                           lcp_residual(sys, v, g));
}

// d = 2 policy iteration with an inner (unprojected) SOR linear solve.
void policy_iteration_solve_2d(const StepSystem& sys, std::vector<double>& v,
                               std::span<const double> g, double tol, int max_iter) {
    const int ni = static_cast<int>(sys.interior.size());
    std::vector<char> active(ni, 0);
    for (int i = 0; i < ni; ++i) active[i] = (v[sys.interior[i]] <= g[sys.interior[i]]) ? 1 : 0;

    for (int iter = 0; iter < max_iter; ++iter) {
        for (int inner = 0; inner < max_iter; ++inner) {
            double delta = 0.0;
            for (int i = 0; i < ni; ++i) {
                int node = sys.interior[i];
                double target;
                if (active[i]) {
                    target = g[node];
                } else {
                    const Row& r = sys.rows[node];
                    double acc = sys.rhs[node];
                    for (int j = 0; j < r.len; ++j) acc -= r.vals[j] * v[r.cols[j]];
                    target = acc / r.diag;
                }
                delta = std::max(delta, std::fabs(target - v[node]));
                v[node] = target;
            }
            if (delta < 0.1 * tol) break;
        }
        bool changed = false;
        for (int i = 0; i < ni; ++i) {
            int node = sys.interior[i];
            double resid = row_apply(sys.rows[node], v, node) - sys.rhs[node];
            char want = (v[node] - g[node] < resid) ? 1 : 0;
            if (want != active[i]) {
                active[i] = want;
                changed = true;
            }
        }
        for (int i = 0; i < ni; ++i) {
            int node = sys.interior[i];
            v[node] = std::max(v[node], g[node]);
        }
        if (!changed && lcp_residual(sys, v, g) < tol) return;
    }
    throw ConvergenceError("policy iteration (2d) did not settle within the iteration budget",
                           lcp_residual(sys, v, g));
}

}  // namespace

PdeSurface solve_variational_inequality(const StoppingProblem& p, const Grid& grid,
                                        const SolveOptions& options) {
    p.validate();
    grid.validate(p.d);
    if (options.theta < 0.0 || options.theta > 1.0)
        throw ConfigError("theta weight must lie in [0,1]");

    const int n = grid.n_nodes();
    const int NT = grid.n_time;
    const double dt = p.T / NT;

    PdeSurface s;
    s.t0 = 0.0;
    s.dt = dt;
    s.solver_tol = options.tol;
    s.obstacle.resize(n);
    for (int node = 0; node < n; ++node) {
        auto x = grid.node_coords(node);
        s.obstacle[node] = p.terminal_gain(x);
    }
    s.v.assign(NT + 1, std::vector<double>(n, 0.0));
    s.active.assign(NT + 1, std::vector<char>(n, 1));
    s.v[NT] = s.obstacle;  // terminal condition, exact

    std::vector<int> interior_nodes;
    for (int node = 0; node < n; ++node)
        if (grid.interior(node)) interior_nodes.push_back(node);

    const double scale_g = [&] {
        double m = 0.0;
        for (double v : s.obstacle) m = std::max(m, std::fabs(v));
        return m;
    }();

    for (int k = NT - 1; k >= 0; --k) {
        const double t_impl = dt * k;
        const double t_expl = dt * (k + 1);
        double theta = options.theta;
        if (options.scheme != PdeScheme::ExplicitProjection && options.rannacher && k >= NT - 2)
            theta = 1.0;
        if (options.scheme == PdeScheme::ExplicitProjection) theta = 0.0;

        Coeffs c_impl = eval_coeffs(p, grid, t_impl);
        Coeffs c_expl = eval_coeffs(p, grid, t_expl);

        std::vector<double>& v_new = s.v[k];
        const std::vector<double>& v_old = s.v[k + 1];
        v_new = v_old;  // warm start

        if (options.scheme == PdeScheme::ExplicitProjection) {
            // CFL: dt * (diffusion + advection rates) <= 1 at every node
            double rate = 0.0;
            for (int node : interior_nodes) {
                double r = c_expl.a11[node] / (grid.spacing(0) * grid.spacing(0)) +
                           std::fabs(c_expl.b1[node]) / grid.spacing(0);
                if (p.d == 2)
                    r += c_expl.a22[node] / (grid.spacing(1) * grid.spacing(1)) +
                         std::fabs(c_expl.b2[node]) / grid.spacing(1) +
                         std::fabs(c_expl.a12[node]) / (grid.spacing(0) * grid.spacing(1));
                rate = std::max(rate, r);
            }
            if (dt * rate > 1.0)
                throw StabilityError("explicit projection violates the CFL bound (dt * rate = " +
                                     std::to_string(dt * rate) + " > 1); refine time or coarsen space");
            for (int node : interior_nodes)
                v_new[node] = std::max(s.obstacle[node],
                                       v_old[node] + dt * (apply_L(grid, c_expl, v_old, node) +
                                                           c_expl.f[node]));
        } else {
            StepSystem sys;
            sys.rows.resize(n);
            sys.rhs.assign(n, 0.0);
            sys.interior = interior_nodes;
            const double theta_dt = theta * dt;
            const double expl_dt = (1.0 - theta) * dt;
            for (int node : interior_nodes) {
                sys.rows[node] = implicit_row(grid, c_impl, node, theta_dt);
                double rhs = v_old[node] + dt * (theta * c_impl.f[node] + (1.0 - theta) * c_expl.f[node]);
                if (expl_dt != 0.0) rhs += expl_dt * apply_L(grid, c_expl, v_old, node);
                sys.rhs[node] = rhs;
            }
            // boundary values enter through the fixed entries of v_new
            if (grid.boundary == Grid::Boundary::DirichletG) {
                if (p.d == 1) {
                    v_new[0] = s.obstacle[0];
                    v_new[n - 1] = s.obstacle[n - 1];
                } else {
                    for (int node = 0; node < n; ++node)
                        if (!grid.interior(node)) v_new[node] = s.obstacle[node];
                }
            } else {
                // linear extrapolation folds the ghost relation
                // v_0 = 2 v_1 - v_2 into the first interior row (d = 1)
                int first = interior_nodes.front(), last = interior_nodes.back();
                Row& rf = sys.rows[first];
                for (int i = 0; i < rf.len; ++i)
                    if (rf.cols[i] == first - 1) {
                        double cb = rf.vals[i];
                        rf.vals[i] = 0.0;
                        rf.diag += 2.0 * cb;
                        for (int j = 0; j < rf.len; ++j)
                            if (rf.cols[j] == first + 1) rf.vals[j] -= cb;
                    }
                Row& rl = sys.rows[last];
                for (int i = 0; i < rl.len; ++i)
                    if (rl.cols[i] == last + 1) {
                        double cb = rl.vals[i];
                        rl.vals[i] = 0.0;
                        rl.diag += 2.0 * cb;
                        for (int j = 0; j < rl.len; ++j)
                            if (rl.cols[j] == last - 1) rl.vals[j] -= cb;
                    }
                v_new[0] = 0.0;
                v_new[n - 1] = 0.0;  // rewritten after the solve
            }

            if (options.scheme == PdeScheme::Psor)
                psor_solve(sys, v_new, s.obstacle, options.tol, options.max_iter, options.omega);
            else if (p.d == 1)
                policy_iteration_solve_1d(sys, v_new, s.obstacle, options.tol, options.max_iter);
            else
                policy_iteration_solve_2d(sys, v_new, s.obstacle, options.tol, options.max_iter);

            if (grid.boundary == Grid::Boundary::LinearExtrapolation) {
                v_new[0] = std::max(s.obstacle[0], 2.0 * v_new[1] - v_new[2]);
                v_new[n - 1] = std::max(s.obstacle[n - 1], 2.0 * v_new[n - 2] - v_new[n - 3]);
            }
        }

        const double active_tol = std::max(options.tol, 1e-12 * scale_g);
        for (int node = 0; node < n; ++node)
            s.active[k][node] = (v_new[node] - s.obstacle[node] <= active_tol) ? 1 : 0;
    }
    for (int node = 0; node < n; ++node) s.active[NT][node] = 1;
    return s;
}

double generator_apply(const StoppingProblem& p, const Grid& grid, std::span<const double> phi,
                       int node, double t) {
    grid.validate(p.d);
    if (static_cast<int>(phi.size()) != grid.n_nodes())
        throw DimensionError("generator_apply: field size does not match grid");
    if (!grid.interior(node))
        throw StencilError("generator_apply: node " + std::to_string(node) + " is on the boundary");
    Coeffs c = eval_coeffs(p, grid, t);
    return apply_L(grid, c, phi, node);
}

ViscosityResidualReport viscosity_residual_report(const PdeSurface& surface,
                                                  const StoppingProblem& p, const Grid& grid) {
    grid.validate(p.d);
    ViscosityResidualReport rep;
    const int NT = static_cast<int>(surface.v.size()) - 1;
    const int n = grid.n_nodes();

    for (int node = 0; node < n; ++node)
        rep.terminal_gap = std::max(rep.terminal_gap,
                                    std::fabs(surface.v[NT][node] - surface.obstacle[node]));
    for (int k = 0; k <= NT; ++k)
        for (int node = 0; node < n; ++node)
            rep.obstacle_violation = std::max(rep.obstacle_violation,
                                              surface.obstacle[node] - surface.v[k][node]);

    for (int k = 0; k < NT; ++k) {
        double t = surface.t0 + surface.dt * k;
        Coeffs c = eval_coeffs(p, grid, t);
        for (int node = 0; node < n; ++node) {
            if (!grid.interior(node)) continue;
            double resid = (surface.v[k + 1][node] - surface.v[k][node]) / surface.dt +
                           apply_L(grid, c, surface.v[k], node) + c.f[node];
            double slack = surface.v[k][node] - surface.obstacle[node];
            if (!surface.active[k][node])
                rep.interior_pde_residual_on_continuation =
                    std::max(rep.interior_pde_residual_on_continuation, std::fabs(resid));
            rep.complementarity_max =
                std::max(rep.complementarity_max, std::min(std::fabs(resid), slack));
        }
    }
    return rep;
}

ContinuationRegion extract_continuation_region(const PdeSurface& surface, const Grid& grid,
                                               double epsilon) {
    ContinuationRegion region;
    const int NT = static_cast<int>(surface.v.size()) - 1;
    const int n = grid.n_nodes();
    region.nodes.resize(NT + 1);
    region.boundary.resize(NT + 1);

    for (int k = 0; k <= NT; ++k) {
        for (int node = 0; node < n; ++node)
            if (surface.v[k][node] - surface.obstacle[node] > epsilon)
                region.nodes[k].push_back(node);
        if (grid.dim() == 1) {
            // abscissas where v - g - epsilon changes sign, by linear interpolation
            for (int i = 0; i + 1 < n; ++i) {
                double a = surface.v[k][i] - surface.obstacle[i] - epsilon;
                double b = surface.v[k][i + 1] - surface.obstacle[i + 1] - epsilon;
                if ((a <= 0.0 && b > 0.0) || (a > 0.0 && b <= 0.0)) {
                    double w = (b - a) == 0.0 ? 0.5 : -a / (b - a);
                    region.boundary[k].push_back(grid.coord(0, i) + w * grid.spacing(0));
                }
            }
        }
    }

    // single-node oscillation watch on the first boundary abscissa
    if (grid.dim() == 1) {
        double prev = 0.0;
        bool have = false;
        int direction = 0;
        for (int k = 0; k <= NT; ++k) {
            if (region.boundary[k].empty()) continue;
            double cur = region.boundary[k].front();
            if (have) {
                int dir = cur > prev ? 1 : (cur < prev ? -1 : 0);
                if (dir != 0 && direction != 0 && dir != direction &&
                    std::fabs(cur - prev) <= 1.5 * grid.spacing(0))
                    region.monotonicity_flags.push_back(
                        "boundary abscissa oscillates near layer " + std::to_string(k) +
                        " within one grid cell");
                if (dir != 0) direction = dir;
            }
            prev = cur;
            have = true;
        }
    }
    return region;
}

double surface_value_at(const PdeSurface& surface, const Grid& grid, int layer,
                        std::span<const double> x) {
    const int n = grid.n_space;
    int idx[2] = {0, 0};
    double w[2] = {0.0, 0.0};
    for (int c = 0; c < grid.dim(); ++c) {
        double pos = (x[c] - grid.lo[c]) / grid.spacing(c);
        if (pos < 0.0 || pos > n - 1)
            throw DimensionError("surface_value_at: point outside the grid box");
        int i = std::min(static_cast<int>(pos), n - 2);
        idx[c] = i;
        w[c] = pos - i;
    }
    const auto& v = surface.v[layer];
    if (grid.dim() == 1) return v[idx[0]] * (1.0 - w[0]) + v[idx[0] + 1] * w[0];
    int base = idx[0] * n + idx[1];
    return v[base] * (1 - w[0]) * (1 - w[1]) + v[base + n] * w[0] * (1 - w[1]) +
           v[base + 1] * (1 - w[0]) * w[1] + v[base + n + 1] * w[0] * w[1];
}

void write_pde_surface_csv(std::ostream& os, const PdeSurface& surface, const Grid& grid) {
    os << "layer,time,node_index";
    for (int i = 1; i <= grid.dim(); ++i) os << ",x_" << i;
    os << ",value,obstacle,active\n";
    const int NT = static_cast<int>(surface.v.size()) - 1;
    for (int k = 0; k <= NT; ++k) {
        double t = surface.t0 + surface.dt * k;
        for (int node = 0; node < grid.n_nodes(); ++node) {
            os << k << "," << io::fmt17(t) << "," << node;
            for (double x : grid.node_coords(node)) os << "," << io::fmt17(x);
            os << "," << io::fmt17(surface.v[k][node]) << "," << io::fmt17(surface.obstacle[node])
               << "," << int(surface.active[k][node]) << "\n";
        }
    }
}

std::string residual_report_json(const ViscosityResidualReport& report) {
    io::JsonWriter w;
    w.begin_object()
        .field("terminal_gap", report.terminal_gap)
        .field("obstacle_violation", report.obstacle_violation)
        .field("interior_pde_residual_on_continuation",
               report.interior_pde_residual_on_continuation)
        .field("complementarity_max", report.complementarity_max)
        .end_object();
    return w.str() + "\n";
}

void write_plot_data_csv(std::ostream& os, const PdeSurface& surface, const Grid& grid, int layer) {
    os << "x,value,obstacle\n";
    for (int node = 0; node < grid.n_nodes(); ++node)
        os << io::fmt17(grid.node_coords(node)[0]) << "," << io::fmt17(surface.v[layer][node])
           << "," << io::fmt17(surface.obstacle[node]) << "\n";
}

void write_boundary_csv(std::ostream& os, const ContinuationRegion& region,
                        const PdeSurface& surface) {
    os << "time,boundary\n";
    for (std::size_t k = 0; k < region.boundary.size(); ++k) {
        if (region.boundary[k].empty()) continue;
        os << io::fmt17(surface.t0 + surface.dt * static_cast<double>(k)) << ","
           << io::fmt17(region.boundary[k].front()) << "\n";
    }
}

}  // namespace snell
