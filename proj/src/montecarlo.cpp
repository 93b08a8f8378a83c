#include "snell/montecarlo.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "snell/errors.hpp"
#include "snell/io.hpp"

namespace snell {

std::string estimate_json(const ValueEstimate& e) {
    io::JsonWriter w;
    w.begin_object()
        .field("method", e.method_tag)
        .field("mean", e.mean)
        .field("std_error", e.std_error)
        .field("n_paths", e.n_paths)
        .field("seed", static_cast<unsigned long long>(e.seed))
        .field("offgrid_fraction", e.offgrid_fraction)
        .end_object();
    return w.str() + "\n";
}

std::string estimate_csv_row(const ValueEstimate& e) {
    return e.method_tag + "," + io::fmt17(e.mean) + "," + io::fmt17(e.std_error) + "," +
           std::to_string(e.n_paths) + "," + std::to_string(e.seed) + "," +
           io::fmt17(e.offgrid_fraction);
}

namespace {

// ---------------------------------------------------------------------------
// polynomial basis with per-slice standardization
// ---------------------------------------------------------------------------

struct Basis {
    int d;
    int degree;
    std::vector<std::array<int, 2>> powers;  // exponent per component
    std::vector<double> mean, sdev;          // standardization of the slice

    int size() const { return static_cast<int>(powers.size()); }

    void fill(std::span<const double> x, std::vector<double>& row) const {
        double z[2] = {0.0, 0.0};
        for (int i = 0; i < d; ++i) z[i] = (x[i] - mean[i]) / sdev[i];
        for (int j = 0; j < size(); ++j) {
            double v = 1.0;
            for (int i = 0; i < d; ++i)
                for (int e = 0; e < powers[j][i]; ++e) v *= z[i];
            row[j] = v;
        }
    }
};

Basis make_basis(int d, int degree) {
    Basis b;
    b.d = d;
    b.degree = degree;
    if (d == 1) {
        for (int k = 0; k <= degree; ++k) b.powers.push_back({k, 0});
    } else {
        for (int total = 0; total <= degree; ++total)
            for (int k = 0; k <= total; ++k) b.powers.push_back({total - k, k});
    }
    b.mean.assign(d, 0.0);
    b.sdev.assign(d, 1.0);
    return b;
}

// Least squares via normal equations with column dropping on tiny pivots.
// Returns fitted values at the sample points. `slice_degenerate` reports
// whether any state component had (numerically) zero variance.
std::vector<double> regress_fit(const std::vector<std::vector<double>>& rows,
                                const std::vector<double>& y, int n_cols, bool slice_degenerate) {
    const int n = static_cast<int>(rows.size());
    std::vector<char> keep(n_cols, 1);

    for (;;) {
        std::vector<int> cols;
        for (int j = 0; j < n_cols; ++j)
            if (keep[j]) cols.push_back(j);
        const int m = static_cast<int>(cols.size());

        // gram = X^T X, rhs = X^T y over kept columns
        std::vector<double> gram(static_cast<std::size_t>(m) * m, 0.0);
        std::vector<double> rhs(m, 0.0);
        for (int i = 0; i < n; ++i) {
            for (int a = 0; a < m; ++a) {
                double xa = rows[i][cols[a]];
                rhs[a] += xa * y[i];
                for (int bcol = a; bcol < m; ++bcol)
                    gram[static_cast<std::size_t>(a) * m + bcol] += xa * rows[i][cols[bcol]];
            }
        }
        for (int a = 0; a < m; ++a)
            for (int bcol = 0; bcol < a; ++bcol)
                gram[static_cast<std::size_t>(a) * m + bcol] =
                    gram[static_cast<std::size_t>(bcol) * m + a];

        // Cholesky; a failing pivot drops that column and retries
        double trace = 0.0;
        for (int a = 0; a < m; ++a) trace += gram[static_cast<std::size_t>(a) * m + a];
        const double pivot_floor = 1e-13 * std::max(trace / m, 1e-300);

        std::vector<double> L(static_cast<std::size_t>(m) * m, 0.0);
        int bad = -1;
        for (int a = 0; a < m && bad < 0; ++a) {
            for (int bcol = 0; bcol <= a; ++bcol) {
                double s = gram[static_cast<std::size_t>(a) * m + bcol];
                for (int k = 0; k < bcol; ++k)
                    s -= L[static_cast<std::size_t>(a) * m + k] * L[static_cast<std::size_t>(bcol) * m + k];
                if (a == bcol) {
                    if (s <= pivot_floor) {
                        bad = a;
                        break;
                    }
                    L[static_cast<std::size_t>(a) * m + a] = std::sqrt(s);
                } else {
                    L[static_cast<std::size_t>(a) * m + bcol] = s / L[static_cast<std::size_t>(bcol) * m + bcol];
                }
            }
        }
        if (bad >= 0) {
            if (bad == 0 || m == 1)
                throw ConditioningError("regression matrix is singular even on the constant column");
            if (!slice_degenerate)
                throw ConditioningError(
                    "regression basis is ill-conditioned; lower the basis degree");
            keep[cols[bad]] = 0;
            continue;
        }

        // forward/back substitution
        std::vector<double> w(m);
        for (int a = 0; a < m; ++a) {
            double s = rhs[a];
            for (int k = 0; k < a; ++k) s -= L[static_cast<std::size_t>(a) * m + k] * w[k];
            w[a] = s / L[static_cast<std::size_t>(a) * m + a];
        }
        for (int a = m - 1; a >= 0; --a) {
            double s = w[a];
            for (int k = a + 1; k < m; ++k) s -= L[static_cast<std::size_t>(k) * m + a] * w[k];
            w[a] = s / L[static_cast<std::size_t>(a) * m + a];
        }

        std::vector<double> fit(n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int a = 0; a < m; ++a) fit[i] += rows[i][cols[a]] * w[a];
        return fit;
    }
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    bool identical = true;
    for (double x : v)
        if (x != v.front()) {
            identical = false;
            break;
        }
    if (identical) return 0.0;
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / (static_cast<double>(v.size()) - 1.0) /
                     static_cast<double>(v.size()));
}

}  // namespace

namespace {

// Payoff kink detector: when a fifth or more of the slice sits exactly on
// the payoff's minimum plateau (out of the money), the regression
// restricts to the paths strictly above it, the classical filter.
struct ExerciseFilter {
    bool active = false;
    double floor = 0.0;

    static ExerciseFilter detect(const std::vector<double>& payoff) {
        ExerciseFilter f;
        double lo = payoff[0];
        for (double v : payoff) lo = std::min(lo, v);
        f.floor = lo + 1e-9 * (1.0 + std::fabs(lo));
        int plateau = 0;
        for (double v : payoff)
            if (v <= f.floor) ++plateau;
        const int n = static_cast<int>(payoff.size());
        f.active = plateau * 5 >= n && plateau < n;
        return f;
    }

    bool candidate(double payoff_value) const { return !active || payoff_value > floor; }
};

}  // namespace

ValueEstimate longstaff_schwartz(const StoppingProblem& p, const PathBundle& bundle, int degree,
                                 const PathBundle* eval_bundle) {
    if (degree < 1) throw ConfigError("longstaff_schwartz: basis degree must be >= 1");
    if (p.d > 2) throw ConfigError("longstaff_schwartz: basis implemented for d <= 2");
    const int n = bundle.n_paths;
    const int N = bundle.n_steps;

    std::vector<double> V(n);
    for (int i = 0; i < n; ++i) V[i] = p.terminal_gain(bundle.state(i, N));

    Basis proto = make_basis(p.d, degree);
    std::vector<double> payoff(n), frate(n);

    // per-step decision data kept for the out-of-sample replay
    struct StepRule {
        ExerciseFilter filter;
        std::vector<std::pair<double, double>> curve;  // (x, fitted continuation), sorted
    };
    std::vector<StepRule> rules(N);

    for (int k = N - 1; k >= 0; --k) {
        const double t = bundle.times[k];
        const double dt = bundle.times[k + 1] - bundle.times[k];

        for (int i = 0; i < n; ++i) {
            payoff[i] = p.terminal_gain(bundle.state(i, k));
            frate[i] = p.gain_rate(t, bundle.state(i, k));
        }
        ExerciseFilter filter = ExerciseFilter::detect(payoff);
        std::vector<int> cand;
        for (int i = 0; i < n; ++i)
            if (filter.candidate(payoff[i])) cand.push_back(i);

        rules[k].filter = filter;
        if (static_cast<int>(cand.size()) < std::max(proto.size() + 2, 8)) {
            for (int i = 0; i < n; ++i) V[i] = frate[i] * dt + V[i];  // nobody stops
            continue;
        }

        Basis basis = proto;
        bool degenerate = false;
        for (int c = 0; c < p.d; ++c) {
            double mean = 0.0, var = 0.0;
            for (int i : cand) mean += bundle.state(i, k)[c];
            mean /= static_cast<double>(cand.size());
            for (int i : cand) {
                double dx = bundle.state(i, k)[c] - mean;
                var += dx * dx;
            }
            var /= std::max<std::size_t>(1, cand.size() - 1);
            basis.mean[c] = mean;
            double scale = std::sqrt(var);
            if (scale < 1e-12 * (1.0 + std::fabs(mean))) {
                scale = 1.0;
                degenerate = true;
            }
            basis.sdev[c] = scale;
        }

        std::vector<std::vector<double>> rows(cand.size(), std::vector<double>(proto.size()));
        std::vector<double> y(cand.size());
        for (std::size_t ci = 0; ci < cand.size(); ++ci) {
            basis.fill(bundle.state(cand[ci], k), rows[ci]);
            y[ci] = V[cand[ci]];
        }
        std::vector<double> fit = regress_fit(rows, y, basis.size(), degenerate);

        if (p.d == 1) {
            rules[k].curve.resize(cand.size());
            for (std::size_t ci = 0; ci < cand.size(); ++ci)
                rules[k].curve[ci] = {bundle.state(cand[ci], k)[0], fit[ci]};
            std::sort(rules[k].curve.begin(), rules[k].curve.end());
        }

        std::vector<char> stop(n, 0);
        for (std::size_t ci = 0; ci < cand.size(); ++ci) {
            int i = cand[ci];
            if (payoff[i] >= frate[i] * dt + fit[ci]) stop[i] = 1;
        }
        for (int i = 0; i < n; ++i) V[i] = stop[i] ? payoff[i] : frate[i] * dt + V[i];
    }

    ValueEstimate est;
    est.seed = bundle.seed;
    est.method_tag = "lsmc-insample-deg" + std::to_string(degree);

    if (!eval_bundle) {
        est.n_paths = n;
        est.mean = mean_of(V);
        est.std_error = stderr_of(V, est.mean);
        return est;
    }

    // out-of-sample: replay the fitted continuation rule on fresh paths,
    // reading each step's fit by interpolation in the sorted candidate
    // states (d = 1 only)
    if (p.d != 1)
        throw ConfigError("out-of-sample replay is implemented for d = 1");
    const PathBundle& eb = *eval_bundle;
    if (eb.n_steps != N) throw DimensionError("out-of-sample bundle must share the time grid");

    auto fit_at = [&](int k, double x) {
        const auto& curve = rules[k].curve;
        if (x <= curve.front().first) return curve.front().second;
        if (x >= curve.back().first) return curve.back().second;
        auto it = std::lower_bound(curve.begin(), curve.end(), std::make_pair(x, -1e300));
        auto lo = it == curve.begin() ? it : it - 1;
        double w = (it->first - lo->first) > 0 ? (x - lo->first) / (it->first - lo->first) : 0.5;
        return lo->second + w * (it->second - lo->second);
    };

    std::vector<double> values(eb.n_paths);
    for (int i = 0; i < eb.n_paths; ++i) {
        double acc = 0.0;
        int kstop = N;
        for (int k = 0; k < N; ++k) {
            double pay = p.terminal_gain(eb.state(i, k));
            double dt = eb.times[k + 1] - eb.times[k];
            double rate = p.gain_rate(eb.times[k], eb.state(i, k));
            if (!rules[k].curve.empty() && rules[k].filter.candidate(pay) &&
                pay >= rate * dt + fit_at(k, eb.state(i, k)[0])) {
                kstop = k;
                break;
            }
            acc += rate * dt;
        }
        values[i] = acc + p.terminal_gain(eb.state(i, kstop));
    }
    est.method_tag = "lsmc-outofsample-deg" + std::to_string(degree);
    est.n_paths = eb.n_paths;
    est.seed = eb.seed;
    est.mean = mean_of(values);
    est.std_error = stderr_of(values, est.mean);
    return est;
}

namespace {

// Interpolated (value - obstacle) gap readers for the two surface kinds.

struct PdeReader {
    const PdeSurface* s;
    const Grid* grid;

    int layer_at(double t) const {
        int NT = static_cast<int>(s->v.size()) - 1;
        double pos = (t - s->t0) / s->dt;
        int k = static_cast<int>(std::floor(pos + 1e-9));
        return std::clamp(k, 0, NT);
    }

    // value interpolated multilinearly; false when x leaves the box
    bool value_at(double t, std::span<const double> x, double& out) const {
        const int k = layer_at(t);
        const int n = grid->n_space;
        int idx[2] = {0, 0};
        double w[2] = {0.0, 0.0};
        for (int c = 0; c < grid->dim(); ++c) {
            double pos = (x[c] - grid->lo[c]) / grid->spacing(c);
            if (pos < 0.0 || pos > n - 1) return false;
            int i = std::min(static_cast<int>(pos), n - 2);
            idx[c] = i;
            w[c] = pos - i;
        }
        const auto& v = s->v[k];
        if (grid->dim() == 1) {
            out = v[idx[0]] * (1.0 - w[0]) + v[idx[0] + 1] * w[0];
        } else {
            int base = idx[0] * n + idx[1];
            out = v[base] * (1 - w[0]) * (1 - w[1]) + v[base + n] * w[0] * (1 - w[1]) +
                  v[base + 1] * (1 - w[0]) * w[1] + v[base + n + 1] * w[0] * w[1];
        }
        return true;
    }
};

struct LatticeReader {
    const Chain* chain;
    const ValueSurface* s;
    double box_lo = 0.0, box_hi = 0.0;  // overall state range of the tree

    void prime() {
        box_lo = chain->layers[0][0].state[0];
        box_hi = box_lo;
        for (const auto& layer : chain->layers)
            for (const auto& node : layer) {
                box_lo = std::min(box_lo, node.state[0]);
                box_hi = std::max(box_hi, node.state[0]);
            }
    }

    int layer_at(double t) const {
        double pos = (t - chain->t0) / chain->dt;
        int k = static_cast<int>(std::floor(pos + 1e-9));
        return std::clamp(k, 0, chain->last_layer());
    }

    // A recombining tree fans out with sqrt(layer), so early layers are
    // narrower than the paths; inside the tree's overall box the query is
    // clamped to the layer's span, and only leaving the box counts as
    // off-grid.
    bool value_at(double t, std::span<const double> x, double& out) const {
        if (chain->d != 1) return false;  // rule surfaces from lattices: d = 1
        if (x[0] < box_lo || x[0] > box_hi) return false;
        const int k = layer_at(t);
        const auto& layer = chain->layers[k];
        const auto& v = s->value[k];
        if (layer.size() == 1) {
            out = v[0];
            return true;
        }
        // states ascend with node index on every lattice this builder makes
        double xq = std::clamp(x[0], layer.front().state[0], layer.back().state[0]);
        int lo = 0, hi = static_cast<int>(layer.size()) - 1;
        while (hi - lo > 1) {
            int mid = (lo + hi) / 2;
            if (layer[mid].state[0] <= xq) lo = mid;
            else hi = mid;
        }
        double x0 = layer[lo].state[0], x1 = layer[hi].state[0];
        double w = (x1 - x0) > 0 ? (xq - x0) / (x1 - x0) : 0.5;
        out = v[lo] * (1.0 - w) + v[hi] * w;
        return true;
    }
};

}  // namespace

ValueEstimate evaluate_rule(const StoppingProblem& p, const PathBundle& bundle,
                            const RuleSource& rule, double epsilon) {
    const int n = bundle.n_paths;
    const int N = bundle.n_steps;

    PdeReader pde_reader{rule.pde_surface, rule.pde_grid};
    LatticeReader lattice_reader{rule.chain, rule.lattice_surface};
    if (rule.kind == RuleSource::Kind::Lattice) lattice_reader.prime();

    std::vector<double> values(n);
    long long offgrid = 0;

    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        int kstop = N;
        bool left_box = false;
        for (int k = 0; k <= N; ++k) {
            auto x = bundle.state(i, k);
            bool stop = false;
            if (k == N) {
                stop = true;
            } else {
                switch (rule.kind) {
                    case RuleSource::Kind::Immediate: stop = true; break;
                    case RuleSource::Kind::Terminal: stop = false; break;
                    case RuleSource::Kind::Pde: {
                        double v;
                        if (!pde_reader.value_at(bundle.times[k], x, v)) {
                            stop = true;  // off the box: boundary payoff
                            left_box = true;
                        } else {
                            stop = (v - p.terminal_gain(x) <= epsilon);
                        }
                        break;
                    }
                    case RuleSource::Kind::Lattice: {
                        double v;
                        if (!lattice_reader.value_at(bundle.times[k], x, v)) {
                            stop = true;
                            left_box = true;
                        } else {
                            stop = (v - p.terminal_gain(x) <= epsilon);
                        }
                        break;
                    }
                }
            }
            if (stop) {
                kstop = k;
                break;
            }
            acc += p.gain_rate(bundle.times[k], x) * (bundle.times[k + 1] - bundle.times[k]);
        }
        values[i] = acc + p.terminal_gain(bundle.state(i, kstop));
        if (left_box) ++offgrid;
    }

    ValueEstimate est;
    est.n_paths = n;
    est.seed = bundle.seed;
    est.offgrid_fraction = static_cast<double>(offgrid) / n;
    switch (rule.kind) {
        case RuleSource::Kind::Immediate: est.method_tag = "rule-immediate"; break;
        case RuleSource::Kind::Terminal: est.method_tag = "rule-terminal"; break;
        case RuleSource::Kind::Pde: est.method_tag = "rule-pde"; break;
        case RuleSource::Kind::Lattice: est.method_tag = "rule-lattice"; break;
    }
    est.mean = mean_of(values);
    est.std_error = stderr_of(values, est.mean);
    if (est.offgrid_fraction > 0.05)
        throw CoverageError("more than 5% of paths left the rule surface's box (" +
                            std::to_string(100.0 * est.offgrid_fraction) +
                            "%); enlarge the box");
    return est;
}

}  // namespace snell
