#ifndef SNELL_LATTICE_HPP
#define SNELL_LATTICE_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <type_traits>
#include <vector>

#include "snell/enumeration.hpp"
#include "snell/errors.hpp"
#include "snell/model.hpp"
#include "snell/rational.hpp"
#include "snell/rng.hpp"

namespace snell {

/**
 * Recombining Markov-chain approximation of the diffusion.
 *
 * The scalar type is double for production solves and Rational for the
 * exact-arithmetic verification mode; the backward-induction and
 * verification algorithms are shared between the two.
 */
template <class S>
struct ChainT {
    struct Transition {
        int child;  // node index in the next layer
        S prob;
    };
    struct Node {
        std::vector<S> state;
        std::vector<Transition> next;  // empty on the last layer
    };

    std::vector<std::vector<Node>> layers;  // layers[0] is the single root
    S t0{};
    S dt{};
    int d = 1;
    std::string scheme_tag;

    int n_layers() const { return static_cast<int>(layers.size()); }
    int last_layer() const { return n_layers() - 1; }
};

using Chain = ChainT<double>;
using RationalChain = ChainT<Rational>;

/// Reward tables evaluated on the chain: run_inc[k][node] is the one-step
/// running reward f(t_k, x) * dt, obstacle[k][node] is g(x).
template <class S>
struct ChainGainT {
    std::vector<std::vector<S>> run_inc;
    std::vector<std::vector<S>> obstacle;
};

using ChainGain = ChainGainT<double>;
using RationalChainGain = ChainGainT<Rational>;

template <class S>
struct ValueSurfaceT {
    std::vector<std::vector<S>> value;     // [layer][node]
    std::vector<std::vector<S>> obstacle;  // copy of the gain obstacle
    std::vector<std::vector<char>> continuation;  // strict value > obstacle
};

using ValueSurface = ValueSurfaceT<double>;
using RationalValueSurface = ValueSurfaceT<Rational>;

enum class LatticeScheme { Binomial, Trinomial, TensorTrinomial };
enum class LatticeSpacing { Auto, Additive, Multiplicative };

LatticeScheme lattice_scheme_from_string(const std::string& s);

/**
 * Builds a recombining chain rooted at (t0, x0) with n_steps layers.
 *
 * Binomial and trinomial schemes are one-dimensional; tensor-trinomial
 * covers d = 2 with (numerically) diagonal diffusion. Spacing Auto probes
 * whether sigma scales proportionally with the state and picks
 * multiplicative node placement when it does, additive otherwise. Each
 * node's branch probabilities match the local drift and the local second
 * moment; any probability escaping [0, 1] raises StabilityError with advice
 * to shrink the time step.
 */
Chain build_chain(const StoppingProblem& p, double t0, std::span<const double> x0, int n_steps,
                  LatticeScheme scheme, LatticeSpacing spacing = LatticeSpacing::Auto);

ChainGain evaluate_chain_gain(const Chain& chain, const StoppingProblem& p);

struct MomentDiagnostics {
    double max_mean_error = 0.0;  // max node |E[dX] - b dt|_inf
    double max_var_error = 0.0;   // max node |Var[dX] - sigma sigma^T dt|_inf
};

MomentDiagnostics moment_diagnostics(const Chain& chain, const StoppingProblem& p);

/// V_N = g; V_k = max(g, f dt + E[V_{k+1}]); continuation flags strict >.
template <class S>
ValueSurfaceT<S> snell_envelope_core(const ChainT<S>& chain, const ChainGainT<S>& gains);

ValueSurface snell_envelope(const Chain& chain, const StoppingProblem& p);

/// Per-node stop/continue table: stop when value - obstacle <= epsilon.
struct StoppingRule {
    std::vector<std::vector<char>> stop;  // [layer][node]
    double epsilon = 0.0;
};

/// 10 ulp-scale default: 10 * eps * max|v| over the surface.
double default_rule_epsilon(const ValueSurface& surface);

StoppingRule smallest_optimal_rule(const ValueSurface& surface, double epsilon);

/// Rational-mode rule with an exact threshold (epsilon = 0 gives the
/// literal first-contact time).
std::vector<std::vector<char>> smallest_optimal_rule_exact(const RationalValueSurface& surface,
                                                           const Rational& epsilon);

/**
 * Path tree of the chain: every root-to-leaf node sequence in depth-first
 * transition order, with its probability. Stopping times on the chain are
 * tables over these paths; adaptedness is measured against the prefix
 * partition at each layer.
 */
template <class S>
struct PathTreeT {
    std::vector<std::vector<int>> node_at;  // [path][layer] node index
    std::vector<S> prob;                    // product of transition probabilities
};

template <class S>
PathTreeT<S> chain_paths(const ChainT<S>& chain);

template <class S>
bool chain_time_adapted(const PathTreeT<S>& tree, const std::vector<int>& stop);

/// Random adapted stopping time on the prefix tree (stop prob ~ 1/3 per node).
template <class S>
std::vector<int> random_chain_time(const PathTreeT<S>& tree, Rng& rng);

/**
 * Dynamic-programming residual: the inner maximization freezes the value at
 * tau_prime, i.e. stopping decisions after tau_prime are replaced by the
 * surface value there. Returns |W(root) - V(root)|; exact arithmetic gives
 * zero for every adapted tau_prime.
 */
template <class S>
S verify_dpp_core(const ChainT<S>& chain, const ChainGainT<S>& gains,
                  const ValueSurfaceT<S>& surface, const std::vector<int>& tau_prime);

double verify_dpp(const Chain& chain, const StoppingProblem& p, const ValueSurface& surface,
                  const std::vector<int>& tau_prime);

template <class S>
struct SupermartingaleReport {
    S max_violation{};                // max (f dt + E[V+] - V)^+, expect <= 0 + eps
    S equality_gap_on_continuation{}; // max |V - f dt - E[V+]| over continuation nodes
};

template <class S>
SupermartingaleReport<S> verify_supermartingale(const ValueSurfaceT<S>& surface,
                                                const ChainT<S>& chain,
                                                const ChainGainT<S>& gains);

SupermartingaleReport<double> verify_supermartingale(const ValueSurface& surface,
                                                     const Chain& chain,
                                                     const StoppingProblem& p);

/**
 * Unrolls a rational chain into the finite filtered space of its paths
 * (atoms = paths, filtration = prefix partitions) together with the matching
 * gain table, so the enumeration module can serve as a brute-force oracle.
 */
struct UnrolledChain {
    FiniteFilteredSpace space;
    GainTable gains;
    PathTreeT<Rational> tree;
};

UnrolledChain unroll_chain(const RationalChain& chain, const RationalChainGain& gains);

/// Random recombining binomial chain with rational probabilities and gains.
RationalChain random_rational_chain(Rng& rng, int depth);
RationalChainGain random_rational_chain_gain(const RationalChain& chain, Rng& rng,
                                             int num_range = 12, int den_max = 8);

/// CSV: layer,time,node,x_1..x_d,value,obstacle,continuation
void write_surface_csv(std::ostream& os, const Chain& chain, const ValueSurface& surface);

/// CSV: layer,time,node,x_1..x_d,stop (the epsilon-thresholded rule)
void write_rule_csv(std::ostream& os, const Chain& chain, const StoppingRule& rule);

// ---------------------------------------------------------------------------
// template implementations
// ---------------------------------------------------------------------------

namespace lattice_detail {

template <class S>
S abs_of(const S& v) {
    if constexpr (std::is_same_v<S, Rational>) return Rational::abs(v);
    else return std::fabs(v);
}

template <class S>
S max_of(const S& a, const S& b) {
    return a < b ? b : a;
}

}  // namespace lattice_detail

template <class S>
ValueSurfaceT<S> snell_envelope_core(const ChainT<S>& chain, const ChainGainT<S>& gains) {
    const int N = chain.last_layer();
    ValueSurfaceT<S> out;
    out.value.resize(N + 1);
    out.obstacle = gains.obstacle;
    out.continuation.resize(N + 1);

    out.value[N] = gains.obstacle[N];
    out.continuation[N].assign(chain.layers[N].size(), 0);

    for (int k = N - 1; k >= 0; --k) {
        const auto& layer = chain.layers[k];
        out.value[k].resize(layer.size());
        out.continuation[k].assign(layer.size(), 0);
        for (std::size_t i = 0; i < layer.size(); ++i) {
            S cont = gains.run_inc[k][i];
            for (const auto& tr : layer[i].next) cont += tr.prob * out.value[k + 1][tr.child];
            const S& g = gains.obstacle[k][i];
            if (cont > g) {
                out.value[k][i] = cont;
                out.continuation[k][i] = 1;
            } else {
                out.value[k][i] = g;  // ties stop: smallest stopping time
            }
        }
    }
    return out;
}

template <class S>
PathTreeT<S> chain_paths(const ChainT<S>& chain) {
    PathTreeT<S> tree;
    std::vector<int> nodes;
    std::function<void(int, int, S)> walk = [&](int layer, int node, S prob) {
        nodes.push_back(node);
        if (layer == chain.last_layer()) {
            tree.node_at.push_back(nodes);
            tree.prob.push_back(prob);
        } else {
            for (const auto& tr : chain.layers[layer][node].next)
                walk(layer + 1, tr.child, prob * tr.prob);
        }
        nodes.pop_back();
    };
    walk(0, 0, S(1));
    return tree;
}

template <class S>
bool chain_time_adapted(const PathTreeT<S>& tree, const std::vector<int>& stop) {
    const int n_paths = static_cast<int>(tree.node_at.size());
    if (static_cast<int>(stop.size()) != n_paths) return false;
    const int N = static_cast<int>(tree.node_at[0].size()) - 1;
    for (int p = 0; p < n_paths; ++p)
        if (stop[p] < 0 || stop[p] > N) return false;
    for (int k = 0; k < N; ++k) {
        // paths sharing a node prefix of length k+1 must agree on {stop <= k}
        for (int p = 1; p < n_paths; ++p) {
            for (int q = 0; q < p; ++q) {
                bool same_prefix = true;
                for (int j = 0; j <= k; ++j)
                    if (tree.node_at[p][j] != tree.node_at[q][j]) {
                        same_prefix = false;
                        break;
                    }
                if (same_prefix && (stop[p] <= k) != (stop[q] <= k)) return false;
            }
        }
    }
    return true;
}

template <class S>
std::vector<int> random_chain_time(const PathTreeT<S>& tree, Rng& rng) {
    const int n_paths = static_cast<int>(tree.node_at.size());
    const int N = static_cast<int>(tree.node_at[0].size()) - 1;
    std::vector<int> stop(n_paths, N);

    std::function<void(int, int, int)> walk = [&](int layer, int lo, int hi) {
        if (layer == N || rng.next_bernoulli(1.0 / 3.0)) {
            for (int p = lo; p < hi; ++p) stop[p] = layer;
            return;
        }
        int start = lo;
        while (start < hi) {
            int end = start + 1;
            while (end < hi && tree.node_at[end][layer + 1] == tree.node_at[start][layer + 1] &&
                   tree.node_at[end][layer] == tree.node_at[start][layer])
                ++end;
            walk(layer + 1, start, end);
            start = end;
        }
    };
    walk(0, 0, n_paths);
    return stop;
}

template <class S>
S verify_dpp_core(const ChainT<S>& chain, const ChainGainT<S>& gains,
                  const ValueSurfaceT<S>& surface, const std::vector<int>& tau_prime) {
    PathTreeT<S> tree = chain_paths(chain);
    if (!chain_time_adapted(tree, tau_prime))
        throw AdaptednessError("tau' is not adapted to the chain's natural filtration");
    const int N = chain.last_layer();

    // W over prefix ranges [lo, hi) at (layer, node); paths are in DFS order
    // so every prefix is a contiguous range
    std::function<S(int, int, int, int)> walk = [&](int layer, int node, int lo, int hi) -> S {
        if (tau_prime[lo] == layer || layer == N) return surface.value[layer][node];
        S cont = gains.run_inc[layer][node];
        int start = lo;
        const auto& transitions = chain.layers[layer][node].next;
        for (const auto& tr : transitions) {
            int end = start;
            while (end < hi && tree.node_at[end][layer + 1] == tr.child) ++end;
            cont += tr.prob * walk(layer + 1, tr.child, start, end);
            start = end;
        }
        const S& g = gains.obstacle[layer][node];
        return lattice_detail::max_of(g, cont);
    };
    S w_root = walk(0, 0, 0, static_cast<int>(tree.node_at.size()));
    return lattice_detail::abs_of<S>(w_root - surface.value[0][0]);
}

template <class S>
SupermartingaleReport<S> verify_supermartingale(const ValueSurfaceT<S>& surface,
                                                const ChainT<S>& chain,
                                                const ChainGainT<S>& gains) {
    SupermartingaleReport<S> rep;
    rep.max_violation = S(0);
    rep.equality_gap_on_continuation = S(0);
    for (int k = 0; k < chain.last_layer(); ++k) {
        const auto& layer = chain.layers[k];
        for (std::size_t i = 0; i < layer.size(); ++i) {
            S cont = gains.run_inc[k][i];
            for (const auto& tr : layer[i].next) cont += tr.prob * surface.value[k + 1][tr.child];
            S drift = cont - surface.value[k][i];
            if (drift > rep.max_violation) rep.max_violation = drift;
            if (surface.continuation[k][i]) {
                S gap = lattice_detail::abs_of<S>(surface.value[k][i] - cont);
                if (gap > rep.equality_gap_on_continuation) rep.equality_gap_on_continuation = gap;
            }
        }
    }
    return rep;
}

}  // namespace snell

#endif  // SNELL_LATTICE_HPP
