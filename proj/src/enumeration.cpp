#include "snell/enumeration.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <map>

#include "json.hpp"
#include "snell/errors.hpp"

namespace snell {

namespace {

constexpr unsigned long long kSaturated = std::numeric_limits<unsigned long long>::max();

unsigned long long sat_mul(unsigned long long a, unsigned long long b) {
    if (a == 0 || b == 0) return 0;
    if (a > kSaturated / b) return kSaturated;
    return a * b;
}

unsigned long long sat_add(unsigned long long a, unsigned long long b) {
    return (a > kSaturated - b) ? kSaturated : a + b;
}

std::vector<std::vector<int>> build_block_index(const std::vector<Partition>& filtration, int n_atoms) {
    std::vector<std::vector<int>> idx(filtration.size(), std::vector<int>(n_atoms, -1));
    for (std::size_t level = 0; level < filtration.size(); ++level) {
        for (std::size_t b = 0; b < filtration[level].size(); ++b)
            for (int a : filtration[level][b]) {
                if (a < 0 || a >= n_atoms)
                    throw StructureError("partition references atom out of range");
                if (idx[level][a] != -1)
                    throw StructureError("partition blocks overlap at level " + std::to_string(level));
                idx[level][a] = static_cast<int>(b);
            }
        for (int a = 0; a < n_atoms; ++a)
            if (idx[level][a] == -1)
                throw StructureError("partition does not cover atom " + std::to_string(a) +
                                     " at level " + std::to_string(level));
    }
    return idx;
}

void check_refinement(const std::vector<std::vector<int>>& idx, const char* what) {
    for (std::size_t level = 1; level < idx.size(); ++level) {
        // two atoms in one block at `level` must share a block at level-1
        std::map<int, int> parent_of_block;
        for (std::size_t a = 0; a < idx[level].size(); ++a) {
            int b = idx[level][a];
            int p = idx[level - 1][a];
            auto it = parent_of_block.find(b);
            if (it == parent_of_block.end())
                parent_of_block.emplace(b, p);
            else if (it->second != p)
                throw StructureError(std::string(what) + " does not refine at level " +
                                     std::to_string(level));
        }
    }
}

}  // namespace

Rational FiniteFilteredSpace::prob(const AtomSet& s) const {
    Rational r(0);
    for (int a = 0; a < n_atoms(); ++a)
        if (s.contains(a)) r += atom_prob[a];
    return r;
}

AtomSet FiniteFilteredSpace::block_set(int level, int block) const {
    AtomSet s(n_atoms());
    for (int a : filtration[level][block]) s.insert(a);
    return s;
}

void FiniteFilteredSpace::validate() {
    const int n = n_atoms();
    if (n == 0) throw StructureError("space has no atoms");
    if (filtration.size() != times.size())
        throw StructureError("filtration must have one partition per time index");
    for (int k = 1; k < n_times(); ++k)
        if (!(times[k - 1] < times[k])) throw StructureError("times must be strictly increasing");

    Rational total(0);
    for (const auto& p : atom_prob) {
        if (!(p > Rational(0))) throw StructureError("atom probabilities must be positive");
        total += p;
    }
    if (total != Rational(1)) throw StructureError("atom probabilities must sum to 1");

    block_index = build_block_index(filtration, n);
    check_refinement(block_index, "filtration");

    if (product) {
        const auto& ps = *product;
        if (static_cast<int>(ps.h_filtration.size()) != n_times())
            throw StructureError("product structure needs one H partition per time index");
        h_block_index = build_block_index(ps.h_filtration, n);
        check_refinement(h_block_index, "H filtration");

        std::vector<int> g_index(n, -1);
        for (std::size_t b = 0; b < ps.g_blocks.size(); ++b)
            for (int a : ps.g_blocks[b]) {
                if (g_index[a] != -1) throw StructureError("G blocks overlap");
                g_index[a] = static_cast<int>(b);
            }
        for (int a = 0; a < n; ++a)
            if (g_index[a] == -1) throw StructureError("G blocks do not cover the space");

        // join condition: filtration_k blocks are exactly the nonempty
        // intersections of G blocks with H_k blocks
        for (int k = 0; k < n_times(); ++k) {
            std::map<std::pair<int, int>, int> seen;  // (g block, h block) -> filtration block
            for (int a = 0; a < n; ++a) {
                auto key = std::make_pair(g_index[a], h_block_index[k][a]);
                auto it = seen.find(key);
                if (it == seen.end())
                    seen.emplace(key, block_index[k][a]);
                else if (it->second != block_index[k][a])
                    throw StructureError("filtration is coarser than join(G, H) at level " +
                                         std::to_string(k));
            }
            std::map<int, std::pair<int, int>> back;
            for (int a = 0; a < n; ++a) {
                auto key = std::make_pair(g_index[a], h_block_index[k][a]);
                auto it = back.find(block_index[k][a]);
                if (it == back.end())
                    back.emplace(block_index[k][a], key);
                else if (it->second != key)
                    throw StructureError("filtration is finer than join(G, H) at level " +
                                         std::to_string(k));
            }
        }

        // exact independence on generators: P(B n C) = P(B) P(C) for every
        // G block B and terminal H block C
        const auto& h_last = ps.h_filtration.back();
        for (const auto& gb : ps.g_blocks) {
            AtomSet gs(n);
            for (int a : gb) gs.insert(a);
            Rational pg = prob(gs);
            for (const auto& hb : h_last) {
                AtomSet hs(n);
                for (int a : hb) hs.insert(a);
                if (prob(gs & hs) != pg * prob(hs))
                    throw StructureError("G and H_N are not independent");
            }
        }
    }
}

bool is_adapted(const StoppingTimeTable& tau, const std::vector<Partition>& filtration,
                const std::vector<std::vector<int>>& block_index) {
    const int N = static_cast<int>(filtration.size()) - 1;
    for (std::size_t a = 0; a < tau.stop.size(); ++a)
        if (tau.stop[a] < 0 || tau.stop[a] > N) return false;
    (void)block_index;
    for (int k = 0; k < N; ++k) {  // level N is always measurable
        for (const auto& block : filtration[k]) {
            bool stopped = tau.stop[block[0]] <= k;
            for (int a : block)
                if ((tau.stop[a] <= k) != stopped) return false;
        }
    }
    return true;
}

void check_measurable(const GainTable& gains, const FiniteFilteredSpace& space) {
    const int N = space.last_index();
    if (static_cast<int>(gains.running.size()) != N ||
        static_cast<int>(gains.terminal.size()) != N + 1)
        throw DimensionError("gain table level count does not match the space");
    auto check_level = [&](const std::vector<Rational>& row, int level, const char* what) {
        if (static_cast<int>(row.size()) != space.n_atoms())
            throw DimensionError("gain table atom count mismatch");
        for (const auto& block : space.filtration[level]) {
            for (int a : block)
                if (row[a] != row[block[0]])
                    throw StructureError(std::string(what) + " gain not measurable at level " +
                                         std::to_string(level));
        }
    };
    for (int k = 0; k < N; ++k) check_level(gains.running[k], k, "running");
    for (int k = 0; k <= N; ++k) check_level(gains.terminal[k], k, "terminal");
}

// ---------------------------------------------------------------------------
// Stopping-time enumeration on a partition-refinement tree.
// ---------------------------------------------------------------------------

namespace {

struct TreeWalk {
    const std::vector<Partition>& filt;
    const std::vector<std::vector<int>>& bidx;
    int N;  // last level index

    std::vector<int> child_blocks(int level, const std::vector<int>& atoms) const {
        std::vector<int> out;
        for (int a : atoms) out.push_back(bidx[level + 1][a]);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    unsigned long long count(int level, int block) const {
        if (level == N) return 1;
        unsigned long long prod = 1;
        for (int c : child_blocks(level, filt[level][block]))
            prod = sat_mul(prod, count(level + 1, c));
        return sat_add(1, prod);
    }

    // All stopping profiles on the subtree rooted at (level, block), written
    // as full-length stop vectors touching only this block's atoms.
    void profiles(int level, int block, int n_atoms, std::vector<std::vector<int>>& out) const {
        const auto& atoms = filt[level][block];
        if (level == N) {
            std::vector<int> p(n_atoms, -1);
            for (int a : atoms) p[a] = N;
            out.push_back(std::move(p));
            return;
        }
        {
            std::vector<int> p(n_atoms, -1);
            for (int a : atoms) p[a] = level;
            out.push_back(std::move(p));
        }
        std::vector<int> children = child_blocks(level, atoms);
        std::vector<std::vector<std::vector<int>>> lists(children.size());
        for (std::size_t i = 0; i < children.size(); ++i)
            profiles(level + 1, children[i], n_atoms, lists[i]);

        std::vector<std::size_t> idx(children.size(), 0);
        for (;;) {
            std::vector<int> merged(n_atoms, -1);
            for (std::size_t i = 0; i < children.size(); ++i) {
                const auto& part = lists[i][idx[i]];
                for (int a : filt[level + 1][children[i]]) merged[a] = part[a];
            }
            out.push_back(std::move(merged));
            std::size_t pos = 0;
            while (pos < idx.size()) {
                if (++idx[pos] < lists[pos].size()) break;
                idx[pos] = 0;
                ++pos;
            }
            if (pos == idx.size()) break;
        }
    }
};

}  // namespace

unsigned long long count_stopping_times(const FiniteFilteredSpace& space) {
    TreeWalk walk{space.filtration, space.block_index, space.last_index()};
    unsigned long long total = 1;
    for (std::size_t b = 0; b < space.filtration[0].size(); ++b)
        total = sat_mul(total, walk.count(0, static_cast<int>(b)));
    return total;
}

std::vector<StoppingTimeTable> enumerate_stopping_times(const FiniteFilteredSpace& space,
                                                        unsigned long long cap) {
    unsigned long long predicted = count_stopping_times(space);
    if (predicted > cap)
        throw SizeError("stopping-time count " +
                            (predicted == kSaturated ? std::string(">= 2^64")
                                                     : std::to_string(predicted)) +
                            " exceeds cap " + std::to_string(cap),
                        predicted);

    TreeWalk walk{space.filtration, space.block_index, space.last_index()};
    const int n = space.n_atoms();

    std::vector<std::vector<std::vector<int>>> lists(space.filtration[0].size());
    for (std::size_t b = 0; b < lists.size(); ++b)
        walk.profiles(0, static_cast<int>(b), n, lists[b]);

    std::vector<StoppingTimeTable> out;
    out.reserve(static_cast<std::size_t>(predicted));
    std::vector<std::size_t> idx(lists.size(), 0);
    for (;;) {
        StoppingTimeTable t;
        t.stop.assign(n, -1);
        for (std::size_t b = 0; b < lists.size(); ++b) {
            const auto& part = lists[b][idx[b]];
            for (int a = 0; a < n; ++a)
                if (part[a] >= 0) t.stop[a] = part[a];
        }
        if (!is_adapted(t, space.filtration, space.block_index))
            throw StructureError("enumeration produced a non-adapted table");
        out.push_back(std::move(t));
        std::size_t pos = 0;
        while (pos < idx.size()) {
            if (++idx[pos] < lists[pos].size()) break;
            idx[pos] = 0;
            ++pos;
        }
        if (pos == idx.size()) break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Conditional brute-force values.
// ---------------------------------------------------------------------------

namespace {

// prefix_running[k][a] = sum_{j<k} running[j][a]
std::vector<std::vector<Rational>> prefix_running(const GainTable& gains, int n_atoms) {
    const int N = static_cast<int>(gains.running.size());
    std::vector<std::vector<Rational>> pre(N + 1, std::vector<Rational>(n_atoms, Rational(0)));
    for (int k = 0; k < N; ++k)
        for (int a = 0; a < n_atoms; ++a) pre[k + 1][a] = pre[k][a] + gains.running[k][a];
    return pre;
}

struct ThetaAtom {
    int level;
    int block;               // block id in space.filtration[level]
    std::vector<int> atoms;  // members
};

std::vector<ThetaAtom> theta_atoms(const FiniteFilteredSpace& space, const StoppingTimeTable& theta) {
    if (!is_adapted(theta, space.filtration, space.block_index))
        throw AdaptednessError("theta is not an adapted stopping time");
    std::map<std::pair<int, int>, ThetaAtom> found;
    for (int a = 0; a < space.n_atoms(); ++a) {
        int k = theta.stop[a];
        int b = space.block_index[k][a];
        auto key = std::make_pair(k, b);
        auto it = found.find(key);
        if (it == found.end()) found.emplace(key, ThetaAtom{k, b, {a}});
        else it->second.atoms.push_back(a);
    }
    std::vector<ThetaAtom> out;
    out.reserve(found.size());
    for (auto& [key, v] : found) out.push_back(std::move(v));
    return out;
}

// max over stopping profiles of E[reward from `level` | A]; the denominator
// P(A) is constant across profiles so the max is taken over numerators.
Rational best_conditional_value(const std::vector<std::vector<int>>& profiles,
                                const std::vector<int>& atoms, int level,
                                const FiniteFilteredSpace& space, const GainTable& gains,
                                const std::vector<std::vector<Rational>>& pre) {
    Rational prob_a(0);
    for (int a : atoms) prob_a += space.atom_prob[a];
    bool have = false;
    Rational best(0);
    for (const auto& prof : profiles) {
        Rational num(0);
        for (int a : atoms) {
            int s = prof[a];
            Rational reward = pre[s][a] - pre[level][a] + gains.terminal[s][a];
            num += space.atom_prob[a] * reward;
        }
        if (!have || num > best) {
            best = num;
            have = true;
        }
    }
    return best / prob_a;
}

}  // namespace

std::vector<Rational> value_brute_force(const FiniteFilteredSpace& space, const GainTable& gains,
                                        const StoppingTimeTable& theta, bool restrict_to_H) {
    check_measurable(gains, space);
    if (restrict_to_H && !space.product)
        throw StructureError("restrict_to_H requires a product structure");

    auto atoms_list = theta_atoms(space, theta);  // throws AdaptednessError
    auto pre = prefix_running(gains, space.n_atoms());
    const int n = space.n_atoms();

    TreeWalk f_walk{space.filtration, space.block_index, space.last_index()};
    std::vector<Rational> out(n, Rational(0));

    constexpr unsigned long long kSubtreeCap = 1000000;
    for (const auto& A : atoms_list) {
        std::vector<std::vector<int>> profiles;
        if (!restrict_to_H) {
            unsigned long long count = f_walk.count(A.level, A.block);
            if (count > kSubtreeCap)
                throw SizeError("conditional subtree has too many stopping times", count);
            f_walk.profiles(A.level, A.block, n, profiles);
        } else {
            TreeWalk h_walk{space.product->h_filtration, space.h_block_index, space.last_index()};
            int h_block = space.h_block_index[A.level][A.atoms[0]];
            unsigned long long count = h_walk.count(A.level, h_block);
            if (count > kSubtreeCap)
                throw SizeError("conditional subtree has too many stopping times", count);
            h_walk.profiles(A.level, h_block, n, profiles);
        }
        Rational v = best_conditional_value(profiles, A.atoms, A.level, space, gains, pre);
        for (int a : A.atoms) out[a] = v;
    }
    return out;
}

KeyEqualityReport verify_key_equality(const FiniteFilteredSpace& space,
                                      const StoppingTimeTable& theta, const GainTable& gains) {
    if (!space.product) throw StructureError("key-equality check requires a product structure");
    KeyEqualityReport rep;
    rep.full_values = value_brute_force(space, gains, theta, false);
    rep.restricted_values = value_brute_force(space, gains, theta, true);
    rep.n_theta_atoms = static_cast<int>(theta_atoms(space, theta).size());
    rep.max_gap = Rational(0);
    for (int a = 0; a < space.n_atoms(); ++a)
        rep.max_gap = Rational::max(rep.max_gap,
                                    Rational::abs(rep.full_values[a] - rep.restricted_values[a]));
    return rep;
}

// ---------------------------------------------------------------------------
// Exact Snell recursion and the smallest-optimal check.
// ---------------------------------------------------------------------------

SnellTable snell_backward(const FiniteFilteredSpace& space, const GainTable& gains) {
    check_measurable(gains, space);
    const int N = space.last_index();
    const int n = space.n_atoms();

    SnellTable t;
    t.value.assign(N + 1, std::vector<Rational>(n, Rational(0)));
    t.value[N] = gains.terminal[N];
    for (int k = N - 1; k >= 0; --k) {
        for (const auto& block : space.filtration[k]) {
            Rational pb(0), acc(0);
            for (int a : block) {
                pb += space.atom_prob[a];
                acc += space.atom_prob[a] * t.value[k + 1][a];
            }
            Rational cont = acc / pb;
            for (int a : block)
                t.value[k][a] = Rational::max(gains.terminal[k][a], gains.running[k][a] + cont);
        }
    }
    t.tau_hat.stop.assign(n, N);
    for (int a = 0; a < n; ++a)
        for (int k = 0; k <= N; ++k)
            if (t.value[k][a] == gains.terminal[k][a]) {
                t.tau_hat.stop[a] = k;
                break;
            }
    return t;
}

SmallestOptimalReport verify_smallest_optimal(const FiniteFilteredSpace& space,
                                              const GainTable& gains, unsigned long long cap) {
    SmallestOptimalReport rep;
    SnellTable snell = snell_backward(space, gains);
    rep.tau_hat = snell.tau_hat;

    auto all = enumerate_stopping_times(space, cap);
    bool have = false;
    std::vector<Rational> values(all.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        Rational v(0);
        for (int a = 0; a < space.n_atoms(); ++a)
            v += space.atom_prob[a] * gains.reward(all[i].stop[a], a);
        values[i] = v;
        if (!have || v > rep.optimal_value) {
            rep.optimal_value = v;
            have = true;
        }
    }
    for (std::size_t i = 0; i < all.size(); ++i)
        if (values[i] == rep.optimal_value) rep.optimal_set.push_back(all[i]);

    Rational tau_hat_value(0);
    for (int a = 0; a < space.n_atoms(); ++a)
        tau_hat_value += space.atom_prob[a] * gains.reward(rep.tau_hat.stop[a], a);

    rep.is_smallest = (tau_hat_value == rep.optimal_value);
    for (const auto& opt : rep.optimal_set) {
        for (int a = 0; a < space.n_atoms(); ++a)
            if (rep.tau_hat.stop[a] > opt.stop[a]) rep.is_smallest = false;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Constructive decomposition of an adapted stopping time (steps 1-4).
// ---------------------------------------------------------------------------

namespace {

struct GView {
    std::vector<AtomSet> g_sets;     // one per G block
    std::vector<int> g_index;        // atom -> G block
};

GView g_view(const FiniteFilteredSpace& space) {
    GView v;
    const auto& gb = space.product->g_blocks;
    v.g_sets.reserve(gb.size());
    v.g_index.assign(space.n_atoms(), -1);
    for (std::size_t b = 0; b < gb.size(); ++b) {
        AtomSet s(space.n_atoms());
        for (int a : gb[b]) {
            s.insert(a);
            v.g_index[a] = static_cast<int>(b);
        }
        v.g_sets.push_back(std::move(s));
    }
    return v;
}

std::vector<AtomSet> h_sets_at(const FiniteFilteredSpace& space, int level) {
    std::vector<AtomSet> out;
    for (const auto& block : space.product->h_filtration[level]) {
        AtomSet s(space.n_atoms());
        for (int a : block) s.insert(a);
        out.push_back(std::move(s));
    }
    return out;
}

bool in_sigma_h(const FiniteFilteredSpace& space, int level, const AtomSet& set) {
    for (const auto& block : space.product->h_filtration[level]) {
        bool any = false, all = true;
        for (int a : block) {
            if (set.contains(a)) any = true;
            else all = false;
        }
        if (any && !all) return false;
    }
    return true;
}

/**
 * Greedy cover of level set A (a union of join blocks at `level`) by
 * maximal rectangles B n C with B a union of G blocks and C a union of
 * H_level blocks. For each nonempty G-block subset S, the largest admissible
 * C collects the H blocks h with (B_S n h) inside A; candidates are tried
 * from the widest B down, so covers routinely reuse overlapping B parts.
 */
std::vector<ApproximationTrace::Rect> rectangle_cover(const FiniteFilteredSpace& space,
                                                      const GView& gv, const AtomSet& A,
                                                      int level) {
    const int nG = static_cast<int>(gv.g_sets.size());
    if (nG > 20) throw SizeError("rectangle cover needs <= 20 G blocks", 1ull << nG);
    auto h_sets = h_sets_at(space, level);

    struct Cand {
        std::uint32_t mask;
        AtomSet b, c, inside;
    };
    std::vector<Cand> cands;
    for (std::uint32_t mask = 1; mask < (1u << nG); ++mask) {
        AtomSet b(space.n_atoms());
        for (int g = 0; g < nG; ++g)
            if (mask & (1u << g)) b = b | gv.g_sets[g];
        AtomSet c(space.n_atoms());
        for (const auto& h : h_sets) {
            if ((b & h).subset_of(A)) c = c | h;
        }
        AtomSet inside = b & c;
        if (!inside.empty()) cands.push_back({mask, b, c, inside});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
        int px = __builtin_popcount(x.mask), py = __builtin_popcount(y.mask);
        if (px != py) return px > py;
        return x.mask < y.mask;
    });

    std::vector<ApproximationTrace::Rect> rects;
    AtomSet uncovered = A;
    for (const auto& cand : cands) {
        if (uncovered.empty()) break;
        if (cand.inside.intersects(uncovered)) {
            rects.push_back({cand.b, cand.c, level});
            uncovered = uncovered - cand.inside;
        }
    }
    if (!uncovered.empty())
        throw StructureError("level set is not covered by G x H rectangles (level " +
                             std::to_string(level) + ")");
    return rects;
}

}  // namespace

ApproximationTrace approximate_stopping_time(const FiniteFilteredSpace& space,
                                             const StoppingTimeTable& tau) {
    if (!space.product) throw StructureError("approximation requires a product structure");
    if (!is_adapted(tau, space.filtration, space.block_index))
        throw AdaptednessError("tau is not an adapted stopping time");

    const int n = space.n_atoms();
    const int N = space.last_index();
    GView gv = g_view(space);
    ApproximationTrace trace;

    // step 1: level sets as unions of rectangles (exact on a finite space,
    // so the approximating sequence is stationary at tau itself)
    std::vector<int> levels;  // nonempty stop levels, increasing
    std::vector<AtomSet> level_sets;
    for (int k = 0; k <= N; ++k) {
        AtomSet s(n);
        for (int a = 0; a < n; ++a)
            if (tau.stop[a] == k) s.insert(a);
        if (!s.empty()) {
            levels.push_back(k);
            level_sets.push_back(s);
        }
    }

    // step 2: disjointify across levels (already disjoint here; the
    // subtractions keep the construction faithful for inexact covers)
    std::vector<AtomSet> tilde;
    AtomSet used(n);
    for (const auto& s : level_sets) {
        tilde.push_back(s - used);
        used = used | s;
    }

    for (std::size_t j = 0; j < levels.size(); ++j)
        trace.level_rects.push_back(rectangle_cover(space, gv, tilde[j], levels[j]));

    // step 3: per level, make the G parts pairwise disjoint via the sign
    // patterns realized by the G blocks
    trace.disjoint_rects.resize(levels.size());
    trace.sign_pattern_counts.resize(levels.size());
    for (std::size_t j = 0; j < levels.size(); ++j) {
        const auto& rects = trace.level_rects[j];
        const int nr = static_cast<int>(rects.size());
        trace.sign_pattern_counts[j] = (nr >= 64) ? kSaturated : ((1ull << nr) - 1);

        std::map<std::uint64_t, AtomSet> cells;  // realized pattern -> union of G blocks
        for (std::size_t g = 0; g < gv.g_sets.size(); ++g) {
            std::uint64_t pattern = 0;
            for (int i = 0; i < nr; ++i)
                if (gv.g_sets[g].subset_of(rects[i].b)) pattern |= (1ull << i);
            if (pattern == 0) continue;  // G block outside every rectangle
            auto it = cells.find(pattern);
            if (it == cells.end()) cells.emplace(pattern, gv.g_sets[g]);
            else it->second = it->second | gv.g_sets[g];
        }
        AtomSet covered(n);
        for (const auto& [pattern, bhat] : cells) {
            AtomSet chat(n);
            for (int i = 0; i < nr; ++i)
                if (pattern & (1ull << i)) chat = chat | rects[i].c;
            AtomSet piece = bhat & chat;
            if (!piece.subset_of(tilde[j]))
                throw StructureError("sign-pattern rectangle escapes its level set");
            covered = covered | piece;
            trace.disjoint_rects[j].push_back({bhat, chat, levels[j]});
        }
        if (covered != tilde[j])
            throw StructureError("sign-pattern rectangles do not cover the level set");
    }

    // step 4: flatten to one rectangle per summand (level order preserved),
    // then assemble the final cells and their component stopping times
    struct Flat {
        AtomSet b, c;
        int level;
    };
    std::vector<Flat> flat;
    for (std::size_t j = 0; j < levels.size(); ++j)
        for (const auto& r : trace.disjoint_rects[j]) flat.push_back({r.b, r.c, r.level});
    const int M = static_cast<int>(flat.size());
    trace.flattened_rect_count = M;
    if (M > 63) throw SizeError("flattened rectangle count exceeds 63", static_cast<unsigned long long>(M));

    std::map<std::uint64_t, AtomSet> cell_map;  // realized sigma -> B-hat
    for (std::size_t g = 0; g < gv.g_sets.size(); ++g) {
        std::uint64_t sigma = 0;
        for (int i = 0; i < M; ++i)
            if (gv.g_sets[g].subset_of(flat[i].b)) sigma |= (1ull << i);
        if (sigma == 0)
            throw StructureError("a G block lies outside every rectangle");
        auto it = cell_map.find(sigma);
        if (it == cell_map.end()) cell_map.emplace(sigma, gv.g_sets[g]);
        else it->second = it->second | gv.g_sets[g];
    }

    trace.reconstructed.stop.assign(n, -1);
    trace.components_h_adapted = true;

    for (const auto& [sigma, bhat] : cell_map) {
        std::vector<AtomSet> chats(M, AtomSet(n));
        AtomSet taken(n);
        for (int jj = 0; jj < M; ++jj) {
            if (jj == M - 1) {
                chats[jj] = taken.complement();
            } else if (sigma & (1ull << jj)) {
                chats[jj] = flat[jj].c - taken;
            }  // else empty
            taken = taken | chats[jj];
        }
        // component stopping time tau^sigma = sum_j t_{level_j} 1_{C-hat_j}
        StoppingTimeTable comp;
        comp.stop.assign(n, -1);
        for (int jj = 0; jj < M; ++jj)
            for (int a = 0; a < n; ++a)
                if (chats[jj].contains(a) && comp.stop[a] == -1) comp.stop[a] = flat[jj].level;
        for (int a = 0; a < n; ++a)
            if (comp.stop[a] == -1)
                throw StructureError("C-hat pieces do not partition the space");

        // each C-hat must be H_level measurable, and the component a genuine
        // H stopping time
        for (int jj = 0; jj < M; ++jj)
            if (!chats[jj].empty() && !in_sigma_h(space, flat[jj].level, chats[jj]))
                trace.components_h_adapted = false;
        if (!is_adapted(comp, space.product->h_filtration, space.h_block_index))
            trace.components_h_adapted = false;

        for (int a = 0; a < n; ++a)
            if (bhat.contains(a)) trace.reconstructed.stop[a] = comp.stop[a];

        trace.sigma_patterns.push_back(sigma);
        trace.cells.push_back(bhat);
        trace.components.push_back(std::move(comp));
        trace.c_hats.push_back(std::move(chats));
    }

    // cells must partition Omega
    AtomSet cover(n);
    trace.cells_partition = true;
    for (const auto& cell : trace.cells) {
        if (cover.intersects(cell)) trace.cells_partition = false;
        cover = cover | cell;
    }
    if (cover != AtomSet::full(n)) trace.cells_partition = false;

    trace.reconstruction_exact = (trace.reconstructed.stop == tau.stop);
    return trace;
}

// ---------------------------------------------------------------------------
// Random instances.
// ---------------------------------------------------------------------------

namespace {

struct HTree {
    int depth;
    std::vector<std::vector<int>> leaf_group;  // [level][leaf] -> group id at that level
    int n_leaves;
};

HTree random_h_tree(Rng& rng, int max_depth, int max_branching) {
    HTree t;
    // degenerate one-branch trees carry no information; draw at least 2
    // whenever the caps allow
    const int min_depth = std::min(2, max_depth);
    const int min_branch = std::min(2, max_branching);
    t.depth = static_cast<int>(rng.next_int(min_depth, max_depth));
    t.leaf_group.assign(t.depth + 1, {});

    // enumerate leaves depth-first, recording the group id at every level
    std::vector<int> next_id(t.depth + 1, 0);
    std::vector<std::vector<int>> leaf_ancestry;

    std::function<void(int, std::vector<int>&)> grow = [&](int level, std::vector<int>& anc) {
        int id = next_id[level]++;
        anc.push_back(id);
        if (level == t.depth) {
            leaf_ancestry.push_back(anc);
        } else {
            int k = static_cast<int>(rng.next_int(min_branch, max_branching));
            for (int c = 0; c < k; ++c) grow(level + 1, anc);
        }
        anc.pop_back();
    };
    std::vector<int> anc;
    grow(0, anc);

    t.n_leaves = static_cast<int>(leaf_ancestry.size());
    for (int level = 0; level <= t.depth; ++level) {
        t.leaf_group[level].resize(t.n_leaves);
        for (int leaf = 0; leaf < t.n_leaves; ++leaf)
            t.leaf_group[level][leaf] = leaf_ancestry[leaf][level];
    }
    return t;
}

std::vector<Rational> random_weights(Rng& rng, int count, int max_weight) {
    std::vector<long long> w(count);
    long long total = 0;
    for (auto& v : w) {
        v = rng.next_int(1, max_weight);
        total += v;
    }
    std::vector<Rational> out;
    out.reserve(count);
    for (auto v : w) out.emplace_back(v, total);
    return out;
}

}  // namespace

FiniteFilteredSpace random_product_space(Rng& rng, const SpaceGenParams& params) {
    for (int attempt = 0; attempt < 200; ++attempt) {
        int nG = static_cast<int>(rng.next_int(1, params.max_g_atoms));
        HTree ht = random_h_tree(rng, params.max_depth, params.max_branching);

        FiniteFilteredSpace s;
        const int n = nG * ht.n_leaves;
        auto gw = random_weights(rng, nG, params.max_weight);
        auto hw = random_weights(rng, ht.n_leaves, params.max_weight);

        s.atom_prob.reserve(n);
        for (int g = 0; g < nG; ++g)
            for (int h = 0; h < ht.n_leaves; ++h) s.atom_prob.push_back(gw[g] * hw[h]);

        for (int k = 0; k <= ht.depth; ++k) s.times.emplace_back(k);

        auto atom_of = [&](int g, int h) { return g * ht.n_leaves + h; };

        FiniteFilteredSpace::ProductStructure ps;
        ps.g_blocks.resize(nG);
        for (int g = 0; g < nG; ++g)
            for (int h = 0; h < ht.n_leaves; ++h) ps.g_blocks[g].push_back(atom_of(g, h));

        ps.h_filtration.resize(ht.depth + 1);
        s.filtration.resize(ht.depth + 1);
        for (int level = 0; level <= ht.depth; ++level) {
            std::map<int, std::vector<int>> h_groups;
            for (int h = 0; h < ht.n_leaves; ++h)
                h_groups[ht.leaf_group[level][h]].push_back(h);
            for (auto& [gid, leaves] : h_groups) {
                std::vector<int> block;
                for (int g = 0; g < nG; ++g)
                    for (int h : leaves) block.push_back(atom_of(g, h));
                std::sort(block.begin(), block.end());
                ps.h_filtration[level].push_back(block);
                for (int g = 0; g < nG; ++g) {
                    std::vector<int> fb;
                    for (int h : leaves) fb.push_back(atom_of(g, h));
                    s.filtration[level].push_back(std::move(fb));
                }
            }
        }
        s.product = std::move(ps);
        s.validate();

        if (params.max_stopping_times == 0 ||
            count_stopping_times(s) <= params.max_stopping_times)
            return s;
    }
    throw SizeError("could not draw a product space under the stopping-time cap", 0);
}

FiniteFilteredSpace binary_space(int depth, Rng& rng, int max_weight) {
    FiniteFilteredSpace s;
    const int n = 1 << depth;
    s.atom_prob = random_weights(rng, n, max_weight);
    for (int k = 0; k <= depth; ++k) s.times.emplace_back(k);
    s.filtration.resize(depth + 1);
    for (int level = 0; level <= depth; ++level) {
        int blocks = 1 << level;
        int width = n >> level;
        for (int b = 0; b < blocks; ++b) {
            std::vector<int> block;
            for (int a = b * width; a < (b + 1) * width; ++a) block.push_back(a);
            s.filtration[level].push_back(std::move(block));
        }
    }
    s.validate();
    return s;
}

GainTable random_gain_table(const FiniteFilteredSpace& space, Rng& rng,
                            const SpaceGenParams& params) {
    const int N = space.last_index();
    const int n = space.n_atoms();
    GainTable g;
    auto draw = [&]() {
        long long num = rng.next_int(-params.gain_num_range, params.gain_num_range);
        long long den = rng.next_int(1, params.gain_den_max);
        return Rational(num, den);
    };
    g.running.assign(N, std::vector<Rational>(n, Rational(0)));
    g.terminal.assign(N + 1, std::vector<Rational>(n, Rational(0)));
    for (int k = 0; k <= N; ++k) {
        for (const auto& block : space.filtration[k]) {
            if (k < N) {
                Rational r = draw();
                for (int a : block) g.running[k][a] = r;
            }
            Rational t = draw();
            for (int a : block) g.terminal[k][a] = t;
        }
    }
    return g;
}

namespace {

StoppingTimeTable random_time_on(const std::vector<Partition>& filt,
                                 const std::vector<std::vector<int>>& bidx, int n_atoms, Rng& rng) {
    const int N = static_cast<int>(filt.size()) - 1;
    StoppingTimeTable t;
    t.stop.assign(n_atoms, N);
    std::function<void(int, int)> walk = [&](int level, int block) {
        const auto& atoms = filt[level][block];
        if (level == N || rng.next_bernoulli(1.0 / 3.0)) {
            for (int a : atoms) t.stop[a] = level;
            return;
        }
        std::vector<int> children;
        for (int a : atoms) children.push_back(bidx[level + 1][a]);
        std::sort(children.begin(), children.end());
        children.erase(std::unique(children.begin(), children.end()), children.end());
        for (int c : children) walk(level + 1, c);
    };
    for (std::size_t b = 0; b < filt[0].size(); ++b) walk(0, static_cast<int>(b));
    return t;
}

}  // namespace

StoppingTimeTable random_adapted_time(const FiniteFilteredSpace& space, Rng& rng) {
    return random_time_on(space.filtration, space.block_index, space.n_atoms(), rng);
}

StoppingTimeTable random_h_adapted_time(const FiniteFilteredSpace& space, Rng& rng) {
    if (!space.product) throw StructureError("H-adapted draw requires a product structure");
    return random_time_on(space.product->h_filtration, space.h_block_index, space.n_atoms(), rng);
}

// ---------------------------------------------------------------------------
// JSON round-trip.
// ---------------------------------------------------------------------------

namespace {
using nlohmann::json;

json partition_to_json(const Partition& p) {
    json out = json::array();
    for (const auto& block : p) out.push_back(block);
    return out;
}

Partition partition_from_json(const json& j) {
    Partition p;
    for (const auto& block : j) p.push_back(block.get<std::vector<int>>());
    return p;
}

}  // namespace

std::string space_to_json(const FiniteFilteredSpace& space) {
    json j;
    j["schema"] = "snell-space-v1";
    j["atoms"] = space.n_atoms();
    json probs = json::array();
    for (const auto& p : space.atom_prob) probs.push_back(p.str());
    j["probabilities"] = probs;
    json times = json::array();
    for (const auto& t : space.times) times.push_back(t.str());
    j["times"] = times;
    json filt = json::array();
    for (const auto& part : space.filtration) filt.push_back(partition_to_json(part));
    j["filtration"] = filt;
    if (space.product) {
        json prod;
        prod["g_blocks"] = partition_to_json(space.product->g_blocks);
        json hf = json::array();
        for (const auto& part : space.product->h_filtration) hf.push_back(partition_to_json(part));
        prod["h_filtration"] = hf;
        j["product"] = prod;
    }
    return j.dump(2) + "\n";
}

FiniteFilteredSpace space_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("space JSON: ") + e.what(), e.byte);
    }
    if (j.value("schema", "") != std::string("snell-space-v1"))
        throw ParseError("space JSON: unknown or missing schema", 0);
    FiniteFilteredSpace s;
    for (const auto& p : j.at("probabilities")) s.atom_prob.push_back(Rational::parse(p.get<std::string>()));
    for (const auto& t : j.at("times")) s.times.push_back(Rational::parse(t.get<std::string>()));
    for (const auto& part : j.at("filtration")) s.filtration.push_back(partition_from_json(part));
    if (j.contains("product")) {
        FiniteFilteredSpace::ProductStructure ps;
        ps.g_blocks = partition_from_json(j["product"].at("g_blocks"));
        for (const auto& part : j["product"].at("h_filtration"))
            ps.h_filtration.push_back(partition_from_json(part));
        s.product = std::move(ps);
    }
    s.validate();
    return s;
}

std::string trace_to_json(const ApproximationTrace& trace, const FiniteFilteredSpace& space,
                          const StoppingTimeTable& tau) {
    json j;
    j["schema"] = "snell-trace-v1";
    j["tau"] = tau.stop;
    j["flattened_rect_count"] = trace.flattened_rect_count;
    json cells = json::array();
    for (std::size_t i = 0; i < trace.cells.size(); ++i) {
        json cell;
        cell["sigma_pattern"] = trace.sigma_patterns[i];
        cell["atoms"] = trace.cells[i].members();
        cell["component_stop"] = trace.components[i].stop;
        json chs = json::array();
        for (const auto& ch : trace.c_hats[i]) chs.push_back(ch.members());
        cell["c_hats"] = chs;
        cells.push_back(cell);
    }
    j["cells"] = cells;
    json level_rects = json::array();
    for (const auto& rects : trace.level_rects) {
        json lr = json::array();
        for (const auto& r : rects) {
            json rect;
            rect["level"] = r.level;
            rect["b_atoms"] = r.b.members();
            rect["c_atoms"] = r.c.members();
            lr.push_back(rect);
        }
        level_rects.push_back(lr);
    }
    j["level_rectangles"] = level_rects;
    j["sign_pattern_counts"] = trace.sign_pattern_counts;
    j["reconstruction_exact"] = trace.reconstruction_exact;
    j["components_h_adapted"] = trace.components_h_adapted;
    j["cells_partition"] = trace.cells_partition;
    (void)space;
    return j.dump(2) + "\n";
}

}  // namespace snell
