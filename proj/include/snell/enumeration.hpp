#ifndef SNELL_ENUMERATION_HPP
#define SNELL_ENUMERATION_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "snell/atom_set.hpp"
#include "snell/rational.hpp"
#include "snell/rng.hpp"

namespace snell {

/// Partition of atom indices into disjoint blocks covering the space.
using Partition = std::vector<std::vector<int>>;

/**
 * Finite probability space with a refining-partition filtration.
 *
 * Optionally carries a product structure: a partition G of the atoms and a
 * per-time partition sequence H_k with filtration_k = join(G, H_k) and
 * sigma(G) independent of sigma(H_N). That structure is what the
 * key-equality and approximation checks operate on; spaces without it still
 * support enumeration, brute-force values and the smallest-optimal check.
 */
struct FiniteFilteredSpace {
    std::vector<Rational> atom_prob;      // positive, sums to 1
    std::vector<Rational> times;          // t_0 < ... < t_N
    std::vector<Partition> filtration;    // one partition per time index, refining

    struct ProductStructure {
        Partition g_blocks;               // partition generating sigma(G)
        std::vector<Partition> h_filtration;  // H_0, ..., H_N, refining
    };
    std::optional<ProductStructure> product;

    int n_atoms() const { return static_cast<int>(atom_prob.size()); }
    int n_times() const { return static_cast<int>(times.size()); }
    int last_index() const { return n_times() - 1; }

    /// Index of the filtration block containing each atom, per level.
    /// Computed lazily by validate(); required by most operations.
    std::vector<std::vector<int>> block_index;    // [level][atom]
    std::vector<std::vector<int>> h_block_index;  // [level][atom], product only

    /**
     * Verifies: probabilities positive and summing to one, partitions
     * refine monotonically, and (when present) the product structure's join
     * and exact independence conditions. Fills the block index tables.
     * Throws StructureError on any violation.
     */
    void validate();

    Rational prob(const AtomSet& s) const;
    AtomSet block_set(int level, int block) const;
};

/// Adapted random time: a stop level per atom. Adaptedness means
/// {stop <= k} is a union of filtration_k blocks for every k.
struct StoppingTimeTable {
    std::vector<int> stop;  // per atom, in [0, N]

    bool operator==(const StoppingTimeTable& o) const { return stop == o.stop; }
};

bool is_adapted(const StoppingTimeTable& tau, const std::vector<Partition>& filtration,
                const std::vector<std::vector<int>>& block_index);

/**
 * Reward tables on the space. The reward of stopping at level k on atom w is
 *   sum_{j < k} running[j][w]  +  terminal[k][w].
 * Both tables must be measurable at their level (constant on blocks).
 */
struct GainTable {
    std::vector<std::vector<Rational>> running;   // [level 0..N-1][atom]
    std::vector<std::vector<Rational>> terminal;  // [level 0..N][atom]

    Rational reward(int stop_level, int atom) const {
        Rational r = terminal[stop_level][atom];
        for (int j = 0; j < stop_level; ++j) r += running[j][atom];
        return r;
    }
};

void check_measurable(const GainTable& gains, const FiniteFilteredSpace& space);

/**
 * Number of stopping times on the filtration tree, computed by the product
 * recursion count(leaf) = 1, count(node) = 1 + prod(count(children)); the
 * total is the product over level-0 blocks. Saturates at 2^64-1.
 */
unsigned long long count_stopping_times(const FiniteFilteredSpace& space);

/**
 * Materializes every adapted stopping time. Throws SizeError carrying the
 * predicted count if it exceeds cap.
 */
std::vector<StoppingTimeTable> enumerate_stopping_times(const FiniteFilteredSpace& space,
                                                        unsigned long long cap = 1000000);

/**
 * Conditional value by exhaustive search. For each atom of the sigma-algebra
 * F_theta (the filtration block of each atom at its theta level), maximizes
 * E[reward from theta | atom] over all stopping-time restrictions to that
 * block that are >= theta. With restrict_to_H set, the search runs over
 * H-adapted stopping times instead (product structure required).
 *
 * Returns one value per atom of Omega, constant on each F_theta atom.
 */
std::vector<Rational> value_brute_force(const FiniteFilteredSpace& space, const GainTable& gains,
                                        const StoppingTimeTable& theta, bool restrict_to_H);

struct KeyEqualityReport {
    Rational max_gap;                       // max over F_theta atoms of |restricted - full|
    std::vector<Rational> full_values;      // per atom
    std::vector<Rational> restricted_values;
    int n_theta_atoms = 0;
};

/**
 * Checks the conditional value equality: on every F_theta atom, the maximum
 * over all stopping times >= theta of the conditional expected reward equals
 * the maximum over the H-adapted ones. Exact rational arithmetic; the
 * expected gap is zero.
 */
KeyEqualityReport verify_key_equality(const FiniteFilteredSpace& space,
                                      const StoppingTimeTable& theta, const GainTable& gains);

struct SmallestOptimalReport {
    std::vector<StoppingTimeTable> optimal_set;
    StoppingTimeTable tau_hat;
    bool is_smallest = false;
    Rational optimal_value;
};

/**
 * Exact backward induction gives tau_hat (first level where the envelope
 * touches the immediate reward); exhaustive enumeration then confirms that
 * tau_hat attains the maximum and is atomwise <= every optimal stopping
 * time.
 */
SmallestOptimalReport verify_smallest_optimal(const FiniteFilteredSpace& space,
                                              const GainTable& gains,
                                              unsigned long long cap = 1000000);

/// Value-to-go envelope per (level, atom) plus tau_hat; shared by the
/// smallest-optimal check and the tests.
struct SnellTable {
    std::vector<std::vector<Rational>> value;  // [level][atom]
    StoppingTimeTable tau_hat;
};

SnellTable snell_backward(const FiniteFilteredSpace& space, const GainTable& gains);

/**
 * Trace of the constructive decomposition of an adapted stopping time over a
 * product space: rectangle covers of each level set, the sign-pattern
 * disjointification, and the final cells with their H-adapted component
 * times. On a finite space the construction is exact, so the reconstruction
 * must equal the input pointwise.
 */
struct ApproximationTrace {
    struct Rect {
        AtomSet b;   // union of G blocks
        AtomSet c;   // union of H_level blocks
        int level;   // time index of the originating level set
    };

    std::vector<std::vector<Rect>> level_rects;      // step 1, per nonempty level set
    std::vector<std::vector<Rect>> disjoint_rects;   // step 3 output per level set
    std::vector<unsigned long long> sign_pattern_counts;  // |S_j| = 2^(N_j) - 1 per level set

    // step 4: flattened rectangles in level order, realized patterns only
    std::vector<std::uint64_t> sigma_patterns;       // bit j set <=> cell inside rect j's B part
    std::vector<AtomSet> cells;                      // B-hat per realized pattern; partition of Omega
    std::vector<StoppingTimeTable> components;       // tau^sigma per cell, H-adapted
    std::vector<std::vector<AtomSet>> c_hats;        // C-hat per (pattern, flattened rect)
    int flattened_rect_count = 0;

    StoppingTimeTable reconstructed;

    bool reconstruction_exact = false;
    bool components_h_adapted = false;
    bool cells_partition = false;

    bool all_checks_pass() const {
        return reconstruction_exact && components_h_adapted && cells_partition;
    }
};

ApproximationTrace approximate_stopping_time(const FiniteFilteredSpace& space,
                                             const StoppingTimeTable& tau);

// ---------------------------------------------------------------------------
// Random instances. Shapes and ranges are pinned by the generator manifest so
// any failure reproduces from (manifest version, seed).
// ---------------------------------------------------------------------------

struct SpaceGenParams {
    int max_g_atoms = 3;
    int max_depth = 3;
    int max_branching = 3;
    int max_weight = 6;        // atom probability weights
    int gain_num_range = 12;   // numerators uniform in [-range, range]
    int gain_den_max = 8;
    unsigned long long max_stopping_times = 0;  // 0 = unbounded; else resample
};

inline constexpr const char* kSpaceGenManifestVersion = "spacegen-v2";

FiniteFilteredSpace random_product_space(Rng& rng, const SpaceGenParams& params);

/// Plain binary space: depth levels, every block splits in two, random
/// rational probabilities.
FiniteFilteredSpace binary_space(int depth, Rng& rng, int max_weight = 6);

GainTable random_gain_table(const FiniteFilteredSpace& space, Rng& rng, const SpaceGenParams& params);

/// Random adapted stopping time drawn on the filtration tree (stop with
/// probability ~1/3 at each interior node).
StoppingTimeTable random_adapted_time(const FiniteFilteredSpace& space, Rng& rng);

/// Random H-adapted stopping time (product structure required).
StoppingTimeTable random_h_adapted_time(const FiniteFilteredSpace& space, Rng& rng);

// ---------------------------------------------------------------------------
// JSON serialization (documented schema; probabilities and gains as "p/q").
// ---------------------------------------------------------------------------

std::string space_to_json(const FiniteFilteredSpace& space);
FiniteFilteredSpace space_from_json(const std::string& text);
std::string trace_to_json(const ApproximationTrace& trace, const FiniteFilteredSpace& space,
                          const StoppingTimeTable& tau);

}  // namespace snell

#endif  // SNELL_ENUMERATION_HPP
