#ifndef SNELL_RNG_HPP
#define SNELL_RNG_HPP

#include <cmath>
#include <cstdint>

namespace snell {

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace detail

/**
 * Counter-based pseudo-random stream.
 *
 * The i-th output is a pure function of (seed, stream, i), so any number of
 * streams can be consumed in any order (or in parallel) without changing a
 * single draw. Streams are used one-per-path in the simulator and
 * one-per-purpose elsewhere.
 */
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(derive_key(seed, stream)), counter_(0) {}

    static Rng substream(std::uint64_t seed, std::uint64_t stream) {
        return Rng(seed, stream);
    }

    std::uint64_t next_u64() { return detail::mix64(key_ + 0x9E3779B97F4A7C15ull * ++counter_); }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_uniform();
    }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    long long next_int(long long lo, long long hi) {  // inclusive ends
        return lo + static_cast<long long>(next_below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool next_bernoulli(double p) { return next_uniform() < p; }

    /// Standard normal draw via the inverse CDF; one uniform per normal, so
    /// draw counts per step are fixed and replay is exact.
    double next_normal() {
        double u = next_uniform();
        // keep strictly inside (0,1)
        if (u <= 0.0) u = 0x1.0p-53;
        return inverse_normal_cdf(u);
    }

    /**
     * Wichura's AS 241 (PPND16) rational approximations for the standard
     * normal quantile, accurate to full double precision.
     */
    static double inverse_normal_cdf(double p);

private:
    static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) {
        return detail::mix64(detail::mix64(seed) ^ (0xD2B74407B1CE6E93ull * (stream + 1)));
    }

    std::uint64_t key_;
    std::uint64_t counter_;
};

inline double Rng::inverse_normal_cdf(double p) {
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                     6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                   1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
                 1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
               (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                     3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
                   5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
                 4.2313330701600911252e+1) * r + 1.0);
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                    2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                  3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
                4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
              (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                    1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                  6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
                2.05319162663775882187e+0) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                    1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                  2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
                5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
              (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                    1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                  1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                5.99832206555887937690e-1) * r + 1.0);
    }
    return (q < 0.0) ? -val : val;
}

}  // namespace snell

#endif  // SNELL_RNG_HPP
