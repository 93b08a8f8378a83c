#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "snell/errors.hpp"
#include "snell/model.hpp"
#include "snell/rng.hpp"

using namespace snell;

namespace {

StoppingProblem make(const std::string& b, const std::string& sigma, const std::string& f,
                     const std::string& g, double q = 2.0) {
    return presets::custom(1, 1, 1.0, {b}, {sigma}, f, g, q);
}

}  // namespace

TEST_CASE("realized gain: terminal only") {
    auto p = make("0", "1", "0", "x");
    std::vector<double> times{0.0, 0.5, 1.0};
    std::vector<double> path{1.0, 2.0, 3.5};
    auto rg = realized_gain(p, times, path, 2);
    CHECK(rg.integral_part == 0.0);
    CHECK(rg.terminal_part == doctest::Approx(3.5));
    CHECK(rg.total == doctest::Approx(3.5));
}

TEST_CASE("realized gain: constant rate over the unit interval") {
    auto p = make("0", "1", "1", "0");
    const int n = 10;
    std::vector<double> times(n + 1), path(n + 1, 0.0);
    for (int i = 0; i <= n; ++i) times[i] = double(i) / n;
    auto rg = realized_gain(p, times, path, n);
    CHECK(rg.total == doctest::Approx(1.0));
    CHECK(rg.terminal_part == 0.0);
}

TEST_CASE("realized gain: left Riemann sum of f(s,x) = s") {
    auto p = make("0", "1", "t", "0");
    std::vector<double> times{0.0, 0.5, 1.0};
    std::vector<double> path{0.0, 0.0, 0.0};
    auto rg = realized_gain(p, times, path, 2);
    CHECK(rg.integral_part == doctest::Approx(0.0 * 0.5 + 0.5 * 0.5));  // = 0.25
    CHECK(rg.total == doctest::Approx(0.25));
}

TEST_CASE("realized gain: errors") {
    auto p = make("0", "1", "0", "x");
    std::vector<double> times{0.0, 1.0};
    std::vector<double> path{0.0, 1.0, 2.0};  // too long
    CHECK_THROWS_AS(realized_gain(p, times, path, 0), DimensionError);
    std::vector<double> ok{0.0, 1.0};
    CHECK_THROWS_AS(realized_gain(p, times, ok, 2), DimensionError);
    CHECK_THROWS_AS(realized_gain(p, times, ok, -1), DimensionError);
}

TEST_CASE("realized gain is additive across a grid split") {
    auto p = make("0", "1", "t + x^2", "x");
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 8;
        std::vector<double> times(n + 1), path(n + 1);
        for (int i = 0; i <= n; ++i) {
            times[i] = double(i) / n;
            path[i] = rng.next_uniform(-2.0, 2.0);
        }
        int split = static_cast<int>(rng.next_int(1, n - 1));
        auto whole = realized_gain(p, times, path, n);

        auto head = realized_gain(p, std::span<const double>(times.data(), split + 1),
                                  std::span<const double>(path.data(), split + 1), split);
        auto tail = realized_gain(p, std::span<const double>(times.data() + split, n - split + 1),
                                  std::span<const double>(path.data() + split, n - split + 1),
                                  n - split);
        CHECK(whole.integral_part ==
              doctest::Approx(head.integral_part + tail.integral_part).epsilon(1e-12));
        CHECK(whole.terminal_part == doctest::Approx(tail.terminal_part));
    }
}

TEST_CASE("spot check: constant drift has zero Lipschitz estimate") {
    auto p = make("0", "1", "0", "x");
    Box box{{-1.0}, {1.0}};
    auto rep = spot_check_assumptions(p, box, 40, 7);
    CHECK(rep.lipschitz_estimate_b == 0.0);
    CHECK(rep.lipschitz_estimate_sigma == 0.0);
}

TEST_CASE("spot check: linear drift recovers its slope exactly") {
    auto p = make("2*x", "1", "0", "x");
    Box box{{-1.0}, {1.0}};
    auto rep = spot_check_assumptions(p, box, 30, 7);
    CHECK(rep.lipschitz_estimate_b == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("spot check: growth violation is flagged for q too small") {
    auto p = make("0", "1", "0", "x^2", /*q=*/1.0);
    Box box{{-100.0}, {100.0}};
    auto rep = spot_check_assumptions(p, box, 64, 7);
    bool flagged = false;
    for (const auto& v : rep.violations)
        if (v.find("growth") != std::string::npos) flagged = true;
    CHECK(flagged);

    // with the right exponent the ratio is bounded and no flag appears
    auto ok = make("0", "1", "0", "x^2", /*q=*/2.0);
    auto rep2 = spot_check_assumptions(ok, box, 64, 7);
    for (const auto& v : rep2.violations) CHECK(v.find("growth") == std::string::npos);
}

TEST_CASE("spot check: deterministic under fixed seed, monotone under extension") {
    auto p = make("x", "1 + x^2", "0", "x", 4.0);
    Box box{{-2.0}, {2.0}};
    auto a = spot_check_assumptions(p, box, 25, 42);
    auto b = spot_check_assumptions(p, box, 25, 42);
    CHECK(a.lipschitz_estimate_b == b.lipschitz_estimate_b);
    CHECK(a.lipschitz_estimate_sigma == b.lipschitz_estimate_sigma);
    CHECK(a.growth_estimate_fg == b.growth_estimate_fg);

    auto wider = spot_check_assumptions(p, box, 50, 42);  // superset of the samples
    CHECK(wider.lipschitz_estimate_b >= a.lipschitz_estimate_b);
    CHECK(wider.lipschitz_estimate_sigma >= a.lipschitz_estimate_sigma);
    CHECK(wider.growth_estimate_fg >= a.growth_estimate_fg);
}

TEST_CASE("spot check preconditions") {
    auto p = make("0", "1", "0", "x");
    CHECK_THROWS_AS(spot_check_assumptions(p, Box{{1.0}, {-1.0}}, 10, 1), ConfigError);
    CHECK_THROWS_AS(spot_check_assumptions(p, Box{{-1.0}, {1.0}}, 1, 1), ConfigError);
}

TEST_CASE("non-finite coefficient evaluation names the coefficient") {
    auto p = make("1/x", "1", "0", "x");  // 1/0 at the origin
    std::vector<double> x{0.0};
    try {
        p.drift(0.0, x);
        CHECK(false);
    } catch (const EvalError& e) {
        std::string msg = e.what();
        CHECK(msg.find("'b'") != std::string::npos);
        CHECK(msg.find("x=[0") != std::string::npos);
    }
}

TEST_CASE("presets expose their closed forms") {
    auto gbm = presets::gbm(1, 1.0, 0.05, 0.2, "0", "x", 2.0);
    std::vector<double> x{10.0};
    CHECK(gbm.drift(0.3, x)[0] == doctest::Approx(0.5));
    CHECK(gbm.diffusion(0.3, x)[0] == doctest::Approx(2.0));

    auto ou = presets::ornstein_uhlenbeck(1, 1.0, 2.0, 1.5, 0.3, "0", "x", 2.0);
    CHECK(ou.drift(0.0, x)[0] == doctest::Approx(2.0 * (1.5 - 10.0)));
    CHECK(ou.diffusion(0.0, x)[0] == doctest::Approx(0.3));

    auto bach = presets::bachelier(2, 1.0, 0.1, 0.4, "0", "x_1 + x_2", 2.0);
    std::vector<double> x2{1.0, 2.0};
    auto b = bach.drift(0.0, x2);
    CHECK(b[0] == doctest::Approx(0.1));
    CHECK(b[1] == doctest::Approx(0.1));
    auto s = bach.diffusion(0.0, x2);  // diagonal 2x2
    CHECK(s[0] == doctest::Approx(0.4));
    CHECK(s[1] == 0.0);
    CHECK(s[3] == doctest::Approx(0.4));
    CHECK(bach.terminal_gain(x2) == doctest::Approx(3.0));
}

TEST_CASE("g ignores its time argument") {
    auto p = make("0", "1", "0", "x^2");
    std::vector<double> x{3.0};
    CHECK(p.terminal_gain(x) == doctest::Approx(9.0));
}
