#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <stdexcept>

#include "snell/rational.hpp"
#include "snell/rng.hpp"

using snell::Rational;

TEST_CASE("construction normalizes sign and gcd") {
    CHECK(Rational(2, 4) == Rational(1, 2));
    CHECK(Rational(-2, 4) == Rational(-1, 2));
    CHECK(Rational(2, -4) == Rational(-1, 2));
    CHECK(Rational(0, 7) == Rational(0));
    CHECK(Rational(6, 3).num() == 2);
    CHECK(Rational(6, 3).den() == 1);
    CHECK_THROWS_AS(Rational(1, 0), std::domain_error);
}

TEST_CASE("field operations") {
    Rational a(1, 3), b(1, 6);
    CHECK(a + b == Rational(1, 2));
    CHECK(a - b == Rational(1, 6));
    CHECK(a * b == Rational(1, 18));
    CHECK(a / b == Rational(2));
    CHECK(-a == Rational(-1, 3));
    CHECK_THROWS_AS(a / Rational(0), std::domain_error);
}

TEST_CASE("ordering is exact") {
    CHECK(Rational(1, 3) < Rational(1, 2));
    CHECK(Rational(-1, 2) < Rational(-1, 3));
    CHECK(Rational(7, 3) > Rational(2));
    CHECK(Rational(2, 6) <= Rational(1, 3));
    CHECK(Rational::max(Rational(1, 3), Rational(1, 2)) == Rational(1, 2));
    CHECK(Rational::abs(Rational(-5, 4)) == Rational(5, 4));
}

TEST_CASE("string round trip") {
    CHECK(Rational(3, 7).str() == "3/7");
    CHECK(Rational(-3, 7).str() == "-3/7");
    CHECK(Rational(4).str() == "4");
    CHECK(Rational::parse("3/7") == Rational(3, 7));
    CHECK(Rational::parse("-12/8") == Rational(-3, 2));
    CHECK(Rational::parse("5") == Rational(5));
    CHECK_THROWS_AS(Rational::parse(""), std::invalid_argument);
}

TEST_CASE("random field identities stay exact") {
    snell::Rng rng(99);
    for (int i = 0; i < 2000; ++i) {
        Rational a(rng.next_int(-40, 40), rng.next_int(1, 24));
        Rational b(rng.next_int(-40, 40), rng.next_int(1, 24));
        Rational c(rng.next_int(-40, 40), rng.next_int(1, 24));
        CHECK(a + b == b + a);
        CHECK((a + b) + c == a + (b + c));
        CHECK(a * (b + c) == a * b + a * c);
        CHECK(a - a == Rational(0));
        if (!b.is_zero()) CHECK((a / b) * b == a);
    }
}

TEST_CASE("overflow of the reduced form throws") {
    Rational big(9223372036854775807LL);
    CHECK_THROWS_AS(big * Rational(3), std::overflow_error);
    // near-limit values that reduce stay fine
    Rational x(1LL << 62, 3);
    CHECK((x * Rational(3)).num() == (1LL << 62));
}
