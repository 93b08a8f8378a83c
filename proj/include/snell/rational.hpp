#ifndef SNELL_RATIONAL_HPP
#define SNELL_RATIONAL_HPP

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace snell {

/**
 * Exact rational number on 64-bit numerator/denominator.
 *
 * Always stored normalized: denominator > 0, gcd(num, den) = 1.
 * Intermediate products run through 128-bit arithmetic; a result whose
 * reduced form does not fit in 64 bits throws std::overflow_error.
 * The theorem-verification suites keep their inputs small enough that
 * overflow indicates a misconfigured generator, not a rounding question.
 */
class Rational {
public:
    Rational() : num_(0), den_(1) {}
    Rational(long long n) : num_(n), den_(1) {}  // NOLINT(implicit)
    Rational(int n) : num_(n), den_(1) {}        // NOLINT(implicit)

    Rational(long long n, long long d) {
        if (d == 0) throw std::domain_error("rational with zero denominator");
        normalize_from(static_cast<__int128>(n), static_cast<__int128>(d));
    }

    long long num() const { return num_; }
    long long den() const { return den_; }

    bool is_zero() const { return num_ == 0; }
    int sign() const { return num_ > 0 ? 1 : (num_ < 0 ? -1 : 0); }

    double to_double() const {
        return static_cast<double>(num_) / static_cast<double>(den_);
    }

    friend Rational operator+(const Rational& a, const Rational& b) {
        __int128 n = i128(a.num_) * b.den_ + i128(b.num_) * a.den_;
        __int128 d = i128(a.den_) * b.den_;
        return Rational(n, d, raw_tag{});
    }
    friend Rational operator-(const Rational& a, const Rational& b) {
        __int128 n = i128(a.num_) * b.den_ - i128(b.num_) * a.den_;
        __int128 d = i128(a.den_) * b.den_;
        return Rational(n, d, raw_tag{});
    }
    friend Rational operator*(const Rational& a, const Rational& b) {
        return Rational(i128(a.num_) * b.num_, i128(a.den_) * b.den_, raw_tag{});
    }
    friend Rational operator/(const Rational& a, const Rational& b) {
        if (b.num_ == 0) throw std::domain_error("rational division by zero");
        return Rational(i128(a.num_) * b.den_, i128(a.den_) * b.num_, raw_tag{});
    }
    Rational operator-() const {
        Rational r;
        r.num_ = -num_;
        r.den_ = den_;
        return r;
    }

    Rational& operator+=(const Rational& o) { return *this = *this + o; }
    Rational& operator-=(const Rational& o) { return *this = *this - o; }
    Rational& operator*=(const Rational& o) { return *this = *this * o; }
    Rational& operator/=(const Rational& o) { return *this = *this / o; }

    friend bool operator==(const Rational& a, const Rational& b) {
        return a.num_ == b.num_ && a.den_ == b.den_;
    }
    friend bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }
    friend bool operator<(const Rational& a, const Rational& b) {
        return i128(a.num_) * b.den_ < i128(b.num_) * a.den_;
    }
    friend bool operator>(const Rational& a, const Rational& b) { return b < a; }
    friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
    friend bool operator>=(const Rational& a, const Rational& b) { return !(a < b); }

    // "p/q", or just "p" for integers.
    std::string str() const {
        if (den_ == 1) return std::to_string(num_);
        return std::to_string(num_) + "/" + std::to_string(den_);
    }

    // Accepts "p", "p/q", optional leading '-'. Throws std::invalid_argument.
    static Rational parse(const std::string& s);

    static Rational abs(const Rational& r) { return r.num_ < 0 ? -r : r; }
    static Rational max(const Rational& a, const Rational& b) { return a < b ? b : a; }
    static Rational min(const Rational& a, const Rational& b) { return a < b ? a : b; }

private:
    struct raw_tag {};
    Rational(__int128 n, __int128 d, raw_tag) { normalize_from(n, d); }

    static __int128 i128(long long v) { return static_cast<__int128>(v); }

    void normalize_from(__int128 n, __int128 d) {
        if (d < 0) {
            n = -n;
            d = -d;
        }
        __int128 g = gcd128(n < 0 ? -n : n, d);
        if (g > 1) {
            n /= g;
            d /= g;
        }
        constexpr __int128 lo = -static_cast<__int128>(9223372036854775807LL) - 1;
        constexpr __int128 hi = static_cast<__int128>(9223372036854775807LL);
        if (n < lo || n > hi || d > hi)
            throw std::overflow_error("rational overflow after reduction");
        num_ = static_cast<long long>(n);
        den_ = static_cast<long long>(d);
    }

    static __int128 gcd128(__int128 a, __int128 b) {
        while (b != 0) {
            __int128 t = a % b;
            a = b;
            b = t;
        }
        return a == 0 ? 1 : a;
    }

    long long num_;
    long long den_;
};

inline Rational Rational::parse(const std::string& s) {
    if (s.empty()) throw std::invalid_argument("empty rational literal");
    auto slash = s.find('/');
    try {
        if (slash == std::string::npos) {
            return Rational(std::stoll(s));
        }
        long long p = std::stoll(s.substr(0, slash));
        long long q = std::stoll(s.substr(slash + 1));
        return Rational(p, q);
    } catch (const std::out_of_range&) {
        throw std::invalid_argument("rational literal out of range: " + s);
    }
}

}  // namespace snell

#endif  // SNELL_RATIONAL_HPP
