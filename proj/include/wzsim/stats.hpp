#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace wzsim {

namespace detail {

// Continued-fraction expansion of the regularized incomplete beta
// function, evaluated with the modified Lentz algorithm.
inline double incomplete_beta_cf(double x, double a, double b) {
    constexpr double tiny = 1e-300;
    constexpr double tol = 1e-12;
    constexpr int maxIter = 100000;

    double c = 1.0;
    double d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;

    for (int m = 1; m <= maxIter; ++m) {
        const double m2 = 2.0 * m;
        double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + num * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + num * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < tol) break;
    }
    return h;
}

}  // namespace detail

/// Regularized incomplete beta function I_x(a, b).
inline double regularized_incomplete_beta(double x, double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("incomplete beta: a, b must be > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double logBeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    const double front = std::exp(a * std::log(x) + b * std::log(1.0 - x) - logBeta);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * detail::incomplete_beta_cf(x, a, b) / a;
    }
    return 1.0 - front * detail::incomplete_beta_cf(1.0 - x, b, a) / b;
}

/// Upper-tail probability P(F > f) of the F distribution with (df1, df2)
/// degrees of freedom.
inline double f_upper_tail(double f, double df1, double df2) {
    if (!(df1 > 0.0) || !(df2 > 0.0)) throw std::invalid_argument("F tail: degrees of freedom must be > 0");
    if (std::isinf(f)) return 0.0;
    if (f <= 0.0) return 1.0;
    const double x = df2 / (df2 + df1 * f);
    return regularized_incomplete_beta(x, df2 / 2.0, df1 / 2.0);
}

}  // namespace wzsim
