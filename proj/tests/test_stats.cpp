#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "wzsim/stats.hpp"

using namespace wzsim;

namespace {

// Independent route: hypergeometric series for I_x(a, b), reduced by the
// symmetry relation to the fast-converging side.
double ibeta_series(double x, double a, double b) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - ibeta_series(1.0 - x, b, a);
    const double logBeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    const double front = std::exp(a * std::log(x) + b * std::log1p(-x) - logBeta) / a;
    double term = 1.0;
    double sum = 1.0;
    for (int n = 1; n < 200000; ++n) {
        term *= (a + b + n - 1.0) / (a + n) * x;
        sum += term;
        if (term < 1e-17 * sum) break;
    }
    return front * sum;
}

// Brute-force route: Simpson quadrature of the beta density (a, b >= 1).
// The substitution t = u^2 keeps the integrand smooth at the lower
// endpoint for fractional a.
double ibeta_quadrature(double x, double a, double b) {
    const int n = 20000;  // even
    const double ux = std::sqrt(x);
    const double h = ux / n;
    auto f = [a, b](double u) {
        if (u <= 0.0) return 0.0;
        const double t = u * u;
        if (t >= 1.0) return 0.0;
        return 2.0 * std::pow(u, 2.0 * a - 1.0) * std::pow(1.0 - t, b - 1.0);
    };
    double acc = f(0.0) + f(ux);
    for (int i = 1; i < n; ++i) acc += f(i * h) * (i % 2 ? 4.0 : 2.0);
    const double integral = acc * h / 3.0;
    return integral / std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
}

}  // namespace

TEST_CASE("incomplete beta closed forms") {
    for (double x : {0.1, 0.3, 0.5, 0.7, 0.95}) {
        for (double a : {0.5, 1.0, 2.5, 7.0}) {
            CHECK(regularized_incomplete_beta(x, a, 1.0) == Catch::Approx(std::pow(x, a)).epsilon(1e-12));
            CHECK(regularized_incomplete_beta(x, 1.0, a) ==
                  Catch::Approx(1.0 - std::pow(1.0 - x, a)).epsilon(1e-12));
        }
    }
    CHECK(regularized_incomplete_beta(0.0, 2.0, 3.0) == 0.0);
    CHECK(regularized_incomplete_beta(1.0, 2.0, 3.0) == 1.0);
}

TEST_CASE("incomplete beta satisfies the symmetry relation") {
    for (double x = 0.05; x < 1.0; x += 0.07) {
        for (double a : {0.7, 1.5, 4.0, 11.0}) {
            for (double b : {0.9, 2.0, 6.5}) {
                const double lhs = regularized_incomplete_beta(x, a, b);
                const double rhs = 1.0 - regularized_incomplete_beta(1.0 - x, b, a);
                CHECK(lhs == Catch::Approx(rhs).margin(1e-12));
            }
        }
    }
}

TEST_CASE("incomplete beta agrees with the series and quadrature routes") {
    for (double x : {0.05, 0.2, 0.45, 0.6, 0.85}) {
        for (double a : {1.0, 2.0, 4.5, 9.0}) {
            for (double b : {1.0, 3.0, 5.5}) {
                const double ours = regularized_incomplete_beta(x, a, b);
                CHECK(ours == Catch::Approx(ibeta_series(x, a, b)).margin(1e-12));
                CHECK(ours == Catch::Approx(ibeta_quadrature(x, a, b)).margin(1e-8));
            }
        }
    }
}

TEST_CASE("f distribution tail probability at the tabulated point") {
    // df1 = 2 makes the tail a pure power: (df2 / (df2 + 2F))^(df2/2).
    const double exact = std::pow(9.0 / (9.0 + 2.0 * 4.26), 4.5);
    const double p = f_upper_tail(4.26, 2.0, 9.0);
    CHECK(p == Catch::Approx(exact).margin(1e-12));
    CHECK(std::abs(p - 0.050) <= 0.002);
}

TEST_CASE("f tail closed form holds across df2 for df1 = 2") {
    for (double f : {0.5, 1.0, 3.3, 10.0}) {
        for (double df2 : {2.0, 5.0, 9.0, 18.0, 30.0}) {
            const double exact = std::pow(df2 / (df2 + 2.0 * f), df2 / 2.0);
            CHECK(f_upper_tail(f, 2.0, df2) == Catch::Approx(exact).margin(1e-12));
        }
    }
}

TEST_CASE("f tail edge cases") {
    CHECK(f_upper_tail(0.0, 2.0, 9.0) == 1.0);
    CHECK(f_upper_tail(-1.0, 2.0, 9.0) == 1.0);
    CHECK(f_upper_tail(std::numeric_limits<double>::infinity(), 2.0, 9.0) == 0.0);
    CHECK(f_upper_tail(1e9, 5.0, 18.0) < 1e-12);
    CHECK_THROWS_AS(f_upper_tail(1.0, 0.0, 9.0), std::invalid_argument);
}

TEST_CASE("f tail is monotone decreasing in the statistic") {
    double prev = 1.0;
    for (double f = 0.0; f < 25.0; f += 0.25) {
        const double p = f_upper_tail(f, 5.0, 18.0);
        CHECK(p <= prev + 1e-15);
        prev = p;
    }
}
