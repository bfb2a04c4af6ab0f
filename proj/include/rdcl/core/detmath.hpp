#pragma once

// Elementary functions evaluated with nothing but IEEE-754 add/mul/div,
// frexp and ldexp, so results are identical on every conforming platform.
// libm implementations differ in the last ulp between vendors; anything that
// feeds the coded bitstream (CDF tables, the sigma grid) goes through here.

#include <cmath>
#include <limits>

namespace rdcl::detmath {

inline constexpr double kLn2Hi = 6.93147180369123816490e-01;
inline constexpr double kLn2Lo = 1.90821492927058770002e-10;
inline constexpr double kInvLn2 = 1.44269504088896338700e+00;
inline constexpr double kSqrt1_2 = 0.70710678118654752440;
inline constexpr double kInvSqrtPi = 0.56418958354775628695;

inline double exp(double x) {
    if (std::isnan(x)) return x;
    if (x > 709.78) return std::numeric_limits<double>::infinity();
    if (x < -745.2) return 0.0;
    const double kf = std::floor(x * kInvLn2 + 0.5);
    const int k = static_cast<int>(kf);
    const double r = (x - kf * kLn2Hi) - kf * kLn2Lo;
    // Taylor series to r^14; |r| <= 0.347 keeps the truncation below 1e-17.
    double p = 1.0 / 87178291200.0;
    constexpr double kInvFact[] = {1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0,
                                   1.0 / 362880.0,     1.0 / 40320.0,     1.0 / 5040.0,     1.0 / 720.0,
                                   1.0 / 120.0,        1.0 / 24.0,        1.0 / 6.0,        0.5,
                                   1.0,                1.0};
    for (double c : kInvFact) p = p * r + c;
    return std::ldexp(p, k);
}

inline double log(double x) {
    if (std::isnan(x) || x < 0.0) return std::numeric_limits<double>::quiet_NaN();
    if (x == 0.0) return -std::numeric_limits<double>::infinity();
    if (std::isinf(x)) return x;
    int e = 0;
    double m = std::frexp(x, &e);
    if (m < kSqrt1_2) {
        m *= 2.0;
        e -= 1;
    }
    const double s = (m - 1.0) / (m + 1.0);
    const double s2 = s * s;
    double series = 1.0 / 23.0;
    for (int n = 21; n >= 1; n -= 2) series = series * s2 + 1.0 / n;
    const double log_m = 2.0 * s * series;
    const double ef = e;
    return ef * kLn2Hi + (ef * kLn2Lo + log_m);
}

inline double expm1(double x) {
    if (std::fabs(x) < 0.35) {
        double term = x, sum = x;
        for (int n = 2; n < 20; ++n) {
            term *= x / n;
            sum += term;
        }
        return sum;
    }
    return exp(x) - 1.0;
}

inline double log1p(double u) {
    const double y = 1.0 + u;
    if (y == 1.0) return u;
    return log(y) - ((y - 1.0) - u) / y;
}

inline double tanh(double x) {
    if (x > 20.0) return 1.0;
    if (x < -20.0) return -1.0;
    const double t = expm1(2.0 * x);
    return t / (t + 2.0);
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + exp(-x));
    const double e = exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) {
    if (x > 30.0) return x;
    return log1p(exp(x));
}

/// Complementary error function, relative accuracy ~1e-14.
inline double erfc(double x) {
    if (std::isnan(x)) return x;
    if (x < 0.0) return 2.0 - erfc(-x);
    if (x < 1.0) {
        // Maclaurin series of erf.
        const double x2 = x * x;
        double power = x, sum = x;
        for (int n = 1; n < 200; ++n) {
            power *= -x2 / n;
            const double term = power / (2 * n + 1);
            sum += term;
            if (std::fabs(term) < 1e-18) break;
        }
        return 1.0 - 2.0 * kInvSqrtPi * sum;
    }
    if (x > 27.3) return 0.0;
    // Continued fraction, evaluated bottom-up with a fixed depth.
    double t = x;
    for (int n = 400; n >= 1; --n) t = x + (0.5 * n) / t;
    return exp(-x * x) * kInvSqrtPi / t;
}

/// Standard normal CDF.
inline double normal_cdf(double t) { return 0.5 * erfc(-t * kSqrt1_2); }

}  // namespace rdcl::detmath
