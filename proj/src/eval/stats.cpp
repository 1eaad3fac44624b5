#include "emseg/eval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace emseg::eval {
namespace {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIterations = 1000;
    constexpr double kEpsilon = 1e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) {
        d = kTiny;
    }
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIterations; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) {
            d = kTiny;
        }
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) {
            c = kTiny;
        }
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) {
            d = kTiny;
        }
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) {
            c = kTiny;
        }
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kEpsilon) {
            return h;
        }
    }
    throw NumericError("regularized_incomplete_beta: continued fraction did not converge");
}

void require_same_length(std::span<const double> a, std::span<const double> b,
                         const char* what) {
    if (a.size() != b.size()) {
        throw StructuralError(std::string(what) + ": series differ in length");
    }
}

double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return s / static_cast<double>(v.size());
}

} // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0) || !(x >= 0.0 && x <= 1.0)) {
        throw ContractError("regularized_incomplete_beta: requires a, b > 0 and x in [0, 1]");
    }
    if (x == 0.0) {
        return 0.0;
    }
    if (x == 1.0) {
        return 1.0;
    }
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log1p(-x);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
    }
    return 1.0 - std::exp(log_front) * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double dof) {
    if (!(dof > 0.0) || std::isnan(t)) {
        throw ContractError("student_t_two_sided_p: requires dof > 0 and a finite statistic");
    }
    if (std::isinf(t)) {
        return 0.0;
    }
    return regularized_incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
}

Correlation pearson_regression(std::span<const double> x, std::span<const double> y) {
    require_same_length(x, y, "pearson_regression");
    if (x.size() < 3) {
        throw ContractError("pearson_regression: requires at least 3 pairs");
    }
    const double mx = mean_of(x);
    const double my = mean_of(y);
    double sxx = 0.0;
    double syy = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw UndefinedMetricError("pearson_regression: a series has zero variance");
    }
    Correlation c;
    c.n = x.size();
    c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    c.slope = sxy / sxx;
    c.intercept = my - c.slope * mx;
    const double dof = static_cast<double>(c.n) - 2.0;
    const double one_minus = 1.0 - c.r * c.r;
    c.p = one_minus <= 0.0 ? 0.0
                           : student_t_two_sided_p(c.r * std::sqrt(dof / one_minus), dof);
    return c;
}

TTest paired_ttest(std::span<const double> a, std::span<const double> b) {
    require_same_length(a, b, "paired_ttest");
    if (a.size() < 2) {
        throw ContractError("paired_ttest: requires at least 2 pairs");
    }
    std::vector<double> d(a.size());
    double largest = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d[i] = a[i] - b[i];
        largest = std::max(largest, std::fabs(d[i]));
    }
    TTest r;
    r.n = a.size();
    r.mean_difference = mean_of(d);
    double ss = 0.0;
    for (double v : d) {
        ss += (v - r.mean_difference) * (v - r.mean_difference);
    }
    const double n = static_cast<double>(r.n);
    const double sd = std::sqrt(ss / (n - 1.0));
    // Differences equal up to rounding count as constant.
    if (sd <= 64.0 * std::numeric_limits<double>::epsilon() * largest) {
        if (largest == 0.0) {
            return r;
        }
        throw DegenerateTestError("paired_ttest: differences have zero variance");
    }
    r.t = r.mean_difference / (sd / std::sqrt(n));
    r.p = student_t_two_sided_p(r.t, n - 1.0);
    return r;
}

} // namespace emseg::eval
