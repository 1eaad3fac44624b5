#pragma once

#include <cstddef>
#include <span>

#include "emseg/eval/metrics.hpp"

namespace emseg::eval {

/// Paired test with zero-variance differences that are not all zero.
class DegenerateTestError : public DataError {
public:
    using DataError::DataError;
};

/// I_x(a, b) by continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

/// P(|T| >= |t|) for Student's t with `dof` degrees of freedom.
double student_t_two_sided_p(double t, double dof);

struct Correlation {
    double r = 0.0;
    double p = 1.0;
    double slope = 0.0;
    double intercept = 0.0;
    std::size_t n = 0;
};

Correlation pearson_regression(std::span<const double> x, std::span<const double> y);

struct TTest {
    double t = 0.0;
    double p = 1.0;
    double mean_difference = 0.0;
    std::size_t n = 0;
};

TTest paired_ttest(std::span<const double> a, std::span<const double> b);

} // namespace emseg::eval
