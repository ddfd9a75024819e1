#pragma once

#include <span>

namespace promptbench {

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
double incomplete_beta(double a, double b, double x);

/// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
double student_t_two_tailed(double t, double df);

double mean(std::span<const double> xs);
/// Divides by n.
double population_std(std::span<const double> xs);
/// Divides by n - 1.
double sample_std(std::span<const double> xs);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    int df = 0;
    /// Differences had zero variance but nonzero mean; t is +-inf, p is 0.
    bool degenerate = false;
};

/// Two-tailed paired t-test on positional pairs (a[i], b[i]).
/// Throws ValidationError on length mismatch or fewer than two pairs.
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

}  // namespace promptbench
