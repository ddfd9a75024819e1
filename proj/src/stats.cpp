#include "promptbench/stats.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "promptbench/error.hpp"

namespace promptbench {
namespace {

// Continued fraction for I_x(a, b), modified Lentz.
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 10000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    throw Error("incomplete beta continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw ValidationError("incomplete_beta: a and b must be > 0");
    if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("incomplete_beta: x outside [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_tailed(double t, double df) {
    if (!(df > 0.0)) throw ValidationError("student_t_two_tailed: df must be > 0");
    if (std::isinf(t)) return 0.0;
    if (t == 0.0) return 1.0;
    return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

double mean(std::span<const double> xs) {
    if (xs.empty()) throw ValidationError("mean of an empty list");
    double sum = 0.0;
    for (double x : xs) sum += x;
    return sum / static_cast<double>(xs.size());
}

namespace {

double sum_squared_deviation(std::span<const double> xs) {
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return ss;
}

}  // namespace

double population_std(std::span<const double> xs) {
    return std::sqrt(sum_squared_deviation(xs) / static_cast<double>(xs.size()));
}

double sample_std(std::span<const double> xs) {
    if (xs.size() < 2) throw ValidationError("sample std needs at least two values");
    return std::sqrt(sum_squared_deviation(xs) / static_cast<double>(xs.size() - 1));
}

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ValidationError("paired_ttest: length mismatch");
    if (a.size() < 2) throw ValidationError("paired_ttest: need at least two pairs");
    const std::size_t n = a.size();
    std::vector<double> diff(n);
    bool constant = true;
    for (std::size_t i = 0; i < n; ++i) {
        diff[i] = a[i] - b[i];
        if (diff[i] != diff[0]) constant = false;
    }

    TTestResult r;
    r.df = static_cast<int>(n - 1);
    const double m = mean(diff);
    if (constant) {
        // Zero variance: either no difference at all, or a certain one.
        if (diff[0] == 0.0) {
            r.t = 0.0;
            r.p = 1.0;
        } else {
            r.t = diff[0] > 0.0 ? std::numeric_limits<double>::infinity()
                                : -std::numeric_limits<double>::infinity();
            r.p = 0.0;
            r.degenerate = true;
        }
        return r;
    }
    const double sem = sample_std(diff) / std::sqrt(static_cast<double>(n));
    r.t = m / sem;
    r.p = student_t_two_tailed(r.t, static_cast<double>(r.df));
    return r;
}

}  // namespace promptbench
