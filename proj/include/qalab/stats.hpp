#pragma once

// Two-sample t-tests and multiple-comparison correction. The p-value comes
// from the Student t CDF evaluated through the regularized incomplete beta
// function (continued-fraction expansion, absolute tolerance 1e-10).

#include <vector>

namespace qalab {

// regularized incomplete beta I_x(a, b)
double incomplete_beta(double a, double b, double x);

struct TTestResult {
    double t{0.0};
    double p{1.0};
    double df{0.0};
    bool degenerate{false};  // zero variance with differing means: p forced to 0
};

// pooled-variance independent two-sample Student t, two-sided p
TTestResult t_test_ind(const std::vector<double>& a, const std::vector<double>& b);

// Welch variant (unequal variances), behind its own entry point
TTestResult t_test_welch(const std::vector<double>& a, const std::vector<double>& b);

// elementwise min(1, p * m)
std::vector<double> bonferroni(const std::vector<double>& p_raw, int m);

}  // namespace qalab
