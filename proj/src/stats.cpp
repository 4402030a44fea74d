#include "qalab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace qalab {

namespace {

constexpr double kTol = 1e-12;
constexpr int kMaxIter = 500;

// Lentz continued fraction for the incomplete beta function
double betacf(double a, double b, double x) {
    const double tiny = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kTol) return h;
    }
    throw std::runtime_error("incomplete_beta: continued fraction did not converge");
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_var(const std::vector<double>& v, double mu) {
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return s / static_cast<double>(v.size() - 1);
}

// two-sided p from |t| and degrees of freedom
double two_sided_p(double t, double df) {
    double x = df / (df + t * t);
    return incomplete_beta(0.5 * df, 0.5, x);
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0)
        throw std::invalid_argument("incomplete_beta: a, b must be positive");
    if (x < 0.0 || x > 1.0)
        throw std::invalid_argument("incomplete_beta: x must be in [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                      a * std::log(x) + b * std::log1p(-x);
    double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

TTestResult t_test_ind(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw std::invalid_argument("t_test_ind: need at least 2 samples per group");
    double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    double ma = mean_of(a), mb = mean_of(b);
    double va = sample_var(a, ma), vb = sample_var(b, mb);
    TTestResult r;
    r.df = na + nb - 2.0;
    double pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / r.df;
    if (pooled <= 0.0) {
        if (ma == mb)
            throw std::invalid_argument(
                "t_test_ind: both variances zero with equal means, t undefined");
        r.t = ma > mb ? std::numeric_limits<double>::infinity()
                      : -std::numeric_limits<double>::infinity();
        r.p = 0.0;
        r.degenerate = true;
        return r;
    }
    r.t = (ma - mb) / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
    r.p = two_sided_p(r.t, r.df);
    return r;
}

TTestResult t_test_welch(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw std::invalid_argument("t_test_welch: need at least 2 samples per group");
    double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    double ma = mean_of(a), mb = mean_of(b);
    double va = sample_var(a, ma) / na, vb = sample_var(b, mb) / nb;
    TTestResult r;
    if (va + vb <= 0.0) {
        if (ma == mb)
            throw std::invalid_argument(
                "t_test_welch: both variances zero with equal means, t undefined");
        r.t = ma > mb ? std::numeric_limits<double>::infinity()
                      : -std::numeric_limits<double>::infinity();
        r.p = 0.0;
        r.degenerate = true;
        return r;
    }
    r.t = (ma - mb) / std::sqrt(va + vb);
    r.df = (va + vb) * (va + vb) /
           (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    r.p = two_sided_p(r.t, r.df);
    return r;
}

std::vector<double> bonferroni(const std::vector<double>& p_raw, int m) {
    if (m < 1) throw std::invalid_argument("bonferroni: m must be >= 1");
    std::vector<double> out;
    out.reserve(p_raw.size());
    for (double p : p_raw) {
        if (p < 0.0 || p > 1.0)
            throw std::invalid_argument("bonferroni: p values must be in [0, 1]");
        out.push_back(std::min(1.0, p * m));
    }
    return out;
}

}  // namespace qalab
