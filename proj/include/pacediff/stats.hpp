#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace pacediff {

inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x * 0.70710678118654752440084436210485);
}

// Standard-normal quantile: Acklam's rational approximation refined by one
// Halley step against erfc, accurate to ~1e-15 on (0, 1).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p must lie in (0, 1)");

    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // One Halley refinement.
    const double e = normal_cdf(x) - p;
    const double u = e * 2.5066282746310005024157652848110 * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

// log(sum(exp(v))) without overflow; -inf entries contribute zero mass.
inline double logsumexp(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("logsumexp: empty input");
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;  // all -inf (or a stray +inf) dominates
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - m);
    return m + std::log(acc);
}

inline double mean(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("mean: empty input");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;  // standard error of the mean
    std::size_t n = 0;
};

inline MeanStderr mean_stderr(std::span<const double> v) {
    MeanStderr r;
    r.n = v.size();
    if (r.n == 0) throw std::invalid_argument("mean_stderr: empty input");
    r.mean = mean(v);
    if (r.n < 2) return r;
    double ss = 0.0;
    for (double x : v) {
        const double d = x - r.mean;
        ss += d * d;
    }
    const double var = ss / static_cast<double>(r.n - 1);
    r.stderr_ = std::sqrt(var / static_cast<double>(r.n));
    return r;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median: empty input");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
    return 0.5 * (v[mid - 1] + hi);
}

// Fractional ranks (1-based) with ties sharing their average rank.
inline std::vector<double> ranks(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = shared;
        i = j + 1;
    }
    return r;
}

// Spearman rank correlation; NaN when either input is constant.
inline double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("spearman: size mismatch");
    if (a.size() < 2) throw std::invalid_argument("spearman: need at least two points");
    const std::vector<double> ra = ranks(a), rb = ranks(b);
    const double ma = mean(ra), mb = mean(rb);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        const double da = ra[i] - ma, db = rb[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sab / std::sqrt(saa * sbb);
}

}  // namespace pacediff
