#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace lobcast::stats {

[[nodiscard]] inline double mean(std::span<const double> x) {
    if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Sample standard deviation (n - 1 denominator).
[[nodiscard]] inline double stddev(std::span<const double> x) {
    if (x.size() < 2) return 0.0;
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

/// Pearson correlation; NaN when either input has zero variance.
[[nodiscard]] inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw std::invalid_argument("pearson: inputs must have equal length >= 2");
    }
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sxy / std::sqrt(sxx * syy);
}

/// Linearly interpolated quantile of an unsorted sample (R type 7).
[[nodiscard]] inline double quantile(std::vector<double> x, double q) {
    if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(x.begin(), x.end());
    const double pos = q * static_cast<double>(x.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, x.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return x[lo] + frac * (x[hi] - x[lo]);
}

[[nodiscard]] inline double median(std::vector<double> x) { return quantile(std::move(x), 0.5); }

struct BoxStats {
    double min{std::numeric_limits<double>::quiet_NaN()};
    double q1{std::numeric_limits<double>::quiet_NaN()};
    double median{std::numeric_limits<double>::quiet_NaN()};
    double q3{std::numeric_limits<double>::quiet_NaN()};
    double max{std::numeric_limits<double>::quiet_NaN()};
    std::size_t count{0};
};

[[nodiscard]] inline BoxStats box_stats(const std::vector<double>& x) {
    BoxStats b;
    b.count = x.size();
    if (x.empty()) return b;
    b.min = *std::min_element(x.begin(), x.end());
    b.max = *std::max_element(x.begin(), x.end());
    b.q1 = quantile(x, 0.25);
    b.median = quantile(x, 0.5);
    b.q3 = quantile(x, 0.75);
    return b;
}

/// Asymptotic Kolmogorov distribution survival function Q_KS(lambda).
[[nodiscard]] inline double kolmogorov_survival(double lambda) {
    if (lambda < 1e-3) return 1.0;
    double sum = 0.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = std::exp(-2.0 * j * j * lambda * lambda);
        sum += (j % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-16) break;
    }
    return std::clamp(sum, 0.0, 1.0);
}

struct KsResult {
    double statistic{0.0};
    double p_value{1.0};
};

/// One-sample KS test of `x` against the unit-rate exponential distribution.
/// Uses the Stephens small-sample correction on the asymptotic p-value.
[[nodiscard]] inline KsResult ks_test_exponential(std::vector<double> x) {
    KsResult r;
    if (x.empty()) return r;
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double cdf = 1.0 - std::exp(-std::max(x[i], 0.0));
        d = std::max({d, cdf - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - cdf});
    }
    r.statistic = d;
    const double sn = std::sqrt(n);
    r.p_value = kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d);
    return r;
}

}  // namespace lobcast::stats
