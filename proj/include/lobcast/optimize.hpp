#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

namespace lobcast::opt {

struct NelderMeadConfig {
    std::size_t max_iterations{500};
    double diameter_tolerance{1e-6};  // max distance of any vertex from the best one
    double initial_step{0.2};
};

struct NelderMeadResult {
    std::vector<double> x;
    double value{std::numeric_limits<double>::infinity()};
    std::size_t iterations{0};
    std::size_t evaluations{0};
    bool converged{false};
};

/// Minimizes `f` with the downhill simplex method (standard coefficients:
/// reflection 1, expansion 2, contraction 1/2, shrink 1/2). Non-finite
/// objective values are treated as +inf.
[[nodiscard]] inline NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                                  std::vector<double> start, const NelderMeadConfig& cfg = {}) {
    const std::size_t n = start.size();
    NelderMeadResult res;
    auto eval = [&](const std::vector<double>& x) {
        ++res.evaluations;
        const double v = f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };

    std::vector<std::vector<double>> simplex(n + 1, start);
    for (std::size_t i = 0; i < n; ++i) simplex[i + 1][i] += cfg.initial_step;
    std::vector<double> values(n + 1);
    for (std::size_t i = 0; i <= n; ++i) values[i] = eval(simplex[i]);

    std::vector<std::size_t> order(n + 1);
    std::vector<double> centroid(n), trial(n), trial2(n);
    auto point = [&](double coeff, const std::vector<double>& worst, std::vector<double>& out) {
        for (std::size_t j = 0; j < n; ++j) out[j] = centroid[j] + coeff * (worst[j] - centroid[j]);
    };

    for (res.iterations = 0; res.iterations < cfg.max_iterations; ++res.iterations) {
        for (std::size_t i = 0; i <= n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
        const std::size_t best = order.front();
        const std::size_t worst = order.back();
        const std::size_t second_worst = order[n - 1];

        double diameter = 0.0;
        for (std::size_t i = 0; i <= n; ++i) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) d2 += (simplex[i][j] - simplex[best][j]) * (simplex[i][j] - simplex[best][j]);
            diameter = std::max(diameter, std::sqrt(d2));
        }
        if (diameter < cfg.diameter_tolerance) {
            res.converged = true;
            break;
        }

        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == worst) continue;
            for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[i][j] / static_cast<double>(n);
        }

        point(-1.0, simplex[worst], trial);
        const double f_reflect = eval(trial);
        if (f_reflect < values[best]) {
            point(-2.0, simplex[worst], trial2);
            const double f_expand = eval(trial2);
            if (f_expand < f_reflect) {
                simplex[worst] = trial2;
                values[worst] = f_expand;
            } else {
                simplex[worst] = trial;
                values[worst] = f_reflect;
            }
            continue;
        }
        if (f_reflect < values[second_worst]) {
            simplex[worst] = trial;
            values[worst] = f_reflect;
            continue;
        }
        const bool outside = f_reflect < values[worst];
        point(outside ? -0.5 : 0.5, simplex[worst], trial2);
        const double f_contract = eval(trial2);
        if (f_contract < (outside ? f_reflect : values[worst])) {
            simplex[worst] = trial2;
            values[worst] = f_contract;
            continue;
        }
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == best) continue;
            for (std::size_t j = 0; j < n; ++j) simplex[i][j] = simplex[best][j] + 0.5 * (simplex[i][j] - simplex[best][j]);
            values[i] = eval(simplex[i]);
        }
    }

    const auto best_it = std::min_element(values.begin(), values.end());
    res.x = simplex[static_cast<std::size_t>(best_it - values.begin())];
    res.value = *best_it;
    return res;
}

}  // namespace lobcast::opt
