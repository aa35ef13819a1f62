#pragma once

// Next-event-time predictors: Oracle, Naive, Moving Average and Hawkes.

#include "lobcast/hawkes.hpp"

#include <algorithm>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lobcast::predict {

enum class PredictorType { oracle, naive, moving_average, hawkes };

struct PredictorKind {
    PredictorType type{PredictorType::hawkes};
    double ma_window_s{60.0};

    [[nodiscard]] std::string name() const {
        switch (type) {
            case PredictorType::oracle: return "oracle";
            case PredictorType::naive: return "naive";
            case PredictorType::moving_average: return "ma";
            case PredictorType::hawkes: return "hawkes";
        }
        return "unknown";
    }

    static PredictorKind oracle() { return {PredictorType::oracle}; }
    static PredictorKind naive() { return {PredictorType::naive}; }
    static PredictorKind moving_average(double window_s = 60.0) {
        if (!(window_s > 0.0)) throw std::invalid_argument("moving average window must be positive");
        return {PredictorType::moving_average, window_s};
    }
    static PredictorKind hawkes() { return {PredictorType::hawkes}; }
};

/// `oracle | naive | ma | hawkes`
[[nodiscard]] inline PredictorKind parse_predictor(std::string_view name) {
    if (name == "oracle") return PredictorKind::oracle();
    if (name == "naive") return PredictorKind::naive();
    if (name == "ma") return PredictorKind::moving_average();
    if (name == "hawkes") return PredictorKind::hawkes();
    throw std::invalid_argument("unknown predictor '" + std::string(name) + "' (expected oracle|naive|ma|hawkes)");
}

[[nodiscard]] inline std::vector<PredictorKind> all_predictors() {
    return {PredictorKind::oracle(), PredictorKind::hawkes(), PredictorKind::naive(),
            PredictorKind::moving_average()};
}

/// First actual event strictly after t.
[[nodiscard]] inline std::optional<double> oracle_next(std::span<const double> actual_events, double t) {
    const auto it = std::upper_bound(actual_events.begin(), actual_events.end(), t);
    if (it == actual_events.end()) return std::nullopt;
    return *it;
}

/// One system resolution step ahead.
[[nodiscard]] inline double naive_next(double t, double resolution_s = 1.0) { return t + resolution_s; }

/// t plus the mean inter-event gap over events in [t - W, t]; falls back to
/// the naive step with fewer than two distinct event times in the window.
[[nodiscard]] inline double ma_next(std::span<const double> history, double t, double window_s = 60.0,
                                    double resolution_s = 1.0) {
    const auto lo = std::lower_bound(history.begin(), history.end(), t - window_s);
    const auto hi = std::upper_bound(history.begin(), history.end(), t);
    const auto n = hi - lo;
    if (n < 2 || !(*(hi - 1) > *lo)) return naive_next(t, resolution_s);
    const double mean_gap = (*(hi - 1) - *lo) / static_cast<double>(n - 1);
    return t + mean_gap;
}

/// Absorbs observed events up to t into `state`, then draws the next event
/// time from the frozen intensity.
[[nodiscard]] inline std::optional<double> hawkes_next(hawkes::IntensityState& state,
                                                       std::span<const double> observed, double t,
                                                       const hawkes::ForecastConfig& cfg, Rng& rng) {
    for (double tk : observed) {
        if (tk <= state.last_time()) continue;
        if (tk > t) break;
        state.absorb(tk);
    }
    state.advance(std::max(t, state.last_time()));
    return hawkes::predict_next_event(state, t, cfg, rng);
}

}  // namespace lobcast::predict
