#pragma once

// Univariate Hawkes process with exponential kernel
//
//   lambda(t) = mu + sum_{t_k < t} alpha * exp(-beta (t - t_k))
//
// Intensity evaluation, log-likelihood, maximum-likelihood fitting, Ogata
// thinning simulation, warm-up and the per-second next-event forecaster.

#include "lobcast/errors.hpp"
#include "lobcast/optimize.hpp"
#include "lobcast/random.hpp"
#include "lobcast/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lobcast::hawkes {

struct HawkesParams {
    double mu{1.0};
    double alpha{0.0};
    double beta{1.0};

    [[nodiscard]] double branching_ratio() const noexcept { return alpha / beta; }
    [[nodiscard]] bool stationary() const noexcept { return branching_ratio() < 1.0; }

    /// Long-run mean intensity mu / (1 - alpha/beta); infinite when non-stationary.
    [[nodiscard]] double stationary_intensity() const noexcept {
        return stationary() ? mu / (1.0 - branching_ratio()) : std::numeric_limits<double>::infinity();
    }
};

/// mu and beta must be strictly positive; alpha = 0 (Poisson) is allowed.
inline void check_params(const HawkesParams& p) {
    if (!(p.mu > 0.0) || !(p.beta > 0.0) || !(p.alpha >= 0.0) || !std::isfinite(p.mu) ||
        !std::isfinite(p.alpha) || !std::isfinite(p.beta))
        throw std::domain_error("Hawkes parameters must satisfy mu > 0, alpha >= 0, beta > 0");
}

inline void check_sorted(std::span<const double> times, const char* who) {
    if (!std::is_sorted(times.begin(), times.end()))
        throw ContractViolation(std::string(who) + ": event times must be sorted");
}

/// Recursive carrier of the excitation sum. Holds
/// decayed_sum = sum_k alpha * exp(-beta (last_time - t_k)) over absorbed events.
class IntensityState {
public:
    IntensityState() = default;
    IntensityState(HawkesParams params, double time) : params_(params), last_time_(time) {}

    [[nodiscard]] const HawkesParams& params() const noexcept { return params_; }
    [[nodiscard]] double last_time() const noexcept { return last_time_; }
    [[nodiscard]] double decayed_sum() const noexcept { return decayed_sum_; }

    [[nodiscard]] double intensity(double t) const {
        if (t < last_time_) throw ContractViolation("IntensityState::intensity: t precedes state time");
        return params_.mu + decayed_sum_ * std::exp(-params_.beta * (t - last_time_));
    }

    void advance(double t) {
        if (t < last_time_) throw ContractViolation("IntensityState::advance: time cannot go backwards");
        decayed_sum_ *= std::exp(-params_.beta * (t - last_time_));
        last_time_ = t;
    }

    /// Advances to `t` and adds one event there.
    void absorb(double t) {
        advance(t);
        decayed_sum_ += params_.alpha;
    }

private:
    HawkesParams params_{};
    double last_time_{0.0};
    double decayed_sum_{0.0};
};

/// Direct O(n) summation over the strict past of t.
[[nodiscard]] inline double intensity_direct(const HawkesParams& p, std::span<const double> history, double t) {
    check_sorted(history, "intensity_direct");
    double sum = 0.0;
    for (double tk : history) {
        if (tk >= t) break;
        sum += p.alpha * std::exp(-p.beta * (t - tk));
    }
    return p.mu + sum;
}

/// Same quantity through the IntensityState recursion.
[[nodiscard]] inline double intensity_at(const HawkesParams& p, std::span<const double> history, double t) {
    check_sorted(history, "intensity_at");
    IntensityState s(p, history.empty() ? t : std::min(history.front(), t));
    for (double tk : history) {
        if (tk >= t) break;
        s.absorb(tk);
    }
    return s.intensity(t);
}

/// Exact log-likelihood on (0, T]:
///   sum_i log lambda(t_i) - mu T - (alpha/beta) sum_i (1 - exp(-beta (T - t_i)))
/// with lambda(t_i) on the strict past, via A_i = exp(-beta dt)(1 + A_{i-1}).
[[nodiscard]] inline double log_likelihood(const HawkesParams& p, std::span<const double> events, double horizon) {
    check_params(p);
    double ll = -p.mu * horizon;
    double a = 0.0;
    double prev = 0.0;
    const double ratio = p.alpha / p.beta;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const double t = events[i];
        if (t < prev || t > horizon || t <= 0.0)
            throw ContractViolation("log_likelihood: events must be sorted within (0, T]");
        if (i > 0) a = std::exp(-p.beta * (t - prev)) * (1.0 + a);
        ll += std::log(p.mu + p.alpha * a);
        ll -= ratio * (1.0 - std::exp(-p.beta * (horizon - t)));
        prev = t;
    }
    return ll;
}

/// Compensator increments Lambda(t_{i-1}, t_i] (with t_0 = 0). Under the true
/// model these are i.i.d. Exp(1) (time-rescaling theorem).
[[nodiscard]] inline std::vector<double> rescaled_interarrivals(const HawkesParams& p, std::span<const double> events) {
    check_sorted(events, "rescaled_interarrivals");
    std::vector<double> out;
    out.reserve(events.size());
    double excitation = 0.0;  // alpha * sum over absorbed events, at `prev`
    double prev = 0.0;
    for (double t : events) {
        const double dt = t - prev;
        const double decay = std::exp(-p.beta * dt);
        out.push_back(p.mu * dt + excitation * (1.0 - decay) / p.beta);
        excitation = excitation * decay + p.alpha;
        prev = t;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Simulation

/// Ogata thinning on (state.last_time(), t_end]. The state is advanced to
/// t_end and carries every simulated event.
inline std::vector<double> simulate(IntensityState& state, double t_end, Rng& rng) {
    std::vector<double> events;
    std::exponential_distribution<double> unit_exp(1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double t = state.last_time();
    while (true) {
        // the intensity only decays between events, so its current value bounds it
        const double bound = state.intensity(t);
        t += unit_exp(rng) / bound;
        if (t > t_end) break;
        if (unif(rng) * bound <= state.intensity(t)) {
            state.absorb(t);
            events.push_back(t);
        }
    }
    state.advance(std::max(t_end, state.last_time()));
    return events;
}

[[nodiscard]] inline std::vector<double> simulate(const HawkesParams& p, double t_begin, double t_end, Rng& rng) {
    check_params(p);
    IntensityState state(p, t_begin);
    return simulate(state, t_end, rng);
}

/// Simulates the fitted model on [t_start - t_warm, t_start] from the bare
/// baseline and returns the intensity state at t_start. The simulated events
/// only shape the state; they are never treated as data.
[[nodiscard]] inline IntensityState warm_up(const HawkesParams& p, double t_start, double t_warm, Rng& rng) {
    check_params(p);
    if (t_warm < 0.0) throw std::invalid_argument("warm_up: t_warm must be >= 0");
    IntensityState state(p, t_start - t_warm);
    if (t_warm > 0.0) (void)simulate(state, t_start, rng);
    state.advance(t_start);
    return state;
}

// ---------------------------------------------------------------------------
// Maximum likelihood

struct HawkesFit {
    HawkesParams params{};
    double log_likelihood{-std::numeric_limits<double>::infinity()};
    std::size_t iterations{0};  // of the winning start
    std::size_t starts{0};
    bool converged{false};

    [[nodiscard]] double branching_ratio() const noexcept { return params.branching_ratio(); }
};

struct FitConfig {
    opt::NelderMeadConfig optimizer{};
    std::size_t min_events{10};
};

/// Method-of-moments seed: rate from the count, branching ratio from the Fano
/// factor of binned counts, decay rate from the event rate.
[[nodiscard]] inline HawkesParams moment_seed(std::span<const double> events, double horizon) {
    const double n = static_cast<double>(events.size());
    const double rate = n / horizon;
    double eta = 0.5;
    const double width = 10.0 / rate;
    const auto bins = static_cast<std::size_t>(horizon / width);
    if (bins >= 5) {
        std::vector<double> counts(bins, 0.0);
        for (double t : events) {
            const auto b = static_cast<std::size_t>(t / width);
            if (b < bins) counts[b] += 1.0;
        }
        const double m = stats::mean(counts);
        const double sd = stats::stddev(counts);
        if (m > 0.0) {
            const double fano = sd * sd / m;
            eta = fano > 1.0 ? 1.0 - 1.0 / std::sqrt(fano) : 0.05;
        }
    }
    eta = std::clamp(eta, 0.05, 0.9);
    const double beta = rate;
    return {rate * (1.0 - eta), eta * beta, beta};
}

/// 3 x 3 x 3 grid of starting points around the moment seed.
[[nodiscard]] inline std::vector<HawkesParams> default_start_grid(const HawkesParams& seed) {
    std::vector<HawkesParams> grid;
    for (double fm : {0.5, 1.0, 2.0})
        for (double fa : {0.5, 1.0, 2.0})
            for (double fb : {0.25, 1.0, 4.0}) grid.push_back({seed.mu * fm, seed.alpha * fa, seed.beta * fb});
    return grid;
}

/// Maximizes the log-likelihood over log(mu, alpha, beta) with Nelder-Mead from
/// each start and keeps the best. Events must lie in (0, T].
[[nodiscard]] inline HawkesFit fit_mle(std::span<const double> events, double horizon,
                                       std::optional<std::vector<HawkesParams>> init_grid = std::nullopt,
                                       const FitConfig& cfg = {}) {
    if (events.size() < cfg.min_events)
        throw InsufficientData("fit_mle: need at least " + std::to_string(cfg.min_events) + " events, got " +
                               std::to_string(events.size()));
    if (!(horizon > 0.0)) throw std::invalid_argument("fit_mle: horizon must be positive");
    check_sorted(events, "fit_mle");
    if (events.front() <= 0.0 || events.back() > horizon)
        throw ContractViolation("fit_mle: events must lie in (0, T]");

    const auto starts = init_grid ? *init_grid : default_start_grid(moment_seed(events, horizon));
    auto objective = [&](const std::vector<double>& x) {
        // alpha -> 0 leaves beta unidentified; keep the walk inside finite parameters
        for (double v : x)
            if (!(std::abs(v) < 30.0)) return std::numeric_limits<double>::infinity();
        const HawkesParams p{std::exp(x[0]), std::exp(x[1]), std::exp(x[2])};
        return -log_likelihood(p, events, horizon);
    };

    HawkesFit best;
    best.starts = starts.size();
    for (const auto& s : starts) {
        check_params(s);
        const std::vector<double> x0{std::log(s.mu), std::log(std::max(s.alpha, 1e-8)), std::log(s.beta)};
        const auto r = opt::nelder_mead(objective, x0, cfg.optimizer);
        const double ll = -r.value;
        if (ll > best.log_likelihood) {
            best.params = {std::exp(r.x[0]), std::exp(r.x[1]), std::exp(r.x[2])};
            best.log_likelihood = ll;
            best.iterations = r.iterations;
            best.converged = r.converged;
        }
    }
    return best;
}

/// Fits on the events of [t_begin, t_end], shifted so the window starts at 0.
[[nodiscard]] inline HawkesFit fit_window(std::span<const double> times, double t_begin, double t_end,
                                          std::optional<std::vector<HawkesParams>> init_grid = std::nullopt,
                                          const FitConfig& cfg = {}) {
    std::vector<double> shifted;
    for (double t : times)
        if (t > t_begin && t <= t_end) shifted.push_back(t - t_begin);
    return fit_mle(shifted, t_end - t_begin, std::move(init_grid), cfg);
}

// ---------------------------------------------------------------------------
// Forecasting

struct ForecastConfig {
    double step{1.0};
    double delta_t{5.0};
    double t_warm{150.0};
    std::uint64_t rng_seed{0};
    // include real events observed inside the forecast span in the intensity
    bool condition_on_observed{true};
    // refit theta at every issue time on the trailing refit_window_s seconds
    bool refit_each_step{false};
    double refit_window_s{1200.0};
};

inline void check_config(const ForecastConfig& cfg) {
    if (!(cfg.step > 0.0) || !(cfg.delta_t >= cfg.step) || !(cfg.t_warm >= 0.0))
        throw std::invalid_argument("ForecastConfig requires step > 0, delta_t >= step, t_warm >= 0");
}

/// t + x when the draw lands inside the forecast window, otherwise no prediction.
[[nodiscard]] inline std::optional<double> accept_draw(double t, double x, double delta_t) {
    if (x <= delta_t) return t + x;
    return std::nullopt;
}

/// Draws x ~ Exp(lambda(t)) (mean 1/lambda(t)) with lambda frozen at the issue time.
[[nodiscard]] inline std::optional<double> predict_next_event(const IntensityState& state, double t,
                                                              const ForecastConfig& cfg, Rng& rng) {
    if (t < state.last_time()) throw ContractViolation("predict_next_event: t precedes the state time");
    const double lambda = state.intensity(t);
    std::exponential_distribution<double> dist(lambda);
    return accept_draw(t, dist(rng), cfg.delta_t);
}

struct ForecastPoint {
    double issue_time{0.0};
    double predicted_time{0.0};
};

struct ForecastRun {
    std::vector<ForecastPoint> points;
    std::size_t attempts{0};
};

/// Issue-time schedule shared by every next-event predictor: one attempt per
/// `step` over [t0, t0 + span), at most one saved prediction per delta_t window
/// (the first successful attempt wins).
template <class Predict>
[[nodiscard]] ForecastRun issue_schedule(double t0, double span, double step, double delta_t, Predict&& predict) {
    ForecastRun run;
    long long saved_window = -1;
    for (std::size_t j = 0;; ++j) {
        const double t = t0 + static_cast<double>(j) * step;
        if (t >= t0 + span - 1e-9) break;
        const auto window = static_cast<long long>(std::floor((t - t0) / delta_t + 1e-9));
        if (window == saved_window) continue;
        ++run.attempts;
        const std::optional<double> p = predict(t);
        if (p) {
            run.points.push_back({t, *p});
            saved_window = window;
        }
    }
    return run;
}

/// Rolling next-event forecast over [t0, t0 + span). The intensity starts from
/// a warm-up state and (optionally) absorbs observed events as they occur.
[[nodiscard]] inline ForecastRun rolling_forecast(std::span<const double> observed, const HawkesParams& fitted,
                                                  double t0, double span, const ForecastConfig& cfg) {
    check_params(fitted);
    check_config(cfg);
    check_sorted(observed, "rolling_forecast");
    Rng rng(cfg.rng_seed);
    IntensityState state = warm_up(fitted, t0, cfg.t_warm, rng);
    auto next = std::lower_bound(observed.begin(), observed.end(), t0);

    return issue_schedule(t0, span, cfg.step, cfg.delta_t, [&](double t) {
        if (cfg.refit_each_step) {
            try {
                const auto fit = fit_window(observed, t - cfg.refit_window_s, t,
                                            std::vector<HawkesParams>{state.params()});
                // rebuild warm-up and observed excitation under the refitted parameters
                IntensityState refit = warm_up(fit.params, t0, cfg.t_warm, rng);
                for (auto it = std::lower_bound(observed.begin(), observed.end(), t0); it != next; ++it)
                    refit.absorb(*it);
                state = refit;
            } catch (const InsufficientData&) {
            }
        }
        if (cfg.condition_on_observed) {
            for (; next != observed.end() && *next <= t; ++next) state.absorb(*next);
        }
        state.advance(t);
        return predict_next_event(state, t, cfg, rng);
    });
}

}  // namespace lobcast::hawkes
