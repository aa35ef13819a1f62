#pragma once

// Scenario backtest: next-event prediction, COE return prediction, reference
// matching, sign accuracy and trading profit, plus the Monte Carlo runner and
// the hyperparameter search.

#include "lobcast/coe.hpp"
#include "lobcast/hawkes.hpp"
#include "lobcast/lobdata.hpp"
#include "lobcast/predictors.hpp"
#include "lobcast/random.hpp"
#include "lobcast/stats.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace lobcast::bt {

struct HyperParams {
    double hawkes_train_min{20.0};
    double coe_train_min{50.0};
    double t_warm_min{2.5};
    double delta_t_s{5.0};
    double sim_min{2.0};
    std::size_t depth{8};

    void validate() const {
        if (!(hawkes_train_min > 0.0) || !(coe_train_min > 0.0) || !(t_warm_min > 0.0) || !(delta_t_s > 0.0) ||
            !(sim_min > 0.0) || depth == 0)
            throw std::invalid_argument("hyperparameters must all be positive");
    }

    [[nodiscard]] lob::ScenarioWindow window(double t0) const {
        return {t0, hawkes_train_min * 60.0, coe_train_min * 60.0, sim_min * 60.0};
    }

    bool operator==(const HyperParams&) const = default;
};

struct BacktestOptions {
    double stake{10000.0};
    double resolution_s{1.0};  // Naive step, MA fallback and the Hawkes matching floor
    double step_s{1.0};        // spacing of issue-time attempts
    bool clamp_hawkes{true};   // Hawkes t_hat raised to t + resolution before matching
    bool condition_on_observed{true};
    bool refit_each_step{false};
    lob::ScenarioLimits limits{};
    coe::CoeFitConfig coe{};
    hawkes::FitConfig hawkes_fit{};
    std::size_t threads{1};
};

struct PredictionRecord {
    double issue_time{0.0};
    double predicted_time{0.0};  // as produced by the predictor
    double matched_time{0.0};    // after the resolution floor (Hawkes only)
    double bi{0.0};
    double predicted_return{0.0};
    double reference_return{0.0};
    double reference_time{0.0};
    std::size_t reference_index{0};
    double actual_next_time{std::numeric_limits<double>::quiet_NaN()};
};

struct Confusion {
    std::size_t tp{0};
    std::size_t tn{0};
    std::size_t fp{0};
    std::size_t fn{0};
    std::size_t excluded{0};  // zero-sign prediction or reference
    double accuracy{std::numeric_limits<double>::quiet_NaN()};

    [[nodiscard]] std::size_t scored() const noexcept { return tp + tn + fp + fn; }
    [[nodiscard]] bool defined() const noexcept { return scored() > 0; }
};

[[nodiscard]] inline Confusion confusion_from_counts(std::size_t tp, std::size_t tn, std::size_t fp, std::size_t fn) {
    Confusion c{tp, tn, fp, fn, 0};
    if (c.defined()) c.accuracy = static_cast<double>(tp + tn) / static_cast<double>(c.scored());
    return c;
}

[[nodiscard]] inline Confusion compute_accuracy(std::span<const PredictionRecord> records) {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0, excluded = 0;
    for (const auto& r : records) {
        if (r.predicted_return == 0.0 || r.reference_return == 0.0) {
            ++excluded;
            continue;
        }
        const bool pred_up = r.predicted_return > 0.0;
        const bool ref_up = r.reference_return > 0.0;
        if (pred_up && ref_up) ++tp;
        else if (!pred_up && !ref_up) ++tn;
        else if (pred_up) ++fp;
        else ++fn;
    }
    auto c = confusion_from_counts(tp, tn, fp, fn);
    c.excluded = excluded;
    return c;
}

struct ProfitPoint {
    double time{0.0};
    double cumulative{0.0};
};

struct TradingResult {
    std::vector<double> increments;
    std::vector<ProfitPoint> series;
    double total{0.0};
    std::size_t skipped{0};  // zero-sign predictions
};

[[nodiscard]] inline double trade_increment(double stake, double predicted_return, double reference_return) {
    const double sign = predicted_return > 0.0 ? 1.0 : -1.0;
    return stake * sign * reference_return;
}

/// One fixed-notional trade per prediction: long when R_hat > 0, short when
/// R_hat < 0, closed at the reference event. No fees.
[[nodiscard]] inline TradingResult simulate_trading(std::span<const PredictionRecord> records, double stake = 10000.0) {
    TradingResult out;
    double prev_time = -std::numeric_limits<double>::infinity();
    for (const auto& r : records) {
        if (r.issue_time < prev_time) throw ContractViolation("simulate_trading: records must be time-ordered");
        prev_time = r.issue_time;
        if (r.predicted_return == 0.0) {
            ++out.skipped;
            continue;
        }
        const double inc = trade_increment(stake, r.predicted_return, r.reference_return);
        out.increments.push_back(inc);
        out.total += inc;
        out.series.push_back({r.issue_time, out.total});
    }
    return out;
}

struct ReferenceMatch {
    double ret{0.0};
    double time{0.0};
    std::size_t index{0};
};

/// Event closest to t_hat in absolute time; ties go to the earlier event.
[[nodiscard]] inline ReferenceMatch match_reference_return(double t_hat, const lob::EventSeries& events) {
    if (events.empty()) throw std::invalid_argument("match_reference_return: empty event series");
    const auto& ts = events.times;
    const auto it = std::lower_bound(ts.begin(), ts.end(), t_hat);
    std::size_t idx;
    if (it == ts.begin()) {
        idx = 0;
    } else if (it == ts.end()) {
        idx = ts.size() - 1;
    } else {
        const auto hi = static_cast<std::size_t>(it - ts.begin());
        idx = (t_hat - ts[hi - 1] <= ts[hi] - t_hat) ? hi - 1 : hi;
    }
    return {events.returns[idx], ts[idx], idx};
}

enum class Stage { none, validation, hawkes_fit, forecast, coe_fit, predict };

[[nodiscard]] inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::none: return "none";
        case Stage::validation: return "validation";
        case Stage::hawkes_fit: return "hawkes-fit";
        case Stage::forecast: return "forecast";
        case Stage::coe_fit: return "coe-fit";
        case Stage::predict: return "predict";
    }
    return "unknown";
}

/// Thrown by run_scenario when a stage fails.
class ScenarioError : public std::runtime_error {
public:
    ScenarioError(Stage stage, const std::string& what)
        : std::runtime_error(std::string(stage_name(stage)) + ": " + what), stage_(stage) {}
    [[nodiscard]] Stage stage() const noexcept { return stage_; }

private:
    Stage stage_;
};

struct BacktestResult {
    std::size_t scenario_id{0};
    double t0{0.0};
    std::uint64_t seed{0};
    predict::PredictorKind predictor{};
    std::vector<PredictionRecord> records;
    Confusion confusion{};
    TradingResult trading{};
    std::size_t attempts{0};
    std::size_t reused_references{0};
    double mean_abs_time_error{std::numeric_limits<double>::quiet_NaN()};
    std::optional<hawkes::HawkesFit> hawkes;
    coe::CoeParams coe{};
    coe::CoeDiagnostics coe_diagnostics{};
    lob::ValidityReport validity{};
};

/// Per-scenario state shared by every predictor: validated window, fitted COE
/// model and its states at the events from the start of COE training.
struct ScenarioContext {
    lob::ScenarioWindow window{};
    lob::ValidityReport validity{};
    coe::CoeFit coe{};
    std::size_t first_index{0};
    std::vector<Eigen::VectorXd> states;
};

[[nodiscard]] inline ScenarioContext prepare_scenario(const lob::EventSeries& series, double t0, const HyperParams& hp,
                                                      const BacktestOptions& opts = {}) {
    hp.validate();
    ScenarioContext ctx;
    ctx.window = hp.window(t0);
    ctx.validity = lob::validate_scenario(series, ctx.window, opts.limits);
    if (!ctx.validity.passed()) throw ScenarioError(Stage::validation, "failed checks: " + ctx.validity.failures());

    // training events whose forward return is already realized at t0
    const auto [lo, hi_incl] = series.index_range(ctx.window.coe_begin(), t0);
    std::size_t hi = hi_incl;
    const auto next_time = [&](std::size_t k) { return k + 1 < series.size() ? series.times[k + 1] : series.terminal_time; };
    while (hi > lo && next_time(hi - 1) > t0) --hi;
    const std::span<const double> times(series.times.data() + lo, hi - lo);
    const std::span<const double> bi(series.base_imbalances.data() + lo, hi - lo);
    const std::span<const double> r(series.returns.data() + lo, hi - lo);
    try {
        ctx.coe = coe::srivc_fit(times, bi, r, opts.coe);
    } catch (const std::exception& e) {
        throw ScenarioError(Stage::coe_fit, e.what());
    }

    const auto [s_lo, s_hi] = series.index_range(ctx.window.coe_begin(), ctx.window.sim_end());
    (void)s_lo;
    ctx.first_index = lo;
    const coe::CoeModel model(ctx.coe.params);
    ctx.states = model.states_at_events(std::span<const double>(series.times.data() + lo, s_hi - lo),
                                        std::span<const double>(series.base_imbalances.data() + lo, s_hi - lo));
    return ctx;
}

/// Next-event predictions for one predictor over [t0, t0 + T_sim).
[[nodiscard]] inline hawkes::ForecastRun predict_event_times(const lob::EventSeries& series, double t0,
                                                             const predict::PredictorKind& kind, const HyperParams& hp,
                                                             const BacktestOptions& opts, std::uint64_t seed,
                                                             std::optional<hawkes::HawkesFit>* hawkes_fit = nullptr) {
    const auto w = hp.window(t0);
    const auto all_times = series.all_event_times();
    const std::span<const double> actual(all_times);
    switch (kind.type) {
        case predict::PredictorType::oracle:
            return hawkes::issue_schedule(t0, w.sim_s, opts.step_s, hp.delta_t_s,
                                          [&](double t) { return predict::oracle_next(actual, t); });
        case predict::PredictorType::naive:
            return hawkes::issue_schedule(t0, w.sim_s, opts.step_s, hp.delta_t_s, [&](double t) {
                return std::optional<double>(predict::naive_next(t, opts.resolution_s));
            });
        case predict::PredictorType::moving_average:
            return hawkes::issue_schedule(t0, w.sim_s, opts.step_s, hp.delta_t_s, [&](double t) {
                return std::optional<double>(predict::ma_next(actual, t, kind.ma_window_s, opts.resolution_s));
            });
        case predict::PredictorType::hawkes: break;
    }
    hawkes::HawkesFit fit;
    try {
        fit = hawkes::fit_window(actual, w.hawkes_begin(), t0, std::nullopt, opts.hawkes_fit);
    } catch (const std::exception& e) {
        throw ScenarioError(Stage::hawkes_fit, e.what());
    }
    if (hawkes_fit) *hawkes_fit = fit;
    hawkes::ForecastConfig fc;
    fc.step = opts.step_s;
    fc.delta_t = hp.delta_t_s;
    fc.t_warm = hp.t_warm_min * 60.0;
    fc.rng_seed = seed;
    fc.condition_on_observed = opts.condition_on_observed;
    fc.refit_each_step = opts.refit_each_step;
    fc.refit_window_s = w.hawkes_train_s;
    try {
        return hawkes::rolling_forecast(actual, fit.params, t0, w.sim_s, fc);
    } catch (const std::exception& e) {
        throw ScenarioError(Stage::forecast, e.what());
    }
}

/// Runs one predictor on a prepared scenario.
[[nodiscard]] inline BacktestResult run_prepared(const lob::EventSeries& series, const ScenarioContext& ctx,
                                                 const predict::PredictorKind& kind, const HyperParams& hp,
                                                 const BacktestOptions& opts, std::uint64_t seed,
                                                 std::size_t scenario_id = 0) {
    BacktestResult res;
    res.scenario_id = scenario_id;
    res.t0 = ctx.window.t0;
    res.seed = seed;
    res.predictor = kind;
    res.validity = ctx.validity;
    res.coe = ctx.coe.params;
    res.coe_diagnostics = ctx.coe.diagnostics;

    const auto run = predict_event_times(series, ctx.window.t0, kind, hp, opts, seed, &res.hawkes);
    res.attempts = run.attempts;

    const coe::CoeModel model(ctx.coe.params);
    const auto all_times = series.all_event_times();
    std::vector<std::size_t> used;
    double abs_err = 0.0;
    std::size_t n_err = 0;
    for (const auto& p : run.points) {
        if (!(p.predicted_time > p.issue_time))
            throw ScenarioError(Stage::predict, "predictor returned t_hat <= t");
        PredictionRecord rec;
        rec.issue_time = p.issue_time;
        rec.predicted_time = p.predicted_time;
        rec.matched_time = p.predicted_time;
        if (kind.type == predict::PredictorType::hawkes && opts.clamp_hawkes)
            rec.matched_time = std::max(p.predicted_time, p.issue_time + opts.resolution_s);

        const auto it = std::upper_bound(series.times.begin(), series.times.end(), p.issue_time);
        const auto k = static_cast<std::size_t>(it - series.times.begin()) - 1;
        if (it == series.times.begin() || k < ctx.first_index || k - ctx.first_index >= ctx.states.size())
            throw ScenarioError(Stage::predict, "no COE state for issue time");
        rec.bi = series.base_imbalances[k];
        rec.predicted_return =
            model.predict_from(ctx.states[k - ctx.first_index], rec.bi, rec.matched_time - series.times[k]);

        const auto m = match_reference_return(rec.matched_time, series);
        rec.reference_return = m.ret;
        rec.reference_time = m.time;
        rec.reference_index = m.index;
        if (std::find(used.begin(), used.end(), m.index) != used.end()) ++res.reused_references;
        used.push_back(m.index);

        if (const auto next = predict::oracle_next(all_times, p.issue_time)) {
            rec.actual_next_time = *next;
            abs_err += std::abs(rec.predicted_time - *next);
            ++n_err;
        }
        res.records.push_back(rec);
    }
    if (n_err > 0) res.mean_abs_time_error = abs_err / static_cast<double>(n_err);
    res.confusion = compute_accuracy(res.records);
    res.trading = simulate_trading(res.records, opts.stake);
    return res;
}

/// Full pipeline for one scenario and predictor. Throws ScenarioError with
/// the failing stage.
[[nodiscard]] inline BacktestResult run_scenario(const lob::EventSeries& series, double t0,
                                                 const predict::PredictorKind& kind, const HyperParams& hp = {},
                                                 const BacktestOptions& opts = {}, std::uint64_t seed = 0,
                                                 std::size_t scenario_id = 0) {
    const auto ctx = prepare_scenario(series, t0, hp, opts);
    return run_prepared(series, ctx, kind, hp, opts, seed, scenario_id);
}

// ---------------------------------------------------------------------------
// Monte Carlo

/// Non-overlapping simulation windows (aligned on whole seconds) that pass
/// scenario validation.
[[nodiscard]] inline std::vector<double> candidate_windows(const lob::EventSeries& series, const HyperParams& hp,
                                                           const lob::ScenarioLimits& limits = {}) {
    std::vector<double> out;
    if (series.empty()) return out;
    const auto w0 = hp.window(0.0);
    const double last = series.all_event_times().back();
    double t0 = std::ceil(series.times.front() + std::max(w0.hawkes_train_s, w0.coe_train_s));
    for (; t0 + w0.sim_s <= last; t0 += w0.sim_s)
        if (lob::validate_scenario(series, hp.window(t0), limits).passed()) out.push_back(t0);
    return out;
}

/// Uniform draw of `count` windows without replacement, returned in time order.
[[nodiscard]] inline std::vector<double> sample_scenarios(const lob::EventSeries& series, const HyperParams& hp,
                                                          std::size_t count, std::uint64_t seed,
                                                          const lob::ScenarioLimits& limits = {}) {
    auto cands = candidate_windows(series, hp, limits);
    Rng rng(seed);
    std::shuffle(cands.begin(), cands.end(), rng);
    if (cands.size() > count) cands.resize(count);
    std::sort(cands.begin(), cands.end());
    return cands;
}

struct ScenarioSkip {
    std::size_t scenario_id{0};
    double t0{0.0};
    std::string predictor;  // empty when the whole scenario was skipped
    Stage stage{Stage::none};
    std::string reason;
};

struct PredictorSummary {
    predict::PredictorKind predictor{};
    std::size_t scenarios{0};
    stats::BoxStats accuracy{};
    stats::BoxStats profit{};
};

struct MonteCarloReport {
    std::vector<BacktestResult> rows;  // scenario-major, predictor order within a scenario
    std::vector<ScenarioSkip> skipped;
    std::vector<PredictorSummary> summaries;
};

/// Evaluates each scenario for every predictor. Scenario i uses seed
/// mix_seed(base_seed, i); results do not depend on evaluation order.
[[nodiscard]] inline MonteCarloReport monte_carlo(const lob::EventSeries& series, std::span<const double> t0s,
                                                  std::span<const predict::PredictorKind> predictors,
                                                  const HyperParams& hp, const BacktestOptions& opts,
                                                  std::uint64_t base_seed) {
    struct Slot {
        std::vector<BacktestResult> rows;
        std::vector<ScenarioSkip> skipped;
    };
    std::vector<Slot> slots(t0s.size());
    auto work = [&](std::size_t i) {
        const std::uint64_t seed = mix_seed(base_seed, i);
        auto& slot = slots[i];
        std::optional<ScenarioContext> ctx;
        try {
            ctx = prepare_scenario(series, t0s[i], hp, opts);
        } catch (const ScenarioError& e) {
            slot.skipped.push_back({i, t0s[i], "", e.stage(), e.what()});
            return;
        }
        for (const auto& kind : predictors) {
            try {
                slot.rows.push_back(run_prepared(series, *ctx, kind, hp, opts, seed, i));
            } catch (const ScenarioError& e) {
                slot.skipped.push_back({i, t0s[i], kind.name(), e.stage(), e.what()});
            }
        }
    };

    const std::size_t n_threads = std::max<std::size_t>(1, std::min(opts.threads, t0s.size()));
    if (n_threads == 1) {
        for (std::size_t i = 0; i < t0s.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < n_threads; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < t0s.size(); i = next++) work(i);
            });
        for (auto& th : pool) th.join();
    }

    MonteCarloReport rep;
    for (auto& slot : slots) {
        for (auto& r : slot.rows) rep.rows.push_back(std::move(r));
        for (auto& s : slot.skipped) rep.skipped.push_back(std::move(s));
    }
    for (const auto& kind : predictors) {
        PredictorSummary s;
        s.predictor = kind;
        std::vector<double> acc, profit;
        for (const auto& r : rep.rows) {
            if (r.predictor.name() != kind.name()) continue;
            ++s.scenarios;
            if (r.confusion.defined()) acc.push_back(r.confusion.accuracy);
            profit.push_back(r.trading.total);
        }
        if (!acc.empty()) s.accuracy = stats::box_stats(acc);
        if (!profit.empty()) s.profit = stats::box_stats(profit);
        rep.summaries.push_back(s);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Hyperparameter search

struct TuningRow {
    HyperParams hp{};
    double mean_abs_error{std::numeric_limits<double>::infinity()};
    std::size_t predictions{0};
    std::size_t scenarios{0};
};

struct TuningResult {
    std::vector<TuningRow> rows;
    std::size_t best{0};
    std::size_t duplicates_removed{0};

    [[nodiscard]] const TuningRow& best_row() const { return rows.at(best); }
};

class TuningError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Drops repeated grid points, keeping the first occurrence.
[[nodiscard]] inline std::vector<HyperParams> dedupe_grid(std::span<const HyperParams> grid, std::size_t* removed = nullptr) {
    std::vector<HyperParams> out;
    for (const auto& g : grid)
        if (std::find(out.begin(), out.end(), g) == out.end()) out.push_back(g);
    if (removed) *removed = grid.size() - out.size();
    return out;
}

/// Mean |t_next - t_hat| of the Hawkes predictor pooled over the anchor
/// windows, for each grid point. Anchors that fail validation or fitting under
/// a grid point are left out of that point's mean. Ties keep the earlier point.
[[nodiscard]] inline TuningResult tune_hyperparameters(const lob::EventSeries& series, std::span<const HyperParams> grid,
                                                       std::span<const double> anchors, const BacktestOptions& opts,
                                                       std::uint64_t seed) {
    if (grid.empty()) throw std::invalid_argument("tune_hyperparameters: empty grid");
    if (anchors.empty()) throw std::invalid_argument("tune_hyperparameters: no validation windows");
    TuningResult res;
    const auto points = dedupe_grid(grid, &res.duplicates_removed);
    const auto all_times = series.all_event_times();
    for (const auto& hp : points) {
        hp.validate();
        TuningRow row;
        row.hp = hp;
        double sum = 0.0;
        for (std::size_t i = 0; i < anchors.size(); ++i) {
            if (!lob::validate_scenario(series, hp.window(anchors[i]), opts.limits).passed()) continue;
            hawkes::ForecastRun run;
            try {
                run = predict_event_times(series, anchors[i], predict::PredictorKind::hawkes(), hp, opts,
                                          mix_seed(seed, i));
            } catch (const ScenarioError&) {
                continue;
            }
            ++row.scenarios;
            for (const auto& p : run.points) {
                const auto next = predict::oracle_next(all_times, p.issue_time);
                if (!next) continue;
                sum += std::abs(*next - p.predicted_time);
                ++row.predictions;
            }
        }
        if (row.predictions > 0) row.mean_abs_error = sum / static_cast<double>(row.predictions);
        res.rows.push_back(row);
    }
    bool any = false;
    for (std::size_t i = 0; i < res.rows.size(); ++i) {
        if (!std::isfinite(res.rows[i].mean_abs_error)) continue;
        if (!any || res.rows[i].mean_abs_error < res.rows[res.best].mean_abs_error) res.best = i;
        any = true;
    }
    if (!any) throw TuningError("tune_hyperparameters: every grid point failed");
    return res;
}

}  // namespace lobcast::bt
