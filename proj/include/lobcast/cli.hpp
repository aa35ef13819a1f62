#pragma once

// Command implementations behind the `lobcast` executable. Each command reads
// a RunConfig, writes its files atomically into cfg.out and throws on failure;
// run_command() maps failures to exit codes.

#include "lobcast/backtest.hpp"
#include "lobcast/format.hpp"
#include "lobcast/lobdata.hpp"
#include "lobcast/synth.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace lobcast::cli {

using json = nlohmann::ordered_json;

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_data = 2, exit_fit = 3 };

inline constexpr const char* config_env_var = "LOBCAST_CONFIG";

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string data;
    std::size_t levels{10};
    bt::HyperParams hp{};
    std::string predictor{"hawkes"};
    std::uint64_t seed{0};
    std::string out{"."};
    std::string format{"csv"};
    std::optional<double> t0;
    std::size_t scenarios{50};
    std::size_t tune_windows{5};
    std::string grid;
    double ma_window_s{60.0};
    bt::BacktestOptions options{};
    synth::SynthConfig synth{};
};

// ---------------------------------------------------------------------------
// Configuration

namespace detail {

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
    const auto d = fmt::parse_double(v);
    if (!d) throw UsageError("config: '" + key + "' expects a number, got '" + v + "'");
    return *d;
}

inline double to_positive(const std::string& key, const std::string& v) {
    const double d = to_double(key, v);
    if (!(d > 0.0)) throw UsageError("config: '" + key + "' must be positive");
    return d;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
        throw UsageError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
    return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw UsageError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

inline std::vector<double> to_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
    if (out.empty()) throw UsageError("config: '" + key + "' expects a comma-separated list");
    return out;
}

}  // namespace detail

/// Applies one `key = value` setting. Unknown keys are usage errors.
inline void apply_setting(RunConfig& cfg, const std::string& key_in, const std::string& value_in) {
    using namespace detail;
    const std::string key = trim(key_in);
    const std::string v = trim(value_in);
    auto& hp = cfg.hp;
    auto& o = cfg.options;
    auto& s = cfg.synth;
    if (key == "data") cfg.data = v;
    else if (key == "levels") cfg.levels = static_cast<std::size_t>(to_uint(key, v));
    else if (key == "depth") hp.depth = static_cast<std::size_t>(to_uint(key, v));
    else if (key == "hawkes_train_min") hp.hawkes_train_min = to_positive(key, v);
    else if (key == "coe_train_min") hp.coe_train_min = to_positive(key, v);
    else if (key == "t_warm_min") hp.t_warm_min = to_positive(key, v);
    else if (key == "delta_t_s") hp.delta_t_s = to_positive(key, v);
    else if (key == "sim_min") hp.sim_min = to_positive(key, v);
    else if (key == "predictor") {
        try {
            (void)predict::parse_predictor(v);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        cfg.predictor = v;
    } else if (key == "seed") cfg.seed = to_uint(key, v);
    else if (key == "out") cfg.out = v;
    else if (key == "format") {
        if (v != "csv" && v != "json") throw UsageError("config: format must be csv or json");
        cfg.format = v;
    } else if (key == "t0") cfg.t0 = to_double(key, v);
    else if (key == "scenarios") cfg.scenarios = static_cast<std::size_t>(to_uint(key, v));
    else if (key == "tune_windows") cfg.tune_windows = static_cast<std::size_t>(to_uint(key, v));
    else if (key == "grid") cfg.grid = v;
    else if (key == "ma_window_s") cfg.ma_window_s = to_positive(key, v);
    else if (key == "stake") o.stake = to_positive(key, v);
    else if (key == "resolution_s") o.resolution_s = to_positive(key, v);
    else if (key == "clamp_hawkes") o.clamp_hawkes = to_bool(key, v);
    else if (key == "condition_on_observed") o.condition_on_observed = to_bool(key, v);
    else if (key == "refit_each_step") o.refit_each_step = to_bool(key, v);
    else if (key == "threads") o.threads = static_cast<std::size_t>(to_uint(key, v));
    else if (key == "min_gap_s") o.limits.min_gap_s = to_double(key, v);
    else if (key == "max_mean_max_gap_s") o.limits.max_mean_max_gap_s = to_positive(key, v);
    else if (key == "gap_window_s") o.limits.gap_window_s = to_positive(key, v);
    else if (key == "coe_na") o.coe.na = static_cast<std::size_t>(to_uint(key, v));
    else if (key == "coe_nb") o.coe.nb = static_cast<std::size_t>(to_uint(key, v));
    else if (key == "synth.start_time") s.start_time = to_double(key, v);
    else if (key == "synth.duration_s") s.duration_s = to_positive(key, v);
    else if (key == "synth.mu") s.hawkes.mu = to_positive(key, v);
    else if (key == "synth.alpha") s.hawkes.alpha = to_double(key, v);
    else if (key == "synth.beta") s.hawkes.beta = to_positive(key, v);
    else if (key == "synth.resolution_s") s.resolution_s = to_double(key, v);
    else if (key == "synth.quantize") s.quantize = to_bool(key, v);
    else if (key == "synth.model") {
        if (v == "coe") s.model = synth::ReturnModel::coe;
        else if (v == "linear") s.model = synth::ReturnModel::linear;
        else if (v == "constant") s.model = synth::ReturnModel::constant;
        else throw UsageError("config: synth.model must be coe, linear or constant");
    } else if (key == "synth.coe_a") s.coe.a = to_list(key, v);
    else if (key == "synth.coe_b") s.coe.b = to_list(key, v);
    else if (key == "synth.linear_gain") s.linear_gain = to_double(key, v);
    else if (key == "synth.bi_persistence") s.bi_persistence = to_double(key, v);
    else if (key == "synth.snr_db") s.noise_snr_db = v == "inf" ? std::numeric_limits<double>::infinity() : to_double(key, v);
    else if (key == "synth.repeat_fraction") s.repeat_fraction = to_double(key, v);
    else if (key == "synth.base_price") s.base_price = to_positive(key, v);
    else throw UsageError("config: unknown key '" + key + "'");
}

/// Flat `key = value` lines; `#` starts a comment.
inline void load_config(RunConfig& cfg, std::istream& in) {
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw UsageError("config line " + std::to_string(n) + ": expected key = value");
        apply_setting(cfg, line.substr(0, eq), line.substr(eq + 1));
    }
}

inline void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path);
    load_config(cfg, in);
}

// ---------------------------------------------------------------------------
// Serialization helpers

[[nodiscard]] inline json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

[[nodiscard]] inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

[[nodiscard]] inline json hawkes_json(const hawkes::HawkesFit& fit, std::uint64_t seed) {
    return {{"mu", fit.params.mu},
            {"alpha", fit.params.alpha},
            {"beta", fit.params.beta},
            {"branching_ratio", fit.branching_ratio()},
            {"loglik", jnum(fit.log_likelihood)},
            {"converged", fit.converged},
            {"seed", seed}};
}

[[nodiscard]] inline json coe_json(const coe::CoeParams& p, const coe::CoeDiagnostics& d) {
    return {{"a", p.a},
            {"b", p.b},
            {"na", p.na()},
            {"nb", p.nb()},
            {"fit_percent", jnum(d.fit_percent)},
            {"converged", d.converged},
            {"non_informative", d.non_informative}};
}

[[nodiscard]] inline json hp_json(const bt::HyperParams& hp) {
    return {{"hawkes_train_min", hp.hawkes_train_min}, {"coe_train_min", hp.coe_train_min},
            {"t_warm_min", hp.t_warm_min},             {"delta_t_s", hp.delta_t_s},
            {"sim_min", hp.sim_min},                   {"depth", hp.depth}};
}

[[nodiscard]] inline json result_json(const bt::BacktestResult& r) {
    json recs = json::array();
    for (const auto& p : r.records)
        recs.push_back({{"issue_time", p.issue_time},
                        {"predicted_time", p.predicted_time},
                        {"matched_time", p.matched_time},
                        {"bi", p.bi},
                        {"predicted_return", p.predicted_return},
                        {"reference_return", p.reference_return},
                        {"reference_time", p.reference_time},
                        {"actual_next_time", jnum(p.actual_next_time)}});
    json j{{"predictor", r.predictor.name()},
           {"scenario_id", r.scenario_id},
           {"t0", r.t0},
           {"seed", r.seed},
           {"accuracy", jnum(r.confusion.accuracy)},
           {"confusion",
            {{"tp", r.confusion.tp}, {"tn", r.confusion.tn}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn},
             {"excluded", r.confusion.excluded}}},
           {"total_profit", r.trading.total},
           {"predictions", r.records.size()},
           {"attempts", r.attempts},
           {"reused_references", r.reused_references},
           {"mean_abs_time_error", jnum(r.mean_abs_time_error)},
           {"coe", coe_json(r.coe, r.coe_diagnostics)}};
    if (r.hawkes) j["hawkes"] = hawkes_json(*r.hawkes, r.seed);
    j["validity"] = {{"min_gap", jnum(r.validity.min_gap)},
                     {"mean_max_gap", jnum(r.validity.mean_max_gap)},
                     {"hawkes_events", r.validity.hawkes_events},
                     {"coe_events", r.validity.coe_events},
                     {"sim_events", r.validity.sim_events}};
    j["records"] = std::move(recs);
    return j;
}

// ---------------------------------------------------------------------------
// Commands

struct LoadedData {
    lob::LobFile file;
    lob::EventSeries events;
};

[[nodiscard]] inline lob::LobFile load_lob(const RunConfig& cfg) {
    if (cfg.data.empty()) throw UsageError("no data file given (--data)");
    if (!std::filesystem::exists(cfg.data)) throw UsageError("data file not found: " + cfg.data);
    return lob::parse_lob_csv(cfg.data, cfg.levels);
}

[[nodiscard]] inline LoadedData load_events(const RunConfig& cfg) {
    LoadedData d{load_lob(cfg), {}};
    d.events = lob::extract_events(d.file.snapshots, cfg.hp.depth);
    return d;
}

[[nodiscard]] inline std::filesystem::path out_dir(const RunConfig& cfg) {
    std::filesystem::path p(cfg.out);
    std::filesystem::create_directories(p);
    return p;
}

[[nodiscard]] inline predict::PredictorKind predictor_of(const RunConfig& cfg) {
    auto k = predict::parse_predictor(cfg.predictor);
    if (k.type == predict::PredictorType::moving_average) k.ma_window_s = cfg.ma_window_s;
    return k;
}

[[nodiscard]] inline std::vector<predict::PredictorKind> predictors_of(const RunConfig& cfg) {
    auto all = predict::all_predictors();
    for (auto& k : all)
        if (k.type == predict::PredictorType::moving_average) k.ma_window_s = cfg.ma_window_s;
    return all;
}

/// --t0 when given, otherwise the first sampled valid window.
[[nodiscard]] inline double scenario_t0(const RunConfig& cfg, const lob::EventSeries& es) {
    if (cfg.t0) return *cfg.t0;
    const auto t0s = bt::sample_scenarios(es, cfg.hp, 1, cfg.seed, cfg.options.limits);
    if (t0s.empty()) throw bt::ScenarioError(bt::Stage::validation, "no window passes the scenario checks");
    return t0s.front();
}

inline void cmd_synth(const RunConfig& cfg, std::ostream& log) {
    auto scfg = cfg.synth;
    scfg.seed = cfg.seed;
    scfg.levels = cfg.levels;
    scfg.depth = cfg.hp.depth;
    const auto d = synth::generate(scfg);
    const auto dir = out_dir(cfg);
    std::ostringstream csv;
    lob::write_lob_csv(csv, d.snapshots);
    fmt::write_file_atomic(dir / "lob.csv", csv.str());
    json truth{{"seed", cfg.seed},
               {"records", d.snapshots.size()},
               {"events", d.event_times.size()},
               {"hawkes", {{"mu", scfg.hawkes.mu}, {"alpha", scfg.hawkes.alpha}, {"beta", scfg.hawkes.beta}}},
               {"coe", {{"a", scfg.coe.a}, {"b", scfg.coe.b}}}};
    fmt::write_file_atomic(dir / "synth.json", dump(truth));
    log << "synth: " << d.snapshots.size() << " records, " << d.event_times.size() << " events\n";
}

inline void cmd_ingest(const RunConfig& cfg, std::ostream& log) {
    const auto d = load_events(cfg);
    const auto dir = out_dir(cfg);
    const auto& es = d.events;
    if (cfg.format == "json") {
        json rows = json::array();
        for (std::size_t k = 0; k < es.size(); ++k)
            rows.push_back({{"time", es.times[k]},
                            {"mid_price", es.mid_prices[k]},
                            {"return", es.returns[k]},
                            {"base_imbalance", es.base_imbalances[k]}});
        fmt::write_file_atomic(dir / "events.json", dump(rows));
    } else {
        std::string csv = "time,mid_price,return,base_imbalance\n";
        for (std::size_t k = 0; k < es.size(); ++k)
            csv += fmt::num(es.times[k]) + "," + fmt::num(es.mid_prices[k]) + "," + fmt::num(es.returns[k]) + "," +
                   fmt::num(es.base_imbalances[k]) + "\n";
        fmt::write_file_atomic(dir / "events.csv", csv);
    }
    log << "ingest: " << d.file.rows_read << " rows, " << es.size() << " events";
    if (d.file.crossed_dropped > 0) log << ", " << d.file.crossed_dropped << " crossed rows dropped";
    log << "\n";
}

inline void cmd_analyze(const RunConfig& cfg, std::ostream& log) {
    const auto file = load_lob(cfg);
    const auto dir = out_dir(cfg);
    json summary{{"records", file.snapshots.size()},
                 {"rows_read", file.rows_read},
                 {"crossed_dropped", file.crossed_dropped},
                 {"duplicates_collapsed", file.duplicates_collapsed},
                 {"zero_return_fraction", jnum(lob::zero_return_fraction(file.snapshots))}};

    std::optional<lob::EventSeries> es;
    try {
        es = lob::extract_events(file.snapshots, cfg.hp.depth);
    } catch (const InsufficientData& e) {
        log << "analyze: " << e.what() << "; decile analysis skipped\n";
    }
    if (es) {
        summary["events"] = es->size();
        std::vector<double> gaps;
        const auto all = es->all_event_times();
        for (std::size_t k = 1; k < all.size(); ++k) gaps.push_back(all[k] - all[k - 1]);
        summary["gap_seconds"] = {{"min", *std::min_element(gaps.begin(), gaps.end())},
                                  {"median", stats::median(gaps)},
                                  {"mean", stats::mean(gaps)},
                                  {"max", *std::max_element(gaps.begin(), gaps.end())}};
        try {
            const auto dc = lob::decile_correlation(*es);
            std::string csv = "decile,mean_bi,mean_return,count\n";
            for (std::size_t g = 0; g < dc.deciles.size(); ++g)
                csv += std::to_string(g + 1) + "," + fmt::num(dc.deciles[g].mean_bi) + "," +
                       fmt::num(dc.deciles[g].mean_return) + "," + std::to_string(dc.deciles[g].count) + "\n";
            fmt::write_file_atomic(dir / "deciles.csv", csv);
            summary["rho"] = jnum(dc.rho);
        } catch (const InsufficientData& e) {
            log << "analyze: " << e.what() << "; decile analysis skipped\n";
            summary["rho"] = nullptr;
        }
    } else {
        summary["events"] = 0;
        summary["rho"] = nullptr;
    }

    std::string ohlc = "date,open,high,low,close,records\n";
    for (const auto& r : lob::daily_ohlc(file.snapshots))
        ohlc += r.day + "," + fmt::num(r.open) + "," + fmt::num(r.high) + "," + fmt::num(r.low) + "," +
                fmt::num(r.close) + "," + std::to_string(r.records) + "\n";
    fmt::write_file_atomic(dir / "ohlc.csv", ohlc);
    fmt::write_file_atomic(dir / "summary.json", dump(summary));
}

inline void cmd_fit_hawkes(const RunConfig& cfg, std::ostream& log) {
    const auto d = load_events(cfg);
    const auto all = d.events.all_event_times();
    const double t0 = cfg.t0 ? *cfg.t0 : all.back();
    hawkes::HawkesFit fit;
    try {
        fit = hawkes::fit_window(all, t0 - cfg.hp.hawkes_train_min * 60.0, t0, std::nullopt, cfg.options.hawkes_fit);
    } catch (const InsufficientData& e) {
        throw bt::ScenarioError(bt::Stage::hawkes_fit, e.what());
    }
    if (!fit.params.stationary()) log << "fit-hawkes: warning: branching ratio >= 1 (non-stationary fit)\n";
    fmt::write_file_atomic(out_dir(cfg) / "hawkes.json", dump(hawkes_json(fit, cfg.seed)));
}

inline void cmd_forecast(const RunConfig& cfg, std::ostream& log) {
    const auto d = load_events(cfg);
    const double t0 = scenario_t0(cfg, d.events);
    std::optional<hawkes::HawkesFit> fit;
    const auto run = bt::predict_event_times(d.events, t0, predict::PredictorKind::hawkes(), cfg.hp, cfg.options,
                                             cfg.seed, &fit);
    const auto dir = out_dir(cfg);
    if (cfg.format == "json") {
        json j{{"t0", t0}, {"attempts", run.attempts}, {"hawkes", hawkes_json(*fit, cfg.seed)}};
        j["points"] = json::array();
        for (const auto& p : run.points) j["points"].push_back({{"issue_time", p.issue_time}, {"predicted_time", p.predicted_time}});
        fmt::write_file_atomic(dir / "forecast.json", dump(j));
    } else {
        std::string csv = "issue_time,predicted_time\n";
        for (const auto& p : run.points) csv += fmt::num(p.issue_time) + "," + fmt::num(p.predicted_time) + "\n";
        fmt::write_file_atomic(dir / "forecast.csv", csv);
    }
    log << "forecast: " << run.points.size() << " predictions from " << run.attempts << " attempts\n";
}

inline void cmd_backtest(const RunConfig& cfg, std::ostream& log) {
    const auto d = load_events(cfg);
    const double t0 = scenario_t0(cfg, d.events);
    const auto res = bt::run_scenario(d.events, t0, predictor_of(cfg), cfg.hp, cfg.options, cfg.seed);
    const auto dir = out_dir(cfg);
    std::string csv = "time,cumulative_profit\n";
    for (const auto& p : res.trading.series) csv += fmt::num(p.time) + "," + fmt::num(p.cumulative) + "\n";
    fmt::write_file_atomic(dir / "profit_series.csv", csv);
    fmt::write_file_atomic(dir / "result.json", dump(result_json(res)));
    log << "backtest: " << res.predictor.name() << " accuracy "
        << (res.confusion.defined() ? fmt::num(res.confusion.accuracy) : std::string("undefined")) << ", profit "
        << fmt::num(res.trading.total) << "\n";
}

inline void cmd_montecarlo(const RunConfig& cfg, std::ostream& log) {
    const auto d = load_events(cfg);
    const auto t0s = bt::sample_scenarios(d.events, cfg.hp, cfg.scenarios, cfg.seed, cfg.options.limits);
    if (t0s.empty()) throw bt::ScenarioError(bt::Stage::validation, "no window passes the scenario checks");
    if (t0s.size() < cfg.scenarios)
        log << "montecarlo: only " << t0s.size() << " valid windows available (" << cfg.scenarios << " requested)\n";
    const auto preds = predictors_of(cfg);
    const auto rep = bt::monte_carlo(d.events, t0s, preds, cfg.hp, cfg.options, cfg.seed);
    for (const auto& s : rep.skipped)
        log << "montecarlo: skipped scenario " << s.scenario_id << (s.predictor.empty() ? "" : " (" + s.predictor + ")")
            << ": " << s.reason << "\n";

    std::string agg =
        "scenario_id,t0,predictor,accuracy,total_profit,tp,tn,fp,fn,excluded,predictions,mean_abs_time_error\n";
    for (const auto& r : rep.rows)
        agg += std::to_string(r.scenario_id) + "," + fmt::num(r.t0) + "," + r.predictor.name() + "," +
               fmt::num(r.confusion.accuracy) + "," + fmt::num(r.trading.total) + "," + std::to_string(r.confusion.tp) +
               "," + std::to_string(r.confusion.tn) + "," + std::to_string(r.confusion.fp) + "," +
               std::to_string(r.confusion.fn) + "," + std::to_string(r.confusion.excluded) + "," +
               std::to_string(r.records.size()) + "," + fmt::num(r.mean_abs_time_error) + "\n";
    std::string box = "predictor,metric,min,q1,median,q3,max\n";
    auto row = [](const std::string& p, const char* m, const stats::BoxStats& b) {
        return p + "," + m + "," + fmt::num(b.min) + "," + fmt::num(b.q1) + "," + fmt::num(b.median) + "," +
               fmt::num(b.q3) + "," + fmt::num(b.max) + "\n";
    };
    for (const auto& s : rep.summaries) {
        box += row(s.predictor.name(), "accuracy", s.accuracy);
        box += row(s.predictor.name(), "total_profit", s.profit);
    }
    auto box_json = [](const stats::BoxStats& b) {
        return json{{"min", jnum(b.min)}, {"q1", jnum(b.q1)}, {"median", jnum(b.median)}, {"q3", jnum(b.q3)},
                    {"max", jnum(b.max)}};
    };
    json report{{"seed", cfg.seed}, {"scenarios", t0s.size()}, {"summaries", json::array()}, {"skipped", json::array()}};
    for (const auto& s : rep.summaries)
        report["summaries"].push_back({{"predictor", s.predictor.name()},
                                       {"scenarios", s.scenarios},
                                       {"accuracy", box_json(s.accuracy)},
                                       {"total_profit", box_json(s.profit)}});
    for (const auto& s : rep.skipped)
        report["skipped"].push_back({{"scenario_id", s.scenario_id},
                                     {"t0", s.t0},
                                     {"predictor", s.predictor.empty() ? json(nullptr) : json(s.predictor)},
                                     {"stage", bt::stage_name(s.stage)},
                                     {"reason", s.reason}});
    const auto dir = out_dir(cfg);
    fmt::write_file_atomic(dir / "aggregate.csv", agg);
    fmt::write_file_atomic(dir / "boxstats.csv", box);
    fmt::write_file_atomic(dir / "report.json", dump(report));
}

/// Grid file: CSV with a header naming any of the hyperparameter fields;
/// omitted fields keep their configured values.
[[nodiscard]] inline std::vector<bt::HyperParams> read_grid(const std::string& path, const bt::HyperParams& base) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open grid file " + path);
    std::string line;
    std::vector<std::string> cols;
    std::vector<bt::HyperParams> grid;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        line = detail::trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(detail::trim(c));
        if (cols.empty()) {
            cols = cells;
            continue;
        }
        if (cells.size() != cols.size())
            throw UsageError("grid line " + std::to_string(n) + ": expected " + std::to_string(cols.size()) + " fields");
        RunConfig tmp;
        tmp.hp = base;
        for (std::size_t i = 0; i < cols.size(); ++i) {
            if (cols[i] != "hawkes_train_min" && cols[i] != "coe_train_min" && cols[i] != "t_warm_min" &&
                cols[i] != "delta_t_s" && cols[i] != "sim_min" && cols[i] != "depth")
                throw UsageError("grid: unknown column '" + cols[i] + "'");
            apply_setting(tmp, cols[i], cells[i]);
        }
        grid.push_back(tmp.hp);
    }
    return grid;
}

inline void cmd_tune(const RunConfig& cfg, std::ostream& log) {
    if (cfg.grid.empty()) throw UsageError("tune needs a grid file (--grid)");
    const auto grid = read_grid(cfg.grid, cfg.hp);
    if (grid.empty()) throw UsageError("grid file has no candidate rows");
    const auto d = load_events(cfg);
    const auto anchors = bt::sample_scenarios(d.events, cfg.hp, cfg.tune_windows, cfg.seed, cfg.options.limits);
    if (anchors.empty()) throw bt::ScenarioError(bt::Stage::validation, "no window passes the scenario checks");
    const auto res = bt::tune_hyperparameters(d.events, grid, anchors, cfg.options, cfg.seed);
    if (res.duplicates_removed > 0)
        log << "tune: warning: " << res.duplicates_removed << " duplicate grid row(s) removed\n";

    std::string csv =
        "hawkes_train_min,coe_train_min,t_warm_min,delta_t_s,sim_min,depth,mean_abs_error,predictions,scenarios\n";
    for (const auto& r : res.rows)
        csv += fmt::num(r.hp.hawkes_train_min) + "," + fmt::num(r.hp.coe_train_min) + "," + fmt::num(r.hp.t_warm_min) +
               "," + fmt::num(r.hp.delta_t_s) + "," + fmt::num(r.hp.sim_min) + "," + std::to_string(r.hp.depth) + "," +
               fmt::num(r.mean_abs_error) + "," + std::to_string(r.predictions) + "," + std::to_string(r.scenarios) +
               "\n";
    const auto& best = res.best_row();
    json bj = hp_json(best.hp);
    bj["mean_abs_error"] = best.mean_abs_error;
    bj["row"] = res.best;
    const auto dir = out_dir(cfg);
    fmt::write_file_atomic(dir / "tuning.csv", csv);
    fmt::write_file_atomic(dir / "best.json", dump(bj));
}

inline const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"ingest", "analyze",    "fit-hawkes", "forecast",
                                                "backtest", "montecarlo", "tune",       "synth"};
    return names;
}

/// Runs a command and maps failures to exit codes.
inline int run_command(const std::string& name, const RunConfig& cfg, std::ostream& log = std::cerr) {
    try {
        cfg.hp.validate();
        if (name == "ingest") cmd_ingest(cfg, log);
        else if (name == "analyze") cmd_analyze(cfg, log);
        else if (name == "fit-hawkes") cmd_fit_hawkes(cfg, log);
        else if (name == "forecast") cmd_forecast(cfg, log);
        else if (name == "backtest") cmd_backtest(cfg, log);
        else if (name == "montecarlo") cmd_montecarlo(cfg, log);
        else if (name == "tune") cmd_tune(cfg, log);
        else if (name == "synth") cmd_synth(cfg, log);
        else throw UsageError("unknown command '" + name + "'");
        return exit_ok;
    } catch (const UsageError& e) {
        log << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const bt::ScenarioError& e) {
        log << "error: " << e.what() << "\n";
        return e.stage() == bt::Stage::validation ? exit_data : exit_fit;
    } catch (const coe::CoeFitError& e) {
        log << "error: coe-fit: " << e.what() << "\n";
        return exit_fit;
    } catch (const bt::TuningError& e) {
        log << "error: " << e.what() << "\n";
        return exit_fit;
    } catch (const FormatError& e) {
        log << "error: " << e.what() << "\n";
        return exit_data;
    } catch (const RowError& e) {
        log << "error: " << e.what() << "\n";
        return exit_data;
    } catch (const InsufficientData& e) {
        log << "error: " << e.what() << "\n";
        return exit_data;
    } catch (const std::invalid_argument& e) {
        log << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return exit_data;
    }
}

}  // namespace lobcast::cli
