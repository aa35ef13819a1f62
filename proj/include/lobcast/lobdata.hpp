#pragma once

// Limit-order-book ingestion and the event-level features derived from it:
// mid-price, forward returns, base imbalance and the non-zero-return event
// series that every downstream model consumes.

#include "lobcast/errors.hpp"
#include "lobcast/format.hpp"
#include "lobcast/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace lobcast::lob {

struct LobSnapshot {
    double timestamp{0.0};
    std::vector<double> ask_prices;
    std::vector<double> ask_sizes;
    std::vector<double> bid_prices;
    std::vector<double> bid_sizes;

    [[nodiscard]] std::size_t levels() const noexcept { return ask_prices.size(); }
};

struct LobFile {
    std::vector<LobSnapshot> snapshots;
    std::size_t rows_read{0};
    std::size_t crossed_dropped{0};
    std::size_t duplicates_collapsed{0};
};

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\xEF' ||
                          s.front() == '\xBB' || s.front() == '\xBF'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return std::string(s);
}

// Throws RowError when the level structure is broken. Crossed books are not
// checked here; the caller drops them.
inline void check_levels(const LobSnapshot& s, std::size_t line) {
    for (std::size_t i = 0; i < s.levels(); ++i) {
        if (!(s.ask_prices[i] > 0.0) || !(s.bid_prices[i] > 0.0))
            throw RowError(line, "non-positive price at level " + std::to_string(i + 1));
        if (!(s.ask_sizes[i] > 0.0) || !(s.bid_sizes[i] > 0.0))
            throw RowError(line, "non-positive size at level " + std::to_string(i + 1));
        if (i > 0 && !(s.ask_prices[i] > s.ask_prices[i - 1]))
            throw RowError(line, "ask prices not strictly increasing at level " + std::to_string(i + 1));
        if (i > 0 && !(s.bid_prices[i] < s.bid_prices[i - 1]))
            throw RowError(line, "bid prices not strictly decreasing at level " + std::to_string(i + 1));
    }
}

}  // namespace detail

/// Reads an LOB CSV. Column order is free; the header must name `timestamp`
/// and `ask_price_i, ask_size_i, bid_price_i, bid_size_i` for i = 1..level_count.
/// Rows come back sorted by time with equal timestamps collapsed to the last
/// row in file order. Crossed books are dropped and counted.
[[nodiscard]] inline LobFile parse_lob_csv(std::istream& in, std::size_t level_count) {
    if (level_count == 0) throw std::invalid_argument("parse_lob_csv: level_count must be >= 1");
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw FormatError("empty LOB file: missing header");
    ++line_no;

    std::map<std::string, std::size_t> col;
    {
        const auto names = detail::split_csv(line);
        for (std::size_t i = 0; i < names.size(); ++i) col[detail::trim(names[i])] = i;
    }
    auto require = [&](const std::string& name) {
        const auto it = col.find(name);
        if (it == col.end()) throw FormatError("missing required column '" + name + "'");
        return it->second;
    };
    const std::size_t ts_col = require("timestamp");
    std::vector<std::array<std::size_t, 4>> level_cols(level_count);
    for (std::size_t i = 0; i < level_count; ++i) {
        const auto k = std::to_string(i + 1);
        level_cols[i] = {require("ask_price_" + k), require("ask_size_" + k), require("bid_price_" + k),
                         require("bid_size_" + k)};
    }
    const std::size_t width = col.size();

    LobFile out;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_csv(line);
        if (fields.size() != width)
            throw RowError(line_no, "expected " + std::to_string(width) + " fields, got " +
                                        std::to_string(fields.size()));
        ++out.rows_read;
        LobSnapshot s;
        const auto ts = fmt::parse_timestamp(fields[ts_col]);
        if (!ts) throw RowError(line_no, "unparseable timestamp '" + std::string(fields[ts_col]) + "'");
        s.timestamp = *ts;
        s.ask_prices.resize(level_count);
        s.ask_sizes.resize(level_count);
        s.bid_prices.resize(level_count);
        s.bid_sizes.resize(level_count);
        for (std::size_t i = 0; i < level_count; ++i) {
            double* dst[4] = {&s.ask_prices[i], &s.ask_sizes[i], &s.bid_prices[i], &s.bid_sizes[i]};
            for (std::size_t j = 0; j < 4; ++j) {
                const auto v = fmt::parse_double(fields[level_cols[i][j]]);
                if (!v || !std::isfinite(*v))
                    throw RowError(line_no, "non-numeric value '" + std::string(fields[level_cols[i][j]]) + "'");
                *dst[j] = *v;
            }
        }
        detail::check_levels(s, line_no);
        if (s.ask_prices[0] < s.bid_prices[0]) {
            ++out.crossed_dropped;
            continue;
        }
        out.snapshots.push_back(std::move(s));
    }

    auto& v = out.snapshots;
    std::stable_sort(v.begin(), v.end(),
                     [](const LobSnapshot& a, const LobSnapshot& b) { return a.timestamp < b.timestamp; });
    std::vector<LobSnapshot> dedup;
    dedup.reserve(v.size());
    for (auto& s : v) {
        if (!dedup.empty() && dedup.back().timestamp == s.timestamp) {
            dedup.back() = std::move(s);
            ++out.duplicates_collapsed;
        } else {
            dedup.push_back(std::move(s));
        }
    }
    v = std::move(dedup);
    return out;
}

[[nodiscard]] inline LobFile parse_lob_csv(const std::string& path, std::size_t level_count) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open LOB file '" + path + "'");
    return parse_lob_csv(in, level_count);
}

/// Writes snapshots in the format parse_lob_csv reads (epoch-second timestamps,
/// shortest round-trip decimals).
inline void write_lob_csv(std::ostream& out, std::span<const LobSnapshot> snapshots) {
    const std::size_t levels = snapshots.empty() ? 0 : snapshots.front().levels();
    out << "timestamp";
    for (std::size_t i = 1; i <= levels; ++i)
        out << ",ask_price_" << i << ",ask_size_" << i << ",bid_price_" << i << ",bid_size_" << i;
    out << '\n';
    for (const auto& s : snapshots) {
        if (s.levels() != levels) throw std::invalid_argument("write_lob_csv: inconsistent level count");
        out << fmt::num(s.timestamp);
        for (std::size_t i = 0; i < levels; ++i) {
            out << ',' << fmt::num(s.ask_prices[i]) << ',' << fmt::num(s.ask_sizes[i]) << ','
                << fmt::num(s.bid_prices[i]) << ',' << fmt::num(s.bid_sizes[i]);
        }
        out << '\n';
    }
}

[[nodiscard]] inline double mid_price(const LobSnapshot& s) { return (s.ask_prices[0] + s.bid_prices[0]) / 2.0; }

/// R_k = (P_{k+1} - P_k) / P_k; one element shorter than the input.
[[nodiscard]] inline std::vector<double> compute_returns(std::span<const double> prices) {
    if (prices.size() < 2) throw std::invalid_argument("compute_returns: need at least 2 prices");
    for (double p : prices)
        if (!(p > 0.0)) throw std::domain_error("compute_returns: prices must be positive");
    std::vector<double> r(prices.size() - 1);
    for (std::size_t k = 0; k + 1 < prices.size(); ++k) r[k] = (prices[k + 1] - prices[k]) / prices[k];
    return r;
}

struct BaseImbalance {
    double value{0.0};
    bool degenerate{false};  // both depth ranges were zero
};

/// (D_bid - D_ask) / (D_bid + D_ask) with D_bid = bid_1 - bid_depth and
/// D_ask = ask_depth - ask_1.
[[nodiscard]] inline BaseImbalance base_imbalance(const LobSnapshot& s, std::size_t depth = 8) {
    if (depth < 2 || depth > s.levels())
        throw std::invalid_argument("base_imbalance: depth must be in [2, " + std::to_string(s.levels()) + "]");
    const double d_bid = s.bid_prices[0] - s.bid_prices[depth - 1];
    const double d_ask = s.ask_prices[depth - 1] - s.ask_prices[0];
    const double total = d_bid + d_ask;
    if (total == 0.0) return {0.0, true};
    return {std::clamp((d_bid - d_ask) / total, -1.0, 1.0), false};
}

/// Non-zero-return LOB events. Index k is aligned across all arrays and
/// returns[k] is the forward return to the next retained event.
struct EventSeries {
    std::vector<double> times;
    std::vector<double> mid_prices;
    std::vector<double> returns;
    std::vector<double> base_imbalances;
    // The last retained record has no forward return; it is kept apart so the
    // next-event time after times.back() is still known.
    double terminal_time{std::numeric_limits<double>::quiet_NaN()};
    double terminal_mid{std::numeric_limits<double>::quiet_NaN()};
    std::size_t source_records{0};
    std::size_t retained_records{0};
    std::size_t degenerate_bi{0};

    [[nodiscard]] std::size_t size() const noexcept { return times.size(); }
    [[nodiscard]] bool empty() const noexcept { return times.empty(); }

    /// Index range [first, last) of events with a <= t_k <= b.
    [[nodiscard]] std::pair<std::size_t, std::size_t> index_range(double a, double b) const {
        const auto lo = std::lower_bound(times.begin(), times.end(), a);
        const auto hi = std::upper_bound(times.begin(), times.end(), b);
        return {static_cast<std::size_t>(lo - times.begin()),
                static_cast<std::size_t>(std::max(lo, hi) - times.begin())};
    }

    /// Event times including the terminal record.
    [[nodiscard]] std::vector<double> all_event_times() const {
        std::vector<double> t = times;
        if (std::isfinite(terminal_time)) t.push_back(terminal_time);
        return t;
    }
};

/// Drops records whose mid-price equals the previous retained record's and
/// builds the event series over the survivors.
[[nodiscard]] inline EventSeries extract_events(std::span<const LobSnapshot> snapshots, std::size_t depth = 8) {
    if (snapshots.size() < 3) throw std::invalid_argument("extract_events: need at least 3 snapshots");
    struct Kept {
        double t;
        double mid;
        BaseImbalance bi;
    };
    // Equal timestamps collapse to the last record before zero returns are removed.
    std::vector<const LobSnapshot*> unique;
    unique.reserve(snapshots.size());
    for (const auto& s : snapshots) {
        if (!unique.empty() && s.timestamp < unique.back()->timestamp)
            throw ContractViolation("extract_events: snapshots must be sorted by timestamp");
        if (!unique.empty() && s.timestamp == unique.back()->timestamp)
            unique.back() = &s;
        else
            unique.push_back(&s);
    }
    std::vector<Kept> kept;
    kept.reserve(unique.size());
    for (const LobSnapshot* s : unique) {
        const double mid = mid_price(*s);
        if (!kept.empty() && mid == kept.back().mid) continue;
        kept.push_back({s->timestamp, mid, base_imbalance(*s, depth)});
    }
    if (kept.size() < 3) throw InsufficientData("extract_events: fewer than 2 non-zero-return events");

    EventSeries es;
    es.source_records = snapshots.size();
    es.retained_records = kept.size();
    const std::size_t n = kept.size() - 1;
    es.times.reserve(n);
    es.mid_prices.reserve(n);
    es.returns.reserve(n);
    es.base_imbalances.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        es.times.push_back(kept[k].t);
        es.mid_prices.push_back(kept[k].mid);
        es.returns.push_back((kept[k + 1].mid - kept[k].mid) / kept[k].mid);
        es.base_imbalances.push_back(kept[k].bi.value);
        if (kept[k].bi.degenerate) ++es.degenerate_bi;
    }
    es.terminal_time = kept.back().t;
    es.terminal_mid = kept.back().mid;
    return es;
}

/// Fraction of consecutive raw records with an unchanged mid-price.
[[nodiscard]] inline double zero_return_fraction(std::span<const LobSnapshot> snapshots) {
    if (snapshots.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    std::size_t zeros = 0;
    for (std::size_t k = 1; k < snapshots.size(); ++k)
        if (mid_price(snapshots[k]) == mid_price(snapshots[k - 1])) ++zeros;
    return static_cast<double>(zeros) / static_cast<double>(snapshots.size() - 1);
}

// ---------------------------------------------------------------------------
// Scenario windows

struct ScenarioWindow {
    double t0{0.0};
    double hawkes_train_s{20.0 * 60.0};
    double coe_train_s{50.0 * 60.0};
    double sim_s{2.0 * 60.0};

    [[nodiscard]] double hawkes_begin() const { return t0 - hawkes_train_s; }
    [[nodiscard]] double coe_begin() const { return t0 - coe_train_s; }
    [[nodiscard]] double sim_end() const { return t0 + sim_s; }
    [[nodiscard]] double earliest() const { return t0 - std::max(hawkes_train_s, coe_train_s); }
};

/// Data-quality limits a scenario must satisfy before it is simulated.
struct ScenarioLimits {
    double min_gap_s{1.0};
    double max_mean_max_gap_s{2.2};
    double gap_window_s{5.0};  // width of the windows whose maximum gaps are averaged
    std::size_t min_hawkes_events{10};
    std::size_t min_coe_events{40};
    std::size_t min_sim_events{2};
};

struct ValidityReport {
    bool in_range{false};
    bool data_present{false};
    bool nonzero_returns{false};
    bool min_gap_ok{false};
    bool mean_max_gap_ok{false};
    double min_gap{std::numeric_limits<double>::quiet_NaN()};
    double mean_max_gap{std::numeric_limits<double>::quiet_NaN()};
    std::size_t hawkes_events{0};
    std::size_t coe_events{0};
    std::size_t sim_events{0};

    [[nodiscard]] bool passed() const {
        return in_range && data_present && nonzero_returns && min_gap_ok && mean_max_gap_ok;
    }

    [[nodiscard]] std::string failures() const {
        std::string s;
        auto add = [&](bool ok, const char* name) {
            if (ok) return;
            if (!s.empty()) s += ", ";
            s += name;
        };
        add(in_range, "range");
        add(data_present, "data-present");
        add(nonzero_returns, "non-zero-returns");
        add(min_gap_ok, "min-gap");
        add(mean_max_gap_ok, "mean-max-gap");
        return s;
    }
};

/// Mean over consecutive windows of width `window` covering [a, b) of the
/// largest inter-event gap overlapping each window. `times` must be sorted.
[[nodiscard]] inline double mean_max_gap(std::span<const double> times, double a, double b, double window) {
    if (times.size() < 2 || !(b > a) || !(window > 0.0)) return std::numeric_limits<double>::infinity();
    const auto n_windows = static_cast<std::size_t>(std::ceil((b - a) / window - 1e-9));
    double total = 0.0;
    for (std::size_t w = 0; w < n_windows; ++w) {
        const double wa = a + static_cast<double>(w) * window;
        const double wb = std::min(b, wa + window);
        // first interval (t_i, t_{i+1}) that can overlap [wa, wb)
        auto it = std::upper_bound(times.begin(), times.end(), wa);
        std::size_t i = (it == times.begin()) ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
        double worst = 0.0;
        if (it == times.begin()) worst = times.front() - wa;  // no event before the window opens
        for (; i + 1 < times.size() && times[i] < wb; ++i) worst = std::max(worst, times[i + 1] - times[i]);
        if (times.back() < wb) worst = std::max(worst, wb - times.back());
        total += worst;
    }
    return total / static_cast<double>(n_windows);
}

[[nodiscard]] inline ValidityReport validate_scenario(const EventSeries& series, const ScenarioWindow& w,
                                                      const ScenarioLimits& limits = {}) {
    ValidityReport r;
    if (series.empty()) return r;
    const auto all_times = series.all_event_times();
    r.in_range = w.earliest() >= series.times.front() && w.sim_end() <= all_times.back();

    const auto [h_lo, h_hi] = series.index_range(w.hawkes_begin(), w.t0);
    const auto [c_lo, c_hi] = series.index_range(w.coe_begin(), w.t0);
    const auto [s_lo, s_hi] = series.index_range(w.t0, w.sim_end());
    r.hawkes_events = h_hi - h_lo;
    r.coe_events = c_hi - c_lo;
    r.sim_events = s_hi - s_lo;
    r.data_present = r.hawkes_events >= limits.min_hawkes_events && r.coe_events >= limits.min_coe_events &&
                     r.sim_events >= limits.min_sim_events;

    r.nonzero_returns = true;
    const std::size_t lo = std::min({h_lo, c_lo, s_lo});
    for (std::size_t k = lo; k < s_hi; ++k)
        if (series.returns[k] == 0.0) r.nonzero_returns = false;

    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t k = s_lo; k + 1 < s_hi; ++k) min_gap = std::min(min_gap, series.times[k + 1] - series.times[k]);
    r.min_gap = min_gap;
    r.min_gap_ok = r.sim_events >= 2 && min_gap >= limits.min_gap_s;
    r.mean_max_gap = mean_max_gap(all_times, w.t0, w.sim_end(), limits.gap_window_s);
    r.mean_max_gap_ok = r.mean_max_gap <= limits.max_mean_max_gap_s;
    return r;
}

// ---------------------------------------------------------------------------
// Exploratory analysis

struct DecileRow {
    double mean_bi{0.0};
    double mean_return{0.0};
    std::size_t count{0};
};

struct DecileCorrelation {
    std::vector<DecileRow> deciles;
    double rho{std::numeric_limits<double>::quiet_NaN()};
};

/// Groups events into return deciles and correlates the per-decile means of
/// base imbalance and return.
[[nodiscard]] inline DecileCorrelation decile_correlation(const EventSeries& series) {
    const std::size_t n = series.size();
    if (n < 10) throw InsufficientData("decile_correlation: need at least 10 events");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return series.returns[a] < series.returns[b]; });
    DecileCorrelation out;
    out.deciles.resize(10);
    std::vector<double> bi(10), r(10);
    for (std::size_t g = 0; g < 10; ++g) {
        const std::size_t lo = g * n / 10;
        const std::size_t hi = (g + 1) * n / 10;
        double sb = 0.0, sr = 0.0;
        for (std::size_t j = lo; j < hi; ++j) {
            sb += series.base_imbalances[order[j]];
            sr += series.returns[order[j]];
        }
        const auto cnt = static_cast<double>(hi - lo);
        out.deciles[g] = {sb / cnt, sr / cnt, hi - lo};
        bi[g] = sb / cnt;
        r[g] = sr / cnt;
    }
    out.rho = stats::pearson(bi, r);
    return out;
}

struct OhlcRow {
    std::string day;
    double open{0.0};
    double high{0.0};
    double low{0.0};
    double close{0.0};
    std::size_t records{0};
};

/// Daily (UTC) open/high/low/close of the mid-price over all records.
[[nodiscard]] inline std::vector<OhlcRow> daily_ohlc(std::span<const LobSnapshot> snapshots) {
    std::vector<OhlcRow> rows;
    for (const auto& s : snapshots) {
        const double mid = mid_price(s);
        const auto day = fmt::utc_date(s.timestamp);
        if (rows.empty() || rows.back().day != day) {
            rows.push_back({day, mid, mid, mid, mid, 0});
        }
        auto& r = rows.back();
        r.high = std::max(r.high, mid);
        r.low = std::min(r.low, mid);
        r.close = mid;
        ++r.records;
    }
    return rows;
}

}  // namespace lobcast::lob
