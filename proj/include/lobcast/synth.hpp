#pragma once

// Synthetic LOB datasets with known ground truth: event times from a Hawkes
// process observed at a finite time resolution, base imbalance from an AR(1)
// process in event time, and returns from a known COE system plus noise.
// Books are laid out so that base_imbalance() at `depth` reproduces the
// generated BI exactly (up to rounding).

#include "lobcast/coe.hpp"
#include "lobcast/hawkes.hpp"
#include "lobcast/lobdata.hpp"
#include "lobcast/random.hpp"
#include "lobcast/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace lobcast::synth {

enum class ReturnModel {
    coe,       // R_k = COE output at t_k plus noise
    linear,    // R_k = linear_gain * BI_k plus noise
    constant,  // every return zero (flat mid-price)
};

struct SynthConfig {
    double start_time{1556841600.0};  // 2019-05-03T00:00:00Z
    double duration_s{3600.0};
    hawkes::HawkesParams hawkes{2.0, 0.5, 1.0};
    // events closer than this to the previous observed event are not recorded
    double resolution_s{1.0};
    // stamp events on the resolution grid (one record per tick) instead of
    // dropping those within resolution_s of the previous one
    bool quantize{false};
    double burn_in_s{600.0};
    ReturnModel model{ReturnModel::coe};
    coe::CoeParams coe{{2.5, 1.5}, {0.0, 1.5e-4}};
    double linear_gain{-1e-4};
    double bi_persistence{0.3};  // AR(1) coefficient in event time
    double bi_amplitude{0.9};    // BI = amplitude * tanh(z)
    double noise_snr_db{std::numeric_limits<double>::infinity()};
    double repeat_fraction{0.0};  // share of records that repeat the previous book price
    std::size_t levels{10};
    std::size_t depth{8};
    double base_price{1.0};
    double spread{1e-4};
    double depth_range{8e-4};  // D_bid + D_ask
    std::uint64_t seed{1};
};

struct SynthData {
    std::vector<lob::LobSnapshot> snapshots;
    std::vector<double> event_times;
    std::vector<double> bi;
    std::vector<double> returns;           // noisy, as encoded in the prices
    std::vector<double> noiseless_returns;  // COE output at each event
};

/// Floors times to the resolution grid, one event per occupied tick.
[[nodiscard]] inline std::vector<double> quantize_times(const std::vector<double>& times, double resolution) {
    std::vector<double> out;
    out.reserve(times.size());
    for (double t : times) {
        const double q = std::floor(t / resolution) * resolution;
        if (out.empty() || q > out.back()) out.push_back(q);
    }
    return out;
}

/// Keeps an event only if it is at least `resolution` after the last kept one.
[[nodiscard]] inline std::vector<double> apply_resolution(const std::vector<double>& times, double resolution) {
    if (resolution <= 0.0) return times;
    std::vector<double> out;
    out.reserve(times.size());
    for (double t : times)
        if (out.empty() || t - out.back() >= resolution) out.push_back(t);
    return out;
}

[[nodiscard]] inline lob::LobSnapshot make_book(double t, double mid, double bi, const SynthConfig& cfg, Rng& rng) {
    std::uniform_real_distribution<double> size_dist(1.0, 100.0);
    lob::LobSnapshot s;
    s.timestamp = t;
    const double d_bid = cfg.depth_range * (1.0 + bi) / 2.0;
    const double d_ask = cfg.depth_range * (1.0 - bi) / 2.0;
    const double bid_step = d_bid / static_cast<double>(cfg.depth - 1);
    const double ask_step = d_ask / static_cast<double>(cfg.depth - 1);
    const double bid1 = mid - cfg.spread / 2.0;
    const double ask1 = mid + cfg.spread / 2.0;
    for (std::size_t i = 0; i < cfg.levels; ++i) {
        s.ask_prices.push_back(ask1 + ask_step * static_cast<double>(i));
        s.bid_prices.push_back(bid1 - bid_step * static_cast<double>(i));
        s.ask_sizes.push_back(std::round(size_dist(rng)));
        s.bid_sizes.push_back(std::round(size_dist(rng)));
    }
    return s;
}

[[nodiscard]] inline SynthData generate(const SynthConfig& cfg) {
    if (cfg.depth < 2 || cfg.depth > cfg.levels) throw std::invalid_argument("synth: depth must be in [2, levels]");
    if (!(cfg.bi_amplitude > 0.0 && cfg.bi_amplitude < 1.0))
        throw std::invalid_argument("synth: bi_amplitude must be in (0, 1)");
    if (!(cfg.repeat_fraction >= 0.0 && cfg.repeat_fraction < 1.0))
        throw std::invalid_argument("synth: repeat_fraction must be in [0, 1)");
    Rng rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    const double t_end = cfg.start_time + cfg.duration_s;
    auto raw = hawkes::simulate(cfg.hawkes, cfg.start_time - cfg.burn_in_s, t_end, rng);
    std::vector<double> events;
    const auto observed = cfg.quantize ? quantize_times(raw, cfg.resolution_s) : apply_resolution(raw, cfg.resolution_s);
    for (double t : observed)
        if (t >= cfg.start_time) events.push_back(t);
    if (events.size() < 3) throw InsufficientData("synth: too few events generated");

    SynthData d;
    d.event_times = events;
    d.bi.resize(events.size());
    double z = normal(rng);
    const double innov = std::sqrt(1.0 - cfg.bi_persistence * cfg.bi_persistence);
    for (std::size_t k = 0; k < events.size(); ++k) {
        if (k > 0) z = cfg.bi_persistence * z + innov * normal(rng);
        d.bi[k] = cfg.bi_amplitude * std::tanh(z);
    }

    switch (cfg.model) {
        case ReturnModel::coe: d.noiseless_returns = coe::CoeModel(cfg.coe).simulate(events, d.bi); break;
        case ReturnModel::linear:
            for (double b : d.bi) d.noiseless_returns.push_back(cfg.linear_gain * b);
            break;
        case ReturnModel::constant: d.noiseless_returns.assign(events.size(), 0.0); break;
    }
    double noise_sd = 0.0;
    if (cfg.model != ReturnModel::constant && std::isfinite(cfg.noise_snr_db))
        noise_sd = stats::stddev(d.noiseless_returns) / std::pow(10.0, cfg.noise_snr_db / 20.0);
    d.returns.resize(events.size());
    for (std::size_t k = 0; k < events.size(); ++k) {
        double r = d.noiseless_returns[k] + noise_sd * normal(rng);
        if (r == 0.0 && cfg.model != ReturnModel::constant) r = std::numeric_limits<double>::min();
        d.returns[k] = r;
    }

    // repeats per event ~ geometric with mean f / (1 - f)
    std::geometric_distribution<int> repeats(1.0 - cfg.repeat_fraction);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double price = cfg.base_price;
    for (std::size_t k = 0; k < events.size(); ++k) {
        const auto book = make_book(events[k], price, d.bi[k], cfg, rng);
        d.snapshots.push_back(book);
        if (k + 1 < events.size() && cfg.repeat_fraction > 0.0) {
            const int n_rep = repeats(rng);
            std::vector<double> ts;
            for (int j = 0; j < n_rep; ++j) ts.push_back(events[k] + unif(rng) * (events[k + 1] - events[k]));
            std::sort(ts.begin(), ts.end());
            for (double t : ts) {
                if (t <= d.snapshots.back().timestamp || t >= events[k + 1]) continue;
                auto rep = book;
                rep.timestamp = t;
                for (auto& sz : rep.ask_sizes) sz = std::round(unif(rng) * 99.0 + 1.0);
                d.snapshots.push_back(std::move(rep));
            }
        }
        price *= 1.0 + d.returns[k];
    }
    return d;
}

}  // namespace lobcast::synth
