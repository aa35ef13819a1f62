#include "lobcast/lobdata.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

using namespace lobcast;
using namespace lobcast::lob;

namespace {

// Book with `levels` levels, linear spacing, given mid and per-side depth
// ranges measured at level `depth`.
LobSnapshot book(double t, double mid, double d_bid, double d_ask, std::size_t levels = 8, std::size_t depth = 8,
                 double spread = 1e-4) {
    LobSnapshot s;
    s.timestamp = t;
    for (std::size_t i = 0; i < levels; ++i) {
        const double f = static_cast<double>(i) / static_cast<double>(depth - 1);
        s.ask_prices.push_back(mid + spread / 2 + d_ask * f + (d_ask == 0.0 ? 1e-6 * static_cast<double>(i) : 0.0));
        s.bid_prices.push_back(mid - spread / 2 - d_bid * f - (d_bid == 0.0 ? 1e-6 * static_cast<double>(i) : 0.0));
        s.ask_sizes.push_back(10.0 + static_cast<double>(i));
        s.bid_sizes.push_back(20.0 + static_cast<double>(i));
    }
    return s;
}

std::string csv_of(const std::vector<LobSnapshot>& v) {
    std::ostringstream out;
    write_lob_csv(out, v);
    return out.str();
}

LobFile parse(const std::string& text, std::size_t levels) {
    std::istringstream in(text);
    return parse_lob_csv(in, levels);
}

EventSeries series_of(const std::vector<double>& times, double spacing_bi = 0.0) {
    std::vector<LobSnapshot> v;
    double mid = 1.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        v.push_back(book(times[k], mid, 4e-4 * (1 + spacing_bi), 4e-4 * (1 - spacing_bi)));
        mid *= (k % 2 == 0) ? 1.001 : 1.0 / 1.0005;
    }
    return extract_events(v);
}

}  // namespace

// --- parse_lob_csv -----------------------------------------------------------

TEST(ParseLobCsv, WellFormedRowsComeBackInOrder) {
    const std::vector<LobSnapshot> v{book(1.0, 1.0, 4e-4, 4e-4, 2, 2), book(2.0, 1.001, 4e-4, 4e-4, 2, 2),
                                     book(3.0, 1.002, 4e-4, 4e-4, 2, 2)};
    const auto f = parse(csv_of(v), 2);
    ASSERT_EQ(f.snapshots.size(), 3u);
    EXPECT_EQ(f.snapshots[0].timestamp, 1.0);
    EXPECT_EQ(f.snapshots[2].timestamp, 3.0);
    EXPECT_EQ(f.crossed_dropped, 0u);
}

TEST(ParseLobCsv, DuplicateTimestampKeepsLastRow) {
    const std::string text =
        "timestamp,ask_price_1,ask_size_1,bid_price_1,bid_size_1\n"
        "100.0,1.002,5,1.000,5\n"
        "100.0,1.004,7,1.002,7\n";
    const auto f = parse(text, 1);
    ASSERT_EQ(f.snapshots.size(), 1u);
    EXPECT_DOUBLE_EQ(f.snapshots[0].ask_prices[0], 1.004);
    EXPECT_EQ(f.duplicates_collapsed, 1u);
}

TEST(ParseLobCsv, CrossedBookIsDroppedAndCounted) {
    const std::string text =
        "timestamp,ask_price_1,ask_size_1,bid_price_1,bid_size_1\n"
        "1,1.002,5,1.000,5\n"
        "2,0.999,5,1.000,5\n"
        "3,1.003,5,1.001,5\n";
    const auto f = parse(text, 1);
    EXPECT_EQ(f.snapshots.size(), 2u);
    EXPECT_EQ(f.crossed_dropped, 1u);
}

TEST(ParseLobCsv, MissingColumnIsFormatError) {
    const std::string text = "timestamp,ask_price_1,ask_size_1,bid_price_1\n1,1.002,5,1.0\n";
    EXPECT_THROW((void)parse(text, 1), FormatError);
    EXPECT_THROW((void)parse("", 1), FormatError);
}

TEST(ParseLobCsv, MalformedRowReportsLineNumber) {
    const std::string text =
        "timestamp,ask_price_1,ask_size_1,bid_price_1,bid_size_1,ask_price_2,ask_size_2,bid_price_2,bid_size_2\n"
        "1,1.002,5,1.000,5,1.003,5,0.999,5\n"
        "2,1.002,5,1.000,5,1.001,5,0.999,5\n";
    try {
        (void)parse(text, 2);
        FAIL() << "expected RowError";
    } catch (const RowError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    EXPECT_THROW((void)parse("timestamp,ask_price_1,ask_size_1,bid_price_1,bid_size_1\n1,abc,5,1,5\n", 1), RowError);
    EXPECT_THROW((void)parse("timestamp,ask_price_1,ask_size_1,bid_price_1,bid_size_1\n1,1.1,5,-1,5\n", 1), RowError);
    EXPECT_THROW((void)parse("timestamp,ask_price_1,ask_size_1,bid_price_1,bid_size_1\n1,1.1,5\n", 1), RowError);
}

TEST(ParseLobCsv, TimestampFormatsAreDetected) {
    const std::string text =
        "timestamp,ask_price_1,ask_size_1,bid_price_1,bid_size_1\n"
        "2019-05-03T00:00:01.5Z,1.002,5,1.000,5\n"
        "2019-05-03 00:00:02.25,1.003,5,1.001,5\n";
    const auto f = parse(text, 1);
    ASSERT_EQ(f.snapshots.size(), 2u);
    EXPECT_DOUBLE_EQ(f.snapshots[0].timestamp, 1556841601.5);
    EXPECT_DOUBLE_EQ(f.snapshots[1].timestamp, 1556841602.25);

    const auto g = parse(
        "timestamp,ask_price_1,ask_size_1,bid_price_1,bid_size_1\n"
        "10:15:30:1234567,1.002,5,1.000,5\n",
        1);
    EXPECT_NEAR(g.snapshots[0].timestamp, 10 * 3600 + 15 * 60 + 30.1234567, 1e-9);
}

TEST(ParseLobCsv, ColumnOrderIsFree) {
    const auto f = parse(
        "bid_size_1,bid_price_1,timestamp,ask_size_1,ask_price_1\n"
        "3,1.000,7.5,4,1.002\n",
        1);
    ASSERT_EQ(f.snapshots.size(), 1u);
    EXPECT_EQ(f.snapshots[0].timestamp, 7.5);
    EXPECT_EQ(f.snapshots[0].ask_sizes[0], 4.0);
    EXPECT_EQ(f.snapshots[0].bid_prices[0], 1.000);
}

TEST(ParseLobCsv, WriteThenParseIsIdentity) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<LobSnapshot> v;
    double t = 1556841600.0;
    for (int k = 0; k < 200; ++k) {
        t += 0.1 + u(rng);
        v.push_back(book(t, 1.0 + 0.01 * u(rng), 1e-4 + 1e-3 * u(rng), 1e-4 + 1e-3 * u(rng), 10, 8));
    }
    const auto back = parse(csv_of(v), 10);
    ASSERT_EQ(back.snapshots.size(), v.size());
    for (std::size_t k = 0; k < v.size(); ++k) {
        EXPECT_EQ(back.snapshots[k].timestamp, v[k].timestamp);
        EXPECT_EQ(back.snapshots[k].ask_prices, v[k].ask_prices);
        EXPECT_EQ(back.snapshots[k].bid_prices, v[k].bid_prices);
        EXPECT_EQ(back.snapshots[k].ask_sizes, v[k].ask_sizes);
        EXPECT_EQ(back.snapshots[k].bid_sizes, v[k].bid_sizes);
    }
}

// --- mid price, returns, base imbalance --------------------------------------

TEST(MidPrice, Examples) {
    LobSnapshot s;
    s.ask_prices = {1.002};
    s.bid_prices = {1.000};
    EXPECT_DOUBLE_EQ(mid_price(s), 1.001);
    s.ask_prices = {1.0};
    s.bid_prices = {1.0};
    EXPECT_EQ(mid_price(s), 1.0);
}

TEST(MidPrice, MatchesIndependentAverage) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.5, 2.0);
    for (int i = 0; i < 100; ++i) {
        const double bid = u(rng);
        const double ask = bid + 0.01 * u(rng);
        LobSnapshot s;
        s.ask_prices = {ask};
        s.bid_prices = {bid};
        EXPECT_EQ(mid_price(s), 0.5 * ask + 0.5 * bid);
    }
}

TEST(ComputeReturns, Examples) {
    EXPECT_EQ(compute_returns(std::vector<double>{1.0, 1.0}), std::vector<double>{0.0});
    EXPECT_NEAR(compute_returns(std::vector<double>{1.0, 1.001})[0], 0.001, 1e-15);
    EXPECT_EQ(compute_returns(std::vector<double>{2.0, 1.0}), std::vector<double>{-0.5});
    EXPECT_THROW((void)compute_returns(std::vector<double>{1.0, 0.0}), std::domain_error);
    EXPECT_THROW((void)compute_returns(std::vector<double>{1.0}), std::invalid_argument);
}

TEST(ComputeReturns, CumulativeReconstructionRecoversPrices) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0.0, 1e-3);
    std::vector<double> p{1.0};
    for (int k = 0; k < 5000; ++k) p.push_back(p.back() * (1.0 + n(rng)));
    const auto r = compute_returns(p);
    ASSERT_EQ(r.size(), p.size() - 1);
    double q = p.front();
    for (std::size_t k = 0; k < r.size(); ++k) {
        q *= 1.0 + r[k];
        EXPECT_LE(std::abs(q - p[k + 1]) / p[k + 1], 1e-12);
    }
}

TEST(BaseImbalance, Examples) {
    EXPECT_NEAR(base_imbalance(book(0, 1.0, 5e-4, 5e-4)).value, 0.0, 1e-12);
    LobSnapshot s;
    s.ask_prices = {1.0001, 1.0002, 1.0009};
    s.bid_prices = {0.9999, 0.9998, 0.9997};
    s.ask_sizes = s.bid_sizes = {1, 1, 1};
    EXPECT_NEAR(base_imbalance(s, 3).value, (0.0002 - 0.0008) / (0.0002 + 0.0008), 1e-9);
    EXPECT_NEAR(base_imbalance(s, 3).value, -0.6, 1e-9);

    LobSnapshot flat;
    flat.ask_prices = {1.0, 1.0};
    flat.bid_prices = {1.0, 1.0};
    const auto d = base_imbalance(flat, 2);
    EXPECT_EQ(d.value, 0.0);
    EXPECT_TRUE(d.degenerate);
}

TEST(BaseImbalance, PureOneSidedDepthIsPlusOne) {
    LobSnapshot s;
    s.ask_prices = {1.0001, 1.0001};
    s.bid_prices = {0.9999, 0.9990};
    EXPECT_EQ(base_imbalance(s, 2).value, 1.0);
}

TEST(BaseImbalance, AlwaysWithinUnitInterval) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const auto s = book(0, 1.0, 1e-5 + 1e-3 * u(rng), 1e-5 + 1e-3 * u(rng), 10, 8);
        for (std::size_t depth = 2; depth <= 10; ++depth) {
            const double bi = base_imbalance(s, depth).value;
            EXPECT_GE(bi, -1.0);
            EXPECT_LE(bi, 1.0);
        }
    }
}

// --- extract_events ----------------------------------------------------------

TEST(ExtractEvents, ConstantPriceIsEmptySeriesError) {
    std::vector<LobSnapshot> v;
    for (int k = 0; k < 100; ++k) v.push_back(book(k, 1.0, 4e-4, 4e-4));
    EXPECT_THROW((void)extract_events(v), InsufficientData);
}

TEST(ExtractEvents, AlternatingPricesRetainEverything) {
    std::vector<LobSnapshot> v;
    for (int k = 0; k < 50; ++k) v.push_back(book(k, k % 2 == 0 ? 1.000 : 1.001, 4e-4, 4e-4));
    const auto es = extract_events(v);
    EXPECT_EQ(es.retained_records, 50u);
    EXPECT_EQ(es.size(), 49u);  // the last record has no forward return
    EXPECT_EQ(es.terminal_time, 49.0);
    for (double r : es.returns) EXPECT_NE(r, 0.0);
}

TEST(ExtractEvents, RepeatedPricesAreRemoved) {
    // every 5th record carries a new price: 80% of records repeat the previous one
    std::vector<LobSnapshot> v;
    double mid = 1.0;
    for (int k = 0; k < 1000; ++k) {
        if (k % 5 == 0 && k > 0) mid *= (k / 5) % 2 == 0 ? 1.0004 : 0.9997;
        v.push_back(book(k, mid, 4e-4, 4e-4));
    }
    const auto es = extract_events(v);
    EXPECT_EQ(es.retained_records, 200u);
    EXPECT_NEAR(static_cast<double>(es.retained_records) / 1000.0, 0.2, 1e-12);
    EXPECT_NEAR(zero_return_fraction(v), 800.0 / 999.0, 1e-12);
    for (std::size_t k = 0; k < es.size(); ++k) {
        EXPECT_NE(es.returns[k], 0.0);
        if (k > 0) {
            EXPECT_GT(es.times[k], es.times[k - 1]);
        }
    }
}

TEST(ExtractEvents, ReturnsPointToNextRetainedEvent) {
    std::vector<LobSnapshot> v{book(0, 1.0, 4e-4, 4e-4), book(1, 1.0, 4e-4, 4e-4), book(2, 1.002, 4e-4, 4e-4),
                               book(3, 1.002, 4e-4, 4e-4), book(4, 1.001, 4e-4, 4e-4)};
    const auto es = extract_events(v);
    ASSERT_EQ(es.size(), 2u);
    EXPECT_EQ(es.times, (std::vector<double>{0.0, 2.0}));
    EXPECT_NEAR(es.returns[0], 0.002, 1e-12);
    EXPECT_NEAR(es.returns[1], (1.001 - 1.002) / 1.002, 1e-12);
    EXPECT_EQ(es.terminal_time, 4.0);
}

TEST(ExtractEvents, UnsortedInputIsContractViolation) {
    std::vector<LobSnapshot> v{book(2, 1.0, 4e-4, 4e-4), book(1, 1.001, 4e-4, 4e-4), book(3, 1.002, 4e-4, 4e-4)};
    EXPECT_THROW((void)extract_events(v), ContractViolation);
}

// --- scenario validation -----------------------------------------------------

namespace {

// brute-force mean-max-gap: sample every window on a fine grid of the intervals
double mean_max_gap_oracle(const std::vector<double>& t, double a, double b, double w) {
    double total = 0.0;
    int n = 0;
    for (double wa = a; wa < b - 1e-9; wa += w) {
        const double wb = std::min(b, wa + w);
        double worst = 0.0;
        for (std::size_t i = 0; i + 1 < t.size(); ++i)
            if (t[i + 1] > wa && t[i] < wb) worst = std::max(worst, t[i + 1] - t[i]);
        total += worst;
        ++n;
    }
    return total / n;
}

}  // namespace

TEST(ValidateScenario, RegularEventsPass) {
    std::vector<double> t;
    for (int k = 0; k <= 4000; ++k) t.push_back(k);
    const auto es = series_of(t);
    const ScenarioWindow w{3500.0};
    const auto r = validate_scenario(es, w);
    EXPECT_TRUE(r.passed()) << r.failures();
    EXPECT_DOUBLE_EQ(r.min_gap, 1.0);
    EXPECT_DOUBLE_EQ(r.mean_max_gap, 1.0);
}

TEST(ValidateScenario, SubSecondGapFailsMinimumGap) {
    std::vector<double> t;
    for (int k = 0; k <= 4000; ++k) t.push_back(k);
    t.insert(std::upper_bound(t.begin(), t.end(), 3550.0), 3550.5);
    const auto r = validate_scenario(series_of(t), ScenarioWindow{3500.0});
    EXPECT_FALSE(r.min_gap_ok);
    EXPECT_FALSE(r.passed());
    EXPECT_DOUBLE_EQ(r.min_gap, 0.5);
}

TEST(ValidateScenario, HoleFailsMeanMaxGap) {
    std::vector<double> t;
    for (int k = 0; k <= 4000; ++k)
        if (k <= 3550 || k >= 3580) t.push_back(k);
    const auto es = series_of(t);
    const auto r = validate_scenario(es, ScenarioWindow{3500.0});
    EXPECT_TRUE(r.min_gap_ok);
    EXPECT_FALSE(r.mean_max_gap_ok);
    EXPECT_NEAR(r.mean_max_gap, mean_max_gap_oracle(es.all_event_times(), 3500.0, 3620.0, 5.0), 1e-12);
    EXPECT_GT(r.mean_max_gap, 2.2);
}

TEST(ValidateScenario, MeanMaxGapMatchesBruteForce) {
    std::mt19937_64 rng(9);
    std::exponential_distribution<double> e(1.5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> t{0.0};
        while (t.back() < 200.0) t.push_back(t.back() + 0.2 + e(rng));
        for (double w : {1.0, 5.0, 7.5})
            EXPECT_NEAR(mean_max_gap(t, 20.0, 140.0, w), mean_max_gap_oracle(t, 20.0, 140.0, w), 1e-12);
    }
}

TEST(ValidateScenario, WindowOutsideDataFailsRange) {
    std::vector<double> t;
    for (int k = 0; k <= 1000; ++k) t.push_back(k);
    const auto r = validate_scenario(series_of(t), ScenarioWindow{900.0});
    EXPECT_FALSE(r.in_range);
    EXPECT_FALSE(r.passed());
}

// --- decile correlation and OHLC ---------------------------------------------

namespace {

EventSeries linear_series(double c, std::size_t n, std::uint64_t seed, double noise = 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.9, 0.9);
    std::normal_distribution<double> nz(0.0, 1.0);
    EventSeries es;
    for (std::size_t k = 0; k < n; ++k) {
        const double bi = u(rng);
        double r = c * bi + noise * nz(rng);
        if (r == 0.0) r = 1e-12;
        es.times.push_back(static_cast<double>(k));
        es.mid_prices.push_back(1.0);
        es.base_imbalances.push_back(bi);
        es.returns.push_back(r);
    }
    return es;
}

}  // namespace

TEST(DecileCorrelation, ExactLinearRelationGivesUnitRho) {
    EXPECT_NEAR(decile_correlation(linear_series(-1.0, 1000, 1)).rho, -1.0, 1e-9);
    EXPECT_NEAR(decile_correlation(linear_series(2.5e-4, 1000, 2)).rho, 1.0, 1e-9);
    EXPECT_NEAR(decile_correlation(linear_series(-3e-5, 997, 3)).rho, -1.0, 1e-9);
}

TEST(DecileCorrelation, DecileMeansMatchDirectComputation) {
    const auto es = linear_series(-1e-4, 500, 4, 5e-5);
    const auto dc = decile_correlation(es);
    ASSERT_EQ(dc.deciles.size(), 10u);
    std::vector<std::size_t> idx(es.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return es.returns[a] < es.returns[b]; });
    std::vector<double> mb, mr;
    for (std::size_t g = 0; g < 10; ++g) {
        double sb = 0, sr = 0;
        for (std::size_t j = g * 50; j < (g + 1) * 50; ++j) {
            sb += es.base_imbalances[idx[j]];
            sr += es.returns[idx[j]];
        }
        EXPECT_NEAR(dc.deciles[g].mean_bi, sb / 50, 1e-12);
        EXPECT_NEAR(dc.deciles[g].mean_return, sr / 50, 1e-16);
        mb.push_back(sb / 50);
        mr.push_back(sr / 50);
    }
    // Pearson on the decile means, computed here from scratch
    const double ab = std::accumulate(mb.begin(), mb.end(), 0.0) / 10, ar = std::accumulate(mr.begin(), mr.end(), 0.0) / 10;
    double sxy = 0, sxx = 0, syy = 0;
    for (int g = 0; g < 10; ++g) {
        sxy += (mb[g] - ab) * (mr[g] - ar);
        sxx += (mb[g] - ab) * (mb[g] - ab);
        syy += (mr[g] - ar) * (mr[g] - ar);
    }
    EXPECT_NEAR(dc.rho, sxy / std::sqrt(sxx * syy), 1e-12);
}

TEST(DecileCorrelation, IndependentInputsGiveSmallRho) {
    // with R independent of BI the decile means of BI hover around zero
    double sum_abs = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto es = linear_series(0.0, 20000, 100 + seed, 1e-4);
        sum_abs += std::abs(decile_correlation(es).rho);
    }
    EXPECT_LT(sum_abs / 20.0, 0.7);
}

TEST(DecileCorrelation, TooFewEventsIsInsufficientData) {
    EXPECT_THROW((void)decile_correlation(linear_series(1.0, 9, 1)), InsufficientData);
}

TEST(DailyOhlc, TwoDaysGiveTwoRows) {
    std::vector<LobSnapshot> v;
    const double midnight = 1556841600.0;
    v.push_back(book(midnight + 10, 1.000, 4e-4, 4e-4));
    v.push_back(book(midnight + 20, 1.003, 4e-4, 4e-4));
    v.push_back(book(midnight + 30, 0.998, 4e-4, 4e-4));
    v.push_back(book(midnight + 86400 + 5, 1.001, 4e-4, 4e-4));
    v.push_back(book(midnight + 86400 + 6, 1.002, 4e-4, 4e-4));
    const auto rows = daily_ohlc(v);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].day, "2019-05-03");
    EXPECT_EQ(rows[1].day, "2019-05-04");
    EXPECT_NEAR(rows[0].open, 1.000, 1e-12);
    EXPECT_NEAR(rows[0].high, 1.003, 1e-12);
    EXPECT_NEAR(rows[0].low, 0.998, 1e-12);
    EXPECT_NEAR(rows[0].close, 0.998, 1e-12);
    EXPECT_EQ(rows[1].records, 2u);
}
