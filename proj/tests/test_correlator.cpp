#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "rfsim/correlator.hpp"

using namespace rfsim;

namespace {

TimeTagSeries poisson(double rate, double duration, std::uint64_t seed, std::uint16_t channel)
{
    TimeTagSeries s;
    s.channel = channel;
    s.duration = seconds_to_ps(duration);
    StreamRng rng(seed, Stage::test, channel);
    double t = 0;
    for (;;)
    {
        t += -std::log(rng.uniform_pos()) / rate * ps_per_s;
        if (t >= double(s.duration))
            break;
        s.timestamps.push_back(Picoseconds(t));
    }
    s.normalize();
    return s;
}

// all pairs, no sweep
std::vector<std::uint64_t> brute_force(const TimeTagSeries& a, const TimeTagSeries& b, Picoseconds bw,
                                       std::int64_t half)
{
    std::vector<std::uint64_t> h(std::size_t(2 * half + 1), 0);
    for (auto ta : a.timestamps)
    {
        for (auto tb : b.timestamps)
        {
            // nearest multiple of bw, ties away from zero, by exact rational comparison
            Picoseconds d = tb - ta;
            Picoseconds q = d / bw;
            Picoseconds r = d - q * bw;  // same sign as d
            std::int64_t k = q;
            if (2 * std::abs(r) >= bw)
                k += d < 0 ? -1 : 1;
            if (std::abs(k) <= half)
                ++h[std::size_t(k + half)];
        }
    }
    return h;
}

}  // namespace

TEST(DelayBin, TiesAwayFromZero)
{
    EXPECT_EQ(delay_bin(0, 100), 0);
    EXPECT_EQ(delay_bin(49, 100), 0);
    EXPECT_EQ(delay_bin(50, 100), 1);
    EXPECT_EQ(delay_bin(-50, 100), -1);
    EXPECT_EQ(delay_bin(-49, 100), 0);
    EXPECT_EQ(delay_bin(149, 100), 1);
    EXPECT_EQ(delay_bin(150, 100), 2);
    EXPECT_EQ(delay_bin(-151, 100), -2);
}

TEST(Correlate, SingleTagAtZero)
{
    TimeTagSeries a{0, {12345}, 100000};
    auto h = correlate(a, a, 100, 1000);
    EXPECT_EQ(h.half_bins, 10);
    EXPECT_EQ(h.size(), 21u);
    EXPECT_EQ(h.total(), 1u);
    EXPECT_EQ(h.at_delay_bin(0), 1u);
    EXPECT_EQ(h.tau_max() - h.tau_min(), 21.0 * 100);
}

TEST(Correlate, MatchesBruteForce)
{
    auto a = poisson(2e8, 2e-5, 1, 0);
    auto b = poisson(3e8, 2e-5, 2, 1);
    // add coincidences exactly on bin boundaries
    for (std::size_t i = 0; i < 50; ++i)
        b.timestamps.push_back(a.timestamps[i * 7] + Picoseconds(50 + 100 * (i % 5)) * (i % 2 ? -1 : 1));
    b.normalize();
    for (Picoseconds bw : {100, 37})
    {
        auto h = correlate(a, b, bw, 3000);
        EXPECT_EQ(h.counts, brute_force(a, b, bw, h.half_bins)) << "bw " << bw;
        auto ht = correlate(a, b, bw, 3000, {.threads = 3});
        EXPECT_EQ(h.counts, ht.counts);
    }
}

TEST(Correlate, ThreadCountInvariant)
{
    auto a = poisson(1e7, 2e-3, 3, 0);
    auto b = poisson(1e7, 2e-3, 4, 1);
    auto h1 = correlate(a, b, 100, 20000);
    for (unsigned t : {2u, 3u, 8u})
        EXPECT_EQ(correlate(a, b, 100, 20000, {.threads = t}).counts, h1.counts);
}

TEST(Correlate, SwapAntisymmetry)
{
    auto a = poisson(5e7, 1e-3, 5, 0);
    auto b = poisson(5e7, 1e-3, 6, 1);
    for (std::size_t i = 0; i < a.size(); i += 13)
        b.timestamps.push_back(a.timestamps[i] + Picoseconds(i % 401) - 200);
    b.normalize();
    auto ab = correlate(a, b, 100, 5000);
    auto ba = correlate(b, a, 100, 5000);
    for (std::int64_t k = -ab.half_bins; k <= ab.half_bins; ++k)
        ASSERT_EQ(ab.at_delay_bin(k), ba.at_delay_bin(-k)) << k;
}

TEST(Correlate, PoissonFlat)
{
    double r1 = 2e6, r2 = 3e6, T = 0.5;
    auto a = poisson(r1, T, 7, 0);
    auto b = poisson(r2, T, 8, 1);
    auto h = correlate(a, b, 1000, 50000);
    double expect = a.rate() * b.rate() * 1e-9 * T;
    int outside = 0;
    double sum = 0;
    for (auto c : h.counts)
    {
        outside += std::abs(double(c) - expect) > 3 * std::sqrt(expect);
        sum += double(c);
    }
    EXPECT_LE(outside, 2);
    EXPECT_NEAR(sum / double(h.size()), expect, 3 * std::sqrt(expect / double(h.size())));
    EXPECT_NEAR(expect, r1 * r2 * 1e-9 * T, 0.01 * expect);

    auto g = normalize_g2(h);
    double mean = 0;
    for (double v : g.values)
        mean += v / double(g.values.size());
    EXPECT_NEAR(mean, 1.0, 3 * g.errors[0] / std::sqrt(double(g.values.size())));
}

TEST(Correlate, StartStopOnlyCountsFirstStop)
{
    TimeTagSeries a{0, {1000, 5000}, 100000};
    TimeTagSeries b{1, {1200, 1400, 4800, 5300, 5600}, 100000};
    auto h = correlate(a, b, 100, 2000, {.mode = CorrelationMode::start_stop});
    EXPECT_EQ(h.total(), 2u);
    EXPECT_EQ(h.at_delay_bin(2), 1u);
    EXPECT_EQ(h.at_delay_bin(3), 1u);
    auto full = correlate(a, b, 100, 2000);
    EXPECT_EQ(full.total(), 5u);
}

TEST(Correlate, Contract)
{
    TimeTagSeries bad{0, {5, 3}, 100};
    TimeTagSeries ok{0, {1, 2}, 100};
    EXPECT_THROW(correlate(bad, ok, 10, 100), ContractError);
    EXPECT_THROW(correlate(ok, ok, 0, 100), DomainError);
    EXPECT_THROW(correlate(ok, ok, 10, 0), DomainError);
}

TEST(NormalizeG2, ScalingInvariance)
{
    CorrelationHistogram h;
    h.bin_width = 100;
    h.half_bins = 1;
    h.counts = {10, 4, 12};
    h.acq_duration = 1'000'000'000;
    h.rate_ch0 = 1e6;
    h.rate_ch1 = 2e6;
    auto g = normalize_g2(h);
    CorrelationHistogram h3 = h;
    h3.acq_duration *= 3;
    for (auto& c : h3.counts)
        c *= 3;
    auto g3 = normalize_g2(h3);
    for (std::size_t i = 0; i < 3; ++i)
        EXPECT_NEAR(g3.values[i], g.values[i], 1e-15 * g.values[i]);
    EXPECT_DOUBLE_EQ(g.values[0], 10.0 / (1e6 * 2e6 * 1e-10 * 1e-3));
    EXPECT_DOUBLE_EQ(g.values[1], 4.0 / (1e6 * 2e6 * 0.99e-10 * 1e-3));
    EXPECT_DOUBLE_EQ(g.tau[0], -1e-10);
    h.rate_ch1 = 0;
    EXPECT_THROW(normalize_g2(h), NormalizationError);
}

TEST(CorrelationHistogram, EdgesMatchIntegerBinning)
{
    for (Picoseconds bw : {100, 37})
    {
        CorrelationHistogram h;
        h.bin_width = bw;
        h.half_bins = 3;
        h.counts.assign(7, 0);
        for (std::size_t i = 0; i < 7; ++i)
        {
            auto [lo, hi] = h.edges(i);
            // integer delays d in the bin are exactly those with lo < d < hi
            int inside = 0;
            for (Picoseconds d = -4 * bw; d <= 4 * bw; ++d)
            {
                bool in_bin = delay_bin(d, bw) == std::int64_t(i) - 3;
                ASSERT_EQ(in_bin, double(d) > lo && double(d) < hi) << bw << " " << d;
                inside += in_bin;
            }
            EXPECT_EQ(double(inside), h.width(i));
            EXPECT_EQ(h.edges(i).first, -h.edges(6 - i).second);
        }
    }
}

TEST(NormalizeG2, EmptyBinErrorFloor)
{
    CorrelationHistogram h;
    h.bin_width = 1000;
    h.half_bins = 0;
    h.counts = {0};
    h.acq_duration = 1'000'000'000'000;
    h.rate_ch0 = h.rate_ch1 = 1e3;
    auto g = normalize_g2(h);
    double norm = 1e3 * 1e3 * 0.999e-9 * 1.0;
    EXPECT_EQ(g.values[0], 0.0);
    EXPECT_DOUBLE_EQ(g.errors[0], 1.0 / norm);
}

TEST(LifetimeHistogram, Folding)
{
    // 80 MHz: 12.5 ns period, 125 bins of 100 ps
    TimeTagSeries s{0, {6250}, 1'000'000};
    auto c = lifetime_histogram(s, 80e6, 100);
    ASSERT_EQ(c.t.size(), 125u);
    EXPECT_EQ(c.intensity[62], 1.0);
    double total = 0;
    for (double v : c.intensity)
        total += v;
    EXPECT_EQ(total, 1.0);

    s.timestamps = {100, 12600, 25100, 12499, 12500};
    auto d = lifetime_histogram(s, 80e6, 100);
    EXPECT_EQ(d.intensity[1], 3.0);
    EXPECT_EQ(d.intensity[124], 1.0);
    EXPECT_EQ(d.intensity[0], 1.0);
    EXPECT_DOUBLE_EQ(d.t[0], 50e-12);

    // trigger delay of 1 ns: a tag just before the pulse wraps to the end, not the start
    s.timestamps = {0, 12400, 12600};
    auto e = lifetime_histogram(s, 80e6, 100, 1000);
    EXPECT_EQ(e.intensity[10], 1.0);
    EXPECT_EQ(e.intensity[9], 1.0);
    EXPECT_EQ(e.intensity[11], 1.0);
}

TEST(DeadTime, CorrectedRates)
{
    DetectorConfig det;
    EXPECT_EQ(deadtime_corrected_rate(4e6, det, DeadTimeModel::multiplicative(0.10)), 2e7);
    EXPECT_EQ(deadtime_corrected_rate(0.0, det, DeadTimeModel::multiplicative(0.10)), 0.0);
    EXPECT_EQ(deadtime_corrected_rate(0.0, det, DeadTimeModel::nonparalyzable()), 0.0);
    DetectorConfig unit = det;
    unit.quantum_efficiency = 1.0;
    EXPECT_DOUBLE_EQ(deadtime_corrected_rate(4e6, unit, DeadTimeModel::nonparalyzable()), 5e6);
    EXPECT_DOUBLE_EQ(deadtime_corrected_rate(4e6, det, DeadTimeModel::nonparalyzable()), 5e6 / 0.22);
    EXPECT_THROW(deadtime_corrected_rate(2e7, det, DeadTimeModel::nonparalyzable()), SaturationError);
    EXPECT_THROW(deadtime_corrected_rate(-1, det, DeadTimeModel::nonparalyzable()), DomainError);
}
