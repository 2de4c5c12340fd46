#pragma once

// Coincidence histograms, g2 normalization, lifetime folding and
// count-rate corrections.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <thread>
#include <utility>
#include <vector>

#include "rfsim/dynamics.hpp"
#include "rfsim/errors.hpp"
#include "rfsim/montecarlo.hpp"
#include "rfsim/timetags.hpp"

namespace rfsim {

//---------------------------------------------------------------------------//
/*!
 * \brief Coincidence counts versus delay t_b - t_a.
 *
 * Bin k (k = -half_bins .. half_bins) is centered on k * bin_width; delays
 * exactly on a bin boundary are assigned away from zero, which keeps the
 * histogram antisymmetric under swapping the two channels. With integer
 * delays and an even bin width this makes the central bin one picosecond
 * narrower than the others; `edges()` gives the exact extent.
 */
struct CorrelationHistogram
{
    Picoseconds bin_width = 100;
    std::int64_t half_bins = 0;
    std::vector<std::uint64_t> counts;
    Picoseconds acq_duration = 0;
    double rate_ch0 = 0.0;  // counts/s
    double rate_ch1 = 0.0;

    double tau_min() const { return -(double(half_bins) + 0.5) * double(bin_width); }
    double tau_max() const { return (double(half_bins) + 0.5) * double(bin_width); }
    std::size_t size() const { return counts.size(); }

    /// Bin center in ps.
    Picoseconds center(std::size_t i) const { return (std::int64_t(i) - half_bins) * bin_width; }

    /// Continuous delay interval (ps) whose integer-rounded values land in bin i.
    std::pair<double, double> edges(std::size_t i) const
    {
        std::int64_t k = std::int64_t(i) - half_bins;
        double half = 0.5 * double(bin_width);
        double c = double(k * bin_width);
        if (bin_width % 2 != 0)
            return {c - half, c + half};
        if (k == 0)
            return {-half + 0.5, half - 0.5};
        double shift = k > 0 ? -0.5 : 0.5;
        return {c - half + shift, c + half + shift};
    }
    double width(std::size_t i) const
    {
        auto [lo, hi] = edges(i);
        return hi - lo;
    }

    std::uint64_t at_delay_bin(std::int64_t k) const { return counts[std::size_t(k + half_bins)]; }

    std::uint64_t total() const
    {
        std::uint64_t s = 0;
        for (auto c : counts)
            s += c;
        return s;
    }
};

/// Bin index of a delay, rounding ties away from zero.
inline std::int64_t delay_bin(Picoseconds delta, Picoseconds bin_width)
{
    std::int64_t mag = (2 * (delta < 0 ? -delta : delta) + bin_width) / (2 * bin_width);
    return delta < 0 ? -mag : mag;
}

enum class CorrelationMode
{
    multi_start_multi_stop,
    start_stop,
};

struct CorrelateOptions
{
    CorrelationMode mode = CorrelationMode::multi_start_multi_stop;
    unsigned threads = 1;
};

namespace detail {

inline void correlate_slab(const std::vector<Picoseconds>& a, const std::vector<Picoseconds>& b,
                           std::size_t a_begin, std::size_t a_end, Picoseconds bin_width,
                           std::int64_t half_bins, CorrelationMode mode, std::vector<std::uint64_t>& hist)
{
    Picoseconds reach = (half_bins + 1) * bin_width;
    if (a_begin >= a_end)
        return;
    auto j0 = std::size_t(std::lower_bound(b.begin(), b.end(), a[a_begin] - reach) - b.begin());
    for (std::size_t i = a_begin; i < a_end; ++i)
    {
        Picoseconds ta = a[i];
        while (j0 < b.size() && b[j0] < ta - reach)
            ++j0;
        if (mode == CorrelationMode::start_stop)
        {
            auto j = std::size_t(std::lower_bound(b.begin() + std::ptrdiff_t(j0), b.end(), ta) - b.begin());
            if (j < b.size())
            {
                auto k = delay_bin(b[j] - ta, bin_width);
                if (k <= half_bins)
                    ++hist[std::size_t(k + half_bins)];
            }
            continue;
        }
        for (std::size_t j = j0; j < b.size() && b[j] <= ta + reach; ++j)
        {
            auto k = delay_bin(b[j] - ta, bin_width);
            if (k >= -half_bins && k <= half_bins)
                ++hist[std::size_t(k + half_bins)];
        }
    }
}

}  // namespace detail

//---------------------------------------------------------------------------//
/*!
 * \brief Histogram all pairs with |t_b - t_a| up to `window` (rounded down to
 * whole bins), via a two-pointer sweep.
 *
 * Threads process disjoint slabs of `a`; the summed histogram does not depend
 * on the slab count.
 */
inline CorrelationHistogram correlate(const TimeTagSeries& a, const TimeTagSeries& b, Picoseconds bin_width,
                                      Picoseconds window, const CorrelateOptions& opts = {})
{
    if (!(bin_width > 0) || !(window > 0))
        throw DomainError("correlate: bin_width and window must be > 0");
    a.require_valid("correlate");
    b.require_valid("correlate");
    CorrelationHistogram h;
    h.bin_width = bin_width;
    h.half_bins = window / bin_width;
    h.counts.assign(std::size_t(2 * h.half_bins + 1), 0);
    h.acq_duration = std::min(a.duration, b.duration);
    h.rate_ch0 = h.acq_duration > 0 ? double(a.size()) / ps_to_seconds(h.acq_duration) : 0.0;
    h.rate_ch1 = h.acq_duration > 0 ? double(b.size()) / ps_to_seconds(h.acq_duration) : 0.0;

    unsigned threads = std::max(1u, opts.threads);
    std::size_t n = a.size();
    if (threads == 1 || n < 4096)
    {
        detail::correlate_slab(a.timestamps, b.timestamps, 0, n, bin_width, h.half_bins, opts.mode, h.counts);
        return h;
    }
    std::vector<std::vector<std::uint64_t>> partial(threads, std::vector<std::uint64_t>(h.counts.size(), 0));
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < threads; ++w)
        {
            std::size_t lo = n * w / threads;
            std::size_t hi = n * (w + 1) / threads;
            pool.emplace_back([&, lo, hi, w] {
                detail::correlate_slab(a.timestamps, b.timestamps, lo, hi, bin_width, h.half_bins, opts.mode,
                                       partial[w]);
            });
        }
    }
    for (const auto& p : partial)
        for (std::size_t i = 0; i < p.size(); ++i)
            h.counts[i] += p[i];
    return h;
}

/// g2 = counts / (r0 r1 width T), with Poisson errors sqrt(max(N, 1)) / norm.
inline G2Curve normalize_g2(const CorrelationHistogram& h)
{
    if (!(h.rate_ch0 > 0) || !(h.rate_ch1 > 0) || !(h.acq_duration > 0))
        throw NormalizationError("normalize_g2: rates and acquisition time must be > 0");
    double per_ps = h.rate_ch0 * h.rate_ch1 * 1e-12 * ps_to_seconds(h.acq_duration);
    G2Curve c;
    c.tau.reserve(h.size());
    c.values.reserve(h.size());
    c.errors.reserve(h.size());
    for (std::size_t i = 0; i < h.size(); ++i)
    {
        double n = double(h.counts[i]);
        double norm = per_ps * h.width(i);
        c.tau.push_back(ps_to_seconds(h.center(i)));
        c.values.push_back(n / norm);
        c.errors.push_back(std::sqrt(std::max(n, 1.0)) / norm);
    }
    return c;
}

/// Fold arrival times modulo the excitation period. `offset` is a trigger delay added before
/// folding, so a pulse at phase 0 appears at t = offset.
inline DecayCurve lifetime_histogram(const TimeTagSeries& tags, double rep_rate, Picoseconds bin_width,
                                     Picoseconds offset = 0)
{
    if (!(rep_rate > 0))
        throw DomainError("lifetime_histogram: rep_rate must be > 0");
    if (!(bin_width > 0))
        throw DomainError("lifetime_histogram: bin_width must be > 0");
    double period = ps_per_s / rep_rate;
    auto nbins = std::size_t(std::ceil(period / double(bin_width)));
    DecayCurve c;
    c.intensity.assign(nbins, 0.0);
    c.t.resize(nbins);
    for (std::size_t i = 0; i < nbins; ++i)
        c.t[i] = (double(i) + 0.5) * ps_to_seconds(bin_width);
    for (auto t : tags.timestamps)
    {
        double x = double(t + offset);
        double phase = x - std::floor(x / period) * period;
        auto bin = std::min(nbins - 1, std::size_t(phase / double(bin_width)));
        c.intensity[bin] += 1.0;
    }
    return c;
}

struct DeadTimeModel
{
    enum class Kind
    {
        multiplicative,
        nonparalyzable,
    };
    Kind kind = Kind::multiplicative;
    double fraction = 0.10;  // counting loss, multiplicative model only

    static DeadTimeModel multiplicative(double frac) { return {Kind::multiplicative, frac}; }
    static DeadTimeModel nonparalyzable() { return {Kind::nonparalyzable, 0.0}; }
};

/// Photon rate arriving at the detector, from the measured count rate.
inline double deadtime_corrected_rate(double measured, const DetectorConfig& det, const DeadTimeModel& model)
{
    if (!(measured >= 0))
        throw DomainError("deadtime_corrected_rate: measured rate must be >= 0");
    if (!(det.quantum_efficiency > 0))
        throw DomainError("deadtime_corrected_rate: quantum efficiency must be > 0");
    if (model.kind == DeadTimeModel::Kind::multiplicative)
        return measured * (1.0 + model.fraction) / det.quantum_efficiency;
    double occupancy = measured * det.dead_time / ps_per_s;
    if (occupancy >= 1.0)
        throw SaturationError("deadtime_corrected_rate: measured rate saturates the detector");
    return measured / ((1.0 - occupancy) * det.quantum_efficiency);
}

}  // namespace rfsim
