#pragma once

// Stochastic photon time-tag generation: quantum-jump emission, blinking,
// background, detector response and beamsplitting.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "rfsim/dynamics.hpp"
#include "rfsim/errors.hpp"
#include "rfsim/photonics.hpp"
#include "rfsim/rng.hpp"
#include "rfsim/timetags.hpp"

namespace rfsim {

enum class ExcitationMode
{
    cw,
    pulsed,
};

struct PulsedExcitation
{
    double rep_rate = 76e6;  // Hz
    double excitation_prob = 1.0;
    /// Capture/relaxation time before the radiative decay; 0 means instantaneous.
    double rise_time = 0.0;
};

struct SourceConfig
{
    EmitterParams emitter;
    ExcitationMode mode = ExcitationMode::cw;
    PulsedExcitation pulsed;
    double blink_on_rate = 0.0;  // rate of leaving the ON state (1/s)
    double blink_off_rate = 0.0;  // rate of leaving the OFF state (1/s)
    double background_rate = 0.0;  // counts/s
    double collection_efficiency = 1.0;

    /// Fraction of time the emitter is ON.
    double duty_cycle() const
    {
        if (blink_on_rate == 0.0 || std::isinf(blink_off_rate))
            return 1.0;
        return blink_off_rate / (blink_on_rate + blink_off_rate);
    }

    void validate() const
    {
        emitter.validate();
        if (!(blink_on_rate >= 0) || !(blink_off_rate >= 0) || !(background_rate >= 0))
            throw DomainError("SourceConfig: rates must be >= 0");
        if (!(collection_efficiency >= 0 && collection_efficiency <= 1))
            throw DomainError("SourceConfig: collection_efficiency must be in [0, 1]");
        if (mode == ExcitationMode::pulsed)
        {
            if (!(pulsed.rep_rate > 0))
                throw DomainError("SourceConfig: rep_rate must be > 0");
            if (!(pulsed.excitation_prob >= 0 && pulsed.excitation_prob <= 1))
                throw DomainError("SourceConfig: excitation_prob must be in [0, 1]");
            if (!(pulsed.rise_time >= 0))
                throw DomainError("SourceConfig: rise_time must be >= 0");
        }
    }
};

struct DetectorConfig
{
    double quantum_efficiency = 0.22;
    double jitter_fwhm = 289.0;  // ps
    double dead_time = 50e3;  // ps

    void validate() const
    {
        if (!(quantum_efficiency >= 0 && quantum_efficiency <= 1))
            throw DomainError("DetectorConfig: quantum_efficiency must be in [0, 1]");
        if (!(jitter_fwhm >= 0) || !(dead_time >= 0))
            throw DomainError("DetectorConfig: jitter_fwhm and dead_time must be >= 0");
    }
};

inline constexpr double fwhm_per_sigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)

/// Long-run rate of emitted-and-collected photons before blinking and detection.
inline double expected_emission_rate(const SourceConfig& src)
{
    if (src.mode == ExcitationMode::pulsed)
        return src.pulsed.rep_rate * src.pulsed.excitation_prob * src.collection_efficiency;
    if (src.emitter.rabi == 0.0)
        return 0.0;
    return src.collection_efficiency * src.emitter.gamma_eff() * steady_state(src.emitter).pop_excited;
}

//---------------------------------------------------------------------------//
/*!
 * \brief Tabulated survival function of the no-jump (conditional) evolution.
 *
 * The unnormalized conditional density matrix evolves under the master
 * equation with the photon-emission jump term removed; its trace S(t) is the
 * probability that no photon has been emitted by t. Because every emission
 * resets the emitter to the ground state, cw emission is a renewal process
 * and waiting times are drawn by inverting S.
 */
class WaitingTimeTable
{
  public:
    WaitingTimeTable(const EmitterParams& p, const BlochState& start,
                     double survival_floor = 1e-13, std::size_t max_points = 1u << 23)
    {
        double gamma = p.gamma_eff();
        double g2 = p.gamma_coh();
        double scale = std::max({gamma, p.rabi, std::abs(p.detuning)});
        step_ = 1.0 / (256.0 * scale);

        // x = (rho_ee, rho_gg, Re coh, Im coh)
        Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
        a(0, 0) = -gamma;
        a(0, 3) = -p.rabi;
        a(1, 3) = p.rabi;
        a(2, 2) = -g2;
        a(2, 3) = -p.detuning;
        a(3, 0) = 0.5 * p.rabi;
        a(3, 1) = -0.5 * p.rabi;
        a(3, 2) = p.detuning;
        a(3, 3) = -g2;
        Eigen::Matrix4d prop = (a * step_).exp();

        Eigen::Vector4d x(start.pop_excited, 1.0 - start.pop_excited, start.coh_real, start.coh_imag);
        survival_.push_back(1.0);
        while (survival_.size() < max_points)
        {
            x = prop * x;
            double s = x(0) + x(1);
            s = std::min(s, survival_.back());
            survival_.push_back(s);
            if (s < survival_floor)
                break;
        }
        std::size_t n = survival_.size();
        double s_last = survival_[n - 1];
        double s_prev = survival_[n - 2];
        tail_rate_ = s_last > 0 && s_prev > s_last ? std::log(s_prev / s_last) / step_ : 0.0;
        if (!(tail_rate_ > 0))
            throw DomainError("WaitingTimeTable: survival does not decay (no emission)");

        guide_.resize(guide_buckets + 1);
        for (std::size_t b = 0; b <= guide_buckets; ++b)
            guide_[b] = last_index_at_least(double(b) / guide_buckets);
    }

    double step() const { return step_; }
    const std::vector<double>& survival() const { return survival_; }

    /// Waiting time (s) with P(T > t) = S(t), given u uniform in (0, 1].
    double sample(double u) const
    {
        std::size_t n = survival_.size();
        if (u <= survival_[n - 1])
            return double(n - 1) * step_ + std::log(survival_[n - 1] / u) / tail_rate_;
        std::size_t b = std::min<std::size_t>(std::size_t(u * guide_buckets), guide_buckets - 1);
        std::size_t lo = guide_[b + 1];
        std::size_t hi = guide_[b];
        // last index in [lo, hi] with survival >= u
        while (lo < hi)
        {
            std::size_t mid = (lo + hi + 1) / 2;
            if (survival_[mid] >= u)
                lo = mid;
            else
                hi = mid - 1;
        }
        double s0 = survival_[lo];
        double s1 = survival_[lo + 1];
        double frac = s0 > s1 ? (s0 - u) / (s0 - s1) : 0.0;
        return (double(lo) + frac) * step_;
    }

  private:
    static constexpr std::size_t guide_buckets = 1u << 14;

    std::size_t last_index_at_least(double u) const
    {
        auto it = std::upper_bound(survival_.begin(), survival_.end(), u, std::greater<>());
        std::size_t idx = std::size_t(it - survival_.begin());
        return idx == 0 ? 0 : std::min(idx - 1, survival_.size() - 2);
    }

    double step_ = 0.0;
    double tail_rate_ = 0.0;
    std::vector<double> survival_;
    std::vector<std::size_t> guide_;
};

struct EmissionOptions
{
    /// Generation is split into fixed windows; results depend on this but not on `threads`.
    Picoseconds shard_width = 1'000'000'000;  // 1 ms
    unsigned threads = 1;
};

namespace detail {

template<class Fn>
void for_each_shard(std::size_t n_shards, unsigned threads, Fn&& fn)
{
    threads = std::max(1u, std::min<unsigned>(threads, unsigned(n_shards)));
    if (threads == 1)
    {
        for (std::size_t i = 0; i < n_shards; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w)
    {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n_shards; i = next++)
                fn(i);
        });
    }
}

}  // namespace detail

//---------------------------------------------------------------------------//
/*!
 * \brief Collected photon emission times of the driven emitter.
 *
 * cw: quantum-jump unraveling. Each shard starts from the steady state and
 * restarts from the ground state after every emission. pulsed: at most one
 * emission per pulse, delayed by Exp(rise) + Exp(decay) when rise_time > 0.
 */
inline TimeTagSeries simulate_emission_tags(const SourceConfig& src, double duration, std::uint64_t seed,
                                            const EmissionOptions& opts = {})
{
    src.validate();
    if (!(duration > 0))
        throw DomainError("simulate_emission_tags: duration must be > 0");
    TimeTagSeries out;
    out.duration = seconds_to_ps(duration);
    double eta = src.collection_efficiency;

    if (src.mode == ExcitationMode::cw)
    {
        if (src.emitter.rabi == 0.0 || eta == 0.0)
            return out;
        WaitingTimeTable from_ground(src.emitter, BlochState::ground());
        WaitingTimeTable from_steady(src.emitter, steady_state(src.emitter));
        std::size_t n_shards = std::size_t((out.duration + opts.shard_width - 1) / opts.shard_width);
        std::vector<std::vector<Picoseconds>> shards(n_shards);
        detail::for_each_shard(n_shards, opts.threads, [&](std::size_t k) {
            StreamRng rng(seed, Stage::emission, k);
            Picoseconds start = Picoseconds(k) * opts.shard_width;
            Picoseconds len = std::min(opts.shard_width, out.duration - start);
            double len_s = ps_to_seconds(len);
            auto& tags = shards[k];
            tags.reserve(std::size_t(expected_emission_rate(src) * len_s * 1.05) + 16);
            double t = from_steady.sample(rng.uniform_pos());
            while (t < len_s)
            {
                if (eta >= 1.0 || rng.uniform() < eta)
                {
                    Picoseconds ps = start + Picoseconds(std::llround(t * ps_per_s));
                    if (tags.empty() || ps > tags.back())
                        tags.push_back(ps);
                }
                t += from_ground.sample(rng.uniform_pos());
            }
        });
        std::size_t total = 0;
        for (const auto& s : shards)
            total += s.size();
        out.timestamps.reserve(total);
        for (const auto& s : shards)
            out.timestamps.insert(out.timestamps.end(), s.begin(), s.end());
        out.normalize();
        return out;
    }

    // pulsed
    const auto& pe = src.pulsed;
    double gamma = src.emitter.gamma_eff();
    if (!(gamma > 0))
        throw DomainError("simulate_emission_tags: pulsed mode needs a positive decay rate");
    double period_ps = ps_per_s / pe.rep_rate;
    std::uint64_t n_pulses = std::uint64_t(std::ceil(double(out.duration) / period_ps));
    std::uint64_t per_shard = std::max<std::uint64_t>(1, std::uint64_t(double(opts.shard_width) / period_ps));
    std::size_t n_shards = std::size_t((n_pulses + per_shard - 1) / per_shard);
    double rise_rate = pe.rise_time > 0 ? 1.0 / pe.rise_time + gamma : 0.0;
    std::vector<std::vector<Picoseconds>> shards(n_shards);
    detail::for_each_shard(n_shards, opts.threads, [&](std::size_t k) {
        StreamRng rng(seed, Stage::emission, k);
        std::uint64_t first = std::uint64_t(k) * per_shard;
        std::uint64_t last = std::min(n_pulses, first + per_shard);
        auto& tags = shards[k];
        for (std::uint64_t i = first; i < last; ++i)
        {
            if (!(rng.uniform() < pe.excitation_prob))
                continue;
            double delay = -std::log(rng.uniform_pos()) / gamma;
            if (rise_rate > 0)
                delay += -std::log(rng.uniform_pos()) / rise_rate;
            if (!(eta >= 1.0 || rng.uniform() < eta))
                continue;
            tags.push_back(Picoseconds(std::llround(double(i) * period_ps + delay * ps_per_s)));
        }
    });
    for (const auto& s : shards)
        out.timestamps.insert(out.timestamps.end(), s.begin(), s.end());
    out.normalize();
    return out;
}

/// Drop tags that fall in OFF intervals of a two-state telegraph process.
/// ON -> OFF at `on_rate`, OFF -> ON at `off_rate`; the initial state is drawn from the stationary duty cycle.
inline TimeTagSeries apply_blinking(const TimeTagSeries& tags, double on_rate, double off_rate, std::uint64_t seed)
{
    if (!(on_rate >= 0) || !(off_rate >= 0))
        throw DomainError("apply_blinking: rates must be >= 0");
    if (on_rate == 0.0 || std::isinf(off_rate))
        return tags;
    TimeTagSeries out;
    out.channel = tags.channel;
    out.duration = tags.duration;
    StreamRng rng(seed, Stage::blinking, tags.channel);
    double duty = off_rate / (on_rate + off_rate);
    bool on = rng.uniform() < duty;
    if (off_rate == 0.0 && !on)
        return out;
    auto dwell = [&](bool state) {
        double rate = state ? on_rate : off_rate;
        return rate > 0 ? -std::log(rng.uniform_pos()) / rate * ps_per_s : std::numeric_limits<double>::infinity();
    };
    double next_switch = dwell(on);
    for (auto t : tags.timestamps)
    {
        while (double(t) >= next_switch)
        {
            on = !on;
            next_switch += dwell(on);
        }
        if (on)
            out.timestamps.push_back(t);
    }
    return out;
}

/// Merge a homogeneous Poisson stream of the given rate (counts/s).
inline TimeTagSeries add_background(const TimeTagSeries& tags, double rate, std::uint64_t seed)
{
    if (!(rate >= 0))
        throw DomainError("add_background: rate must be >= 0");
    if (rate == 0.0)
        return tags;
    TimeTagSeries out = tags;
    StreamRng rng(seed, Stage::background, tags.channel);
    double mean_gap_ps = ps_per_s / rate;
    double t = -std::log(rng.uniform_pos()) * mean_gap_ps;
    while (t < double(tags.duration))
    {
        out.timestamps.push_back(Picoseconds(std::llround(t)));
        t += -std::log(rng.uniform_pos()) * mean_gap_ps;
    }
    out.normalize();
    return out;
}

/// Quantum-efficiency thinning, Gaussian timing jitter, then non-paralyzable dead time.
inline TimeTagSeries detect(const TimeTagSeries& tags, const DetectorConfig& det, std::uint64_t seed)
{
    det.validate();
    TimeTagSeries out;
    out.channel = tags.channel;
    out.duration = tags.duration;
    StreamRng rng(seed, Stage::detection);
    double sigma = det.jitter_fwhm / fwhm_per_sigma;
    std::normal_distribution<double> jitter(0.0, 1.0);
    out.timestamps.reserve(std::size_t(double(tags.size()) * det.quantum_efficiency * 1.01) + 16);
    for (auto t : tags.timestamps)
    {
        // per-photon stream keyed by arrival time: a photon's fate does not
        // depend on which other photons are in the series
        rng.reseat(std::uint64_t(t));
        jitter.reset();
        if (det.quantum_efficiency < 1.0 && !(rng.uniform() < det.quantum_efficiency))
            continue;
        if (sigma > 0)
            t += Picoseconds(std::llround(sigma * jitter(rng)));
        out.timestamps.push_back(t);
    }
    out.normalize();
    if (det.dead_time > 0)
    {
        std::size_t kept = 0;
        for (std::size_t i = 0; i < out.timestamps.size(); ++i)
        {
            if (kept == 0 || double(out.timestamps[i] - out.timestamps[kept - 1]) >= det.dead_time)
                out.timestamps[kept++] = out.timestamps[i];
        }
        out.timestamps.resize(kept);
    }
    return out;
}

/// 50/50 beamsplitter: each tag independently to channel 0 or 1.
inline std::pair<TimeTagSeries, TimeTagSeries> hbt_split(const TimeTagSeries& tags, std::uint64_t seed)
{
    std::pair<TimeTagSeries, TimeTagSeries> out;
    out.first.channel = 0;
    out.second.channel = 1;
    out.first.duration = out.second.duration = tags.duration;
    StreamRng rng(seed, Stage::beamsplitter);
    for (auto t : tags.timestamps)
    {
        rng.reseat(std::uint64_t(t));
        if (rng() >> 63)
            out.second.timestamps.push_back(t);
        else
            out.first.timestamps.push_back(t);
    }
    return out;
}

}  // namespace rfsim
