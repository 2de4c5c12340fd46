#pragma once

#include <cmath>
#include <cstdint>

#include "rfsim/config.hpp"
#include "rfsim/correlator.hpp"
#include "rfsim/fit.hpp"
#include "rfsim/montecarlo.hpp"
#include "rfsim/photonics.hpp"
#include "rfsim/rng.hpp"

namespace rfsim {

struct G2RunResult
{
    TimeTagSeries ch0;
    TimeTagSeries ch1;
    CorrelationHistogram histogram;
    G2Curve g2;
    G2ExponentialFit fit;
    InstrumentResponse irf;
    double duration = 0.0;  // s
};

struct LifetimeRunResult
{
    TimeTagSeries tags;
    DecayCurve decay;
    FitResult fit;
    double duration = 0.0;
};

struct PurcellRunResult
{
    LifetimeRunResult on;
    LifetimeRunResult off;
    double purcell = 0.0;  // tau_off / tau_on
    double purcell_sigma = 0.0;
};

namespace detail {

/// Measured rate of a nonparalyzable detector fed at `r` counts/s.
inline double after_dead_time(double r, const DetectorConfig& det)
{
    return r / (1.0 + r * det.dead_time / ps_per_s);
}

}  // namespace detail

/// Acquisition time giving about `run.n_events` detected events summed over both HBT channels.
inline double g2_run_duration(const RunConfig& cfg)
{
    if (cfg.run.duration > 0)
        return cfg.run.duration;
    const auto& s = cfg.source;
    double r = (expected_emission_rate(s) * s.duty_cycle() + s.background_rate) * cfg.detector.quantum_efficiency;
    double per_channel = detail::after_dead_time(0.5 * r, cfg.detector);
    if (!(per_channel > 0))
        throw DomainError("g2 run: source produces no detected counts; set run.duration");
    return double(cfg.run.n_events) / (2.0 * per_channel);
}

/// Acquisition time giving about `run.n_events` detected events for a pulsed lifetime run.
inline double lifetime_run_duration(const RunConfig& cfg)
{
    if (cfg.run.duration > 0)
        return cfg.run.duration;
    double r = expected_emission_rate(cfg.source) * cfg.source.duty_cycle() * cfg.detector.quantum_efficiency;
    r = detail::after_dead_time(r, cfg.detector);
    if (!(r > 0))
        throw DomainError("lifetime run: source produces no detected counts; set run.duration");
    return double(cfg.run.n_events) / r;
}

//---------------------------------------------------------------------------//
/*!
 * \brief Simulated HBT measurement and antibunching fit.
 *
 * emission -> blinking -> background -> beamsplitter -> detection per
 * channel -> correlation -> normalization -> fit. Each detector gets the
 * configured jitter divided by sqrt(2) so that the start/stop response equals
 * `detector.jitter_fwhm`.
 */
inline G2RunResult run_g2_pipeline(const RunConfig& cfg, std::uint64_t seed, unsigned threads = 1)
{
    cfg.validate();
    if (cfg.source.mode != ExcitationMode::cw)
        throw DomainError("g2 run: source.mode must be \"cw\"");
    G2RunResult out;
    out.duration = g2_run_duration(cfg);
    const auto& s = cfg.source;
    EmissionOptions eo;
    eo.threads = threads;
    auto tags = simulate_emission_tags(s, out.duration, seed, eo);
    if (s.blink_on_rate > 0)
        tags = apply_blinking(tags, s.blink_on_rate, s.blink_off_rate, seed);
    if (s.background_rate > 0)
        tags = add_background(tags, s.background_rate, seed);
    auto [a, b] = hbt_split(tags, seed);
    tags = {};
    auto ch = hbt_channel_detector(cfg.detector);
    out.ch0 = detect(a, ch, seed);
    out.ch1 = detect(b, ch, seed);
    out.histogram = correlate(out.ch0, out.ch1, cfg.run.bin_width, cfg.run.window, {.threads = threads});
    out.g2 = normalize_g2(out.histogram);
    out.irf = InstrumentResponse{cfg.detector.jitter_fwhm};
    G2FitOptions fo;
    fo.oversampling = cfg.fit.oversampling;
    out.fit = fit_g2_exponential(out.g2, out.irf, fo);
    return out;
}

/// One pulsed run: emission -> detection -> histogram folded at the repetition period -> fit.
inline LifetimeRunResult run_lifetime(const RunConfig& cfg, std::uint64_t seed, unsigned threads = 1)
{
    cfg.validate();
    if (cfg.source.mode != ExcitationMode::pulsed)
        throw DomainError("lifetime run: source.mode must be \"pulsed\"");
    LifetimeRunResult out;
    out.duration = lifetime_run_duration(cfg);
    const auto& s = cfg.source;
    EmissionOptions eo;
    eo.threads = threads;
    auto tags = simulate_emission_tags(s, out.duration, seed, eo);
    if (s.blink_on_rate > 0)
        tags = apply_blinking(tags, s.blink_on_rate, s.blink_off_rate, seed);
    if (s.background_rate > 0)
        tags = add_background(tags, s.background_rate, seed);
    out.tags = detect(tags, cfg.detector, seed);
    out.decay = lifetime_histogram(out.tags, s.pulsed.rep_rate, cfg.lifetime.bin_width, cfg.lifetime.offset);
    LifetimeFitOptions lo;
    lo.fit_rise = cfg.fit.fit_rise;
    lo.fit_background = cfg.fit.fit_background;
    out.fit = fit_lifetime(out.decay, InstrumentResponse{cfg.detector.jitter_fwhm}, lo);
    return out;
}

/// On/off resonance pair: the emitter's configured Purcell factor versus `lifetime.purcell_off`.
inline PurcellRunResult run_purcell_pair(const RunConfig& cfg, std::uint64_t seed, unsigned threads = 1)
{
    PurcellRunResult out;
    out.on = run_lifetime(cfg, seed, threads);
    RunConfig off = cfg;
    off.source.emitter.purcell = cfg.lifetime.purcell_off;
    if (cfg.lifetime.rise_time_off)
        off.source.pulsed.rise_time = *cfg.lifetime.rise_time_off;
    out.off = run_lifetime(off, splitmix64(seed ^ 0x6f66662d7265736full), threads);
    double t_on = out.on.fit.value("decay_time");
    double t_off = out.off.fit.value("decay_time");
    double s_on = out.on.fit.error("decay_time");
    double s_off = out.off.fit.error("decay_time");
    out.purcell = purcell_from_lifetimes(t_on, t_off);
    out.purcell_sigma = out.purcell * std::hypot(s_on / t_on, s_off / t_off);
    return out;
}

//---------------------------------------------------------------------------//
struct ModelRow
{
    double diameter = 0.0;  // m
    double q = 0.0;
    double purcell = 0.0;
    double wavelength = 0.0;  // m
    double splitting = 0.0;  // m
};

/// Photonics models evaluated over the configured diameter grid.
inline std::vector<ModelRow> model_table(const RunConfig& cfg)
{
    std::vector<ModelRow> rows;
    const auto& m = cfg.models;
    auto n = std::size_t(std::floor((m.d_max - m.d_min) / m.d_step + 1e-9)) + 1;
    for (std::size_t i = 0; i < n; ++i)
    {
        CavityGeometry g = cfg.cavity;
        double d = m.d_min + double(i) * m.d_step;
        g.radius = 0.5 * d;
        auto mode = cavity_mode(g, cfg.mode);
        rows.push_back({d, mode.q_total, purcell_factor(mode, g.n_core), mode.wavelength, mode.splitting});
    }
    return rows;
}

}  // namespace rfsim
