// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "rfsim/config.hpp"
#include "rfsim/correlator.hpp"
#include "rfsim/dynamics.hpp"
#include "rfsim/fit.hpp"
#include "rfsim/io.hpp"
#include "rfsim/pipeline.hpp"

using namespace rfsim;

namespace {

constexpr double two_pi = 2 * std::numbers::pi;

struct Verdict
{
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

const std::string source_dir = RFSIM_SOURCE_DIR;

RunConfig default_config()
{
    return load_config(source_dir + "/configs/default.toml");
}

//---------------------------------------------------------------------------//
Verdict g2_oracle_equivalence()
{
    auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (double ratio : {0.1, 0.5, 1.0, 4.0, 10.0})
    {
        EmitterParams p;
        p.gamma_rad = two_pi * 2.5e9;
        p.rabi = ratio * p.gamma_rad;
        auto grid = uniform_half_grid(20.0 / p.gamma_eff(), 1000);
        auto curve = g2_regression(p, grid);
        for (std::size_t i = 0; i < curve.tau.size(); ++i)
            worst = std::max(worst, std::abs(curve.values[i] - g2_closed_form(p, curve.tau[i])));
    }
    double dt = seconds_since(t0);
    return {worst < 1e-6 && dt < 5.0, fmt("max |delta| = %.3g over 5 ratios, %.2f s", worst, dt)};
}

//---------------------------------------------------------------------------//
// shared between criteria 2, 3 and 8
G2RunResult g2_baseline;

std::string serialize(const G2RunResult& r)
{
    std::ostringstream os;
    write_timetags(os, r.ch0);
    write_timetags(os, r.ch1);
    write_histogram_csv(os, r.histogram, r.g2);
    os << to_json(r.fit).dump(2);
    return os.str();
}

Verdict g2_reproduction()
{
    auto cfg = default_config();
    auto t0 = std::chrono::steady_clock::now();
    g2_baseline = run_g2_pipeline(cfg, cfg.run.seed, 1);
    double dt = seconds_since(t0);
    const auto& f = g2_baseline.fit;
    std::size_t events = g2_baseline.ch0.size() + g2_baseline.ch1.size();
    bool ok = f.g2_zero == 0.0 && f.g2_zero_upper >= 0.01 && f.g2_zero_upper <= 0.08 && dt < 300.0 &&
              events > 900'000 && events < 1'100'000;
    return {ok, fmt("%zu events, g2(0) = %.4g +%.4f -%.4f, %.1f s", events, f.g2_zero, f.g2_zero_upper,
                    f.g2_zero_lower, dt)};
}

Verdict background_sensitivity()
{
    auto cfg = default_config();
    // 1 % of collected photons are laser background
    double signal = expected_emission_rate(cfg.source) * cfg.source.duty_cycle();
    double rho = 0.99;
    cfg.source.background_rate = signal * (1.0 - rho) / rho;
    cfg.run.duration = g2_baseline.duration;  // same signal photons as the baseline run
    auto with_bg = run_g2_pipeline(cfg, cfg.run.seed, 1);
    double g0 = g2_baseline.fit.g2_zero;
    double g1 = with_bg.fit.g2_zero;
    double shift = g1 - g0;
    double oracle = rho * rho * g0 + 1.0 - rho * rho;
    double err = g1 < oracle ? with_bg.fit.g2_zero_upper : with_bg.fit.g2_zero_lower;
    bool ok = std::abs(shift) <= 0.025 && std::abs(g1 - oracle) <= err;
    return {ok, fmt("g2(0) %.4g -> %.4g (+%.4f -%.4f), shift %.4f; mixing oracle %.4f", g0, g1,
                    with_bg.fit.g2_zero_upper, with_bg.fit.g2_zero_lower, shift, oracle)};
}

//---------------------------------------------------------------------------//
Verdict purcell_from_lifetimes_mc()
{
    auto cfg = load_config(source_dir + "/configs/lifetime.toml");
    double truth = cfg.source.emitter.purcell / cfg.lifetime.purcell_off;
    auto t0 = std::chrono::steady_clock::now();
    int inside = 0, failed = 0;
    double sum = 0.0;
    std::size_t counts = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed)
    {
        try
        {
            auto r = run_purcell_pair(cfg, seed, 1);
            sum += r.purcell;
            counts += r.on.tags.size() + r.off.tags.size();
            if (r.purcell >= 2.32 && r.purcell <= 2.56)
                ++inside;
        }
        catch (const std::exception&)
        {
            ++failed;
        }
    }
    double dt = seconds_since(t0);
    bool ok = truth == 2.44 && cfg.source.pulsed.rep_rate == 76e6 && inside >= 90 && dt < 300.0;
    return {ok, fmt("%d/100 seeds in [2.32, 2.56], mean F_P %.4f, %d fit failures, %.0f counts/curve, %.1f s", inside,
                    sum / std::max(1, 100 - failed), failed, double(counts) / 200.0, dt)};
}

//---------------------------------------------------------------------------//
Verdict q_fit_recovery()
{
    auto t0 = std::chrono::steady_clock::now();
    CavityGeometry g;
    g.kappa = 3.8e-10;
    g.q_planar = 8350;
    std::vector<QPoint> clean;
    for (int i = 0; i < 8; ++i)
    {
        CavityGeometry gi = g;
        gi.radius = 0.5 * (2.1e-6 + 0.1e-6 * i);
        double q = q_total(gi);
        clean.push_back({gi.radius, q, 0.05 * q});
    }
    CavityGeometry start = g;
    start.kappa = 1e-10;
    double rel = std::abs(fit_q_vs_diameter(clean, start).value("kappa") / g.kappa - 1.0);

    int inside = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed)
    {
        StreamRng rng(seed, Stage::test, 5);
        std::normal_distribution<double> n(0.0, 1.0);
        auto noisy = clean;
        for (auto& p : noisy)
            p.q += p.sigma_q * n(rng);
        auto r = fit_q_vs_diameter(noisy, start);
        if (std::abs(r.value("kappa") - g.kappa) <= 2.0 * r.error("kappa"))
            ++inside;
    }
    double dt = seconds_since(t0);
    return {rel < 1e-6 && inside >= 90 && dt < 60.0,
            fmt("noiseless relative error %.2g; %d/100 within 2 sigma; %.2f s", rel, inside, dt)};
}

//---------------------------------------------------------------------------//
Verdict count_rate_chain()
{
    DetectorConfig det;
    det.quantum_efficiency = 0.22;
    double r = deadtime_corrected_rate(4e6, det, DeadTimeModel::multiplicative(0.10));
    return {r == 2.0e7, fmt("deadtime_corrected_rate(4e6) = %.17g", r)};
}

//---------------------------------------------------------------------------//
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

Verdict correlator_exactness()
{
    // brute force on dense streams with many exact bin-boundary delays
    bool exact = true;
    for (Picoseconds bw : {Picoseconds(100), Picoseconds(37)})
    {
        for (std::uint64_t seed = 1; seed <= 5; ++seed)
        {
            auto a = poisson(2e9, 1e-6, seed, 0);
            auto b = poisson(2e9, 1e-6, seed, 1);
            a.timestamps.resize(std::min<std::size_t>(a.size(), 2000));
            b.timestamps.resize(std::min<std::size_t>(b.size(), 2000));
            for (auto& t : a.timestamps)
                t -= t % 50;
            a.normalize();
            Picoseconds window = 20 * bw;
            auto h = correlate(a, b, bw, window, {.threads = 3});
            std::vector<std::uint64_t> brute(h.counts.size(), 0);
            for (auto ta : a.timestamps)
                for (auto tb : b.timestamps)
                {
                    auto k = delay_bin(tb - ta, bw);
                    if (std::abs(k) <= h.half_bins)
                        ++brute[std::size_t(k + h.half_bins)];
                }
            exact = exact && brute == h.counts;
        }
    }

    auto a = poisson(2.5e6, 4.0, 11, 0);
    auto b = poisson(2.5e6, 4.0, 12, 1);
    auto g = normalize_g2(correlate(a, b, 2500, 50'000));
    double worst = 0.0;
    for (double v : g.values)
        worst = std::max(worst, std::abs(v - 1.0));
    return {exact && worst <= 0.02,
            fmt("brute force %s (N <= 2000, bw 100 and 37 ps); Poisson g2 max |g2 - 1| = %.4f over %zu bins",
                exact ? "bit-exact" : "MISMATCH", worst, g.values.size())};
}

//---------------------------------------------------------------------------//
std::string serialize(const PurcellRunResult& r)
{
    std::ostringstream os;
    write_timetags(os, r.on.tags);
    write_timetags(os, r.off.tags);
    write_decay_csv(os, r.on.decay);
    write_decay_csv(os, r.off.decay);
    os << to_json(r.on.fit).dump(2) << to_json(r.off.fit).dump(2) << format_double(r.purcell);
    return os.str();
}

Verdict determinism()
{
    auto cfg = default_config();
    auto again = run_g2_pipeline(cfg, cfg.run.seed, 4);
    bool g2_same = serialize(again) == serialize(g2_baseline);

    auto lcfg = load_config(source_dir + "/configs/lifetime.toml");
    auto l1 = serialize(run_purcell_pair(lcfg, 9, 1));
    auto l2 = serialize(run_purcell_pair(lcfg, 9, 3));
    bool lt_same = l1 == l2;
    return {g2_same && lt_same, fmt("g2 pipeline 1 vs 4 threads: %s; lifetime pair 1 vs 3 threads: %s",
                                    g2_same ? "identical" : "DIFFERENT", lt_same ? "identical" : "DIFFERENT")};
}

}  // namespace

int main()
{
    std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
        {"g2 oracle equivalence", g2_oracle_equivalence},
        {"g2 reproduction", g2_reproduction},
        {"background sensitivity", background_sensitivity},
        {"Purcell from lifetimes", purcell_from_lifetimes_mc},
        {"Q-fit recovery", q_fit_recovery},
        {"count-rate chain", count_rate_chain},
        {"correlator exactness", correlator_exactness},
        {"determinism", determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i)
    {
        Verdict v;
        try
        {
            v = criteria[i].second();
        }
        catch (const std::exception& e)
        {
            v = {false, std::string("exception: ") + e.what()};
        }
        failures += !v.pass;
        std::printf("%s %zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
