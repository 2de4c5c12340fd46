#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "rfsim/convolution.hpp"
#include "rfsim/errors.hpp"
#include "rfsim/montecarlo.hpp"
#include "rfsim/photonics.hpp"
#include "rfsim/timetags.hpp"

namespace rfsim {

struct RunSettings
{
    std::uint64_t seed = 1;
    double duration = 0.0;  // s; 0 = derive from n_events
    std::uint64_t n_events = 1'000'000;  // detected events targeted when duration is 0
    Picoseconds bin_width = 100;
    Picoseconds window = 20'000;  // g2 histogram half width
    std::string output_dir = "out";
    bool write_timetags = false;
};

struct FitSettings
{
    int oversampling = 4;
    bool fit_rise = true;
    bool fit_background = false;
};

/// Pulsed on/off resonance pair.
struct LifetimeSettings
{
    double purcell_off = 1.0;  // Purcell factor of the off-resonance reference run
    std::optional<double> rise_time_off;  // s; defaults to source.rise_time
    Picoseconds bin_width = 16;
    Picoseconds offset = 1000;  // trigger delay placing the pulse inside the fold window
};

struct ModelSettings
{
    double d_min = 2.1e-6;
    double d_max = 2.8e-6;
    double d_step = 0.1e-6;
    double q_rel_error = 0.05;  // sigma_Q / Q written by `models qcurve`
};

struct RunConfig
{
    CavityGeometry cavity;
    ModeModel mode;
    SourceConfig source;
    DetectorConfig detector;
    RunSettings run;
    FitSettings fit;
    LifetimeSettings lifetime;
    ModelSettings models;

    void validate() const
    {
        cavity.validate();
        source.validate();
        detector.validate();
        if (!(mode.volume.eta > 0) || !(mode.volume.constant >= 0))
            throw DomainError("cavity: mode volume eta must be > 0 and constant >= 0");
        if (!(mode.splitting_amp >= 0) || !(mode.splitting_exp > 0))
            throw DomainError("cavity: splitting_amp must be >= 0 and splitting_exp > 0");
        if (run.bin_width <= 0 || run.window < run.bin_width)
            throw DomainError("run: need bin_width > 0 and window >= bin_width");
        if (!(run.duration >= 0) || (run.duration == 0 && run.n_events == 0))
            throw DomainError("run: need duration > 0 or n_events > 0");
        if (fit.oversampling < 1)
            throw DomainError("fit: oversampling must be >= 1");
        if (!(lifetime.purcell_off > 0))
            throw DomainError("lifetime: purcell_off must be > 0");
        if (lifetime.rise_time_off && !(*lifetime.rise_time_off >= 0))
            throw DomainError("lifetime: rise_time_off must be >= 0");
        if (lifetime.bin_width <= 0 || lifetime.offset < 0)
            throw DomainError("lifetime: need bin_width > 0 and offset >= 0");
        if (!(models.d_min > 0) || !(models.d_max >= models.d_min) || !(models.d_step > 0))
            throw DomainError("models: need 0 < d_min <= d_max and d_step > 0");
        if (!(models.q_rel_error > 0))
            throw DomainError("models: q_rel_error must be > 0");
    }
};

namespace detail {

enum class Unit
{
    none,  // dimensionless
    length,  // -> m
    inverse_length,  // -> 1/m
    time,  // -> s
    angular_rate,  // -> rad/s; GHz etc. are cyclic and get 2 pi
    frequency,  // -> Hz
    count_rate,  // -> 1/s
};

struct Value
{
    std::string text;  // raw, for strings
    bool is_string = false;
    std::optional<double> number;
    std::string unit;
};

inline std::string trim(std::string_view s)
{
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])))
        ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])))
        --e;
    return std::string(s.substr(b, e - b));
}

inline Value parse_value(const std::string& raw, std::size_t line)
{
    Value v;
    if (raw.empty())
        throw FormatError("missing value", line);
    if (raw.front() == '"')
    {
        if (raw.size() < 2 || raw.back() != '"')
            throw FormatError("unterminated string", line);
        v.is_string = true;
        v.text = raw.substr(1, raw.size() - 2);
        return v;
    }
    v.text = raw;
    std::string s = raw;
    std::erase(s, '_');  // 1_000_000
    double x = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec == std::errc() && ptr != s.data())
    {
        v.number = x;
        v.unit = trim(std::string_view(ptr, std::size_t(s.data() + s.size() - ptr)));
    }
    return v;
}

inline double unit_scale(Unit kind, const std::string& unit, std::size_t line, const std::string& key)
{
    static const std::map<std::string, double> length{{"m", 1.0}, {"mm", 1e-3}, {"um", 1e-6}, {"nm", 1e-9}};
    static const std::map<std::string, double> inv_length{{"/m", 1.0}, {"/um", 1e6}, {"/nm", 1e9}};
    static const std::map<std::string, double> time{
        {"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"ns", 1e-9}, {"ps", 1e-12}};
    static const std::map<std::string, double> freq{{"Hz", 1.0}, {"kHz", 1e3}, {"MHz", 1e6}, {"GHz", 1e9}};
    static const std::map<std::string, double> per_time{
        {"/s", 1.0}, {"/ms", 1e3}, {"/us", 1e6}, {"/ns", 1e9}, {"/ps", 1e12}};

    auto find = [&](const std::map<std::string, double>& m) -> std::optional<double> {
        auto it = m.find(unit);
        if (it == m.end())
            return std::nullopt;
        return it->second;
    };
    std::optional<double> f;
    switch (kind)
    {
        case Unit::none:
            if (unit.empty())
                return 1.0;
            break;
        case Unit::length:
            f = find(length);
            break;
        case Unit::inverse_length:
            f = find(inv_length);
            break;
        case Unit::time:
            f = find(time);
            break;
        case Unit::angular_rate:
            if (auto c = find(freq))
                return 2.0 * std::numbers::pi * *c;
            f = find(per_time);
            break;
        case Unit::frequency:
        case Unit::count_rate:
            f = find(freq);
            if (!f)
                f = find(per_time);
            break;
    }
    if (!f)
    {
        if (unit.empty())
            throw FormatError("key '" + key + "' needs an explicit unit suffix", line);
        throw FormatError("unit '" + unit + "' not accepted for key '" + key + "'", line);
    }
    return *f;
}

inline bool parse_bool(const Value& v, std::size_t line, const std::string& key)
{
    if (!v.is_string && v.text == "true")
        return true;
    if (!v.is_string && v.text == "false")
        return false;
    throw FormatError("key '" + key + "' expects true or false", line);
}

}  // namespace detail

//---------------------------------------------------------------------------//
/*!
 * \brief Parse a TOML-style run configuration.
 *
 * Sections [cavity], [emitter], [source], [detector], [run], [fit],
 * [lifetime], [models].
 * Dimensional values need a unit suffix ("930 nm", "2.5 GHz", "50 ns");
 * frequencies given for emitter rates are cyclic and stored as rad/s.
 * Unknown sections or keys and repeated keys are errors.
 */
inline RunConfig parse_config(std::istream& is)
{
    using detail::Unit;
    RunConfig cfg;
    struct Setter
    {
        Unit unit;
        std::function<void(const detail::Value&, double, std::size_t, const std::string&)> set;
    };
    auto num = [](double* dst) {
        return [dst](const detail::Value&, double x, std::size_t, const std::string&) { *dst = x; };
    };
    auto ps = [](double* dst) {  // stored in picoseconds
        return [dst](const detail::Value&, double x, std::size_t, const std::string&) { *dst = x * ps_per_s; };
    };
    auto int_ps = [](Picoseconds* dst) {
        return [dst](const detail::Value&, double x, std::size_t line, const std::string& key) {
            double p = std::round(x * ps_per_s);
            if (std::abs(p - x * ps_per_s) > 1e-6 * std::max(1.0, std::abs(p)))
                throw FormatError("key '" + key + "' must be a whole number of picoseconds", line);
            *dst = Picoseconds(p);
        };
    };
    auto count = [](auto* dst) {
        return [dst](const detail::Value&, double x, std::size_t line, const std::string& key) {
            if (!(x >= 0) || x != std::floor(x) || x > 1.8e19)
                throw FormatError("key '" + key + "' expects a non-negative integer", line);
            *dst = static_cast<std::remove_reference_t<decltype(*dst)>>(x);
        };
    };
    auto flag = [](bool* dst) {
        return [dst](const detail::Value& v, double, std::size_t line, const std::string& key) {
            *dst = detail::parse_bool(v, line, key);
        };
    };

    auto& c = cfg.cavity;
    auto& e = cfg.source.emitter;
    auto& s = cfg.source;
    auto& d = cfg.detector;
    auto& r = cfg.run;
    auto& f = cfg.fit;
    auto& m = cfg.models;
    std::optional<double> n_eff;

    std::map<std::string, std::map<std::string, Setter>> table;
    table["cavity"] = {
        {"radius", {Unit::length, num(&c.radius)}},
        {"diameter", {Unit::length, [&c](const detail::Value&, double x, std::size_t, const std::string&) {
                          c.radius = 0.5 * x;
                      }}},
        {"waveguide_width", {Unit::length, num(&c.waveguide_width)}},
        {"n_core", {Unit::none, num(&c.n_core)}},
        {"n_eff", {Unit::none, [&n_eff](const detail::Value&, double x, std::size_t, const std::string&) {
                       n_eff = x;
                   }}},
        {"beta", {Unit::inverse_length, num(&c.beta)}},
        {"lambda_planar", {Unit::length, num(&c.lambda_planar)}},
        {"q_planar", {Unit::none, num(&c.q_planar)}},
        {"kappa", {Unit::length, num(&c.kappa)}},
        {"mode_volume_eta", {Unit::none, num(&cfg.mode.volume.eta)}},
        {"mode_volume", {Unit::none, num(&cfg.mode.volume.constant)}},  // m^3
        {"splitting_amp", {Unit::none, num(&cfg.mode.splitting_amp)}},  // m^(1+exp)
        {"splitting_exp", {Unit::none, num(&cfg.mode.splitting_exp)}},
    };
    table["emitter"] = {
        {"gamma_rad", {Unit::angular_rate, num(&e.gamma_rad)}},
        {"gamma_deph", {Unit::angular_rate, num(&e.gamma_deph)}},
        {"rabi", {Unit::angular_rate, num(&e.rabi)}},
        {"detuning", {Unit::angular_rate, num(&e.detuning)}},
        {"purcell", {Unit::none, num(&e.purcell)}},
    };
    table["source"] = {
        {"mode", {Unit::none,
                  [&s](const detail::Value& v, double, std::size_t line, const std::string&) {
                      if (v.is_string && v.text == "cw")
                          s.mode = ExcitationMode::cw;
                      else if (v.is_string && v.text == "pulsed")
                          s.mode = ExcitationMode::pulsed;
                      else
                          throw FormatError("source.mode must be \"cw\" or \"pulsed\"", line);
                  }}},
        {"rep_rate", {Unit::frequency, num(&s.pulsed.rep_rate)}},
        {"excitation_prob", {Unit::none, num(&s.pulsed.excitation_prob)}},
        {"rise_time", {Unit::time, num(&s.pulsed.rise_time)}},
        {"blink_on_rate", {Unit::count_rate, num(&s.blink_on_rate)}},
        {"blink_off_rate", {Unit::count_rate, num(&s.blink_off_rate)}},
        {"background_rate", {Unit::count_rate, num(&s.background_rate)}},
        {"collection_efficiency", {Unit::none, num(&s.collection_efficiency)}},
    };
    table["detector"] = {
        {"quantum_efficiency", {Unit::none, num(&d.quantum_efficiency)}},
        {"jitter_fwhm", {Unit::time, ps(&d.jitter_fwhm)}},
        {"dead_time", {Unit::time, ps(&d.dead_time)}},
    };
    table["run"] = {
        {"seed", {Unit::none, count(&r.seed)}},
        {"duration", {Unit::time, num(&r.duration)}},
        {"n_events", {Unit::none, count(&r.n_events)}},
        {"bin_width", {Unit::time, int_ps(&r.bin_width)}},
        {"window", {Unit::time, int_ps(&r.window)}},
        {"output_dir", {Unit::none,
                        [&r](const detail::Value& v, double, std::size_t line, const std::string&) {
                            if (!v.is_string)
                                throw FormatError("run.output_dir must be a quoted string", line);
                            r.output_dir = v.text;
                        }}},
        {"write_timetags", {Unit::none, flag(&r.write_timetags)}},
    };
    table["fit"] = {
        {"oversampling", {Unit::none, count(&f.oversampling)}},
        {"fit_rise", {Unit::none, flag(&f.fit_rise)}},
        {"fit_background", {Unit::none, flag(&f.fit_background)}},
    };
    auto& lt = cfg.lifetime;
    table["lifetime"] = {
        {"purcell_off", {Unit::none, num(&lt.purcell_off)}},
        {"rise_time_off", {Unit::time, [&lt](const detail::Value&, double x, std::size_t, const std::string&) {
                               lt.rise_time_off = x;
                           }}},
        {"bin_width", {Unit::time, int_ps(&lt.bin_width)}},
        {"offset", {Unit::time, int_ps(&lt.offset)}},
    };
    table["models"] = {
        {"d_min", {Unit::length, num(&m.d_min)}},
        {"d_max", {Unit::length, num(&m.d_max)}},
        {"d_step", {Unit::length, num(&m.d_step)}},
        {"q_rel_error", {Unit::none, num(&m.q_rel_error)}},
    };
    // keys whose value is a word or string rather than a number
    auto is_textual = [](const std::string& sec, const std::string& key) {
        return (sec == "source" && key == "mode") || (sec == "run" && key == "output_dir") ||
               key == "write_timetags" || key == "fit_rise" || key == "fit_background";
    };

    std::string section;
    std::map<std::string, std::size_t> seen;
    std::string raw;
    std::size_t line = 0;
    while (std::getline(is, raw))
    {
        ++line;
        // strip comments outside quotes
        bool quoted = false;
        for (std::size_t i = 0; i < raw.size(); ++i)
        {
            if (raw[i] == '"')
                quoted = !quoted;
            else if (raw[i] == '#' && !quoted)
            {
                raw.resize(i);
                break;
            }
        }
        std::string text = detail::trim(raw);
        if (text.empty())
            continue;
        if (text.front() == '[')
        {
            if (text.back() != ']')
                throw FormatError("malformed section header", line);
            section = detail::trim(std::string_view(text).substr(1, text.size() - 2));
            if (!table.count(section))
                throw FormatError("unknown section [" + section + "]", line);
            continue;
        }
        auto eq = text.find('=');
        if (eq == std::string::npos)
            throw FormatError("expected key = value", line);
        std::string key = detail::trim(std::string_view(text).substr(0, eq));
        std::string val = detail::trim(std::string_view(text).substr(eq + 1));
        if (section.empty())
            throw FormatError("key '" + key + "' outside any section", line);
        auto it = table[section].find(key);
        if (it == table[section].end())
            throw FormatError("unknown key '" + key + "' in [" + section + "]", line);
        std::string full = section + "." + key;
        if (auto prev = seen.find(full); prev != seen.end())
            throw FormatError("duplicate key '" + full + "' (first on line " + std::to_string(prev->second) + ")",
                              line);
        seen[full] = line;

        auto v = detail::parse_value(val, line);
        double x = 0.0;
        if (!is_textual(section, key))
        {
            if (!v.number)
                throw FormatError("key '" + full + "' expects a number", line);
            x = *v.number * detail::unit_scale(it->second.unit, v.unit, line, full);
        }
        it->second.set(v, x, line, full);
    }
    if (seen.count("cavity.radius") && seen.count("cavity.diameter"))
        throw FormatError("give either cavity.radius or cavity.diameter, not both", seen["cavity.diameter"]);
    if (n_eff)
    {
        if (seen.count("cavity.beta"))
            throw FormatError("give either cavity.beta or cavity.n_eff, not both", seen["cavity.n_eff"]);
        c.beta = propagation_constant(*n_eff, c.lambda_planar);
    }
    cfg.validate();
    return cfg;
}

inline RunConfig parse_config_string(const std::string& text)
{
    std::istringstream is(text);
    return parse_config(is);
}

inline RunConfig load_config(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
        throw FormatError("cannot open config file '" + path + "'");
    return parse_config(is);
}

/// Instrument response of the HBT correlation: two detectors, each with the configured jitter
/// divided by sqrt(2), so the combined response equals `jitter_fwhm`.
inline DetectorConfig hbt_channel_detector(const DetectorConfig& det)
{
    DetectorConfig ch = det;
    ch.jitter_fwhm = det.jitter_fwhm / std::numbers::sqrt2;
    return ch;
}

}  // namespace rfsim
