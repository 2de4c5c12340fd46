// rfsim command-line driver: simulate, models, fit.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "rfsim/config.hpp"
#include "rfsim/io.hpp"
#include "rfsim/pipeline.hpp"

namespace fs = std::filesystem;
using namespace rfsim;

namespace {

constexpr int exit_config = 2;
constexpr int exit_runtime = 3;
constexpr const char* version = "0.1.0";

/// Thrown for problems with the configuration or input data (exit 2).
struct InputError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

struct Globals
{
    std::string config_path;
    std::optional<std::uint64_t> seed;
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    bool deterministic = false;
    std::string out_dir;
};

struct Context
{
    RunConfig cfg;
    std::uint64_t seed = 1;
    fs::path out;
};

Context load_context(const Globals& g)
{
    Context ctx;
    try
    {
        ctx.cfg = g.config_path.empty() ? RunConfig{} : load_config(g.config_path);
        if (g.config_path.empty())
            ctx.cfg.validate();
    }
    catch (const FormatError& e)
    {
        throw InputError(g.config_path + ": " + e.what());
    }
    catch (const DomainError& e)
    {
        throw InputError(g.config_path + ": " + e.what());
    }
    ctx.seed = g.seed.value_or(ctx.cfg.run.seed);
    ctx.out = g.out_dir.empty() ? fs::path(ctx.cfg.run.output_dir) : fs::path(g.out_dir);
    fs::create_directories(ctx.out);
    return ctx;
}

template<class Fn>
void write_file(const fs::path& path, Fn&& fn)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot write '" + path.string() + "'");
    fn(os);
}

Json metadata(const Globals& g, const Context& ctx, const std::string& command)
{
    Json m;
    m["command"] = command;
    m["version"] = version;
    m["config"] = g.config_path;
    m["seed"] = ctx.seed;
    if (!g.deterministic)
    {
        auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char buf[32];
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        m["generated_at"] = buf;
    }
    return m;
}

std::string pm(double v, double up, double lo)
{
    std::ostringstream os;
    os << v << " +" << up << " -" << lo;
    return os.str();
}

void print_fit(const FitResult& r)
{
    for (std::size_t i = 0; i < r.names.size(); ++i)
    {
        std::cout << "  " << r.names[i] << " = " << r.params[i];
        if (i < r.one_sided.size() && r.one_sided[i])
            std::cout << " +" << r.one_sided[i]->upper_excess << " -" << r.one_sided[i]->lower_excess
                      << " (at bound)";
        else
            std::cout << " +/- " << r.sigma[i];
        std::cout << '\n';
    }
    std::cout << "  chi2_reduced = " << r.chi2_reduced << " (dof " << r.dof << ")\n";
}

//---------------------------------------------------------------------------//
// simulate

void simulate_g2(const Globals& g)
{
    auto ctx = load_context(g);
    auto res = run_g2_pipeline(ctx.cfg, ctx.seed, g.threads);

    write_file(ctx.out / "g2_histogram.csv", [&](std::ostream& os) { write_histogram_csv(os, res.histogram, res.g2); });
    write_file(ctx.out / "g2_model.csv", [&](std::ostream& os) {
        os << "tau_s,g2,convolved,deconvolved\n";
        for (std::size_t i = 0; i < res.g2.tau.size(); ++i)
            os << format_double(res.g2.tau[i]) << ',' << format_double(res.g2.values[i]) << ','
               << format_double(res.fit.convolved.values[i]) << ','
               << format_double(res.fit.deconvolved.values[i]) << '\n';
    });
    Json fit = to_json(res.fit);
    fit["irf_fwhm_ps"] = res.irf.fwhm;
    write_json_file((ctx.out / "g2_fit.json").string(), fit);
    if (ctx.cfg.run.write_timetags)
    {
        write_timetags_file((ctx.out / "ch0.ttag").string(), res.ch0);
        write_timetags_file((ctx.out / "ch1.ttag").string(), res.ch1);
    }
    Json meta = metadata(g, ctx, "simulate g2");
    meta["duration_s"] = res.duration;
    meta["bin_width_ps"] = res.histogram.bin_width;
    meta["acq_duration_ps"] = res.histogram.acq_duration;
    meta["rate_ch0"] = res.histogram.rate_ch0;
    meta["rate_ch1"] = res.histogram.rate_ch1;
    meta["events_ch0"] = res.ch0.size();
    meta["events_ch1"] = res.ch1.size();
    meta["coincidences"] = res.histogram.total();
    write_json_file((ctx.out / "g2_metadata.json").string(), meta);
    write_text_file((ctx.out / "g2.gp").string(),
                    "# gnuplot script\nset datafile separator ','\nset key autotitle columnhead\n"
                    "set xlabel 'tau (s)'\nset ylabel 'g2'\n"
                    "plot 'g2_model.csv' using 1:2 with points, '' using 1:3 with lines, '' using 1:4 with lines\n");

    std::cout << "events: " << res.ch0.size() << " + " << res.ch1.size() << " in " << res.duration << " s\n"
              << "g2(0) = " << pm(res.fit.g2_zero, res.fit.g2_zero_upper, res.fit.g2_zero_lower) << '\n';
    print_fit(res.fit.fit);
}

void simulate_lifetime(const Globals& g)
{
    auto ctx = load_context(g);
    auto res = run_purcell_pair(ctx.cfg, ctx.seed, g.threads);

    write_file(ctx.out / "lifetime_on.csv", [&](std::ostream& os) { write_decay_csv(os, res.on.decay); });
    write_file(ctx.out / "lifetime_off.csv", [&](std::ostream& os) { write_decay_csv(os, res.off.decay); });
    Json fit;
    fit["purcell"] = res.purcell;
    fit["purcell_sigma"] = res.purcell_sigma;
    fit["on"] = to_json(res.on.fit);
    fit["off"] = to_json(res.off.fit);
    fit["irf_fwhm_ps"] = ctx.cfg.detector.jitter_fwhm;
    write_json_file((ctx.out / "lifetime_fit.json").string(), fit);
    if (ctx.cfg.run.write_timetags)
    {
        write_timetags_file((ctx.out / "lifetime_on.ttag").string(), res.on.tags);
        write_timetags_file((ctx.out / "lifetime_off.ttag").string(), res.off.tags);
    }
    Json meta = metadata(g, ctx, "simulate lifetime");
    meta["duration_on_s"] = res.on.duration;
    meta["duration_off_s"] = res.off.duration;
    meta["events_on"] = res.on.tags.size();
    meta["events_off"] = res.off.tags.size();
    meta["bin_width_ps"] = ctx.cfg.lifetime.bin_width;
    meta["offset_ps"] = ctx.cfg.lifetime.offset;
    meta["rep_rate_hz"] = ctx.cfg.source.pulsed.rep_rate;
    write_json_file((ctx.out / "lifetime_metadata.json").string(), meta);
    write_text_file((ctx.out / "lifetime.gp").string(),
                    "# gnuplot script\nset datafile separator ','\nset key autotitle columnhead\n"
                    "set logscale y\nset xlabel 't (s)'\nset ylabel 'counts'\n"
                    "plot 'lifetime_on.csv' using 1:2 with steps, 'lifetime_off.csv' using 1:2 with steps\n");

    std::cout << "tau_on  = " << res.on.fit.value("decay_time") << " +/- " << res.on.fit.error("decay_time") << " s\n"
              << "tau_off = " << res.off.fit.value("decay_time") << " +/- " << res.off.fit.error("decay_time")
              << " s\n"
              << "F_P = " << res.purcell << " +/- " << res.purcell_sigma << '\n';
}

//---------------------------------------------------------------------------//
// models

void models(const Globals& g, const std::string& which)
{
    auto ctx = load_context(g);
    std::vector<ModelRow> rows;
    try
    {
        rows = model_table(ctx.cfg);
    }
    catch (const DomainError& e)
    {
        throw InputError(e.what());
    }
    bool qcurve = which == "qcurve";
    std::string name = "models_" + which + ".csv";
    std::ostringstream os;
    os << "diameter_um,q,purcell,wavelength_nm,splitting_nm" << (qcurve ? ",sigma_q" : "") << '\n';
    for (const auto& r : rows)
    {
        os << format_double(std::round(r.diameter * 1e9) / 1e3) << ',' << format_double(r.q) << ',' << format_double(r.purcell) << ','
           << format_double(r.wavelength * 1e9) << ',' << format_double(r.splitting * 1e9);
        if (qcurve)
            os << ',' << format_double(ctx.cfg.models.q_rel_error * r.q);
        os << '\n';
    }
    write_text_file((ctx.out / name).string(), os.str());
    std::cout << os.str();
    if (which == "qcurve")
        write_text_file((ctx.out / "qcurve.gp").string(), gnuplot_stub(name, "diameter (um)", "Q", 1, 2, "Q factor"));
    else if (which == "purcell")
        write_text_file((ctx.out / "purcell.gp").string(),
                        gnuplot_stub(name, "diameter (um)", "F_p", 1, 3, "Purcell factor"));
    else
        write_text_file((ctx.out / "modeshift.gp").string(),
                        gnuplot_stub(name, "diameter (um)", "wavelength (nm)", 1, 4, "Mode wavelength"));
}

//---------------------------------------------------------------------------//
// fit

CsvTable read_data(const std::string& path)
{
    try
    {
        return read_csv_file(path);
    }
    catch (const FormatError& e)
    {
        throw InputError(path + ": " + e.what());
    }
}

template<class Fn>
auto convert(const std::string& path, Fn&& fn)
{
    try
    {
        return fn();
    }
    catch (const FormatError& e)
    {
        throw InputError(path + ": " + e.what());
    }
}

void fit_g2(const Globals& g, const std::string& data)
{
    auto ctx = load_context(g);
    auto table = read_data(data);
    auto curve = convert(data, [&] { return g2_from_csv(table); });
    InstrumentResponse irf{ctx.cfg.detector.jitter_fwhm};
    G2FitOptions fo;
    fo.oversampling = ctx.cfg.fit.oversampling;
    auto res = fit_g2_exponential(curve, irf, fo);
    Json j = to_json(res);
    j["irf_fwhm_ps"] = irf.fwhm;
    write_json_file((ctx.out / "fit_g2.json").string(), j);
    std::cout << "g2(0) = " << pm(res.g2_zero, res.g2_zero_upper, res.g2_zero_lower) << '\n';
    print_fit(res.fit);
}

void fit_lifetime_cmd(const Globals& g, const std::string& data)
{
    auto ctx = load_context(g);
    auto table = read_data(data);
    auto curve = convert(data, [&] { return decay_from_csv(table); });
    LifetimeFitOptions lo;
    lo.fit_rise = ctx.cfg.fit.fit_rise;
    lo.fit_background = ctx.cfg.fit.fit_background;
    auto res = fit_lifetime(curve, InstrumentResponse{ctx.cfg.detector.jitter_fwhm}, lo);
    Json j = to_json(res);
    j["irf_fwhm_ps"] = ctx.cfg.detector.jitter_fwhm;
    write_json_file((ctx.out / "fit_lifetime.json").string(), j);
    print_fit(res);
}

void fit_qcurve(const Globals& g, const std::string& data)
{
    auto ctx = load_context(g);
    auto table = read_data(data);
    auto points = convert(data, [&] { return qpoints_from_csv(table); });
    auto res = fit_q_vs_diameter(points, ctx.cfg.cavity);
    write_json_file((ctx.out / "fit_qcurve.json").string(), to_json(res));
    print_fit(res);
}

const char* fit_kind(FitError::Kind k)
{
    switch (k)
    {
        case FitError::Kind::rank_deficient:
            return "rank deficient";
        case FitError::Kind::not_converged:
            return "not converged";
        case FitError::Kind::ill_posed:
            return "ill posed";
    }
    return "unknown";
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Resonance fluorescence micropillar simulator"};
    app.set_version_flag("--version", version);
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "TOML-style run configuration");
    app.add_option("--seed", g.seed, "Override run.seed");
    app.add_option("--threads", g.threads, "Maximum worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--deterministic", g.deterministic, "Omit timestamps from metadata");
    app.add_option("--out-dir", g.out_dir, "Override run.output_dir");

    std::function<void()> action;

    auto* sim = app.add_subcommand("simulate", "Run a Monte Carlo pipeline")->require_subcommand(1);
    sim->fallthrough();
    sim->add_subcommand("g2", "HBT measurement and antibunching fit")->fallthrough()->callback([&] {
        action = [&] { simulate_g2(g); };
    });
    sim->add_subcommand("lifetime", "On/off resonance lifetime pair and Purcell factor")->fallthrough()->callback([&] {
        action = [&] { simulate_lifetime(g); };
    });

    auto* mod = app.add_subcommand("models", "Tabulate cavity models over the diameter grid")->require_subcommand(1);
    mod->fallthrough();
    for (std::string which : {"qcurve", "purcell", "modeshift"})
        mod->add_subcommand(which)->fallthrough()->callback([&, which] { action = [&, which] { models(g, which); }; });

    auto* fit = app.add_subcommand("fit", "Fit a CSV data file")->require_subcommand(1);
    fit->fallthrough();
    std::string data;
    auto add_fit = [&](const std::string& name, void (*fn)(const Globals&, const std::string&)) {
        auto* sc = fit->add_subcommand(name);
        sc->fallthrough();
        sc->add_option("data", data, "CSV data file")->required();
        sc->callback([&, fn] { action = [&, fn] { fn(g, data); }; });
    };
    add_fit("g2", fit_g2);
    add_fit("lifetime", fit_lifetime_cmd);
    add_fit("qcurve", fit_qcurve);

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e)
    {
        return app.exit(e);
    }
    catch (const CLI::CallForVersion& e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e)
    {
        app.exit(e);
        return exit_config;
    }

    try
    {
        action();
    }
    catch (const InputError& e)
    {
        std::cerr << "rfsim: " << e.what() << '\n';
        return exit_config;
    }
    catch (const FitError& e)
    {
        std::cerr << "rfsim: fit failed (" << fit_kind(e.kind()) << "): " << e.what() << '\n';
        return exit_runtime;
    }
    catch (const std::exception& e)
    {
        std::cerr << "rfsim: " << e.what() << '\n';
        return exit_runtime;
    }
    return 0;
}
