#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <gtest/gtest.h>

#include "rfsim/io.hpp"

namespace fs = std::filesystem;
using rfsim::Json;

namespace {

const std::string cli = RFSIM_CLI_PATH;
const std::string src = RFSIM_SOURCE_DIR;

struct Run
{
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("rfsim_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Run run_cli(const std::string& args, const fs::path& dir)
{
    auto out = dir / "stdout.txt";
    auto err = dir / "stderr.txt";
    std::string cmd = cli + " " + args + " >" + out.string() + " 2>" + err.string();
    int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    fs::remove(out);
    fs::remove(err);
    return r;
}

void write(const fs::path& p, const std::string& text)
{
    std::ofstream(p, std::ios::binary) << text;
}

Json read_json(const fs::path& p)
{
    return Json::parse(slurp(p));
}

rfsim::CsvTable read_table(const fs::path& p)
{
    return rfsim::read_csv_file(p.string());
}

}  // namespace

TEST(Cli, MissingConfigIsConfigError)
{
    auto dir = scratch("missing");
    auto r = run_cli("simulate g2 --config " + (dir / "nope.toml").string(), dir);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("nope.toml"), std::string::npos) << r.err;
}

TEST(Cli, UnknownConfigKeyReportsLine)
{
    auto dir = scratch("badkey");
    write(dir / "bad.toml", "[detector]\nquantum_efficency = 0.2\n");
    auto r = run_cli("models qcurve --config " + (dir / "bad.toml").string(), dir);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;

    write(dir / "invalid.toml", "[detector]\nquantum_efficiency = 2\n");
    EXPECT_EQ(run_cli("models qcurve --config " + (dir / "invalid.toml").string(), dir).code, 2);
}

TEST(Cli, UsageErrors)
{
    auto dir = scratch("usage");
    EXPECT_EQ(run_cli("", dir).code, 2);
    EXPECT_EQ(run_cli("simulate", dir).code, 2);
    EXPECT_EQ(run_cli("fit g2", dir).code, 2);
    EXPECT_EQ(run_cli("--help", dir).code, 0);
}

TEST(Cli, MalformedCsvReportsLine)
{
    auto dir = scratch("csv");
    write(dir / "bad.csv", "t_s,counts\n1e-11,5\n2e-11,five\n");
    auto r = run_cli("fit lifetime " + (dir / "bad.csv").string() + " --out-dir " + dir.string(), dir);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;

    EXPECT_EQ(run_cli("fit qcurve " + (dir / "absent.csv").string() + " --out-dir " + dir.string(), dir).code, 2);
}

TEST(Cli, IllPosedFitIsRuntimeError)
{
    // two nanoseconds of a 1 ns decay: fewer than five decay constants
    auto dir = scratch("illposed");
    std::ostringstream csv;
    csv << "t_s,counts\n";
    for (int i = 0; i < 125; ++i)
    {
        double t = (i + 0.5) * 16e-12;
        csv << t << ',' << std::round(1000 * std::exp(-t / 1e-9)) << '\n';
    }
    write(dir / "short.csv", csv.str());
    auto r = run_cli("fit lifetime " + (dir / "short.csv").string() + " --out-dir " + dir.string(), dir);
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("fit failed"), std::string::npos) << r.err;
}

TEST(Cli, ModelsTableOnDiameterGrid)
{
    auto dir = scratch("models");
    for (std::string which : {"qcurve", "purcell", "modeshift"})
    {
        auto r = run_cli("models " + which + " --config " + src + "/configs/default.toml --out-dir " + dir.string(), dir);
        ASSERT_EQ(r.code, 0) << r.err;
        EXPECT_TRUE(fs::exists(dir / (which + ".gp")));
        auto t = read_table(dir / ("models_" + which + ".csv"));
        ASSERT_EQ(t.rows.size(), 8u);
        EXPECT_EQ(t.header[0], "diameter_um");
        EXPECT_EQ(t.rows.front()[0], 2.1);
        EXPECT_EQ(t.rows.back()[0], 2.8);
        int q = t.column({"q"});
        for (std::size_t i = 1; i < t.rows.size(); ++i)
            EXPECT_GT(t.rows[i][std::size_t(q)], t.rows[i - 1][std::size_t(q)]);
    }

    write(dir / "lossless.toml", "[cavity]\nkappa = 0 m\n");
    auto r = run_cli("models qcurve --config " + (dir / "lossless.toml").string() + " --out-dir " + dir.string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    auto t = read_table(dir / "models_qcurve.csv");
    ASSERT_EQ(t.rows.size(), 8u);
    for (const auto& row : t.rows)
        EXPECT_EQ(row[1], 8350.0);
}

TEST(Cli, SampleRefitMatchesReference)
{
    auto dir = scratch("golden");
    for (std::string kind : {"g2", "lifetime", "qcurve"})
    {
        std::string cfg = src + (kind == "lifetime" ? "/configs/lifetime.toml" : "/configs/default.toml");
        auto r = run_cli("fit " + kind + " " + src + "/data/sample_" + kind + ".csv --config " + cfg + " --out-dir " +
                           dir.string(),
                       dir);
        ASSERT_EQ(r.code, 0) << r.err;
        EXPECT_EQ(slurp(dir / ("fit_" + kind + ".json")), slurp(src + "/data/reference/fit_" + kind + ".json"))
            << kind;
    }
}

TEST(Cli, LifetimeRoundTrip)
{
    auto dir = scratch("lifetime");
    auto r = run_cli("simulate lifetime --deterministic --config " + src + "/configs/lifetime.toml --out-dir " +
                       dir.string(),
                   dir);
    ASSERT_EQ(r.code, 0) << r.err;
    auto report = read_json(dir / "lifetime_fit.json");
    double fp = report["purcell"], sfp = report["purcell_sigma"];
    EXPECT_LT(std::abs(fp - 2.44), 3 * sfp);

    // refit the written histogram; true on-resonance lifetime is 1 ns / 2.44
    auto f = run_cli("fit lifetime " + (dir / "lifetime_on.csv").string() + " --config " + src +
                       "/configs/lifetime.toml --out-dir " + dir.string(),
                   dir);
    ASSERT_EQ(f.code, 0) << f.err;
    auto j = read_json(dir / "fit_lifetime.json");
    double tau = j["params"]["decay_time"], s = j["sigma"]["decay_time"];
    EXPECT_LT(std::abs(tau - 1e-9 / 2.44), 3 * s);
    EXPECT_EQ(j["params"], report["on"]["params"]);
}

TEST(Cli, G2RunWithDefaults)
{
    auto dir = scratch("g2");
    auto r = run_cli("simulate g2 --config " + src + "/configs/default.toml --out-dir " + dir.string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    auto fit = read_json(dir / "g2_fit.json");
    EXPECT_LE(double(fit["g2_zero"]), 0.05);
    auto meta = read_json(dir / "g2_metadata.json");
    EXPECT_TRUE(meta.contains("generated_at"));
    EXPECT_TRUE(fs::exists(dir / "g2.gp"));
    auto hist = read_table(dir / "g2_histogram.csv");
    EXPECT_EQ(hist.header, (std::vector<std::string>{"tau_ps", "counts", "g2", "g2_err"}));
    EXPECT_EQ(hist.rows.size(), 401u);

    // the written histogram refits to the same parameters
    auto f = run_cli("fit g2 " + (dir / "g2_histogram.csv").string() + " --config " + src +
                       "/configs/default.toml --out-dir " + dir.string(),
                   dir);
    ASSERT_EQ(f.code, 0) << f.err;
    auto refit = read_json(dir / "fit_g2.json");
    EXPECT_EQ(refit["params"], fit["params"]);
}

TEST(Cli, DeterministicAcrossThreadCounts)
{
    auto base = scratch("determinism");
    // a shorter acquisition with time tags written out
    std::string cfg = slurp(src + "/configs/default.toml");
    auto pos = cfg.find("n_events = 1000000");
    ASSERT_NE(pos, std::string::npos);
    cfg.replace(pos, std::string("n_events = 1000000").size(), "n_events = 200000\nwrite_timetags = true");
    write(base / "small.toml", cfg);

    auto run = [&](const std::string& name, int threads) {
        auto d = base / name;
        auto r = run_cli("simulate g2 --deterministic --seed 7 --threads " + std::to_string(threads) + " --config " +
                           (base / "small.toml").string() + " --out-dir " + d.string(),
                       base);
        EXPECT_EQ(r.code, 0) << r.err;
        return d;
    };
    auto a = run("a", 1);
    auto b = run("b", 3);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(a))
    {
        ++files;
        EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path().filename();
    }
    EXPECT_GE(files, 6u);
    EXPECT_FALSE(read_json(a / "g2_metadata.json").contains("generated_at"));
    EXPECT_EQ(read_json(a / "g2_metadata.json")["seed"], 7);
}
