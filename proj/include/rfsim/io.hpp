#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rfsim/config.hpp"
#include "rfsim/correlator.hpp"
#include "rfsim/dynamics.hpp"
#include "rfsim/errors.hpp"
#include "rfsim/fit.hpp"
#include "rfsim/least_squares.hpp"

namespace rfsim {

using Json = nlohmann::ordered_json;

/// Shortest text that round-trips the double exactly.
inline std::string format_double(double x)
{
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, ptr);
}

//---------------------------------------------------------------------------//
// CSV output

inline void write_g2_csv(std::ostream& os, const G2Curve& c)
{
    bool err = !c.errors.empty();
    os << (err ? "tau_s,value,error\n" : "tau_s,value\n");
    for (std::size_t i = 0; i < c.values.size(); ++i)
    {
        os << format_double(c.tau[i]) << ',' << format_double(c.values[i]);
        if (err)
            os << ',' << format_double(c.errors[i]);
        os << '\n';
    }
}

inline void write_decay_csv(std::ostream& os, const DecayCurve& c)
{
    os << "t_s,counts\n";
    for (std::size_t i = 0; i < c.t.size(); ++i)
        os << format_double(c.t[i]) << ',' << format_double(c.intensity[i]) << '\n';
}

/// Raw coincidences next to their normalization.
inline void write_histogram_csv(std::ostream& os, const CorrelationHistogram& h, const G2Curve& g2)
{
    os << "tau_ps,counts,g2,g2_err\n";
    for (std::size_t i = 0; i < h.size(); ++i)
        os << h.center(i) << ',' << h.counts[i] << ',' << format_double(g2.values[i]) << ','
           << format_double(g2.errors[i]) << '\n';
}

inline void write_timetags_csv(std::ostream& os, const TimeTagSeries& s)
{
    os << "channel,timestamp_ps\n";
    for (auto t : s.timestamps)
        os << s.channel << ',' << t << '\n';
}

//---------------------------------------------------------------------------//
// CSV input

struct CsvTable
{
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> lines;  // source line of each row

    /// Index of the first header name present, or -1.
    int column(std::initializer_list<std::string_view> names) const
    {
        for (auto n : names)
            for (std::size_t i = 0; i < header.size(); ++i)
                if (header[i] == n)
                    return int(i);
        return -1;
    }
};

/// Numeric CSV with a header row. Blank lines and lines starting with '#' are skipped.
inline CsvTable read_csv(std::istream& is)
{
    CsvTable t;
    std::string raw;
    std::size_t line = 0;
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::string cell;
        std::istringstream ss(s);
        while (std::getline(ss, cell, ','))
            out.push_back(detail::trim(cell));
        if (!s.empty() && s.back() == ',')
            out.emplace_back();
        return out;
    };
    while (std::getline(is, raw))
    {
        ++line;
        if (!raw.empty() && raw.back() == '\r')
            raw.pop_back();
        auto text = detail::trim(raw);
        if (text.empty() || text.front() == '#')
            continue;
        auto cells = split(text);
        if (t.header.empty())
        {
            t.header = cells;
            continue;
        }
        if (cells.size() != t.header.size())
            throw FormatError("expected " + std::to_string(t.header.size()) + " columns, found " +
                                  std::to_string(cells.size()),
                              line);
        std::vector<double> row;
        for (const auto& c : cells)
        {
            double x = 0.0;
            auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), x);
            if (ec != std::errc() || ptr != c.data() + c.size() || c.empty())
                throw FormatError("not a number: '" + c + "'", line);
            row.push_back(x);
        }
        t.rows.push_back(std::move(row));
        t.lines.push_back(line);
    }
    if (t.header.empty())
        throw FormatError("empty CSV file");
    return t;
}

inline CsvTable read_csv_file(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
        throw FormatError("cannot open data file '" + path + "'");
    return read_csv(is);
}

/// Columns tau_s or tau_ps, value or g2, and optionally error or g2_err.
inline G2Curve g2_from_csv(const CsvTable& t)
{
    int ct = t.column({"tau_s"});
    double scale = 1.0;
    if (ct < 0)
    {
        ct = t.column({"tau_ps"});
        scale = 1e-12;
    }
    int cv = t.column({"value", "g2"});
    int ce = t.column({"error", "g2_err"});
    if (ct < 0 || cv < 0)
        throw FormatError("g2 data needs columns tau_s (or tau_ps) and value (or g2)", 1);
    G2Curve c;
    for (const auto& r : t.rows)
    {
        c.tau.push_back(r[std::size_t(ct)] * scale);
        c.values.push_back(r[std::size_t(cv)]);
        if (ce >= 0)
            c.errors.push_back(r[std::size_t(ce)]);
    }
    return c;
}

/// Columns t_s or t_ps, and counts.
inline DecayCurve decay_from_csv(const CsvTable& t)
{
    int ct = t.column({"t_s"});
    double scale = 1.0;
    if (ct < 0)
    {
        ct = t.column({"t_ps"});
        scale = 1e-12;
    }
    int cy = t.column({"counts"});
    if (ct < 0 || cy < 0)
        throw FormatError("lifetime data needs columns t_s (or t_ps) and counts", 1);
    DecayCurve c;
    for (const auto& r : t.rows)
    {
        c.t.push_back(r[std::size_t(ct)] * scale);
        c.intensity.push_back(r[std::size_t(cy)]);
    }
    return c;
}

/// Columns diameter_um (or radius_m), q and sigma_q.
inline std::vector<QPoint> qpoints_from_csv(const CsvTable& t)
{
    int cd = t.column({"diameter_um"});
    double scale = 0.5e-6;
    if (cd < 0)
    {
        cd = t.column({"radius_m"});
        scale = 1.0;
    }
    int cq = t.column({"q"});
    int cs = t.column({"sigma_q"});
    if (cd < 0 || cq < 0 || cs < 0)
        throw FormatError("Q data needs columns diameter_um (or radius_m), q and sigma_q", 1);
    std::vector<QPoint> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i)
    {
        const auto& r = t.rows[i];
        QPoint p{r[std::size_t(cd)] * scale, r[std::size_t(cq)], r[std::size_t(cs)]};
        if (!(p.radius > 0) || !(p.q > 0) || !(p.sigma_q > 0))
            throw FormatError("diameter, q and sigma_q must be > 0", t.lines[i]);
        out.push_back(p);
    }
    return out;
}

//---------------------------------------------------------------------------//
// JSON

inline Json to_json(const FitResult& r)
{
    Json j;
    Json params = Json::object(), sigma = Json::object(), one_sided = Json::object();
    for (std::size_t i = 0; i < r.names.size(); ++i)
    {
        params[r.names[i]] = r.params[i];
        sigma[r.names[i]] = r.sigma[i];
        if (i < r.one_sided.size() && r.one_sided[i])
            one_sided[r.names[i]] = {{"lower_excess", r.one_sided[i]->lower_excess},
                                     {"upper_excess", r.one_sided[i]->upper_excess}};
        else
            one_sided[r.names[i]] = nullptr;
    }
    j["params"] = params;
    j["sigma"] = sigma;
    j["one_sided"] = one_sided;
    j["chi2"] = r.chi2;
    j["chi2_reduced"] = r.chi2_reduced;
    j["dof"] = r.dof;
    j["n_iterations"] = r.n_iterations;
    Json cov = Json::array();
    for (Eigen::Index a = 0; a < r.covariance.rows(); ++a)
        for (Eigen::Index b = 0; b < r.covariance.cols(); ++b)
            cov.push_back(r.covariance(a, b));
    j["covariance"] = cov;
    return j;
}

inline Json to_json(const G2ExponentialFit& f)
{
    Json j = to_json(f.fit);
    j["g2_zero"] = f.g2_zero;
    j["g2_zero_upper"] = f.g2_zero_upper;
    j["g2_zero_lower"] = f.g2_zero_lower;
    j["oversampling"] = f.oversampling;
    j["grid_check"] = f.grid_check;
    return j;
}

inline void write_text_file(const std::string& path, const std::string& text)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot write '" + path + "'");
    os << text;
    if (!os)
        throw std::runtime_error("write failed for '" + path + "'");
}

inline void write_json_file(const std::string& path, const Json& j)
{
    write_text_file(path, j.dump(2) + "\n");
}

/// Minimal gnuplot script plotting columns of a CSV file.
inline std::string gnuplot_stub(const std::string& csv, const std::string& xlabel, const std::string& ylabel,
                                int xcol, int ycol, const std::string& title)
{
    std::ostringstream os;
    os << "# gnuplot script\n"
       << "set datafile separator ','\n"
       << "set key autotitle columnhead\n"
       << "set xlabel '" << xlabel << "'\n"
       << "set ylabel '" << ylabel << "'\n"
       << "set title '" << title << "'\n"
       << "plot '" << csv << "' using " << xcol << ':' << ycol << " with linespoints\n";
    return os.str();
}

}  // namespace rfsim
