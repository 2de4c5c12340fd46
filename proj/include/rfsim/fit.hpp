#pragma once

// Model fits: IRF-convolved antibunching dip, Rabi-series g2, IRF-convolved
// lifetime decays and cavity Q versus pillar size.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rfsim/convolution.hpp"
#include "rfsim/dynamics.hpp"
#include "rfsim/errors.hpp"
#include "rfsim/least_squares.hpp"
#include "rfsim/photonics.hpp"

namespace rfsim {

inline constexpr double grid_check_tolerance = 1e-4;

namespace detail {

inline double curve_spacing(const std::vector<double>& tau)
{
    if (tau.size() < 3)
        throw DomainError("fit: curve needs at least 3 points");
    double d = (tau.back() - tau.front()) / double(tau.size() - 1);
    for (std::size_t i = 1; i < tau.size(); ++i)
        if (std::abs(tau[i] - tau[i - 1] - d) > 1e-6 * d)
            throw DomainError("fit: tau grid must be uniform");
    return d;
}

inline std::vector<double> curve_errors(const G2Curve& c)
{
    if (c.errors.empty())
        return std::vector<double>(c.values.size(), 1.0);
    if (c.errors.size() != c.values.size())
        throw DomainError("fit: errors and values differ in length");
    std::vector<double> e = c.errors;
    for (auto& v : e)
        if (!(v > 0))
            v = 1.0;
    return e;
}

inline double wing_mean(const G2Curve& c, double frac = 0.2)
{
    auto n = c.values.size();
    auto k = std::max<std::size_t>(1, std::size_t(double(n) * frac / 2));
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        s += c.values[i] + c.values[n - 1 - i];
    return s / double(2 * k);
}

}  // namespace detail

struct G2FitOptions
{
    int oversampling = 4;
    int max_oversampling = 64;
    bool bin_average = true;  // data are histogram bins of width equal to the grid spacing
};

/// Exponential antibunching fit, B (1 - a e^{-|tau|/tau_c}) convolved with the IRF.
struct G2ExponentialFit
{
    FitResult fit;  // parameters: baseline, amplitude, tau_c
    double g2_zero = 1.0;  // deconvolved, 1 - amplitude
    double g2_zero_upper = 0.0;
    double g2_zero_lower = 0.0;
    int oversampling = 4;
    double grid_check = 0.0;  // max |model(o) - model(o/2)| / baseline
    G2Curve convolved;  // normalized fit curve as measured
    G2Curve deconvolved;  // normalized fit curve for an ideal detector
};

//---------------------------------------------------------------------------//
/*!
 * \brief Fit the antibunching dip of a normalized g2 histogram.
 *
 * The oversampled grid is refined (factor 2 each time) until the model with
 * half the oversampling agrees to `grid_check_tolerance`.
 */
inline G2ExponentialFit fit_g2_exponential(const G2Curve& g2, const InstrumentResponse& irf,
                                           const G2FitOptions& opts = {})
{
    irf.validate();
    double dt = detail::curve_spacing(g2.tau);
    double half_span = std::max(std::abs(g2.tau.front()), std::abs(g2.tau.back()));
    if (irf.fwhm * 1e-12 >= half_span)
        throw FitError(FitError::Kind::ill_posed, "fit_g2_exponential: IRF is wider than the data window");
    auto err = detail::curve_errors(g2);
    double sigma = irf.sigma_seconds();
    const auto n = Eigen::Index(g2.values.size());

    // initial guess from the wings and the dip area
    double base = detail::wing_mean(g2);
    if (!(base > 0))
        base = 1.0;
    double area = 0.0;
    double ymin = base;
    for (double v : g2.values)
    {
        area += (base - v) / base * dt;
        ymin = std::min(ymin, v);
    }
    double a0 = std::clamp(1.5 * (1.0 - ymin / base), 0.3, 0.9);
    double tc0 = std::max(area / (2.0 * a0), 0.5 * dt);
    if (!(tc0 > 0) || !std::isfinite(tc0))
        tc0 = dt;

    // a zero-width IRF needs no grid: exact bin means (or point values)
    const bool direct = sigma == 0.0;
    auto model = [&](const GridConvolver* conv, double b, double a, double tc) {
        std::vector<double> m;
        if (direct)
        {
            m.reserve(g2.tau.size());
            for (double t : g2.tau)
                m.push_back(opts.bin_average ? 1.0 - a * mean_abs_exponential(t - 0.5 * dt, t + 0.5 * dt, tc)
                                             : 1.0 - a * std::exp(-std::abs(t) / tc));
        }
        else
        {
            m = conv->apply([&](double lo, double hi) { return 1.0 - a * mean_abs_exponential(lo, hi, tc); });
        }
        for (auto& v : m)
            v *= b;
        return m;
    };

    G2ExponentialFit out;
    std::vector<double> p{base, a0, tc0};
    std::vector<Bound> bounds{{0.0, std::numeric_limits<double>::infinity()},
                              {0.0, 1.0},
                              {1e-3 * dt, std::numeric_limits<double>::infinity()}};
    LsqOptions lopts;
    lopts.typical = {base, 1.0, tc0};
    for (int over = direct ? 1 : opts.oversampling;; over *= 2)
    {
        std::optional<GridConvolver> conv;
        if (!direct)
            conv.emplace(g2.tau.front(), dt, g2.tau.size(), sigma, over, opts.bin_average);
        const GridConvolver* cp = conv ? &*conv : nullptr;
        auto residuals = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r) {
            auto m = model(cp, q[0], q[1], q[2]);
            for (Eigen::Index i = 0; i < n; ++i)
                r[i] = (g2.values[std::size_t(i)] - m[std::size_t(i)]) / err[std::size_t(i)];
        };
        out.fit = least_squares(residuals, n, p, bounds, {"baseline", "amplitude", "tau_c"}, lopts);
        p = out.fit.params;
        auto fine_m = model(cp, 1.0, p[1], p[2]);
        out.grid_check = 0.0;
        if (!direct)
        {
            GridConvolver coarse(g2.tau.front(), dt, g2.tau.size(), sigma, std::max(1, over / 2), opts.bin_average);
            auto coarse_m = model(&coarse, 1.0, p[1], p[2]);
            for (std::size_t i = 0; i < fine_m.size(); ++i)
                out.grid_check = std::max(out.grid_check, std::abs(fine_m[i] - coarse_m[i]));
        }
        out.oversampling = over;
        if (out.grid_check < grid_check_tolerance)
        {
            out.convolved.tau = g2.tau;
            out.convolved.values = fine_m;
            break;
        }
        if (over * 2 > opts.max_oversampling)
            throw FitError(FitError::Kind::ill_posed,
                           "fit_g2_exponential: grid convolution did not converge; data bins too coarse for the IRF");
    }

    double a = out.fit.value("amplitude");
    out.g2_zero = 1.0 - a;
    const auto& os = out.fit.one_sided[out.fit.index("amplitude")];
    if (os)
    {
        // amplitude pinned: at 1 -> g2(0) = 0 +excess -0; at 0 -> g2(0) = 1 +0 -excess
        out.g2_zero_upper = os->lower_excess;
        out.g2_zero_lower = os->upper_excess;
    }
    else
    {
        double s = out.fit.error("amplitude");
        out.g2_zero_upper = s;
        out.g2_zero_lower = std::min(s, out.g2_zero);
    }
    out.deconvolved.tau = g2.tau;
    for (double t : g2.tau)
        out.deconvolved.values.push_back(1.0 - a * std::exp(-std::abs(t) / out.fit.value("tau_c")));
    return out;
}

struct RabiFitOptions
{
    std::optional<double> gamma_fixed;  // rad/s
    double gamma_guess = 2.0 * std::numbers::pi * 2.5e9;
    std::vector<double> rabi_guess;  // rad/s per curve; empty = coarse scan
    G2FitOptions grid;
};

//---------------------------------------------------------------------------//
/*!
 * \brief Joint fit of a power series of g2 curves to the resonant
 * closed-form g2 convolved with the IRF.
 *
 * Gamma is shared across curves; each curve has its own Rabi frequency and
 * baseline. Returns one FitResult per curve with parameters
 * (gamma, rabi, baseline).
 */
inline std::vector<FitResult> fit_g2_rabi(const std::vector<G2Curve>& series, const InstrumentResponse& irf,
                                          const RabiFitOptions& opts = {})
{
    irf.validate();
    if (series.empty())
        throw DomainError("fit_g2_rabi: empty series");
    const std::size_t nc = series.size();
    double sigma = irf.sigma_seconds();

    struct CurveData
    {
        double dt;
        std::vector<double> err;
        std::vector<GridConvolver> conv;
    };
    std::vector<CurveData> cd;
    Eigen::Index total = 0;
    for (const auto& c : series)
    {
        CurveData d;
        d.dt = detail::curve_spacing(c.tau);
        double half_span = std::max(std::abs(c.tau.front()), std::abs(c.tau.back()));
        if (irf.fwhm * 1e-12 >= half_span)
            throw FitError(FitError::Kind::ill_posed, "fit_g2_rabi: IRF is wider than the data window");
        d.err = detail::curve_errors(c);
        cd.push_back(std::move(d));
        total += Eigen::Index(c.values.size());
    }

    auto curve_model = [&](const GridConvolver& conv, double gamma, double rabi, double base) {
        EmitterParams ep;
        ep.gamma_rad = gamma;
        ep.purcell = 1.0;
        ep.rabi = rabi;
        ep.gamma_deph = 0.0;
        ep.detuning = 0.0;
        auto point = [&](double t) { return g2_closed_form(ep, t); };
        auto m = conv.apply([&](double lo, double hi) { return simpson_cell_mean(point, lo, hi); });
        for (auto& v : m)
            v *= base;
        return m;
    };

    double gamma0 = opts.gamma_fixed.value_or(opts.gamma_guess);
    std::vector<double> p{gamma0};
    for (std::size_t c = 0; c < nc; ++c)
    {
        double base = detail::wing_mean(series[c]);
        double rabi = 0.0;
        if (c < opts.rabi_guess.size())
        {
            rabi = opts.rabi_guess[c];
        }
        else
        {
            // coarse log scan of Omega / Gamma at the initial Gamma
            GridConvolver conv(series[c].tau.front(), cd[c].dt, series[c].tau.size(), sigma, opts.grid.oversampling,
                               opts.grid.bin_average);
            double best = std::numeric_limits<double>::infinity();
            for (int k = 0; k <= 40; ++k)
            {
                double trial = gamma0 * std::pow(10.0, -1.5 + 0.075 * k);
                auto m = curve_model(conv, gamma0, trial, base);
                double chi2 = 0.0;
                for (std::size_t i = 0; i < m.size(); ++i)
                {
                    double r = (series[c].values[i] - m[i]) / cd[c].err[i];
                    chi2 += r * r;
                }
                if (chi2 < best)
                {
                    best = chi2;
                    rabi = trial;
                }
            }
        }
        p.push_back(rabi);
        p.push_back(base > 0 ? base : 1.0);
    }
    std::vector<Bound> bounds{{1e-6 * gamma0, std::numeric_limits<double>::infinity()}};
    std::vector<std::string> names{"gamma"};
    for (std::size_t c = 0; c < nc; ++c)
    {
        bounds.push_back({0.0, std::numeric_limits<double>::infinity()});
        bounds.push_back({0.0, std::numeric_limits<double>::infinity()});
        names.push_back("rabi_" + std::to_string(c));
        names.push_back("baseline_" + std::to_string(c));
    }
    LsqOptions lopts;
    lopts.fixed.assign(p.size(), false);
    lopts.fixed[0] = opts.gamma_fixed.has_value();
    lopts.typical = p;
    for (auto& t : lopts.typical)
        if (!(t > 0))
            t = gamma0;

    FitResult joint;
    for (int over = opts.grid.oversampling;; over *= 2)
    {
        for (std::size_t c = 0; c < nc; ++c)
        {
            cd[c].conv.clear();
            cd[c].conv.emplace_back(series[c].tau.front(), cd[c].dt, series[c].tau.size(), sigma, over,
                                    opts.grid.bin_average);
            cd[c].conv.emplace_back(series[c].tau.front(), cd[c].dt, series[c].tau.size(), sigma,
                                    std::max(1, over / 2), opts.grid.bin_average);
        }
        auto residuals = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r) {
            Eigen::Index row = 0;
            for (std::size_t c = 0; c < nc; ++c)
            {
                auto m = curve_model(cd[c].conv[0], q[0], q[Eigen::Index(1 + 2 * c)], q[Eigen::Index(2 + 2 * c)]);
                for (std::size_t i = 0; i < m.size(); ++i)
                    r[row++] = (series[c].values[i] - m[i]) / cd[c].err[i];
            }
        };
        joint = least_squares(residuals, total, p, bounds, names, lopts);
        p = joint.params;
        double check = 0.0;
        for (std::size_t c = 0; c < nc; ++c)
        {
            auto fm = curve_model(cd[c].conv[0], p[0], p[1 + 2 * c], 1.0);
            auto cm = curve_model(cd[c].conv[1], p[0], p[1 + 2 * c], 1.0);
            for (std::size_t i = 0; i < fm.size(); ++i)
                check = std::max(check, std::abs(fm[i] - cm[i]));
        }
        if (check < grid_check_tolerance)
            break;
        if (over * 2 > opts.grid.max_oversampling)
            throw FitError(FitError::Kind::ill_posed, "fit_g2_rabi: grid convolution did not converge");
    }

    std::vector<FitResult> out;
    for (std::size_t c = 0; c < nc; ++c)
    {
        std::size_t idx[3] = {0, 1 + 2 * c, 2 + 2 * c};
        FitResult r;
        r.names = {"gamma", "rabi", "baseline"};
        r.covariance = Eigen::MatrixXd::Zero(3, 3);
        for (int u = 0; u < 3; ++u)
        {
            r.params.push_back(joint.params[idx[u]]);
            r.sigma.push_back(joint.sigma[idx[u]]);
            r.one_sided.push_back(joint.one_sided[idx[u]]);
            for (int v = 0; v < 3; ++v)
                r.covariance(u, v) = joint.covariance(Eigen::Index(idx[u]), Eigen::Index(idx[v]));
        }
        r.chi2 = joint.chi2;
        r.chi2_reduced = joint.chi2_reduced;
        r.dof = joint.dof;
        r.n_iterations = joint.n_iterations;
        out.push_back(std::move(r));
    }
    return out;
}

struct LifetimeFitOptions
{
    bool fit_rise = true;
    bool fit_background = false;
    bool bin_average = true;  // intensity[i] is a histogram bin centered on t[i]
    bool poisson_likelihood = true;  // intensity holds raw counts
};

/// IRF-convolved A (1 - e^{-x/rise}) e^{-x/decay} (+ constant background), x = t - t0.
inline double lifetime_model(double t, double amplitude, double t0, double rise, double decay, double background,
                             double irf_sigma)
{
    double x = t - t0;
    double v = exp_modified_gaussian(x, 1.0 / decay, irf_sigma);
    if (rise > 0)
        v -= exp_modified_gaussian(x, 1.0 / rise + 1.0 / decay, irf_sigma);
    return amplitude * v + background;
}

namespace detail {

/// Gaussian probability mass in [lo, hi], from whichever tail keeps precision.
inline double gauss_mass(double lo, double hi, double sigma)
{
    if (sigma <= 0)
        return (hi > 0 ? 1.0 : 0.0) - (lo > 0 ? 1.0 : 0.0);
    double z = 1.0 / (sigma * std::numbers::sqrt2);
    if (lo >= 0)
        return 0.5 * (std::erfc(lo * z) - std::erfc(hi * z));
    if (hi <= 0)
        return 0.5 * (std::erfc(-hi * z) - std::erfc(-lo * z));
    return 1.0 - 0.5 * (std::erfc(-lo * z) + std::erfc(hi * z));
}

/// Integral of exp_modified_gaussian over [lo, hi]. Uses EMG' = G - rate EMG.
inline double emg_integral(double lo, double hi, double rate, double sigma)
{
    return (gauss_mass(lo, hi, sigma) + exp_modified_gaussian(lo, rate, sigma) - exp_modified_gaussian(hi, rate, sigma))
           / rate;
}

}  // namespace detail

/// Mean of lifetime_model over [lo, hi].
inline double lifetime_bin_mean(double lo, double hi, double amplitude, double t0, double rise, double decay,
                                double background, double irf_sigma)
{
    double v = detail::emg_integral(lo - t0, hi - t0, 1.0 / decay, irf_sigma);
    if (rise > 0)
        v -= detail::emg_integral(lo - t0, hi - t0, 1.0 / rise + 1.0 / decay, irf_sigma);
    return amplitude * v / (hi - lo) + background;
}

/// Fit a folded decay histogram. Parameters: amplitude, t0, rise_time, decay_time, background.
inline FitResult fit_lifetime(const DecayCurve& decay, const InstrumentResponse& irf,
                              const LifetimeFitOptions& opts = {})
{
    irf.validate();
    const auto& t = decay.t;
    const auto& y = decay.intensity;
    if (t.size() < 8 || t.size() != y.size())
        throw DomainError("fit_lifetime: need at least 8 matching (t, counts) points");
    double sigma = irf.sigma_seconds();
    double span = t.back() - t.front();
    double dt = opts.bin_average ? detail::curve_spacing(t) : span / double(t.size() - 1);

    auto peak = std::size_t(std::max_element(y.begin(), y.end()) - y.begin());
    double ymax = y[peak];
    if (!(ymax > 0))
        throw FitError(FitError::Kind::ill_posed, "fit_lifetime: empty histogram");
    // tail slope estimate from the peak down to 5 % of it
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    for (std::size_t i = peak; i < y.size() && y[i] > 0.05 * ymax; ++i)
    {
        if (!(y[i] > 0))
            continue;
        double ly = std::log(y[i]);
        sx += t[i];
        sy += ly;
        sxx += t[i] * t[i];
        sxy += t[i] * ly;
        ++cnt;
    }
    double tau0 = 0.1 * span;
    if (cnt >= 3)
    {
        double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
        if (slope < 0)
            tau0 = -1.0 / slope;
    }
    tau0 = std::clamp(tau0, 2.0 * dt, span);
    double rise0 = opts.fit_rise ? 0.2 * tau0 : 0.0;
    double t00 = t[peak] - (opts.fit_rise ? rise0 * std::log(1.0 + tau0 / rise0) : 0.0) - sigma;
    t00 = std::max(t00, t.front() - 0.5 * span);
    double amp0 = ymax * (opts.fit_rise ? 2.0 : 1.0);

    std::vector<double> err(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        err[i] = std::sqrt(std::max(y[i], 1.0));

    std::vector<double> p{amp0, t00, rise0, tau0, 0.0};
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<Bound> bounds{{0.0, inf}, {t.front() - span, t.back()}, {0.0, span}, {1e-3 * dt, 10.0 * span}, {0.0, inf}};
    LsqOptions lopts;
    lopts.fixed = {false, false, !opts.fit_rise, false, !opts.fit_background};
    lopts.typical = {amp0, std::max(sigma, dt), tau0, tau0, std::max(1.0, 1e-3 * ymax)};
    const auto n = Eigen::Index(y.size());
    auto model_at = [&](std::size_t i, const double* q) {
        double ti = t[i];
        return opts.bin_average ? lifetime_bin_mean(ti - 0.5 * dt, ti + 0.5 * dt, q[0], q[1], q[2], q[3], q[4], sigma)
                                : lifetime_model(ti, q[0], q[1], q[2], q[3], q[4], sigma);
    };
    auto residuals = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r) {
        for (Eigen::Index i = 0; i < n; ++i)
            r[i] = (y[std::size_t(i)] - model_at(std::size_t(i), q.data())) / err[std::size_t(i)];
    };
    const std::vector<std::string> names{"amplitude", "t0", "rise_time", "decay_time", "background"};
    auto res = least_squares(residuals, n, p, bounds, names, lopts);
    if (opts.poisson_likelihood)
    {
        // Signed deviance residuals: the sum of squares is the Poisson deviance,
        // so the minimum is the maximum-likelihood estimate and J^T J the
        // Fisher information (no chi2 rescaling).
        auto deviance = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r) {
            for (Eigen::Index i = 0; i < n; ++i)
            {
                double yi = y[std::size_t(i)];
                double m = std::max(model_at(std::size_t(i), q.data()), 1e-300);
                double d = 2.0 * (m - yi + (yi > 0 ? yi * std::log(yi / m) : 0.0));
                r[i] = (yi >= m ? 1.0 : -1.0) * std::sqrt(std::max(d, 0.0));
            }
        };
        LsqOptions mle = lopts;
        mle.scale_covariance = false;
        res = least_squares(deviance, n, res.params, bounds, names, mle);
    }
    if (span < 5.0 * res.value("decay_time"))
        throw FitError(FitError::Kind::ill_posed, "fit_lifetime: histogram covers fewer than 5 decay constants");
    return res;
}

/// One measured (radius, Q) point.
struct QPoint
{
    double radius = 0.0;  // m
    double q = 0.0;
    double sigma_q = 0.0;
};

/// Fit the sidewall loss parameter kappa with every other geometry field held fixed.
inline FitResult fit_q_vs_diameter(const std::vector<QPoint>& data, const CavityGeometry& fixed_geometry)
{
    if (data.size() < 3)
        throw DomainError("fit_q_vs_diameter: need at least 3 radii");
    fixed_geometry.validate();
    for (const auto& d : data)
        if (!(d.radius > 0) || !(d.q > 0) || !(d.sigma_q > 0))
            throw DomainError("fit_q_vs_diameter: radius, Q and sigma_Q must be > 0");

    // initial kappa from inverting each point
    std::vector<double> guesses;
    for (const auto& d : data)
    {
        CavityGeometry g = fixed_geometry;
        g.radius = d.radius;
        double j0 = std::cyl_bessel_j(0.0, transverse_wavenumber(g).value * d.radius);
        double inv = 1.0 / d.q - 1.0 / g.q_planar;
        if (inv > 0 && j0 != 0)
            guesses.push_back(d.radius * inv / (j0 * j0));
    }
    double k0 = 1e-10;
    if (!guesses.empty())
    {
        std::nth_element(guesses.begin(), guesses.begin() + std::ptrdiff_t(guesses.size() / 2), guesses.end());
        k0 = guesses[guesses.size() / 2];
    }

    const auto n = Eigen::Index(data.size());
    auto residuals = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r) {
        for (Eigen::Index i = 0; i < n; ++i)
        {
            CavityGeometry g = fixed_geometry;
            g.radius = data[std::size_t(i)].radius;
            g.kappa = q[0];
            r[i] = (data[std::size_t(i)].q - q_total(g)) / data[std::size_t(i)].sigma_q;
        }
    };
    LsqOptions lopts;
    lopts.typical = {std::max(k0, 1e-12)};
    // sigma_Q are measurement errors, not relative weights
    lopts.scale_covariance = false;
    return least_squares(residuals, n, {k0}, {{0.0, std::numeric_limits<double>::infinity()}}, {"kappa"}, lopts);
}

}  // namespace rfsim
