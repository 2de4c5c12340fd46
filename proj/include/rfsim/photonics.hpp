#pragma once

// Closed-form micropillar cavity and emitter parameter models.
// All lengths are in meters, all rates are angular (rad/s).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "rfsim/errors.hpp"

namespace rfsim {

inline constexpr double speed_of_light = 299792458.0;

/// First zero of J0; transverse eigenvalue of the fundamental pillar mode.
inline constexpr double bessel_j0_first_zero = 2.404825557695773;

struct CavityGeometry
{
    double radius = 1.25e-6;
    double waveguide_width = 0.95e-6;
    double n_core = 3.46;
    double beta = 2.0 * std::numbers::pi * 3.453 / 930e-9;  // propagation constant (1/m), n_eff 3.453
    double lambda_planar = 930e-9;
    double q_planar = 8350.0;
    double kappa = 3.8e-10;  // sidewall loss parameter (m)

    void validate() const
    {
        if (!(radius > 0))
            throw DomainError("CavityGeometry: radius must be > 0");
        if (!(n_core >= 1))
            throw DomainError("CavityGeometry: n_core must be >= 1");
        if (!(q_planar > 0))
            throw DomainError("CavityGeometry: q_planar must be > 0");
        if (!(kappa >= 0))
            throw DomainError("CavityGeometry: kappa must be >= 0");
        if (!(beta >= 0))
            throw DomainError("CavityGeometry: beta must be >= 0");
        if (!(lambda_planar > 0))
            throw DomainError("CavityGeometry: lambda_planar must be > 0");
        if (!(waveguide_width >= 0))
            throw DomainError("CavityGeometry: waveguide_width must be >= 0");
    }
};

struct CavityMode
{
    double wavelength = 0.0;
    double q_total = 0.0;
    double mode_volume = 0.0;
    double splitting = 0.0;
};

/// Two-level emitter rates. `purcell` multiplies gamma_rad when on resonance with the cavity.
struct EmitterParams
{
    double gamma_rad = 2.0 * std::numbers::pi * 2.5e9;
    double gamma_deph = 0.0;
    double rabi = 2.0 * std::numbers::pi * 1.0e9;
    double detuning = 0.0;
    double purcell = 1.0;

    /// Total population decay rate.
    double gamma_eff() const { return purcell * gamma_rad; }

    /// Coherence decay rate.
    double gamma_coh() const { return 0.5 * gamma_eff() + gamma_deph; }

    void validate() const
    {
        if (!(gamma_rad >= 0) || !(gamma_deph >= 0) || !(rabi >= 0))
            throw DomainError("EmitterParams: rates must be >= 0");
        if (!std::isfinite(detuning))
            throw DomainError("EmitterParams: detuning must be finite");
        if (!(purcell > 0))
            throw DomainError("EmitterParams: purcell factor must be > 0");
    }
};

/// Propagation constant of a guided mode with effective index n_eff.
inline double propagation_constant(double n_eff, double lambda)
{
    if (!(n_eff > 0) || !(lambda > 0))
        throw DomainError("propagation_constant: n_eff and lambda must be > 0");
    return 2.0 * std::numbers::pi * n_eff / lambda;
}

/// F_p = 3/(4 pi^2) (lambda/n)^3 Q / V
inline double purcell_factor(double lambda, double n, double q, double v)
{
    if (!(lambda > 0) || !(n > 0) || !(q > 0) || !(v > 0))
        throw DomainError("purcell_factor: all inputs must be > 0");
    double ln = lambda / n;
    return 3.0 / (4.0 * std::numbers::pi * std::numbers::pi) * ln * ln * ln * q / v;
}

struct TransverseWavenumber
{
    double value = 0.0;
    bool clamped = false;  // n^2 k^2 < beta^2; value forced to 0
};

/// k_t = sqrt(n^2 k^2 - beta^2) with k = 2 pi / lambda_planar.
inline TransverseWavenumber transverse_wavenumber(const CavityGeometry& geom)
{
    double k = 2.0 * std::numbers::pi / geom.lambda_planar;
    double nk = geom.n_core * k;
    double sq = nk * nk - geom.beta * geom.beta;
    if (sq < 0)
        return {0.0, true};
    return {std::sqrt(sq), false};
}

/// |J0(k_t R)| below this is treated as a field node at the sidewall.
inline constexpr double scattering_node_tolerance = 1e-12;

inline bool is_scattering_node(const CavityGeometry& geom)
{
    double x = transverse_wavenumber(geom).value * geom.radius;
    return std::abs(std::cyl_bessel_j(0.0, x)) < scattering_node_tolerance;
}

/// Q_scatt = R / (kappa J0^2(k_t R)). Returns +inf when kappa = 0 or at a node of J0.
inline double q_scattering(const CavityGeometry& geom)
{
    if (!(geom.radius > 0))
        throw DomainError("q_scattering: radius must be > 0");
    if (geom.kappa == 0.0)
        return std::numeric_limits<double>::infinity();
    double j0 = std::cyl_bessel_j(0.0, transverse_wavenumber(geom).value * geom.radius);
    if (std::abs(j0) < scattering_node_tolerance)
        return std::numeric_limits<double>::infinity();
    return geom.radius / (geom.kappa * j0 * j0);
}

/// 1/Q = 1/Q_planar + 1/Q_scatt
inline double q_total(const CavityGeometry& geom)
{
    if (!(geom.q_planar > 0))
        throw DomainError("q_total: q_planar must be > 0");
    double inv = 1.0 / geom.q_planar + 1.0 / q_scattering(geom);
    return 1.0 / inv;
}

/// Planar resonance blue-shifted by transverse confinement:
/// omega^2 = omega_planar^2 + (c u01 / (n R))^2.
inline double mode_wavelength(const CavityGeometry& geom, double u01 = bessel_j0_first_zero)
{
    if (!(geom.radius > 0))
        throw DomainError("mode_wavelength: radius must be > 0");
    if (std::isinf(geom.radius))
        return geom.lambda_planar;
    double inv_lp = 1.0 / geom.lambda_planar;
    double inv_lt = u01 / (2.0 * std::numbers::pi * geom.n_core * geom.radius);
    return 1.0 / std::sqrt(inv_lp * inv_lp + inv_lt * inv_lt);
}

/// Polarization mode splitting, power law A / R^p.
inline double mode_splitting(const CavityGeometry& geom, double amp, double exponent)
{
    if (!(amp >= 0))
        throw DomainError("mode_splitting: amplitude must be >= 0");
    if (!(exponent > 0))
        throw DomainError("mode_splitting: exponent must be > 0");
    if (!(geom.radius > 0))
        throw DomainError("mode_splitting: radius must be > 0");
    return amp / std::pow(geom.radius, exponent);
}

/// F_p as the ratio of off- to on-resonance decay times.
inline double purcell_from_lifetimes(double tau_on, double tau_off)
{
    if (!(tau_on > 0) || !(tau_off > 0))
        throw DomainError("purcell_from_lifetimes: lifetimes must be > 0");
    return tau_off / tau_on;
}

//---------------------------------------------------------------------------//
/*!
 * \brief Mode volume as a function of pillar radius.
 *
 * Three sources, in priority order: a fixed constant, a (radius, volume)
 * table interpolated linearly, or the cylinder-overlap heuristic
 * V = eta * pi R^2 * (lambda / n).
 */
struct ModeVolumeModel
{
    double eta = 3.0;
    double constant = 0.0;  // > 0 overrides everything else
    std::vector<std::pair<double, double>> table;  // sorted by radius

    double operator()(double radius, double lambda, double n) const
    {
        if (constant > 0)
            return constant;
        if (!table.empty())
        {
            if (radius <= table.front().first)
                return table.front().second;
            if (radius >= table.back().first)
                return table.back().second;
            auto hi = std::lower_bound(table.begin(), table.end(), radius,
                                       [](const auto& e, double r) { return e.first < r; });
            auto lo = hi - 1;
            double f = (radius - lo->first) / (hi->first - lo->first);
            return lo->second + f * (hi->second - lo->second);
        }
        if (!(eta > 0))
            throw DomainError("ModeVolumeModel: eta must be > 0");
        return eta * std::numbers::pi * radius * radius * (lambda / n);
    }
};

struct ModeModel
{
    double u01 = bessel_j0_first_zero;
    ModeVolumeModel volume;
    double splitting_amp = 0.0;
    double splitting_exp = 2.0;
};

inline CavityMode cavity_mode(const CavityGeometry& geom, const ModeModel& model)
{
    geom.validate();
    CavityMode mode;
    mode.wavelength = mode_wavelength(geom, model.u01);
    mode.q_total = q_total(geom);
    mode.mode_volume = model.volume(geom.radius, mode.wavelength, geom.n_core);
    mode.splitting = mode_splitting(geom, model.splitting_amp, model.splitting_exp);
    return mode;
}

inline double purcell_factor(const CavityMode& mode, double n)
{
    return purcell_factor(mode.wavelength, n, mode.q_total, mode.mode_volume);
}

}  // namespace rfsim
