#pragma once

// Deterministic two-level-emitter dynamics: optical Bloch equations,
// steady state, and g2(tau) from the quantum regression theorem.

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "rfsim/errors.hpp"
#include "rfsim/photonics.hpp"

namespace rfsim {

/// Excited population and the coherence <sigma_-> = coh_real + i coh_imag.
struct BlochState
{
    double pop_excited = 0.0;
    double coh_real = 0.0;
    double coh_imag = 0.0;

    static BlochState ground() { return {}; }
    static BlochState excited() { return {1.0, 0.0, 0.0}; }

    /// |coherence|^2 exceeding P(1-P) by more than `tol`, or P outside [0,1].
    bool physical(double tol = 1e-9) const
    {
        double c2 = coh_real * coh_real + coh_imag * coh_imag;
        return pop_excited >= -tol && pop_excited <= 1 + tol
               && c2 <= pop_excited * (1 - pop_excited) + tol;
    }
};

struct G2Curve
{
    std::vector<double> tau;  // s, uniform and symmetric about 0
    std::vector<double> values;
    std::vector<double> errors;  // empty when the curve is noiseless
};

struct DecayCurve
{
    std::vector<double> t;  // s, bin centers
    std::vector<double> intensity;  // counts per bin
    std::optional<double> rise_time;
    std::optional<double> decay_time;
};

/// Time derivative of the optical Bloch equations in the frame rotating at the laser frequency.
inline BlochState bloch_rhs(const BlochState& s, const EmitterParams& p)
{
    double gamma = p.gamma_eff();
    double g2 = p.gamma_coh();
    BlochState d;
    d.pop_excited = -p.rabi * s.coh_imag - gamma * s.pop_excited;
    d.coh_real = -p.detuning * s.coh_imag - g2 * s.coh_real;
    d.coh_imag = p.detuning * s.coh_real + 0.5 * p.rabi * (2.0 * s.pop_excited - 1.0) - g2 * s.coh_imag;
    return d;
}

inline BlochState steady_state(const EmitterParams& p)
{
    p.validate();
    double gamma = p.gamma_eff();
    double g2 = p.gamma_coh();
    if (!(gamma > 0))
        throw DomainError("steady_state: total decay rate must be > 0");
    double sat = p.rabi * p.rabi * g2 / (gamma * (g2 * g2 + p.detuning * p.detuning));
    BlochState s;
    s.pop_excited = 0.5 * sat / (1.0 + sat);
    double v = 0.5 * p.rabi * (2.0 * s.pop_excited - 1.0) * g2 / (g2 * g2 + p.detuning * p.detuning);
    s.coh_imag = v;
    s.coh_real = -p.detuning * v / g2;
    return s;
}

namespace detail {

using OdeState = std::array<double, 3>;

inline OdeState to_array(const BlochState& s) { return {s.pop_excited, s.coh_real, s.coh_imag}; }
inline BlochState from_array(const OdeState& a) { return {a[0], a[1], a[2]}; }

struct BlochSystem
{
    EmitterParams p;
    void operator()(const OdeState& x, OdeState& dxdt, double) const
    {
        dxdt = to_array(bloch_rhs(from_array(x), p));
    }
};

inline constexpr double ode_abs_tol = 1e-13;
inline constexpr double ode_rel_tol = 1e-10;
inline constexpr std::size_t ode_max_steps = 2'000'000;

/// Integrate through the sorted `times`, storing the state at each.
inline std::vector<BlochState> integrate_bloch(const BlochState& s0, const EmitterParams& p,
                                               const std::vector<double>& times, double dt_max)
{
    namespace ode = boost::numeric::odeint;
    std::vector<BlochState> out;
    out.reserve(times.size());
    if (times.empty())
        return out;
    auto x = to_array(s0);
    auto stepper = ode::make_dense_output(ode_abs_tol, ode_rel_tol, dt_max, ode::runge_kutta_dopri5<OdeState>());
    double dt0 = std::min(dt_max, 1e-3 / std::max({p.gamma_eff(), p.rabi, std::abs(p.detuning), 1.0}));
    try
    {
        ode::integrate_times(stepper, BlochSystem{p}, x, times.begin(), times.end(), dt0,
                             [&](const OdeState& st, double) { out.push_back(from_array(st)); },
                             ode::max_step_checker(ode_max_steps));
    }
    catch (const std::exception& e)
    {
        throw IntegrationError(std::string("evolve_bloch: ") + e.what());
    }
    return out;
}

}  // namespace detail

/// Adaptive Dormand-Prince 4(5) integration of the Bloch equations from 0 to t.
inline BlochState evolve_bloch(const BlochState& state0, const EmitterParams& p, double t, double dt_max)
{
    if (!(t >= 0))
        throw DomainError("evolve_bloch: t must be >= 0");
    if (!(dt_max > 0))
        throw DomainError("evolve_bloch: dt_max must be > 0");
    if (t == 0)
        return state0;
    return detail::integrate_bloch(state0, p, {0.0, t}, dt_max).back();
}

/// Uniform grid 0, dt, ..., tau_max with n points.
inline std::vector<double> uniform_half_grid(double tau_max, std::size_t n)
{
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i)
        g[i] = n > 1 ? tau_max * double(i) / double(n - 1) : 0.0;
    return g;
}

/// Mirror a non-negative half curve to negative tau. A leading tau = 0 is not duplicated.
inline G2Curve mirror_half_curve(const std::vector<double>& tau, const std::vector<double>& values)
{
    G2Curve c;
    std::size_t n = tau.size();
    bool has_zero = n > 0 && tau[0] == 0.0;
    std::size_t first = has_zero ? 1 : 0;
    for (std::size_t i = n; i-- > first;)
    {
        c.tau.push_back(-tau[i]);
        c.values.push_back(values[i]);
    }
    for (std::size_t i = 0; i < n; ++i)
    {
        c.tau.push_back(tau[i]);
        c.values.push_back(values[i]);
    }
    return c;
}

//---------------------------------------------------------------------------//
/*!
 * \brief g2(tau) via the quantum regression theorem.
 *
 * After a detection the emitter is in the ground state, so g2(tau) is the
 * excited population at tau after a reset, divided by its steady-state value.
 * `half_grid` must be sorted, non-negative and uniform.
 */
inline G2Curve g2_regression(const EmitterParams& p, const std::vector<double>& half_grid)
{
    p.validate();
    if (!(p.rabi > 0))
        throw UndefinedCorrelationError("g2_regression: undriven emitter has no steady-state emission");
    for (std::size_t i = 0; i < half_grid.size(); ++i)
    {
        if (half_grid[i] < 0 || (i > 0 && !(half_grid[i] > half_grid[i - 1])))
            throw DomainError("g2_regression: tau grid must be non-negative and increasing");
    }
    double pss = steady_state(p).pop_excited;
    double scale = std::max({p.gamma_eff(), p.rabi, std::abs(p.detuning)});
    std::vector<double> times = half_grid;
    bool prepend = times.empty() || times.front() != 0.0;
    if (prepend)
        times.insert(times.begin(), 0.0);
    auto states = detail::integrate_bloch(BlochState::ground(), p, times, 0.05 / scale);
    std::vector<double> values;
    values.reserve(half_grid.size());
    for (std::size_t i = prepend ? 1 : 0; i < states.size(); ++i)
        values.push_back(std::max(0.0, states[i].pop_excited) / pss);
    if (!prepend)
        values.front() = 0.0;
    return mirror_half_curve(half_grid, values);
}

//---------------------------------------------------------------------------//
/*!
 * \brief Resonance-fluorescence g2 of a resonantly driven, dephasing-free emitter.
 *
 * g2 = 1 - e^{-3 Gamma tau / 4} [cos(mu tau) + 3 Gamma / (4 mu) sin(mu tau)],
 * mu = sqrt(Omega^2 - Gamma^2 / 16), continued to cosh/sinh below Gamma/4.
 */
inline double g2_closed_form(const EmitterParams& p, double tau)
{
    if (p.detuning != 0.0 || p.gamma_deph != 0.0)
        throw UnsupportedRegimeError("g2_closed_form: requires zero detuning and zero pure dephasing");
    p.validate();
    double gamma = p.gamma_eff();
    double t = std::abs(tau);
    double a = 0.75 * gamma;
    double mu2 = p.rabi * p.rabi - gamma * gamma / 16.0;
    if (mu2 > 0)
    {
        double mu = std::sqrt(mu2);
        return 1.0 - std::exp(-a * t) * (std::cos(mu * t) + a / mu * std::sin(mu * t));
    }
    if (mu2 == 0)
        return 1.0 - std::exp(-a * t) * (1.0 + a * t);
    double k = std::sqrt(-mu2);
    // cosh(k t) + (a/k) sinh(k t), folded with the envelope to avoid overflow
    double term = 0.5 * (std::exp((k - a) * t) * (1.0 + a / k) + std::exp(-(k + a) * t) * (1.0 - a / k));
    return 1.0 - term;
}

/// Frequency of the damped Rabi oscillation in g2, or 0 when overdamped.
inline double damped_rabi_frequency(const EmitterParams& p)
{
    double gamma = p.gamma_eff();
    double mu2 = p.rabi * p.rabi - gamma * gamma / 16.0;
    return mu2 > 0 ? std::sqrt(mu2) : 0.0;
}

/// A (1 - e^{-(t-t0)/rise}) e^{-(t-t0)/decay} for t > t0, else 0. rise = 0 is a pure exponential.
inline double pulsed_decay_model(double t, double amplitude, double t0, double rise_time, double decay_time)
{
    if (!(decay_time > 0))
        throw DomainError("pulsed_decay_model: decay_time must be > 0");
    if (!(rise_time >= 0))
        throw DomainError("pulsed_decay_model: rise_time must be >= 0");
    double x = t - t0;
    if (!(x > 0))
        return 0.0;
    double rise = rise_time > 0 ? -std::expm1(-x / rise_time) : 1.0;
    return amplitude * rise * std::exp(-x / decay_time);
}

inline DecayCurve pulsed_decay_curve(const std::vector<double>& t_grid, double amplitude, double t0,
                                     double rise_time, double decay_time)
{
    DecayCurve c;
    c.t = t_grid;
    c.intensity.reserve(t_grid.size());
    for (double t : t_grid)
        c.intensity.push_back(pulsed_decay_model(t, amplitude, t0, rise_time, decay_time));
    c.rise_time = rise_time;
    c.decay_time = decay_time;
    return c;
}

}  // namespace rfsim
