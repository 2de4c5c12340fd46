#pragma once

// Bounded Levenberg-Marquardt with a forward-difference Jacobian, covariance
// estimation and profile-likelihood intervals for parameters pinned at a bound.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "rfsim/errors.hpp"

namespace rfsim {

struct Bound
{
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();

    bool contains(double x) const { return x >= lo && x <= hi; }
    double clamp(double x) const { return std::min(hi, std::max(lo, x)); }
};

/// Distances from a bound-pinned estimate to the ends of its Delta chi^2 = 1 interval.
struct OneSided
{
    double lower_excess = 0.0;
    double upper_excess = 0.0;
};

struct FitResult
{
    std::vector<std::string> names;
    std::vector<double> params;
    std::vector<double> sigma;
    Eigen::MatrixXd covariance;
    std::vector<std::optional<OneSided>> one_sided;
    double chi2 = 0.0;
    double chi2_reduced = 0.0;
    std::size_t dof = 0;
    int n_iterations = 0;

    std::size_t index(std::string_view name) const
    {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name)
                return i;
        throw std::out_of_range("FitResult: no parameter named " + std::string(name));
    }
    double value(std::string_view name) const { return params[index(name)]; }
    double error(std::string_view name) const { return sigma[index(name)]; }
};

struct LsqOptions
{
    int max_iterations = 500;
    double xtol = 1e-10;  // relative step
    double gtol = 1e-12;  // cosine between residual and Jacobian columns
    std::vector<bool> fixed;  // empty = all free
    std::vector<double> typical;  // parameter scales for finite differences; empty = from p0
    bool profile_bounds = true;
    double delta_chi2 = 1.0;
    bool covariance = true;
    bool scale_covariance = true;  // multiply by chi2_reduced
};

/// Residual callable: void(const Eigen::VectorXd& params, Eigen::VectorXd& residuals).
template<class F>
Eigen::MatrixXd numerical_jacobian(F& f, const Eigen::VectorXd& p, const Eigen::VectorXd& r0,
                                   const std::vector<double>& typical, const std::vector<Bound>& bounds,
                                   bool central = false)
{
    const double rel = central ? 6.055454452393343e-06 : 1.4901161193847656e-08;  // eps^(1/3), eps^(1/2)
    Eigen::MatrixXd jac(r0.size(), p.size());
    Eigen::VectorXd pp = p;
    Eigen::VectorXd r1(r0.size());
    Eigen::VectorXd r2(r0.size());
    for (Eigen::Index j = 0; j < p.size(); ++j)
    {
        double h = rel * std::max(std::abs(p[j]), typical[std::size_t(j)]);
        if (central)
        {
            pp[j] = p[j] + h;
            f(pp, r1);
            pp[j] = p[j] - h;
            f(pp, r2);
            jac.col(j) = (r1 - r2) / (2 * h);
        }
        else
        {
            if (!bounds.empty() && p[j] + h > bounds[std::size_t(j)].hi)
                h = -h;
            pp[j] = p[j] + h;
            f(pp, r1);
            jac.col(j) = (r1 - r0) / h;
        }
        pp[j] = p[j];
    }
    return jac;
}

namespace detail {

struct LmOutcome
{
    Eigen::VectorXd x;
    Eigen::VectorXd r;
    double chi2 = 0.0;
    int iterations = 0;
};

/// Core projected LM on the free coordinates. `f` takes the free vector.
template<class F>
LmOutcome levenberg_marquardt(F& f, Eigen::VectorXd x, Eigen::Index m, const std::vector<Bound>& bounds,
                              const std::vector<double>& typical, const LsqOptions& opts)
{
    const Eigen::Index n = x.size();
    LmOutcome out;
    Eigen::VectorXd r(m);
    f(x, r);
    if (!r.allFinite())
        throw FitError(FitError::Kind::ill_posed, "least_squares: non-finite residuals at the starting point");
    double chi2 = r.squaredNorm();
    double lambda = 1e-3;
    int iter = 0;
    for (; iter < opts.max_iterations; ++iter)
    {
        if (chi2 == 0.0 || n == 0)
            break;
        Eigen::MatrixXd jac = numerical_jacobian(f, x, r, typical, bounds);
        Eigen::VectorXd g = jac.transpose() * r;
        Eigen::MatrixXd a = jac.transpose() * jac;

        // active set: coordinates on a bound whose descent direction points outward
        std::vector<Eigen::Index> act;
        double max_cos = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
        {
            const auto& b = bounds[std::size_t(j)];
            bool pinned = (x[j] <= b.lo && g[j] > 0) || (x[j] >= b.hi && g[j] < 0);
            if (pinned)
                continue;
            act.push_back(j);
            double col = std::sqrt(a(j, j));
            if (col > 0)
                max_cos = std::max(max_cos, std::abs(g[j]) / (col * std::sqrt(chi2)));
        }
        if (act.empty() || max_cos < opts.gtol)
            break;

        const auto k = Eigen::Index(act.size());
        Eigen::MatrixXd as(k, k);
        Eigen::VectorXd gs(k);
        Eigen::VectorXd diag(k);
        double max_diag = 0.0;
        for (Eigen::Index u = 0; u < k; ++u)
        {
            gs[u] = g[act[std::size_t(u)]];
            for (Eigen::Index v = 0; v < k; ++v)
                as(u, v) = a(act[std::size_t(u)], act[std::size_t(v)]);
            max_diag = std::max(max_diag, as(u, u));
        }
        for (Eigen::Index u = 0; u < k; ++u)
            diag[u] = std::max(as(u, u), 1e-15 * max_diag);

        bool accepted = false;
        bool small_step = false;
        while (lambda < 1e16)
        {
            Eigen::MatrixXd lhs = as;
            lhs.diagonal() += lambda * diag;
            Eigen::VectorXd step = lhs.ldlt().solve(-gs);
            Eigen::VectorXd xn = x;
            for (Eigen::Index u = 0; u < k; ++u)
            {
                auto j = act[std::size_t(u)];
                xn[j] = bounds[std::size_t(j)].clamp(x[j] + step[u]);
            }
            Eigen::VectorXd rn(m);
            f(xn, rn);
            double chi2n = rn.allFinite() ? rn.squaredNorm() : std::numeric_limits<double>::infinity();
            if (chi2n < chi2)
            {
                small_step = true;
                for (Eigen::Index j = 0; j < n; ++j)
                {
                    double scale = std::max(std::abs(x[j]), opts.xtol * typical[std::size_t(j)]);
                    if (std::abs(xn[j] - x[j]) > opts.xtol * scale)
                        small_step = false;
                }
                x = xn;
                r = rn;
                chi2 = chi2n;
                lambda = std::max(lambda / 10.0, 1e-15);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted || small_step)
        {
            ++iter;
            break;
        }
    }
    if (iter >= opts.max_iterations)
        throw FitError(FitError::Kind::not_converged,
                       "least_squares: no convergence within " + std::to_string(opts.max_iterations) + " iterations");
    out.x = x;
    out.r = r;
    out.chi2 = chi2;
    out.iterations = iter;
    return out;
}

}  // namespace detail

//---------------------------------------------------------------------------//
/*!
 * \brief Weighted nonlinear least squares with box bounds.
 *
 * `residuals(p, r)` fills r (size `n_residuals`) with (data - model)/sigma.
 * Covariance is chi2_reduced (J^T J)^-1 over the free, non-pinned
 * parameters. A parameter that ends on a bound gets a one-sided interval
 * from a profile scan (other parameters re-optimized) out to Delta chi^2 = 1;
 * its sigma is that excess.
 */
template<class F>
FitResult least_squares(F&& residuals, Eigen::Index n_residuals, const std::vector<double>& p0,
                        std::vector<Bound> bounds, std::vector<std::string> names, const LsqOptions& opts = {})
{
    const std::size_t np = p0.size();
    if (bounds.empty())
        bounds.assign(np, Bound{});
    if (names.empty())
        for (std::size_t i = 0; i < np; ++i)
            names.push_back("p" + std::to_string(i));
    if (bounds.size() != np || names.size() != np)
        throw std::invalid_argument("least_squares: p0, bounds and names must have equal length");
    std::vector<bool> fixed = opts.fixed.empty() ? std::vector<bool>(np, false) : opts.fixed;
    for (std::size_t i = 0; i < np; ++i)
    {
        if (!std::isfinite(p0[i]) || !bounds[i].contains(p0[i]))
            throw DomainError("least_squares: p0[" + std::to_string(i) + "] (" + names[i] + ") not finite or out of bounds");
    }

    std::vector<std::size_t> free_idx;
    for (std::size_t i = 0; i < np; ++i)
        if (!fixed[i])
            free_idx.push_back(i);
    const auto nf = Eigen::Index(free_idx.size());

    std::vector<double> typical(np);
    for (std::size_t i = 0; i < np; ++i)
    {
        double t = opts.typical.empty() ? std::abs(p0[i]) : opts.typical[i];
        typical[i] = t > 0 ? t : 1.0;
    }

    Eigen::VectorXd full(static_cast<Eigen::Index>(np));
    for (std::size_t i = 0; i < np; ++i)
        full[Eigen::Index(i)] = p0[i];

    std::vector<Bound> fb;
    std::vector<double> ft;
    Eigen::VectorXd x0(nf);
    for (Eigen::Index u = 0; u < nf; ++u)
    {
        fb.push_back(bounds[free_idx[std::size_t(u)]]);
        ft.push_back(typical[free_idx[std::size_t(u)]]);
        x0[u] = p0[free_idx[std::size_t(u)]];
    }

    auto reduced = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
        Eigen::VectorXd p = full;
        for (Eigen::Index u = 0; u < nf; ++u)
            p[Eigen::Index(free_idx[std::size_t(u)])] = x[u];
        residuals(p, r);
    };

    auto lm = detail::levenberg_marquardt(reduced, x0, n_residuals, fb, ft, opts);

    FitResult res;
    res.names = names;
    res.params.assign(p0.begin(), p0.end());
    for (Eigen::Index u = 0; u < nf; ++u)
        res.params[free_idx[std::size_t(u)]] = lm.x[u];
    res.chi2 = lm.chi2;
    res.n_iterations = lm.iterations;
    res.dof = std::size_t(std::max<Eigen::Index>(n_residuals - nf, 0));
    res.chi2_reduced = res.dof > 0 ? lm.chi2 / double(res.dof) : 0.0;
    res.sigma.assign(np, 0.0);
    res.one_sided.assign(np, std::nullopt);
    res.covariance = Eigen::MatrixXd::Zero(Eigen::Index(np), Eigen::Index(np));
    if (!opts.covariance || nf == 0)
        return res;

    // split free parameters into interior and pinned
    std::vector<Eigen::Index> interior;
    std::vector<Eigen::Index> pinned;
    for (Eigen::Index u = 0; u < nf; ++u)
    {
        const auto& b = fb[std::size_t(u)];
        bool at_bound = lm.x[u] <= b.lo || lm.x[u] >= b.hi;
        (at_bound ? pinned : interior).push_back(u);
    }

    Eigen::MatrixXd jac = numerical_jacobian(reduced, lm.x, lm.r, ft, fb);
    if (!interior.empty())
    {
        const auto k = Eigen::Index(interior.size());
        Eigen::MatrixXd a(k, k);
        for (Eigen::Index u = 0; u < k; ++u)
            for (Eigen::Index v = 0; v < k; ++v)
                a(u, v) = jac.col(interior[std::size_t(u)]).dot(jac.col(interior[std::size_t(v)]));
        Eigen::VectorXd d = a.diagonal();
        for (Eigen::Index u = 0; u < k; ++u)
        {
            if (!(d[u] > 0))
                throw FitError(FitError::Kind::rank_deficient,
                               "least_squares: parameter '" + names[free_idx[std::size_t(interior[std::size_t(u)])]]
                                   + "' does not affect the residuals");
        }
        Eigen::VectorXd dinv = d.cwiseSqrt().cwiseInverse();
        Eigen::MatrixXd corr = dinv.asDiagonal() * a * dinv.asDiagonal();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr);
        if (es.eigenvalues().minCoeff() < 1e-13 * es.eigenvalues().maxCoeff())
            throw FitError(FitError::Kind::rank_deficient, "least_squares: J^T J is singular");
        Eigen::MatrixXd cinv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal()
                               * es.eigenvectors().transpose();
        double scale = opts.scale_covariance && res.dof > 0 ? res.chi2_reduced : 1.0;
        Eigen::MatrixXd cov = scale * (dinv.asDiagonal() * cinv * dinv.asDiagonal());
        for (Eigen::Index u = 0; u < k; ++u)
        {
            auto iu = Eigen::Index(free_idx[std::size_t(interior[std::size_t(u)])]);
            for (Eigen::Index v = 0; v < k; ++v)
            {
                auto iv = Eigen::Index(free_idx[std::size_t(interior[std::size_t(v)])]);
                res.covariance(iu, iv) = cov(u, v);
            }
            res.sigma[std::size_t(iu)] = std::sqrt(std::max(0.0, cov(u, u)));
        }
    }

    if (!opts.profile_bounds)
        return res;

    for (auto u : pinned)
    {
        std::size_t pi = free_idx[std::size_t(u)];
        const auto& b = bounds[pi];
        double at = lm.x[u];
        double dir = at <= b.lo ? 1.0 : -1.0;
        double room = dir > 0 ? b.hi - at : at - b.lo;

        LsqOptions inner = opts;
        inner.profile_bounds = false;
        inner.covariance = false;
        inner.fixed = fixed;
        inner.fixed[pi] = true;
        inner.typical = typical;
        std::vector<double> start = res.params;
        auto profile = [&](double s) {
            start[pi] = at + dir * s;
            auto r = least_squares(residuals, n_residuals, start, bounds, names, inner);
            for (std::size_t i = 0; i < np; ++i)
                if (i != pi)
                    start[i] = r.params[i];
            return r.chi2 - lm.chi2;
        };

        double curv = jac.col(u).squaredNorm();
        double s_hi = curv > 0 ? 1.0 / std::sqrt(curv) : typical[pi];
        s_hi = std::min(s_hi, room);
        double s_lo = 0.0;
        double excess = room;
        bool bracketed = false;
        for (int it = 0; it < 80; ++it)
        {
            if (profile(s_hi) >= opts.delta_chi2)
            {
                bracketed = true;
                break;
            }
            s_lo = s_hi;
            if (s_hi >= room)
                break;
            s_hi = std::min(2.0 * s_hi, room);
        }
        if (bracketed)
        {
            for (int it = 0; it < 60 && (s_hi - s_lo) > 1e-7 * s_hi; ++it)
            {
                double mid = 0.5 * (s_lo + s_hi);
                if (profile(mid) >= opts.delta_chi2)
                    s_hi = mid;
                else
                    s_lo = mid;
            }
            excess = 0.5 * (s_lo + s_hi);
        }
        OneSided os;
        (dir > 0 ? os.upper_excess : os.lower_excess) = excess;
        res.one_sided[pi] = os;
        res.sigma[pi] = excess;
        res.covariance(Eigen::Index(pi), Eigen::Index(pi)) = excess * excess;
    }
    return res;
}

}  // namespace rfsim
