#pragma once

// Gaussian instrument response: grid (FFT) convolution for g2 models and the
// closed-form exponentially modified Gaussian for decays.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "rfsim/errors.hpp"

namespace rfsim {

/// Gaussian detector timing response.
struct InstrumentResponse
{
    double fwhm = 289.0;  // ps

    double sigma_seconds() const { return fwhm / 2.3548200450309493 * 1e-12; }

    void validate() const
    {
        if (!(fwhm >= 0))
            throw DomainError("InstrumentResponse: fwhm must be >= 0");
    }
};

/// Combined response of a start/stop pair of independent detectors.
inline InstrumentResponse combined_response(const InstrumentResponse& a, const InstrumentResponse& b)
{
    return {std::hypot(a.fwhm, b.fwhm)};
}

/// exp(z^2) erfc(z)
inline double erfcx(double z)
{
    if (z < 25.0)
        return std::exp(z * z) * std::erfc(z);
    // asymptotic series; the terms shrink monotonically up to n ~ z^2
    double inv2z2 = 1.0 / (2.0 * z * z);
    double term = 1.0;
    double sum = 1.0;
    for (int n = 1; n < 12; ++n)
    {
        term *= -(2.0 * n - 1.0) * inv2z2;
        sum += term;
    }
    return sum / (z * std::sqrt(std::numbers::pi));
}

//---------------------------------------------------------------------------//
/*!
 * \brief (e^{-rate s} H(s)) convolved with a unit-area Gaussian of width
 * sigma, evaluated at x.
 *
 * 0.5 exp(rate (rate sigma^2 / 2 - x)) erfc((rate sigma^2 - x) / (sigma sqrt 2)),
 * switched to the erfcx form when the erfc argument is positive.
 */
inline double exp_modified_gaussian(double x, double rate, double sigma)
{
    if (sigma <= 0)
        return x > 0 ? std::exp(-rate * x) : 0.0;
    double z = (rate * sigma * sigma - x) / (sigma * std::numbers::sqrt2);
    if (z < 0)
        return 0.5 * std::exp(rate * (0.5 * rate * sigma * sigma - x)) * std::erfc(z);
    return 0.5 * std::exp(-x * x / (2.0 * sigma * sigma)) * erfcx(z);
}

//---------------------------------------------------------------------------//
/*!
 * \brief Convolution of a model with a Gaussian IRF on an oversampled grid.
 *
 * Output points are the centers of a uniform data grid. The model is
 * supplied as cell means on a grid `oversampling` times finer, padded on both
 * sides beyond the kernel support. With `bin_average` the kernel also
 * averages over one data bin, matching histogrammed data.
 */
class GridConvolver
{
  public:
    GridConvolver(double first_center, double spacing, std::size_t n_points, double irf_sigma,
                  int oversampling, bool bin_average)
        : first_(first_center), spacing_(spacing), n_(n_points), over_(oversampling)
    {
        if (!(spacing > 0) || n_points == 0 || oversampling < 1)
            throw DomainError("GridConvolver: invalid grid");
        h_ = spacing / oversampling;
        double half_bin = bin_average ? 0.5 * spacing : 0.0;
        auto support = std::size_t(std::ceil((6.0 * irf_sigma + half_bin) / h_)) + 1;
        pad_ = support + std::size_t(oversampling);
        fine_n_ = (n_ - 1) * std::size_t(over_) + 1 + 2 * pad_;
        fft_n_ = 1;
        while (fft_n_ < fine_n_ + 2 * support + 1)
            fft_n_ *= 2;

        // kernel weights w_k, k = -support..support, normalized to unit sum
        std::vector<double> w(2 * support + 1, 0.0);
        auto phi = [&](double x) { return 0.5 * std::erfc(-x / (irf_sigma * std::numbers::sqrt2)); };
        for (std::size_t i = 0; i < w.size(); ++i)
        {
            double x = (double(i) - double(support)) * h_;
            if (irf_sigma > 0)
            {
                if (half_bin > 0)
                    w[i] = phi(x + half_bin) - phi(x - half_bin);
                else
                    w[i] = phi(x + 0.5 * h_) - phi(x - 0.5 * h_);
            }
            else if (half_bin > 0)
            {
                double ax = std::abs(x);
                w[i] = ax < half_bin - 1e-9 * h_ ? 1.0 : (std::abs(ax - half_bin) <= 1e-9 * h_ ? 0.5 : 0.0);
            }
            else
            {
                w[i] = i == support ? 1.0 : 0.0;
            }
        }
        double sum = 0.0;
        for (double v : w)
            sum += v;
        std::vector<std::complex<double>> kernel(fft_n_, 0.0);
        for (std::size_t i = 0; i < w.size(); ++i)
        {
            auto k = std::ptrdiff_t(i) - std::ptrdiff_t(support);
            kernel[std::size_t((k + std::ptrdiff_t(fft_n_)) % std::ptrdiff_t(fft_n_))] = w[i] / sum;
        }
        std::vector<std::complex<double>> tmp;
        fft_.fwd(tmp, kernel);
        kernel_hat_ = std::move(tmp);
    }

    int oversampling() const { return over_; }
    double fine_step() const { return h_; }

    /// Left edge of fine cell i.
    double fine_lo(std::size_t i) const { return first_ + (double(i) - double(pad_) - 0.5) * h_; }

    /// `cell_mean(lo, hi)` returns the model's mean over [lo, hi].
    template<class CellMean>
    std::vector<double> apply(CellMean&& cell_mean) const
    {
        std::vector<std::complex<double>> a(fft_n_, 0.0);
        for (std::size_t i = 0; i < fine_n_; ++i)
        {
            double lo = fine_lo(i);
            a[i] = cell_mean(lo, lo + h_);
        }
        std::vector<std::complex<double>> ahat;
        fft_.fwd(ahat, a);
        for (std::size_t i = 0; i < fft_n_; ++i)
            ahat[i] *= kernel_hat_[i];
        std::vector<std::complex<double>> c;
        fft_.inv(c, ahat);
        std::vector<double> out(n_);
        for (std::size_t i = 0; i < n_; ++i)
            out[i] = c[pad_ + i * std::size_t(over_)].real();
        return out;
    }

  private:
    double first_;
    double spacing_;
    std::size_t n_;
    int over_;
    double h_ = 0.0;
    std::size_t pad_ = 0;
    std::size_t fine_n_ = 0;
    std::size_t fft_n_ = 0;
    std::vector<std::complex<double>> kernel_hat_;
    mutable Eigen::FFT<double> fft_;
};

/// Simpson cell mean for smooth point models.
template<class Point>
double simpson_cell_mean(Point&& f, double lo, double hi)
{
    return (f(lo) + 4.0 * f(0.5 * (lo + hi)) + f(hi)) / 6.0;
}

/// Mean of e^{-|t|/tau} over [lo, hi].
inline double mean_abs_exponential(double lo, double hi, double tau)
{
    auto integral_pos = [tau](double a, double b) {  // 0 <= a <= b
        return tau * (std::exp(-a / tau) - std::exp(-b / tau));
    };
    double s;
    if (lo >= 0)
        s = integral_pos(lo, hi);
    else if (hi <= 0)
        s = integral_pos(-hi, -lo);
    else
        s = integral_pos(0, -lo) + integral_pos(0, hi);
    return s / (hi - lo);
}

}  // namespace rfsim
