#pragma once

// Probabilities and densities of unit-variance Gaussian mixtures on intervals.

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "coevgan/errors.hpp"

namespace coevgan {

namespace detail {

// Cody's rational Chebyshev approximation of erfc (W. J. Cody, "Rational
// Chebyshev approximations for the error function", Math. Comp. 1969), the
// netlib CALERF routine restricted to erfc. Relative error is below 1e-16
// on the full double range, so Phi computed from it has absolute error well
// under 1e-15.
inline double cody_erfc(double x) noexcept {
  static constexpr double a[5] = {3.16112374387056560e00, 1.13864154151050156e02,
                                  3.77485237685302021e02, 3.20937758913846947e03,
                                  1.85777706184603153e-1};
  static constexpr double b[4] = {2.36012909523441209e01, 2.44024637934444173e02,
                                  1.28261652607737228e03, 2.84423683343917062e03};
  static constexpr double c[9] = {5.64188496988670089e-1, 8.88314979438837594e00,
                                  6.61191906371416295e01, 2.98635138197400131e02,
                                  8.81952221241769090e02, 1.71204761263407058e03,
                                  2.05107837782607147e03, 1.23033935479799725e03,
                                  2.15311535474403846e-8};
  static constexpr double d[8] = {1.57449261107098347e01, 1.17693950891312499e02,
                                  5.37181101862009858e02, 1.62138957456669019e03,
                                  3.29079923573345963e03, 4.36261909014324716e03,
                                  3.43936767414372164e03, 1.23033935480374942e03};
  static constexpr double p[6] = {3.05326634961232344e-1, 3.60344899949804439e-1,
                                  1.25781726111229246e-1, 1.60837851487422766e-2,
                                  6.58749161529837803e-4, 1.63153871373020978e-2};
  static constexpr double q[5] = {2.56852019228982242e00, 1.87295284992346047e00,
                                  5.27905102951428412e-1, 6.05183413124413191e-2,
                                  2.33520497626869185e-3};
  constexpr double sqrpi = 5.6418958354775628695e-1;  // 1/sqrt(pi)
  constexpr double thresh = 0.46875;
  constexpr double xsmall = 1.11e-16;
  constexpr double xbig = 26.543;

  const double y = std::fabs(x);
  double result;
  if (y <= thresh) {
    const double ysq = y > xsmall ? y * y : 0.0;
    double xnum = a[4] * ysq;
    double xden = ysq;
    for (int i = 0; i < 3; ++i) {
      xnum = (xnum + a[i]) * ysq;
      xden = (xden + b[i]) * ysq;
    }
    return 1.0 - x * (xnum + a[3]) / (xden + b[3]);
  }
  if (y <= 4.0) {
    double xnum = c[8] * y;
    double xden = y;
    for (int i = 0; i < 7; ++i) {
      xnum = (xnum + c[i]) * y;
      xden = (xden + d[i]) * y;
    }
    result = (xnum + c[7]) / (xden + d[7]);
  } else if (y >= xbig) {
    result = 0.0;
  } else {
    const double ysq = 1.0 / (y * y);
    double xnum = p[5] * ysq;
    double xden = ysq;
    for (int i = 0; i < 4; ++i) {
      xnum = (xnum + p[i]) * ysq;
      xden = (xden + q[i]) * ysq;
    }
    result = ysq * (xnum + p[4]) / (xden + q[4]);
    result = (sqrpi - result) / y;
  }
  if (result != 0.0) {
    // exp(-y^2) split as exp(-t^2) * exp(-(y-t)(y+t)) with t = y truncated to
    // 1/16 to avoid cancellation in y*y.
    const double ysq = std::trunc(y * 16.0) / 16.0;
    const double del = (y - ysq) * (y + ysq);
    result *= std::exp(-ysq * ysq) * std::exp(-del);
  }
  return x < 0.0 ? 2.0 - result : result;
}

// Phi extended to the closed real line: Phi(-inf) = 0, Phi(+inf) = 1.
inline double cdf_extended(double z) noexcept {
  if (z == std::numeric_limits<double>::infinity()) return 1.0;
  if (z == -std::numeric_limits<double>::infinity()) return 0.0;
  return 0.5 * cody_erfc(-z * std::numbers::sqrt2 / 2.0);
}

// phi extended the same way; the density vanishes at infinity.
inline double pdf_extended(double z) noexcept {
  if (std::isinf(z)) return 0.0;
  return std::exp(-0.5 * z * z) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
}

}  // namespace detail

/// Standard normal CDF. Max absolute error < 1e-15 (Cody erfc).
/// Throws DomainError on NaN or infinite input.
inline double normal_cdf(double z) {
  if (!std::isfinite(z)) throw DomainError("normal_cdf: non-finite argument");
  return detail::cdf_extended(z);
}

/// Standard normal density.
inline double normal_pdf(double z) {
  if (!std::isfinite(z)) throw DomainError("normal_pdf: non-finite argument");
  return detail::pdf_extended(z);
}

/// Closed interval [lo, hi] on the extended real line. Bounds may be
/// +-infinity; NaN bounds and lo > hi are rejected.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  void validate() const {
    if (std::isnan(lo) || std::isnan(hi)) throw DomainError("Interval: NaN bound");
    if (lo > hi)
      throw DomainError("Interval: lo (" + std::to_string(lo) + ") > hi (" +
                        std::to_string(hi) + ")");
  }
  double length() const { return hi - lo; }
  bool contains(double x) const { return lo <= x && x <= hi; }
};

/// Mass of N(mean, 1) on iv. Assumes iv is valid.
inline double unit_normal_interval_prob(double mean, const Interval& iv) noexcept {
  if (iv.lo == iv.hi) return 0.0;
  // Use the upper tail when both bounds are right of the mean to keep
  // precision when the two CDF values are close to 1.
  if (iv.lo - mean > 0.0)
    return detail::cdf_extended(-(iv.lo - mean)) - detail::cdf_extended(-(iv.hi - mean));
  return detail::cdf_extended(iv.hi - mean) - detail::cdf_extended(iv.lo - mean);
}

/// Mixture of unit-variance Gaussians. Weights are validated once here.
class UnitGaussianMixture {
 public:
  UnitGaussianMixture(std::vector<double> means, std::vector<double> weights)
      : means_(std::move(means)), weights_(std::move(weights)) {
    if (means_.empty()) throw ConfigError("UnitGaussianMixture: no components");
    if (means_.size() != weights_.size())
      throw ConfigError("UnitGaussianMixture: means/weights length mismatch");
    double sum = 0.0;
    for (std::size_t k = 0; k < means_.size(); ++k) {
      if (!std::isfinite(means_[k])) throw DomainError("UnitGaussianMixture: non-finite mean");
      if (!(weights_[k] >= 0.0)) throw DomainError("UnitGaussianMixture: negative weight");
      sum += weights_[k];
    }
    if (std::fabs(sum - 1.0) > 1e-12)
      throw DomainError("UnitGaussianMixture: weights sum to " + std::to_string(sum));
  }

  /// The equal-weight two-component mixture 1/2 N(mu1,1) + 1/2 N(mu2,1).
  static UnitGaussianMixture two_component(double mu1, double mu2) {
    return UnitGaussianMixture({mu1, mu2}, {0.5, 0.5});
  }

  std::span<const double> means() const { return means_; }
  std::span<const double> weights() const { return weights_; }
  std::size_t size() const { return means_.size(); }

 private:
  std::vector<double> means_;
  std::vector<double> weights_;
};

/// P(x in iv) under mix.
inline double mixture_interval_prob(const UnitGaussianMixture& mix, const Interval& iv) {
  iv.validate();
  double p = 0.0;
  const auto m = mix.means();
  const auto w = mix.weights();
  for (std::size_t k = 0; k < m.size(); ++k) p += w[k] * unit_normal_interval_prob(m[k], iv);
  return p;
}

inline double mixture_pdf(const UnitGaussianMixture& mix, double x) {
  if (!std::isfinite(x)) throw DomainError("mixture_pdf: non-finite argument");
  double p = 0.0;
  const auto m = mix.means();
  const auto w = mix.weights();
  for (std::size_t k = 0; k < m.size(); ++k) p += w[k] * detail::pdf_extended(x - m[k]);
  return p;
}

/// d/dmean of P_{N(mean,1)}(iv) = phi(lo - mean) - phi(hi - mean).
inline double prob_deriv_wrt_mean(double mean, const Interval& iv) {
  iv.validate();
  if (iv.lo == iv.hi) return 0.0;
  return detail::pdf_extended(iv.lo - mean) - detail::pdf_extended(iv.hi - mean);
}

}  // namespace coevgan
