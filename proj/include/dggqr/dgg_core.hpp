#pragma once

// Generalized Gompertz (GG) distribution, its defective (alpha < 0) variant,
// the split into cured and susceptible sub-populations, and the
// reparameterization of the shape theta by the q-th quantile of the
// susceptible survival time.
//
// Everything is evaluated through the Gompertz cumulative hazard
//   H(t) = (lambda / alpha) * (exp(alpha t) - 1)
// so that the GG distribution function is F(t) = (1 - exp(-H(t)))^theta.
// All work happens on log F; survival values are produced by log1mexp at
// the very end, which keeps large theta (hundreds) from underflowing.

#include <cmath>
#include <limits>
#include <string>

#include <fmt/format.h>

#include "dggqr/errors.hpp"

namespace dggqr {

/// GG parameters: scale `lambda` > 0, rate-like `alpha` (negative means
/// defective, with units of 1/time) and shape `theta` > 0.
struct GGParams {
  double lambda = 1.0;
  double alpha = 0.0;
  double theta = 1.0;
};

/// Defective GG indexed by the q-th quantile `mu1_q` of the susceptibles.
/// `q` is fixed by the analyst, never estimated.
struct DGGQuantileParams {
  double lambda = 1.0;
  double alpha = -0.1;
  double mu1_q = 1.0;
  double q = 0.5;
};

struct CureFraction {
  double p0 = 0.0;
};

/// Largest alpha treated as defective. Closer to zero the quantile
/// reparameterization divides by a vanishing alpha.
inline constexpr double kDefectiveAlphaMax = -1e-10;

/// Survival values below this are reported as exactly zero.
inline constexpr double kSurvivalFloor = 1e-300;

namespace detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// log(1 - exp(x)) for x <= 0, accurate on both ends (Maechler's switch).
inline double log1mexp(double x) noexcept {
  if (x > -0.693147180559945309417) {
    return std::log(-std::expm1(x));
  }
  return std::log1p(-std::exp(x));
}

/// Gompertz cumulative hazard. alpha == 0 is the exponential limit.
inline double cumulative_hazard(double lambda, double alpha, double t) noexcept {
  if (alpha == 0.0) {
    return lambda * t;
  }
  return lambda / alpha * std::expm1(alpha * t);
}

/// log F(t) = theta * log(1 - exp(-H(t))).
inline double log_cdf(const GGParams& p, double t) noexcept {
  return p.theta * log1mexp(-cumulative_hazard(p.lambda, p.alpha, t));
}

/// log F(infinity); zero unless alpha < 0.
inline double log_total_mass(const GGParams& p) noexcept {
  if (p.alpha >= 0.0) {
    return 0.0;
  }
  return p.theta * log1mexp(p.lambda / p.alpha);
}

inline void validate(const GGParams& p) {
  if (!(p.lambda > 0.0) || !std::isfinite(p.lambda)) {
    throw DomainError(fmt::format("GG lambda must be positive and finite, got {}", p.lambda));
  }
  if (!(p.theta > 0.0) || !std::isfinite(p.theta)) {
    throw DomainError(fmt::format("GG theta must be positive and finite, got {}", p.theta));
  }
  if (!std::isfinite(p.alpha)) {
    throw DomainError(fmt::format("GG alpha must be finite, got {}", p.alpha));
  }
}

inline void validate_defective(double lambda, double alpha) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw DomainError(fmt::format("lambda must be positive and finite, got {}", lambda));
  }
  if (!(alpha <= kDefectiveAlphaMax)) {
    throw DomainError(fmt::format("defective model requires alpha <= {}, got {}", kDefectiveAlphaMax, alpha));
  }
}

inline void validate_defective(const GGParams& p) {
  validate(p);
  validate_defective(p.lambda, p.alpha);
}

inline void validate_probability(double q, const char* what) {
  if (!(q > 0.0 && q < 1.0)) {
    throw DomainError(fmt::format("{} must lie in (0, 1), got {}", what, q));
  }
}

} // namespace detail

// ---------------------------------------------------------------------------
// GG distribution (any sign of alpha)

inline double gg_log_pdf(const GGParams& p, double t) {
  detail::validate(p);
  if (!(t > 0.0) || !std::isfinite(t)) {
    throw DomainError(fmt::format("GG density requires finite t > 0, got {}", t));
  }
  const double h = detail::cumulative_hazard(p.lambda, p.alpha, t);
  double out = std::log(p.lambda) + std::log(p.theta) + p.alpha * t - h;
  if (p.theta != 1.0) {
    out += (p.theta - 1.0) * detail::log1mexp(-h);
  }
  return out;
}

/// Density f(t | lambda, alpha, theta).
inline double gg_pdf(const GGParams& p, double t) { return std::exp(gg_log_pdf(p, t)); }

/// log S(t); t may be +infinity.
inline double gg_log_sf(const GGParams& p, double t) {
  detail::validate(p);
  if (!(t >= 0.0)) {
    throw DomainError(fmt::format("GG survival requires t >= 0, got {}", t));
  }
  return detail::log1mexp(detail::log_cdf(p, t));
}

/// Survival S(t | lambda, alpha, theta), with S(0) = 1. For alpha < 0 the
/// limit at infinity is the cure fraction.
inline double gg_sf(const GGParams& p, double t) {
  const double s = std::exp(gg_log_sf(p, t));
  return s < kSurvivalFloor ? 0.0 : s;
}

/// Hazard f/S. Throws OverflowError once S(t) has dropped below the
/// survival floor instead of returning a meaningless ratio.
inline double gg_hazard(const GGParams& p, double t) {
  const double log_f = gg_log_pdf(p, t);
  const double log_s = gg_log_sf(p, t);
  if (std::exp(log_s) < kSurvivalFloor) {
    throw OverflowError(fmt::format("GG hazard undefined at t = {}: survival underflowed", t));
  }
  return std::exp(log_f - log_s);
}

/// Quantile of the (possibly defective) distribution, i.e. t with F(t) = prob.
/// For alpha < 0 only prob < 1 - p0 is attainable.
inline double gg_quantile(const GGParams& p, double prob) {
  detail::validate(p);
  detail::validate_probability(prob, "probability");
  // log(1 - prob^(1/theta))
  const double log_tail = detail::log1mexp(std::log(prob) / p.theta);
  if (p.alpha == 0.0) {
    return -log_tail / p.lambda;
  }
  const double arg = -(p.alpha / p.lambda) * log_tail;
  if (p.alpha < 0.0 && !(arg > -1.0)) {
    const double max_p = std::exp(detail::log_total_mass(p));
    throw DomainError(fmt::format(
        "quantile {} not attainable for a defective GG; probabilities must stay below 1 - p0 = {}", prob, max_p));
  }
  return std::log1p(arg) / p.alpha;
}

// ---------------------------------------------------------------------------
// Defective GG: cure fraction and susceptible population

/// p0 = 1 - (1 - exp(lambda/alpha))^theta, the limit of S(t) as t grows.
inline CureFraction cure_fraction_raw(const GGParams& p) {
  detail::validate_defective(p);
  return {-std::expm1(detail::log_total_mass(p))};
}

/// Proper survival function of the susceptibles, (S - p0) / (1 - p0).
inline double susceptible_sf(const GGParams& p, double t) {
  detail::validate_defective(p);
  if (!(t >= 0.0)) {
    throw DomainError(fmt::format("susceptible survival requires t >= 0, got {}", t));
  }
  const double log_mass = detail::log_total_mass(p);
  if (std::exp(log_mass) == 0.0) {
    throw DomainError("cure fraction is 1; susceptible survival undefined");
  }
  // (S - p0) / (1 - p0) = 1 - F(t) / F(inf)
  const double s1 = -std::expm1(detail::log_cdf(p, t) - log_mass);
  return s1 < 0.0 ? 0.0 : s1;
}

/// q-th quantile of the susceptible survival time.
inline double susceptible_quantile(double lambda, double alpha, double theta, double q) {
  detail::validate_defective(GGParams{lambda, alpha, theta});
  detail::validate_probability(q, "q");
  // log(q^(1/theta) * (1 - exp(lambda/alpha)))
  const double log_target = std::log(q) / theta + detail::log1mexp(lambda / alpha);
  const double log_tail = detail::log1mexp(log_target);
  return std::log1p(-(alpha / lambda) * log_tail) / alpha;
}

/// Shape theta implied by the q-th susceptible quantile `mu1_q`; inverse of
/// susceptible_quantile in its theta argument.
inline double theta_from_quantile(double lambda, double alpha, double mu1_q, double q) {
  detail::validate_defective(lambda, alpha);
  detail::validate_probability(q, "q");
  if (!(mu1_q > 0.0) || !std::isfinite(mu1_q)) {
    throw DomainError(fmt::format("quantile mu1_q must be positive and finite, got {}", mu1_q));
  }
  const double h = detail::cumulative_hazard(lambda, alpha, mu1_q);
  const double denom = detail::log1mexp(lambda / alpha) - detail::log1mexp(-h);
  if (!(denom > 0.0) || !std::isfinite(denom)) {
    throw PrecisionError(fmt::format(
        "theta_from_quantile lost precision (lambda={}, alpha={}, mu1_q={}, q={})", lambda, alpha, mu1_q, q));
  }
  const double theta = -std::log(q) / denom;
  if (!std::isfinite(theta)) {
    throw PrecisionError(fmt::format("theta_from_quantile overflowed (mu1_q={}, q={})", mu1_q, q));
  }
  return theta;
}

// ---------------------------------------------------------------------------
// Quantile-reparameterized defective GG. Every evaluation goes through
// theta_from_quantile and the plain GG functions above.

inline void validate(const DGGQuantileParams& qp) {
  detail::validate_defective(qp.lambda, qp.alpha);
  detail::validate_probability(qp.q, "q");
  if (!(qp.mu1_q > 0.0) || !std::isfinite(qp.mu1_q)) {
    throw DomainError(fmt::format("mu1_q must be positive and finite, got {}", qp.mu1_q));
  }
}

inline GGParams to_gg(const DGGQuantileParams& qp) {
  validate(qp);
  return {qp.lambda, qp.alpha, theta_from_quantile(qp.lambda, qp.alpha, qp.mu1_q, qp.q)};
}

inline double dgg_log_pdf(const DGGQuantileParams& qp, double t) { return gg_log_pdf(to_gg(qp), t); }
inline double dgg_log_sf(const DGGQuantileParams& qp, double t) { return gg_log_sf(to_gg(qp), t); }
inline double dgg_pdf(const DGGQuantileParams& qp, double t) { return gg_pdf(to_gg(qp), t); }
inline double dgg_sf(const DGGQuantileParams& qp, double t) { return gg_sf(to_gg(qp), t); }
inline CureFraction dgg_cure_fraction(const DGGQuantileParams& qp) { return cure_fraction_raw(to_gg(qp)); }

} // namespace dggqr
