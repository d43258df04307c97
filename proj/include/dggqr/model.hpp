#pragma once

// Regression layer: a log link puts covariates on either the susceptible
// quantile mu1_q (QuantileLink) or directly on theta (ThetaLink), and the
// right-censored likelihood plus priors give the unnormalized posterior.

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "dggqr/dgg_core.hpp"
#include "dggqr/errors.hpp"

namespace dggqr {

enum class LinkMode { QuantileLink, ThetaLink };

inline std::string to_string(LinkMode mode) {
  return mode == LinkMode::QuantileLink ? "quantile" : "theta";
}

inline LinkMode parse_link_mode(const std::string& s) {
  if (s == "quantile") return LinkMode::QuantileLink;
  if (s == "theta") return LinkMode::ThetaLink;
  throw ConfigError(fmt::format("unknown link mode '{}' (expected quantile or theta)", s));
}

/// Right-censored sample: t_i = min(T_i, C_i), status 1 for an observed
/// event, and a design matrix whose first column is the intercept.
/// Immutable once constructed. Rows sharing the same covariate values are
/// grouped into patterns so per-pattern quantities are computed once.
class SurvivalDataset {
public:
  SurvivalDataset(std::vector<double> times, std::vector<int> status, Eigen::MatrixXd design)
      : times_(std::move(times)), status_(std::move(status)), design_(std::move(design)) {
    const auto n = times_.size();
    if (n == 0) {
      throw DomainError("dataset is empty");
    }
    if (status_.size() != n || static_cast<std::size_t>(design_.rows()) != n) {
      throw DomainError(fmt::format("dataset size mismatch: {} times, {} status flags, {} design rows", n,
                                    status_.size(), design_.rows()));
    }
    if (design_.cols() < 1) {
      throw DomainError("design matrix needs at least the intercept column");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!(times_[i] > 0.0) || !std::isfinite(times_[i])) {
        throw DomainError(fmt::format("row {}: time must be positive and finite, got {}", i, times_[i]));
      }
      if (status_[i] != 0 && status_[i] != 1) {
        throw DomainError(fmt::format("row {}: status must be 0 or 1, got {}", i, status_[i]));
      }
      if (design_(static_cast<Eigen::Index>(i), 0) != 1.0) {
        throw DomainError(fmt::format("row {}: first design column must be the intercept (1)", i));
      }
    }
    if (!design_.allFinite()) {
      throw DomainError("design matrix contains non-finite values");
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design_);
    if (qr.rank() != design_.cols()) {
      throw DomainError(fmt::format("design matrix is rank deficient (rank {} < {} columns)", qr.rank(),
                                    design_.cols()));
    }
    build_patterns();
  }

  std::size_t size() const noexcept { return times_.size(); }
  Eigen::Index n_coef() const noexcept { return design_.cols(); }
  const std::vector<double>& times() const noexcept { return times_; }
  const std::vector<int>& status() const noexcept { return status_; }
  const Eigen::MatrixXd& design() const noexcept { return design_; }

  /// Distinct covariate rows, in order of first appearance.
  const Eigen::MatrixXd& patterns() const noexcept { return patterns_; }
  /// Pattern index of each subject.
  const std::vector<Eigen::Index>& pattern_of() const noexcept { return pattern_of_; }

  std::size_t n_events() const noexcept {
    std::size_t k = 0;
    for (int s : status_) k += static_cast<std::size_t>(s);
    return k;
  }

private:
  void build_patterns() {
    std::map<std::vector<double>, Eigen::Index> seen;
    std::vector<std::vector<double>> rows;
    pattern_of_.resize(times_.size());
    for (Eigen::Index i = 0; i < design_.rows(); ++i) {
      std::vector<double> row(design_.row(i).begin(), design_.row(i).end());
      auto [it, inserted] = seen.try_emplace(row, static_cast<Eigen::Index>(rows.size()));
      if (inserted) rows.push_back(row);
      pattern_of_[static_cast<std::size_t>(i)] = it->second;
    }
    patterns_.resize(static_cast<Eigen::Index>(rows.size()), design_.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (Eigen::Index j = 0; j < design_.cols(); ++j) {
        patterns_(static_cast<Eigen::Index>(r), j) = rows[r][static_cast<std::size_t>(j)];
      }
    }
  }

  std::vector<double> times_;
  std::vector<int> status_;
  Eigen::MatrixXd design_;
  Eigen::MatrixXd patterns_;
  std::vector<Eigen::Index> pattern_of_;
};

/// (beta, lambda, alpha) for a fixed, known q. The sampler works on the
/// flat vector [beta_0 .. beta_p, lambda, alpha].
struct ParameterVector {
  Eigen::VectorXd beta;
  double lambda = 1.0;
  double alpha = -0.1;
  double q = 0.5;

  Eigen::Index dim() const noexcept { return beta.size() + 2; }

  Eigen::VectorXd to_working() const {
    Eigen::VectorXd v(dim());
    v.head(beta.size()) = beta;
    v(beta.size()) = lambda;
    v(beta.size() + 1) = alpha;
    return v;
  }

  static ParameterVector from_working(const Eigen::Ref<const Eigen::VectorXd>& v, double q) {
    if (v.size() < 3) {
      throw DomainError(fmt::format("working vector needs at least 3 entries, got {}", v.size()));
    }
    const Eigen::Index nb = v.size() - 2;
    return {v.head(nb), v(nb), v(nb + 1), q};
  }

  /// Prior-centre starting point: beta = 0, lambda = 1, alpha = -0.1.
  static ParameterVector prior_centre(Eigen::Index n_coef, double q) {
    return {Eigen::VectorXd::Zero(n_coef), 1.0, -0.1, q};
  }
};

/// Independent priors: alpha ~ N(mean, var) truncated to (-inf, 0),
/// lambda ~ Gamma(shape, rate), beta_j ~ N(mean, var).
struct PriorSpec {
  double alpha_mean = -0.1;
  double alpha_var = 100.0;
  double lambda_shape = 0.01;
  double lambda_rate = 0.01;
  double beta_mean = 0.0;
  double beta_var = 100.0;

  /// Gamma shape/rate matching a given mean and variance.
  void set_lambda_moments(double mean, double var) {
    if (!(mean > 0.0) || !(var > 0.0)) {
      throw ConfigError(fmt::format("gamma prior moments must be positive (mean={}, var={})", mean, var));
    }
    lambda_shape = mean * mean / var;
    lambda_rate = mean / var;
  }
};

/// Counters for likelihood evaluations that produced non-finite values.
/// Safe to share between concurrently running chains.
struct NumericDiagnostics {
  std::atomic<std::uint64_t> nonfinite{0};
  std::atomic<std::uint64_t> precision{0};
};

/// exp(x' beta). `row` only labels the error message.
inline double linear_predictor(const Eigen::Ref<const Eigen::VectorXd>& beta,
                               const Eigen::Ref<const Eigen::VectorXd>& x, std::size_t row = 0) {
  if (beta.size() != x.size()) {
    throw DomainError(fmt::format("row {}: covariate length {} does not match {} coefficients", row, x.size(),
                                  beta.size()));
  }
  const double eta = x.dot(beta);
  const double value = std::exp(eta);
  if (!std::isfinite(value) || value == 0.0) {
    throw OverflowError(fmt::format("row {}: exp(x'beta) out of range (x'beta = {})", row, eta));
  }
  return value;
}

namespace detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_normal_density(double x, double mean, double var) {
  const double z = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + z * z / var);
}

inline bool in_support(const ParameterVector& p) {
  return p.lambda > 0.0 && std::isfinite(p.lambda) && p.alpha <= kDefectiveAlphaMax && std::isfinite(p.alpha) &&
         p.beta.allFinite();
}

} // namespace detail

/// Censored-data log-likelihood. Returns -inf (never throws) when the
/// parameters leave the support or the evaluation breaks down numerically,
/// so a Metropolis step simply rejects the proposal.
inline double log_likelihood(const ParameterVector& params, const SurvivalDataset& data, LinkMode mode,
                             NumericDiagnostics* diag = nullptr) {
  if (params.beta.size() != data.n_coef()) {
    throw DomainError(
        fmt::format("parameter has {} coefficients, design has {} columns", params.beta.size(), data.n_coef()));
  }
  if (!detail::in_support(params)) {
    return detail::kNegInf;
  }
  const auto& patterns = data.patterns();
  std::vector<GGParams> per_pattern(static_cast<std::size_t>(patterns.rows()));
  try {
    for (Eigen::Index k = 0; k < patterns.rows(); ++k) {
      const double linked = linear_predictor(params.beta, patterns.row(k).transpose(), static_cast<std::size_t>(k));
      const double theta =
          mode == LinkMode::QuantileLink ? theta_from_quantile(params.lambda, params.alpha, linked, params.q) : linked;
      per_pattern[static_cast<std::size_t>(k)] = {params.lambda, params.alpha, theta};
    }
  } catch (const OverflowError&) {
    if (diag) ++diag->precision;
    return detail::kNegInf;
  } catch (const PrecisionError&) {
    if (diag) ++diag->precision;
    return detail::kNegInf;
  }

  const auto& times = data.times();
  const auto& status = data.status();
  const auto& pattern_of = data.pattern_of();
  double total = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const GGParams& g = per_pattern[static_cast<std::size_t>(pattern_of[i])];
    total += status[i] == 1 ? gg_log_pdf(g, times[i]) : gg_log_sf(g, times[i]);
  }
  if (std::isnan(total)) {
    if (diag) ++diag->nonfinite;
    return detail::kNegInf;
  }
  return total;
}

/// Sum of the independent prior log densities, normalizing constants
/// included. -inf outside the support (alpha >= 0 or lambda <= 0).
inline double log_prior(const ParameterVector& params, const PriorSpec& priors) {
  if (!(params.alpha < 0.0) || !(params.lambda > 0.0) || !std::isfinite(params.lambda)) {
    return detail::kNegInf;
  }
  // truncation mass Phi((0 - mean) / sd)
  const double alpha_sd = std::sqrt(priors.alpha_var);
  const double log_trunc = std::log(0.5 * std::erfc(priors.alpha_mean / (alpha_sd * std::numbers::sqrt2)));
  double out = detail::log_normal_density(params.alpha, priors.alpha_mean, priors.alpha_var) - log_trunc;

  out += priors.lambda_shape * std::log(priors.lambda_rate) - std::lgamma(priors.lambda_shape) +
         (priors.lambda_shape - 1.0) * std::log(params.lambda) - priors.lambda_rate * params.lambda;

  for (Eigen::Index j = 0; j < params.beta.size(); ++j) {
    out += detail::log_normal_density(params.beta(j), priors.beta_mean, priors.beta_var);
  }
  return out;
}

inline double log_posterior(const ParameterVector& params, const SurvivalDataset& data, const PriorSpec& priors,
                            LinkMode mode, NumericDiagnostics* diag = nullptr) {
  const double lp = log_prior(params, priors);
  if (lp == detail::kNegInf) {
    return lp;
  }
  return lp + log_likelihood(params, data, mode, diag);
}

/// Log-posterior over the flat working vector, as consumed by the sampler.
/// Holds references; the dataset must outlive it.
class PosteriorTarget {
public:
  PosteriorTarget(const SurvivalDataset& data, PriorSpec priors, LinkMode mode, double q,
                  NumericDiagnostics* diag = nullptr)
      : data_(&data), priors_(priors), mode_(mode), q_(q), diag_(diag) {}

  double operator()(const Eigen::Ref<const Eigen::VectorXd>& working) const {
    return log_posterior(ParameterVector::from_working(working, q_), *data_, priors_, mode_, diag_);
  }

  const SurvivalDataset& data() const noexcept { return *data_; }
  LinkMode mode() const noexcept { return mode_; }
  double q() const noexcept { return q_; }

private:
  const SurvivalDataset* data_;
  PriorSpec priors_;
  LinkMode mode_;
  double q_;
  NumericDiagnostics* diag_;
};

} // namespace dggqr
