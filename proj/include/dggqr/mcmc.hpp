#pragma once

// Adaptive random-walk Metropolis (Haario, Saksman & Tamminen 2001) with
// multivariate normal proposals, multi-chain driver, convergence
// diagnostics and credible intervals.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "dggqr/dgg_core.hpp"
#include "dggqr/errors.hpp"
#include "dggqr/model.hpp"
#include "dggqr/parallel.hpp"

namespace dggqr {

struct ChainConfig {
  std::size_t iterations = 20000;
  std::size_t burn_in = 10000;
  std::size_t thin = 10;
  std::uint64_t seed = 1;
  Eigen::VectorXd init;
  /// Iterations run with the fixed spherical proposal before adapting.
  std::size_t adaptation_start = 1000;
  /// Initial proposal covariance is (proposal_scale^2 / d) I.
  double proposal_scale = 0.1;
  /// Added to the diagonal of the adapted covariance.
  double jitter = 1e-10;
  /// A chain with no accepted move in this many opening iterations is
  /// flagged as stalled.
  std::size_t stall_window = 1000;

  std::size_t retained() const noexcept { return iterations > burn_in ? (iterations - burn_in) / thin : 0; }

  void validate() const {
    if (thin < 1) throw ConfigError("thin must be at least 1");
    if (iterations <= burn_in) {
      throw ConfigError(fmt::format("iterations ({}) must exceed burn-in ({})", iterations, burn_in));
    }
    if (retained() < 100) {
      throw ConfigError(fmt::format("(iterations - burn_in) / thin = {} retained draws, need at least 100", retained()));
    }
    if (init.size() == 0) throw ConfigError("chain init is empty");
    if (!(proposal_scale > 0.0)) throw ConfigError("proposal_scale must be positive");
    if (!(jitter > 0.0)) throw ConfigError("jitter must be positive");
  }
};

struct ChainDiagnostics {
  /// Per-coordinate effective sample size of the retained draws.
  std::vector<double> ess;
  /// Per-coordinate split-chain potential scale reduction.
  std::vector<double> rhat;
  bool stalled = false;
  std::vector<std::string> warnings;
};

struct PosteriorSample {
  /// M x d, one retained draw per row.
  Eigen::MatrixXd draws;
  double acceptance_rate = 0.0;
  ChainDiagnostics diagnostics;

  Eigen::Index size() const noexcept { return draws.rows(); }
  Eigen::Index dim() const noexcept { return draws.cols(); }
};

enum class IntervalKind { HPD, EqualTail };

struct CredibleInterval {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  IntervalKind kind = IntervalKind::HPD;

  bool contains(double x) const noexcept { return lower <= x && x <= upper; }
  double width() const noexcept { return upper - lower; }
};

// ---------------------------------------------------------------------------
// Diagnostics

/// ESS by Geyer's initial monotone positive sequence.
inline double effective_sample_size(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 4) return static_cast<double>(n);
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - mean) * (x[i + lag] - mean);
    return s / static_cast<double>(n);
  };
  const double c0 = autocov(0);
  if (!(c0 > 0.0)) return static_cast<double>(n);

  double sum_pairs = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = (autocov(2 * k) + autocov(2 * k + 1)) / c0;
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    sum_pairs += pair;
  }
  const double tau = std::max(2.0 * sum_pairs - 1.0, 1.0 / std::log10(static_cast<double>(n)));
  return static_cast<double>(n) / tau;
}

/// Potential scale reduction over chains each split into two halves.
inline double split_rhat(const std::vector<std::span<const double>>& chains) {
  std::vector<std::span<const double>> halves;
  std::size_t len = std::numeric_limits<std::size_t>::max();
  for (const auto& c : chains) len = std::min(len, c.size() / 2);
  if (chains.empty() || len < 2) return std::numeric_limits<double>::quiet_NaN();
  for (const auto& c : chains) {
    halves.push_back(c.subspan(0, len));
    halves.push_back(c.subspan(c.size() - len, len));
  }
  const auto m = static_cast<double>(halves.size());
  const auto n = static_cast<double>(len);
  std::vector<double> means;
  double within = 0.0;
  for (const auto& h : halves) {
    const double mu = std::accumulate(h.begin(), h.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : h) ss += (v - mu) * (v - mu);
    within += ss / (n - 1.0);
    means.push_back(mu);
  }
  within /= m;
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
  double between = 0.0;
  for (double mu : means) between += (mu - grand) * (mu - grand);
  between *= n / (m - 1.0);
  if (!(within > 0.0)) {
    return between > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  }
  const double var_plus = (n - 1.0) / n * within + between / n;
  return std::sqrt(var_plus / within);
}

namespace detail {

inline std::vector<double> column(const Eigen::MatrixXd& m, Eigen::Index j) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m(i, j);
  return out;
}

/// Fills ESS and R-hat from per-chain draw blocks stacked chain-major.
inline void fill_diagnostics(ChainDiagnostics& diag, const Eigen::MatrixXd& draws, std::size_t n_chains) {
  const auto per_chain = static_cast<std::size_t>(draws.rows()) / n_chains;
  diag.ess.assign(static_cast<std::size_t>(draws.cols()), 0.0);
  diag.rhat.assign(static_cast<std::size_t>(draws.cols()), 0.0);
  for (Eigen::Index j = 0; j < draws.cols(); ++j) {
    const auto col = column(draws, j);
    std::vector<std::span<const double>> chains;
    double ess = 0.0;
    for (std::size_t c = 0; c < n_chains; ++c) {
      std::span<const double> block(col.data() + c * per_chain, per_chain);
      chains.push_back(block);
      ess += effective_sample_size(block);
    }
    diag.ess[static_cast<std::size_t>(j)] = ess;
    diag.rhat[static_cast<std::size_t>(j)] = split_rhat(chains);
  }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Sampler

/// Adaptive Metropolis on `target` (log density over R^d, -inf outside its
/// support). Until `adaptation_start` iterations have run the proposal is
/// N(0, (proposal_scale^2/d) I); afterwards it is
/// N(0, (2.38^2/d) Cov(history) + jitter I), with the covariance of every
/// state visited so far. Returns the thinned post-burn-in draws; the result
/// depends only on `config`.
template <class Target>
PosteriorSample adaptive_metropolis(const Target& target, const ChainConfig& config) {
  config.validate();
  const Eigen::Index d = config.init.size();
  const double dd = static_cast<double>(d);

  Eigen::VectorXd current = config.init;
  double current_lp = target(current);
  if (!std::isfinite(current_lp)) {
    throw ConfigError(fmt::format("target is not finite at the initial value (log density {})", current_lp));
  }

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  // Welford running mean / scatter over the visited states.
  Eigen::VectorXd run_mean = current;
  Eigen::MatrixXd run_scatter = Eigen::MatrixXd::Zero(d, d);
  double visited = 1.0;

  const double adapted_scale = 2.38 * 2.38 / dd;
  Eigen::MatrixXd chol =
      Eigen::MatrixXd::Identity(d, d) * (config.proposal_scale / std::sqrt(dd));

  const std::size_t m = config.retained();
  PosteriorSample out;
  out.draws.resize(static_cast<Eigen::Index>(m), d);
  std::size_t kept = 0;
  std::size_t accepted = 0;
  std::size_t accepted_early = 0;

  Eigen::VectorXd z(d);
  Eigen::VectorXd proposal(d);
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    if (it > config.adaptation_start) {
      Eigen::MatrixXd cov = adapted_scale * run_scatter / (visited - 1.0);
      cov.diagonal().array() += config.jitter;
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() == Eigen::Success) {
        chol = llt.matrixL();
      }
    }
    for (Eigen::Index k = 0; k < d; ++k) z(k) = normal(rng);
    proposal.noalias() = current + chol.triangularView<Eigen::Lower>() * z;
    const double proposal_lp = target(proposal);
    const double log_u = std::log(uniform(rng));
    if (!std::isnan(proposal_lp) && log_u < proposal_lp - current_lp) {
      current = proposal;
      current_lp = proposal_lp;
      ++accepted;
      if (it <= config.stall_window) ++accepted_early;
    }

    visited += 1.0;
    const Eigen::VectorXd delta = current - run_mean;
    run_mean += delta / visited;
    run_scatter.noalias() += delta * (current - run_mean).transpose();

    if (it > config.burn_in && (it - config.burn_in) % config.thin == 0 && kept < m) {
      out.draws.row(static_cast<Eigen::Index>(kept++)) = current.transpose();
    }
  }

  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(config.iterations);
  if (accepted_early == 0 && config.iterations >= config.stall_window) {
    out.diagnostics.stalled = true;
    out.diagnostics.warnings.push_back(
        fmt::format("no proposal accepted in the first {} iterations", config.stall_window));
  }
  detail::fill_diagnostics(out.diagnostics, out.draws, 1);
  return out;
}

struct ConvergenceReport {
  std::vector<double> rhat;
  std::vector<double> chain_acceptance;
  double rhat_threshold = 1.1;
  bool flagged = false;
  bool any_stalled = false;

  double max_rhat() const {
    double mx = 0.0;
    for (double r : rhat) mx = std::max(mx, std::isnan(r) ? std::numeric_limits<double>::infinity() : r);
    return mx;
  }
};

struct MultiChainResult {
  /// Draws of all chains, concatenated chain by chain.
  PosteriorSample pooled;
  ConvergenceReport report;
};

/// Runs one chain per entry of `inits`; chain k uses seed
/// derive_seed(config.seed, k) except chain 0, which keeps config.seed.
template <class Target>
MultiChainResult run_chains(const Target& target, const ChainConfig& config, const std::vector<Eigen::VectorXd>& inits) {
  if (inits.empty()) throw ConfigError("run_chains needs at least one chain");
  const std::size_t n_chains = inits.size();
  std::vector<PosteriorSample> chains(n_chains);
  parallel_for(n_chains, [&](std::size_t k) {
    ChainConfig cfg = config;
    cfg.init = inits[k];
    cfg.seed = k == 0 ? config.seed : derive_seed(config.seed, k);
    chains[k] = adaptive_metropolis(target, cfg);
  });

  if (n_chains == 1) {
    MultiChainResult single{std::move(chains.front()), {}};
    single.report.rhat = single.pooled.diagnostics.rhat;
    single.report.chain_acceptance = {single.pooled.acceptance_rate};
    single.report.any_stalled = single.pooled.diagnostics.stalled;
    single.report.flagged = single.report.max_rhat() > single.report.rhat_threshold;
    return single;
  }

  const Eigen::Index per = chains.front().draws.rows();
  const Eigen::Index d = chains.front().draws.cols();
  MultiChainResult result;
  auto& pooled = result.pooled;
  pooled.draws.resize(per * static_cast<Eigen::Index>(n_chains), d);
  double acc = 0.0;
  for (std::size_t k = 0; k < n_chains; ++k) {
    pooled.draws.middleRows(static_cast<Eigen::Index>(k) * per, per) = chains[k].draws;
    acc += chains[k].acceptance_rate;
    result.report.chain_acceptance.push_back(chains[k].acceptance_rate);
    if (chains[k].diagnostics.stalled) {
      pooled.diagnostics.stalled = true;
      result.report.any_stalled = true;
      pooled.diagnostics.warnings.push_back(fmt::format("chain {} stalled", k));
    }
  }
  pooled.acceptance_rate = acc / static_cast<double>(n_chains);
  detail::fill_diagnostics(pooled.diagnostics, pooled.draws, n_chains);
  result.report.rhat = pooled.diagnostics.rhat;
  result.report.flagged = result.report.max_rhat() > result.report.rhat_threshold;
  if (result.report.flagged) {
    pooled.diagnostics.warnings.push_back(
        fmt::format("split R-hat {:.3f} exceeds {}", result.report.max_rhat(), result.report.rhat_threshold));
  }
  return result;
}

/// Jittered starting points: chain 0 starts at config.init, the others at
/// config.init + proposal_scale * N(0, I), redrawn until the target is finite.
template <class Target>
std::vector<Eigen::VectorXd> jittered_inits(const Target& target, const ChainConfig& config, std::size_t n_chains) {
  std::vector<Eigen::VectorXd> inits{config.init};
  for (std::size_t k = 1; k < n_chains; ++k) {
    std::mt19937_64 rng(derive_seed(config.seed, k, 0x1417));
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd start = config.init;
    for (int attempt = 0; attempt < 100; ++attempt) {
      Eigen::VectorXd trial = config.init;
      for (Eigen::Index j = 0; j < trial.size(); ++j) trial(j) += config.proposal_scale * normal(rng);
      if (std::isfinite(target(trial))) {
        start = trial;
        break;
      }
    }
    inits.push_back(start);
  }
  return inits;
}

template <class Target>
MultiChainResult run_chains(const Target& target, const ChainConfig& config, std::size_t n_chains) {
  if (n_chains < 1) throw ConfigError("run_chains needs at least one chain");
  return run_chains(target, config, jittered_inits(target, config, n_chains));
}

// ---------------------------------------------------------------------------
// Summaries

inline Eigen::VectorXd posterior_mean(const PosteriorSample& sample) {
  if (sample.size() < 1) throw DomainError("posterior_mean needs at least one draw");
  return sample.draws.colwise().mean().transpose();
}

inline ParameterVector posterior_mean(const PosteriorSample& sample, double q) {
  return ParameterVector::from_working(posterior_mean(sample), q);
}

/// Per-draw cure fraction at covariate row `x` (intercept included):
/// dgg_cure_fraction(lambda, alpha, exp(x' beta), q) for every draw.
inline std::vector<double> cure_fraction_posterior(const PosteriorSample& sample,
                                                   const Eigen::Ref<const Eigen::VectorXd>& x, double q) {
  const Eigen::Index nb = sample.dim() - 2;
  if (x.size() != nb) {
    throw DomainError(fmt::format("covariate row has {} entries, sample has {} coefficients", x.size(), nb));
  }
  std::vector<double> out(static_cast<std::size_t>(sample.size()));
  for (Eigen::Index m = 0; m < sample.size(); ++m) {
    const auto row = sample.draws.row(m);
    const double mu = linear_predictor(row.head(nb).transpose(), x, static_cast<std::size_t>(m));
    out[static_cast<std::size_t>(m)] = dgg_cure_fraction({row(nb), row(nb + 1), mu, q}).p0;
  }
  return out;
}

namespace detail {

inline std::vector<double> sorted_draws(std::span<const double> draws, double level) {
  if (draws.size() < 20) {
    throw DomainError(fmt::format("credible intervals need at least 20 draws, got {}", draws.size()));
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw DomainError(fmt::format("credible level must lie in (0, 1), got {}", level));
  }
  std::vector<double> v(draws.begin(), draws.end());
  std::sort(v.begin(), v.end());
  return v;
}

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman & Fan type 7).
inline double quantile_sorted(const std::vector<double>& v, double p) {
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

} // namespace detail

/// Shortest window of ceil(level * M) consecutive sorted draws; ties go to
/// the smallest lower end.
inline CredibleInterval hpd_interval(std::span<const double> draws, double level = 0.95) {
  const auto v = detail::sorted_draws(draws, level);
  const std::size_t n = v.size();
  auto count = static_cast<std::size_t>(std::ceil(level * static_cast<double>(n) - 1e-9));
  count = std::clamp<std::size_t>(count, 1, n);
  std::size_t best = 0;
  double best_width = v[count - 1] - v[0];
  for (std::size_t i = 1; i + count <= n; ++i) {
    const double w = v[i + count - 1] - v[i];
    if (w < best_width) {
      best_width = w;
      best = i;
    }
  }
  return {v[best], v[best + count - 1], level, IntervalKind::HPD};
}

inline CredibleInterval equal_tail_interval(std::span<const double> draws, double level = 0.95) {
  const auto v = detail::sorted_draws(draws, level);
  const double tail = (1.0 - level) / 2.0;
  return {detail::quantile_sorted(v, tail), detail::quantile_sorted(v, 1.0 - tail), level, IntervalKind::EqualTail};
}

inline double mean_of(std::span<const double> v) {
  if (v.empty()) throw DomainError("mean of an empty range");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

} // namespace dggqr
