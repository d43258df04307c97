#pragma once

// Synthetic data from the defective GG quantile regression model with one
// binary covariate, and the Monte Carlo harness that refits replicated
// datasets to measure bias, MSE and interval coverage.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "dggqr/dgg_core.hpp"
#include "dggqr/errors.hpp"
#include "dggqr/mcmc.hpp"
#include "dggqr/model.hpp"
#include "dggqr/parallel.hpp"

namespace dggqr {

struct SimScenario {
  double alpha = -0.25;
  double lambda = 1.0;
  double beta0 = 1.3;
  double beta1 = 0.7;
  double q = 0.5;
  /// Target censoring proportions for x = 0 and x = 1. When unset they
  /// default to p0(x=0) + 0.10 and p0(x=1) + 0.05.
  std::optional<double> pc0;
  std::optional<double> pc1;
  std::size_t n = 100;
  std::uint64_t seed = 1;
  /// Susceptible draws used to calibrate each censoring bound.
  std::size_t tau_pool = 200000;
};

inline constexpr double kDefaultExtraCensoring0 = 0.10;
inline constexpr double kDefaultExtraCensoring1 = 0.05;

/// Scenario with every per-x quantity resolved: theta_x, p0_x, pc_x, tau_x.
struct ScenarioDesign {
  SimScenario scenario;
  std::array<double, 2> theta{};
  std::array<double, 2> p0{};
  std::array<double, 2> pc{};
  std::array<double, 2> tau{};

  GGParams gg(int x) const { return {scenario.lambda, scenario.alpha, theta[static_cast<std::size_t>(x)]}; }
};

struct LatentRecord {
  int x = 0;
  bool cured = false;
  /// Event time; +infinity for cured subjects.
  double w = 0.0;
  double c = 0.0;
};

struct SimulatedData {
  SurvivalDataset data;
  std::vector<LatentRecord> latent;
};

namespace detail {

inline void validate_scenario(const SimScenario& s) {
  if (!(s.lambda > 0.0)) throw ScenarioError(fmt::format("lambda must be positive, got {}", s.lambda));
  if (!(s.alpha <= kDefectiveAlphaMax)) throw ScenarioError(fmt::format("alpha must be negative, got {}", s.alpha));
  if (!(s.q > 0.0 && s.q < 1.0)) throw ScenarioError(fmt::format("q must lie in (0, 1), got {}", s.q));
  if (s.tau_pool < 1000) throw ScenarioError("tau_pool must hold at least 1000 draws");
}

inline double scenario_theta(const SimScenario& s, int x) {
  return theta_from_quantile(s.lambda, s.alpha, std::exp(s.beta0 + s.beta1 * x), s.q);
}

inline double scenario_pc(const SimScenario& s, int x, double p0) {
  const auto& given = x == 0 ? s.pc0 : s.pc1;
  return given ? *given : p0 + (x == 0 ? kDefaultExtraCensoring0 : kDefaultExtraCensoring1);
}

/// Susceptible event time by inversion: u1 ~ U(0, 1 - p0), w = F^{-1}(u1).
inline double draw_susceptible_time(const GGParams& g, double p0, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (;;) {
    const double u1 = unit(rng) * (1.0 - p0);
    if (!(u1 > 0.0)) continue;
    try {
      return gg_quantile(g, u1);
    } catch (const DomainError&) {
      // u1 rounded onto the total mass 1 - p0
    }
  }
}

/// Expected censoring proportion for c ~ U(0, tau) against a sorted pool
/// of susceptible times (prefix sums) plus the cured mass p0.
struct CensoringCurve {
  std::vector<double> sorted;
  std::vector<double> prefix;
  double p0 = 0.0;

  double operator()(double tau) const {
    const auto k = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), tau) - sorted.begin());
    const double n = static_cast<double>(sorted.size());
    const double mean_min = (prefix[k] + tau * static_cast<double>(sorted.size() - k)) / n;
    return p0 + (1.0 - p0) * mean_min / tau;
  }
};

} // namespace detail

/// Censoring bound tau_x so that U(0, tau_x) censoring yields an expected
/// censoring proportion pc_x at covariate level x. Solved by bisection
/// against a pre-simulated pool of susceptible times.
inline double calibrate_tau(const SimScenario& scenario, int x) {
  detail::validate_scenario(scenario);
  if (x != 0 && x != 1) throw ScenarioError(fmt::format("covariate level must be 0 or 1, got {}", x));
  const double theta = detail::scenario_theta(scenario, x);
  const GGParams g{scenario.lambda, scenario.alpha, theta};
  const double p0 = cure_fraction_raw(g).p0;
  const double pc = detail::scenario_pc(scenario, x, p0);
  if (!(pc > p0) || !(pc < 1.0)) {
    throw ScenarioError(fmt::format(
        "censoring proportion pc{} = {} infeasible: must lie in (p0, 1) with p0 = {} (cured subjects are always censored)",
        x, pc, p0));
  }

  std::mt19937_64 rng(derive_seed(scenario.seed, static_cast<std::uint64_t>(x), 0x7a0));
  detail::CensoringCurve curve;
  curve.p0 = p0;
  curve.sorted.resize(scenario.tau_pool);
  for (auto& w : curve.sorted) w = detail::draw_susceptible_time(g, p0, rng);
  std::sort(curve.sorted.begin(), curve.sorted.end());
  curve.prefix.resize(curve.sorted.size() + 1, 0.0);
  std::partial_sum(curve.sorted.begin(), curve.sorted.end(), curve.prefix.begin() + 1);

  // curve(tau) decreases from 1 (tau -> 0) to p0 (tau -> infinity)
  double lo = 1.0;
  double hi = 1.0;
  for (int i = 0; curve(hi) > pc; ++i) {
    if (i > 200) throw ScenarioError(fmt::format("could not bracket tau{} from above", x));
    hi *= 2.0;
  }
  for (int i = 0; curve(lo) < pc; ++i) {
    if (i > 1000 || lo < std::numeric_limits<double>::min()) {
      throw ScenarioError(fmt::format("could not bracket tau{} from below", x));
    }
    lo /= 2.0;
  }
  for (int i = 0; i < 200 && hi - lo > 1e-12 * hi; ++i) {
    const double mid = std::sqrt(lo * hi);
    (curve(mid) > pc ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline ScenarioDesign prepare_scenario(const SimScenario& scenario) {
  detail::validate_scenario(scenario);
  ScenarioDesign d;
  d.scenario = scenario;
  for (int x = 0; x < 2; ++x) {
    const auto k = static_cast<std::size_t>(x);
    d.theta[k] = detail::scenario_theta(scenario, x);
    d.p0[k] = dgg_cure_fraction({scenario.lambda, scenario.alpha, std::exp(scenario.beta0 + scenario.beta1 * x),
                                 scenario.q})
                  .p0;
    if (!(d.p0[k] > 0.0 && d.p0[k] < 1.0)) {
      throw ScenarioError(fmt::format("implied cure fraction at x={} is {}, must lie in (0, 1)", x, d.p0[k]));
    }
    d.pc[k] = detail::scenario_pc(scenario, x, d.p0[k]);
    d.tau[k] = calibrate_tau(scenario, x);
  }
  return d;
}

/// Draws n subjects: x ~ Bernoulli(0.5); cured with probability p0_x
/// (w = infinity); otherwise w by inversion of the susceptible law;
/// c ~ U(0, tau_x); t = min(w, c) and status 1 iff the event came first.
inline SimulatedData generate_dataset(const ScenarioDesign& design, std::size_t n, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> times(n);
  std::vector<int> status(n);
  Eigen::MatrixXd x_mat(static_cast<Eigen::Index>(n), 2);
  std::vector<LatentRecord> latent(n);
  for (std::size_t i = 0; i < n; ++i) {
    LatentRecord& rec = latent[i];
    rec.x = coin(rng) ? 1 : 0;
    const auto k = static_cast<std::size_t>(rec.x);
    const double u = unit(rng);
    rec.cured = u < design.p0[k];
    rec.w = rec.cured ? std::numeric_limits<double>::infinity()
                      : detail::draw_susceptible_time(design.gg(rec.x), design.p0[k], rng);
    do {
      rec.c = unit(rng) * design.tau[k];
    } while (!(rec.c > 0.0));
    const bool event = rec.w <= rec.c;
    times[i] = event ? rec.w : rec.c;
    status[i] = event ? 1 : 0;
    x_mat(static_cast<Eigen::Index>(i), 0) = 1.0;
    x_mat(static_cast<Eigen::Index>(i), 1) = rec.x;
  }
  return {SurvivalDataset(std::move(times), std::move(status), std::move(x_mat)), std::move(latent)};
}

inline SimulatedData generate_dataset(const SimScenario& scenario, std::mt19937_64& rng) {
  return generate_dataset(prepare_scenario(scenario), scenario.n, rng);
}

// ---------------------------------------------------------------------------
// Monte Carlo study

/// Study quantities, in reporting order.
inline const std::array<std::string, 6> kStudyParameters{"beta0", "beta1", "lambda", "alpha", "p0_x0", "p0_x1"};

inline std::array<double, 6> study_truth(const ScenarioDesign& d) {
  const auto& s = d.scenario;
  return {s.beta0, s.beta1, s.lambda, s.alpha, d.p0[0], d.p0[1]};
}

struct ReplicateFit {
  std::array<double, 6> estimate{};
  std::array<CredibleInterval, 6> hpd{};
  std::array<CredibleInterval, 6> equal_tail{};
  double acceptance_rate = 0.0;
  bool failed = false;
  std::string failure;
};

struct ReplicateRecord {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  ReplicateFit fit;
};

struct ParameterSummary {
  std::string name;
  double truth = 0.0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double mse = 0.0;
  double coverage_hpd = 0.0;
  double coverage_equal_tail = 0.0;
};

struct StudySummary {
  std::size_t n = 0;
  double q = 0.5;
  std::size_t replicates = 0;
  std::size_t failures = 0;
  std::vector<ParameterSummary> parameters;
  std::vector<ReplicateRecord> records;

  /// Dropped replicates must stay below 5% of B.
  bool failure_rate_ok() const noexcept {
    return static_cast<double>(failures) < 0.05 * static_cast<double>(replicates);
  }

  const ParameterSummary& parameter(const std::string& name) const {
    for (const auto& p : parameters) {
      if (p.name == name) return p;
    }
    throw DomainError(fmt::format("no study parameter named '{}'", name));
  }
};

/// Fits one replicate dataset; receives the replicate's own seed.
using ReplicateFitter = std::function<ReplicateFit(const SimulatedData&, const ScenarioDesign&, std::uint64_t)>;

/// Seed of replicate r at sample size n. Depends only on (seed, n, r).
inline std::uint64_t replicate_seed(std::uint64_t seed, std::size_t n, std::size_t r) {
  return derive_seed(derive_seed(seed, n, 0x5eed), r);
}

/// Dataset of replicate r at sample size n.
inline SimulatedData generate_replicate(const ScenarioDesign& design, std::size_t n, std::size_t r) {
  std::mt19937_64 rng(derive_seed(replicate_seed(design.scenario.seed, n, r), 0, 0xda7a));
  return generate_dataset(design, n, rng);
}

/// Posterior means and 95% intervals from an adaptive Metropolis fit at
/// the prior centre, QuantileLink, default priors.
inline ReplicateFit mcmc_replicate_fit(const SimulatedData& sim, const ScenarioDesign& design, const ChainConfig& chain,
                                       std::uint64_t seed, double level = 0.95) {
  const double q = design.scenario.q;
  const PosteriorTarget target(sim.data, PriorSpec{}, LinkMode::QuantileLink, q);
  ChainConfig cfg = chain;
  cfg.seed = derive_seed(seed, 1, 0xc4a1);
  cfg.init = ParameterVector::prior_centre(sim.data.n_coef(), q).to_working();
  const PosteriorSample sample = adaptive_metropolis(target, cfg);

  ReplicateFit fit;
  fit.acceptance_rate = sample.acceptance_rate;
  if (sample.diagnostics.stalled) {
    fit.failed = true;
    fit.failure = "sampler stalled";
    return fit;
  }
  std::array<std::vector<double>, 6> series;
  for (Eigen::Index j = 0; j < 4; ++j) series[static_cast<std::size_t>(j)] = detail::column(sample.draws, j);
  series[4] = cure_fraction_posterior(sample, Eigen::Vector2d(1.0, 0.0), q);
  series[5] = cure_fraction_posterior(sample, Eigen::Vector2d(1.0, 1.0), q);
  for (std::size_t k = 0; k < 6; ++k) {
    fit.estimate[k] = mean_of(series[k]);
    fit.hpd[k] = hpd_interval(series[k], level);
    fit.equal_tail[k] = equal_tail_interval(series[k], level);
  }
  return fit;
}

/// Aggregates replicate fits into bias / MSE / coverage; failed
/// replicates are excluded and counted.
inline StudySummary summarize_study(const ScenarioDesign& design, std::size_t n, std::vector<ReplicateRecord> records) {
  StudySummary out;
  out.n = n;
  out.q = design.scenario.q;
  out.replicates = records.size();
  const auto truth = study_truth(design);
  std::size_t ok = 0;
  std::array<double, 6> sum{}, sq{}, cov_hpd{}, cov_eq{};
  for (const auto& rec : records) {
    if (rec.fit.failed) {
      ++out.failures;
      continue;
    }
    ++ok;
    for (std::size_t k = 0; k < 6; ++k) {
      const double e = rec.fit.estimate[k];
      sum[k] += e;
      sq[k] += (e - truth[k]) * (e - truth[k]);
      cov_hpd[k] += rec.fit.hpd[k].contains(truth[k]) ? 1.0 : 0.0;
      cov_eq[k] += rec.fit.equal_tail[k].contains(truth[k]) ? 1.0 : 0.0;
    }
  }
  const double denom = ok > 0 ? static_cast<double>(ok) : std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < 6; ++k) {
    ParameterSummary p;
    p.name = kStudyParameters[k];
    p.truth = truth[k];
    p.mean_estimate = sum[k] / denom;
    p.bias = p.mean_estimate - truth[k];
    p.mse = sq[k] / denom;
    p.coverage_hpd = cov_hpd[k] / denom;
    p.coverage_equal_tail = cov_eq[k] / denom;
    out.parameters.push_back(p);
  }
  out.records = std::move(records);
  return out;
}

/// B replicates per sample size; one summary per entry of `sample_sizes`.
/// Replicates run in parallel and are reduced in index order, so results
/// do not depend on the thread count. Without a `fitter` each replicate is
/// fitted by adaptive Metropolis with `chain`.
inline std::vector<StudySummary> run_study(const SimScenario& scenario, std::size_t replicates,
                                           const std::vector<std::size_t>& sample_sizes, const ChainConfig& chain,
                                           ReplicateFitter fitter = {}) {
  if (replicates < 2) throw ConfigError(fmt::format("study needs B >= 2 replicates, got {}", replicates));
  if (sample_sizes.empty()) throw ConfigError("study needs at least one sample size");
  const ScenarioDesign design = prepare_scenario(scenario);
  if (!fitter) {
    fitter = [chain](const SimulatedData& sim, const ScenarioDesign& d, std::uint64_t seed) {
      return mcmc_replicate_fit(sim, d, chain, seed);
    };
  }

  const std::size_t total = replicates * sample_sizes.size();
  std::vector<ReplicateRecord> all(total);
  parallel_for(total, [&](std::size_t job) {
    const std::size_t n = sample_sizes[job / replicates];
    const std::size_t r = job % replicates;
    ReplicateRecord& rec = all[job];
    rec.index = r;
    rec.seed = replicate_seed(scenario.seed, n, r);
    try {
      const SimulatedData sim = generate_replicate(design, n, r);
      rec.fit = fitter(sim, design, rec.seed);
    } catch (const std::exception& e) {
      rec.fit = ReplicateFit{};
      rec.fit.failed = true;
      rec.fit.failure = e.what();
    }
  });

  std::vector<StudySummary> out;
  for (std::size_t s = 0; s < sample_sizes.size(); ++s) {
    std::vector<ReplicateRecord> block(all.begin() + static_cast<std::ptrdiff_t>(s * replicates),
                                       all.begin() + static_cast<std::ptrdiff_t>((s + 1) * replicates));
    out.push_back(summarize_study(design, sample_sizes[s], std::move(block)));
  }
  return out;
}

} // namespace dggqr
