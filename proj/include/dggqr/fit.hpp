#pragma once

// Quantile-grid fitting: one independent posterior per q, the implied
// quantile curves per covariate pattern, and the crossing check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
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

/// 0.05, 0.10, ..., 0.95.
inline std::vector<double> default_q_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 19; ++k) grid.push_back(k / 20.0);
  return grid;
}

struct FitConfig {
  std::vector<double> q_grid = default_q_grid();
  LinkMode link = LinkMode::QuantileLink;
  PriorSpec priors;
  /// Iteration counts and tuning; `init` left empty means the prior centre.
  ChainConfig chain;
  std::size_t n_chains = 1;
  std::string out_dir = "dggqr_out";
  std::uint64_t seed = 1;
  double level = 0.95;

  void validate() const {
    for (std::size_t k = 0; k < q_grid.size(); ++k) {
      if (!(q_grid[k] > 0.0 && q_grid[k] < 1.0)) {
        throw ConfigError(fmt::format("q grid value {} outside (0, 1)", q_grid[k]));
      }
      if (k > 0 && !(q_grid[k] > q_grid[k - 1])) throw ConfigError("q grid must be strictly increasing");
    }
    if (n_chains < 1) throw ConfigError("need at least one chain");
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("credible level must lie in (0, 1)");
  }
};

/// Seed of the fit at grid position `q_index`.
inline std::uint64_t grid_seed(std::uint64_t seed, std::size_t q_index) { return derive_seed(seed, q_index, 0x9f17); }

struct QuantileFit {
  double q = 0.5;
  std::size_t q_index = 0;
  std::uint64_t seed = 0;
  LinkMode link = LinkMode::QuantileLink;
  bool failed = false;
  std::string failure;
  PosteriorSample sample;
  ConvergenceReport report;
  /// Posterior mean and intervals of [beta..., lambda, alpha].
  Eigen::VectorXd mean;
  std::vector<CredibleInterval> hpd;
  std::vector<CredibleInterval> equal_tail;
  /// Per-draw cure fraction for each requested covariate pattern.
  std::vector<std::vector<double>> cure_fraction;
};

/// Cure fraction of one draw [beta..., lambda, alpha] at covariate row x.
inline double draw_cure_fraction(const Eigen::Ref<const Eigen::VectorXd>& draw,
                                 const Eigen::Ref<const Eigen::VectorXd>& x, double q, LinkMode link) {
  const Eigen::Index nb = draw.size() - 2;
  const double linked = linear_predictor(draw.head(nb), x);
  if (link == LinkMode::QuantileLink) {
    return dgg_cure_fraction({draw(nb), draw(nb + 1), linked, q}).p0;
  }
  return cure_fraction_raw({draw(nb), draw(nb + 1), linked}).p0;
}

/// Susceptible q-quantile of one draw at covariate row x. Under
/// QuantileLink this is exp(x' beta) by construction.
inline double draw_susceptible_quantile(const Eigen::Ref<const Eigen::VectorXd>& draw,
                                        const Eigen::Ref<const Eigen::VectorXd>& x, double q, LinkMode link) {
  const Eigen::Index nb = draw.size() - 2;
  const double linked = linear_predictor(draw.head(nb), x);
  if (link == LinkMode::QuantileLink) return linked;
  return susceptible_quantile(draw(nb), draw(nb + 1), linked, q);
}

/// Fits every q of the grid independently (fresh chains from the prior
/// centre, seed grid_seed(config.seed, k)). A failing q is recorded in its
/// QuantileFit and the remaining grid still runs. Cure-fraction draws are
/// computed for each row of `patterns` (defaults to the dataset's
/// distinct covariate rows).
inline std::vector<QuantileFit> fit_quantile_grid(const SurvivalDataset& data, const FitConfig& config,
                                                  const Eigen::MatrixXd* patterns = nullptr) {
  config.validate();
  const Eigen::MatrixXd& pats = patterns ? *patterns : data.patterns();
  if (pats.cols() != data.n_coef()) {
    throw ConfigError(fmt::format("patterns have {} columns, design has {}", pats.cols(), data.n_coef()));
  }
  std::vector<QuantileFit> fits(config.q_grid.size());
  parallel_for(config.q_grid.size(), [&](std::size_t k) {
    QuantileFit& fit = fits[k];
    fit.q = config.q_grid[k];
    fit.q_index = k;
    fit.seed = grid_seed(config.seed, k);
    fit.link = config.link;
    try {
      const PosteriorTarget target(data, config.priors, config.link, fit.q);
      ChainConfig chain = config.chain;
      chain.seed = fit.seed;
      if (chain.init.size() == 0) chain.init = ParameterVector::prior_centre(data.n_coef(), fit.q).to_working();
      MultiChainResult run = run_chains(target, chain, config.n_chains);
      fit.sample = std::move(run.pooled);
      fit.report = std::move(run.report);
      if (fit.report.any_stalled) {
        fit.failed = true;
        fit.failure = "sampler stalled";
        return;
      }
      fit.mean = posterior_mean(fit.sample);
      for (Eigen::Index j = 0; j < fit.sample.dim(); ++j) {
        const auto col = detail::column(fit.sample.draws, j);
        fit.hpd.push_back(hpd_interval(col, config.level));
        fit.equal_tail.push_back(equal_tail_interval(col, config.level));
      }
      for (Eigen::Index p = 0; p < pats.rows(); ++p) {
        std::vector<double> cf(static_cast<std::size_t>(fit.sample.size()));
        for (Eigen::Index m = 0; m < fit.sample.size(); ++m) {
          cf[static_cast<std::size_t>(m)] =
              draw_cure_fraction(fit.sample.draws.row(m).transpose(), pats.row(p).transpose(), fit.q, config.link);
        }
        fit.cure_fraction.push_back(std::move(cf));
      }
    } catch (const std::exception& e) {
      fit.failed = true;
      fit.failure = e.what();
    }
  });
  return fits;
}

struct CurvePoint {
  std::size_t pattern = 0;
  double q = 0.5;
  double mean = 0.0;
  CredibleInterval hpd;
  CredibleInterval equal_tail;
};

/// Posterior mean and intervals of the susceptible q-quantile for every
/// (pattern, q), ordered by pattern then q. Failed fits are skipped.
inline std::vector<CurvePoint> quantile_curves(const std::vector<QuantileFit>& fits, const Eigen::MatrixXd& patterns,
                                               double level = 0.95) {
  std::vector<CurvePoint> out;
  for (Eigen::Index p = 0; p < patterns.rows(); ++p) {
    for (const auto& fit : fits) {
      if (fit.failed) continue;
      std::vector<double> values(static_cast<std::size_t>(fit.sample.size()));
      for (Eigen::Index m = 0; m < fit.sample.size(); ++m) {
        values[static_cast<std::size_t>(m)] =
            draw_susceptible_quantile(fit.sample.draws.row(m).transpose(), patterns.row(p).transpose(), fit.q, fit.link);
      }
      out.push_back({static_cast<std::size_t>(p), fit.q, mean_of(values), hpd_interval(values, level),
                     equal_tail_interval(values, level)});
    }
  }
  return out;
}

struct CrossingReport {
  /// Adjacent grid pairs whose curve fails to increase.
  std::size_t violations = 0;
  double max_violation = 0.0;
  /// Largest violation relative to the curve value at the lower q.
  double max_relative_violation = 0.0;
};

/// Checks that each pattern's curve strictly increases with q.
inline CrossingReport crossing_report(const std::vector<CurvePoint>& curves) {
  CrossingReport rep;
  for (std::size_t i = 1; i < curves.size(); ++i) {
    const auto& a = curves[i - 1];
    const auto& b = curves[i];
    if (a.pattern != b.pattern) continue;
    if (!(b.mean > a.mean)) {
      ++rep.violations;
      const double gap = a.mean - b.mean;
      rep.max_violation = std::max(rep.max_violation, gap);
      rep.max_relative_violation = std::max(rep.max_relative_violation, gap / std::abs(a.mean));
    }
  }
  return rep;
}

} // namespace dggqr
