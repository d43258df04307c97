#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "dggqr/model.hpp"
#include "support/oracles.hpp"

using namespace dggqr;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Eigen::MatrixXd binary_design(const std::vector<int>& x) {
  Eigen::MatrixXd d(static_cast<Eigen::Index>(x.size()), 2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    d(static_cast<Eigen::Index>(i), 0) = 1.0;
    d(static_cast<Eigen::Index>(i), 1) = x[i];
  }
  return d;
}

Eigen::MatrixXd intercept_only(std::size_t n) { return Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(n), 1); }

ParameterVector truth(double q) {
  ParameterVector p;
  p.beta = Eigen::Vector2d(1.3, 0.7);
  p.lambda = 1.0;
  p.alpha = -0.25;
  p.q = q;
  return p;
}

SurvivalDataset toy_dataset() {
  return SurvivalDataset({0.8, 2.5, 6.0}, {1, 0, 1}, binary_design({0, 1, 1}));
}

// Random dataset with a binary and a continuous covariate.
SurvivalDataset random_dataset(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> t(0.05, 8.0), z(-1.0, 1.0);
  std::bernoulli_distribution b(0.5), ev(0.6);
  std::vector<double> times(n);
  std::vector<int> status(n);
  Eigen::MatrixXd d(static_cast<Eigen::Index>(n), 3);
  for (std::size_t i = 0; i < n; ++i) {
    times[i] = t(rng);
    status[i] = ev(rng) ? 1 : 0;
    const auto r = static_cast<Eigen::Index>(i);
    d(r, 0) = 1.0;
    d(r, 1) = b(rng) ? 1.0 : 0.0;
    d(r, 2) = z(rng);
  }
  return SurvivalDataset(std::move(times), std::move(status), std::move(d));
}

} // namespace

TEST_CASE("linear_predictor", "[model]") {
  const Eigen::Vector2d beta(1.3, 0.7);
  CHECK_THAT(linear_predictor(beta, Eigen::Vector2d(1, 0)), WithinRel(std::exp(1.3), 1e-15));
  CHECK_THAT(linear_predictor(beta, Eigen::Vector2d(1, 1)), WithinRel(std::exp(2.0), 1e-15));
  CHECK_THAT(linear_predictor(beta, Eigen::Vector2d(1, 1)), WithinAbs(7.389, 1e-3));
  CHECK(linear_predictor(Eigen::Vector3d::Zero(), Eigen::Vector3d(1, -4, 17)) == 1.0);

  try {
    (void)linear_predictor(Eigen::Vector2d(1.0, 800.0), Eigen::Vector2d(1, 1), 42);
    FAIL("expected OverflowError");
  } catch (const OverflowError& e) {
    CHECK_THAT(std::string(e.what()), Catch::Matchers::ContainsSubstring("row 42"));
  }
  CHECK_THROWS_AS(linear_predictor(Eigen::Vector2d(1.0, -800.0), Eigen::Vector2d(1, 1)), OverflowError);
  CHECK_THROWS_AS(linear_predictor(Eigen::Vector2d(1.0, 0.0), Eigen::Vector3d(1, 1, 1)), DomainError);
}

TEST_CASE("SurvivalDataset validates its inputs", "[model][dataset]") {
  CHECK_THROWS_AS(SurvivalDataset({}, {}, Eigen::MatrixXd(0, 1)), DomainError);
  CHECK_THROWS_AS(SurvivalDataset({1.0, 0.0}, {1, 0}, intercept_only(2)), DomainError);
  CHECK_THROWS_AS(SurvivalDataset({1.0, -2.0}, {1, 0}, intercept_only(2)), DomainError);
  CHECK_THROWS_AS(SurvivalDataset({1.0, 2.0}, {1, 2}, intercept_only(2)), DomainError);
  CHECK_THROWS_AS(SurvivalDataset({1.0, 2.0}, {1}, intercept_only(2)), DomainError);
  Eigen::MatrixXd no_intercept = binary_design({0, 1});
  no_intercept(1, 0) = 2.0;
  CHECK_THROWS_AS(SurvivalDataset({1.0, 2.0}, {1, 0}, no_intercept), DomainError);
  // constant covariate duplicates the intercept
  CHECK_THROWS_AS(SurvivalDataset({1.0, 2.0, 3.0}, {1, 0, 1}, binary_design({1, 1, 1})), DomainError);

  const SurvivalDataset d = SurvivalDataset({1.0, 2.0, 3.0, 4.0}, {1, 0, 1, 1}, binary_design({1, 0, 1, 0}));
  CHECK(d.size() == 4);
  CHECK(d.n_coef() == 2);
  CHECK(d.n_events() == 3);
  REQUIRE(d.patterns().rows() == 2);
  CHECK(d.patterns()(0, 1) == 1.0);
  CHECK(d.patterns()(1, 1) == 0.0);
  CHECK(d.pattern_of() == std::vector<Eigen::Index>{0, 1, 0, 1});
}

TEST_CASE("log_likelihood single-subject terms", "[model][likelihood]") {
  const ParameterVector p{Eigen::VectorXd::Constant(1, 1.3), 1.0, -0.25, 0.2};
  const GGParams g{1.0, -0.25, theta_from_quantile(1.0, -0.25, std::exp(1.3), 0.2)};
  const SurvivalDataset censored({2.0}, {0}, intercept_only(1));
  const SurvivalDataset event({2.0}, {1}, intercept_only(1));
  CHECK(log_likelihood(p, censored, LinkMode::QuantileLink) == gg_log_sf(g, 2.0));
  CHECK(log_likelihood(p, event, LinkMode::QuantileLink) == gg_log_pdf(g, 2.0));
  CHECK_THAT(log_likelihood(p, censored, LinkMode::QuantileLink),
             WithinRel(std::log(oracle::gg_sf(1.0, -0.25, g.theta, 2.0)), 1e-12));
  CHECK_THAT(log_likelihood(p, event, LinkMode::QuantileLink),
             WithinRel(std::log(oracle::gg_pdf(1.0, -0.25, g.theta, 2.0)), 1e-12));
}

TEST_CASE("log_likelihood of a three-subject set matches the per-term oracle sum", "[model][likelihood]") {
  const SurvivalDataset d = toy_dataset();
  const ParameterVector p = truth(0.5);
  double expected = 0.0;
  const double theta0 = oracle::theta_from_quantile(1.0, -0.25, std::exp(1.3), 0.5);
  const double theta1 = oracle::theta_from_quantile(1.0, -0.25, std::exp(2.0), 0.5);
  expected += std::log(oracle::gg_pdf(1.0, -0.25, theta0, 0.8));
  expected += std::log(oracle::gg_sf(1.0, -0.25, theta1, 2.5));
  expected += std::log(oracle::gg_pdf(1.0, -0.25, theta1, 6.0));
  CHECK_THAT(log_likelihood(p, d, LinkMode::QuantileLink), WithinRel(expected, 1e-11));

  // ThetaLink reads exp(x'beta) as theta directly
  double expected_theta = std::log(oracle::gg_pdf(1.0, -0.25, std::exp(1.3), 0.8)) +
                          std::log(oracle::gg_sf(1.0, -0.25, std::exp(2.0), 2.5)) +
                          std::log(oracle::gg_pdf(1.0, -0.25, std::exp(2.0), 6.0));
  CHECK_THAT(log_likelihood(p, d, LinkMode::ThetaLink), WithinRel(expected_theta, 1e-11));
}

TEST_CASE("log_likelihood returns -inf outside the support", "[model][likelihood]") {
  const SurvivalDataset d = toy_dataset();
  ParameterVector p = truth(0.5);
  p.alpha = 0.1;
  CHECK(log_likelihood(p, d, LinkMode::QuantileLink) == -std::numeric_limits<double>::infinity());
  p.alpha = 0.0;
  CHECK(log_likelihood(p, d, LinkMode::QuantileLink) == -std::numeric_limits<double>::infinity());
  p = truth(0.5);
  p.lambda = -1.0;
  CHECK(log_likelihood(p, d, LinkMode::QuantileLink) == -std::numeric_limits<double>::infinity());

  NumericDiagnostics diag;
  p = truth(0.5);
  p.beta(0) = 900.0; // exp overflows
  CHECK(log_likelihood(p, d, LinkMode::QuantileLink, &diag) == -std::numeric_limits<double>::infinity());
  CHECK(diag.precision.load() == 1);
  p.beta(0) = 12.0; // quantile far beyond every susceptible
  CHECK(log_likelihood(p, d, LinkMode::QuantileLink, &diag) == -std::numeric_limits<double>::infinity());
  CHECK(diag.precision.load() == 2);

  ParameterVector wrong = truth(0.5);
  wrong.beta = Eigen::Vector3d(1, 2, 3);
  CHECK_THROWS_AS(log_likelihood(wrong, d, LinkMode::QuantileLink), DomainError);
}

TEST_CASE("log_likelihood is invariant to subject order", "[model][likelihood][property]") {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 20; ++rep) {
    const SurvivalDataset d = random_dataset(100 + static_cast<std::uint64_t>(rep), 40);
    std::vector<std::size_t> perm(d.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> t;
    std::vector<int> s;
    Eigen::MatrixXd x(d.design().rows(), d.design().cols());
    for (std::size_t i = 0; i < perm.size(); ++i) {
      t.push_back(d.times()[perm[i]]);
      s.push_back(d.status()[perm[i]]);
      x.row(static_cast<Eigen::Index>(i)) = d.design().row(static_cast<Eigen::Index>(perm[i]));
    }
    const SurvivalDataset shuffled(t, s, x);
    const ParameterVector p{Eigen::Vector3d(1.0, 0.4, -0.3), 0.9, -0.3, 0.4};
    for (LinkMode mode : {LinkMode::QuantileLink, LinkMode::ThetaLink}) {
      const double a = log_likelihood(p, d, mode);
      REQUIRE(std::isfinite(a));
      CHECK_THAT(log_likelihood(p, shuffled, mode), WithinRel(a, 1e-12));
    }
  }
}

TEST_CASE("log_likelihood with no events is the sum of log survivals", "[model][likelihood]") {
  const std::vector<double> times{0.3, 1.1, 2.0, 4.5, 9.0};
  const SurvivalDataset d(times, {0, 0, 0, 0, 0}, binary_design({0, 1, 0, 1, 1}));
  const ParameterVector p = truth(0.3);
  double expected = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double mu = std::exp(1.3 + 0.7 * d.design()(static_cast<Eigen::Index>(i), 1));
    expected += gg_log_sf({1.0, -0.25, theta_from_quantile(1.0, -0.25, mu, 0.3)}, times[i]);
  }
  CHECK(log_likelihood(p, d, LinkMode::QuantileLink) == expected);
}

TEST_CASE("log_prior", "[model][prior]") {
  const PriorSpec priors;
  ParameterVector p{Eigen::VectorXd::Zero(2), 1.0, 0.1, 0.5};
  CHECK(log_prior(p, priors) == -std::numeric_limits<double>::infinity());
  p.alpha = -0.1;
  p.lambda = 0.0;
  CHECK(log_prior(p, priors) == -std::numeric_limits<double>::infinity());
  p.lambda = 1.0;

  // closed forms: truncated normal, Gamma(shape 0.01, rate 0.01), two N(0, 100)
  const double sd = 10.0;
  const double trunc_mass = 0.5 * std::erfc(-0.1 / sd / std::sqrt(2.0)); // Phi(0.01)
  const double log_alpha = -0.5 * std::log(2 * std::numbers::pi * 100.0) - std::log(trunc_mass);
  const double log_lambda = 0.01 * std::log(0.01) - std::lgamma(0.01) - 0.01;
  const double log_beta = -0.5 * std::log(2 * std::numbers::pi * 100.0);
  CHECK_THAT(log_prior(p, priors), WithinRel(log_alpha + log_lambda + 2 * log_beta, 1e-13));

  // the truncated alpha density integrates to one on (-inf, 0)
  ParameterVector only_alpha{Eigen::VectorXd(0), 1.0, -0.1, 0.5};
  PriorSpec unit_lambda = priors;
  unit_lambda.lambda_shape = 1.0;
  unit_lambda.lambda_rate = 1.0; // log density at lambda = 1 is -1
  const double mass = oracle::integrate(
      [&](double a) {
        only_alpha.alpha = a;
        return std::exp(log_prior(only_alpha, unit_lambda) + 1.0);
      },
      -200.0, 0.0);
  CHECK_THAT(mass, WithinAbs(1.0, 1e-8));

  PriorSpec moments;
  moments.set_lambda_moments(1.0, 100.0);
  CHECK_THAT(moments.lambda_shape, WithinRel(0.01, 1e-15));
  CHECK_THAT(moments.lambda_rate, WithinRel(0.01, 1e-15));
  CHECK_THROWS_AS(moments.set_lambda_moments(-1.0, 1.0), ConfigError);
}

TEST_CASE("log_posterior is the sum of prior and likelihood", "[model][posterior]") {
  const SurvivalDataset d = toy_dataset();
  const PriorSpec priors;
  const ParameterVector p = truth(0.5);
  CHECK(log_posterior(p, d, priors, LinkMode::QuantileLink) ==
        log_prior(p, priors) + log_likelihood(p, d, LinkMode::QuantileLink));

  ParameterVector bad = p;
  bad.alpha = 0.5;
  CHECK(log_posterior(bad, d, priors, LinkMode::QuantileLink) == -std::numeric_limits<double>::infinity());

  const PosteriorTarget target(d, priors, LinkMode::QuantileLink, 0.5);
  CHECK(target(p.to_working()) == log_posterior(p, d, priors, LinkMode::QuantileLink));
}

TEST_CASE("shifting a covariate and compensating the intercept leaves the posterior unchanged", "[model][posterior]") {
  const SurvivalDataset d = random_dataset(7, 60);
  Eigen::MatrixXd shifted = d.design();
  const double shift = 0.75;
  shifted.col(2).array() += shift;
  const SurvivalDataset ds(d.times(), d.status(), shifted);
  const ParameterVector p{Eigen::Vector3d(1.0, 0.4, -0.3), 0.9, -0.3, 0.4};
  ParameterVector pc = p;
  pc.beta(0) -= shift * p.beta(2);
  for (LinkMode mode : {LinkMode::QuantileLink, LinkMode::ThetaLink}) {
    CHECK_THAT(log_likelihood(pc, ds, mode), WithinRel(log_likelihood(p, d, mode), 1e-11));
  }
}

TEST_CASE("central differences of the log-posterior converge at second order", "[model][posterior]") {
  const SurvivalDataset d = random_dataset(8, 50);
  const PriorSpec priors;
  const PosteriorTarget target(d, priors, LinkMode::QuantileLink, 0.35);
  const ParameterVector p{Eigen::Vector3d(1.0, 0.3, -0.2), 0.8, -0.35, 0.35};
  const Eigen::VectorXd v = p.to_working();
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    auto central = [&](double h) {
      Eigen::VectorXd a = v, b = v;
      a(j) += h;
      b(j) -= h;
      return (target(a) - target(b)) / (2 * h);
    };
    // Richardson-extrapolated reference from a fine step
    const double ref = (4 * central(1e-4) - central(2e-4)) / 3;
    const double e1 = std::abs(central(0.02) - ref);
    const double e2 = std::abs(central(0.01) - ref);
    const double e3 = std::abs(central(0.005) - ref);
    INFO("coordinate " << j << " errors " << e1 << " " << e2 << " " << e3);
    REQUIRE(std::isfinite(ref));
    // halving h divides the error by ~4
    CHECK(e1 / e2 > 3.0);
    CHECK(e1 / e2 < 5.0);
    CHECK(e2 / e3 > 3.0);
    CHECK(e2 / e3 < 5.0);
  }
}

TEST_CASE("ThetaLink and QuantileLink agree on a single pattern when matched", "[model][link]") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> lam(0.3, 3.0), alpha(-1.5, -0.05), mu(0.5, 5.0), q(0.05, 0.95);
  std::vector<double> times{0.2, 0.9, 1.7, 3.3, 5.0, 8.0};
  const SurvivalDataset d(times, {1, 0, 1, 1, 0, 0}, intercept_only(times.size()));
  for (int i = 0; i < 100; ++i) {
    const double l = lam(rng), a = alpha(rng), m = mu(rng), qq = q(rng);
    double theta = 0.0;
    try {
      theta = theta_from_quantile(l, a, m, qq);
    } catch (const PrecisionError&) {
      continue;
    }
    const ParameterVector by_quantile{Eigen::VectorXd::Constant(1, std::log(m)), l, a, qq};
    const ParameterVector by_theta{Eigen::VectorXd::Constant(1, std::log(theta)), l, a, qq};
    CHECK_THAT(log_likelihood(by_theta, d, LinkMode::ThetaLink),
               WithinRel(log_likelihood(by_quantile, d, LinkMode::QuantileLink), 1e-9));
  }
}

TEST_CASE("ParameterVector working-vector round trip and link parsing", "[model]") {
  const ParameterVector p = truth(0.2);
  const Eigen::VectorXd v = p.to_working();
  REQUIRE(v.size() == 4);
  CHECK(v(2) == 1.0);
  CHECK(v(3) == -0.25);
  const ParameterVector back = ParameterVector::from_working(v, 0.2);
  CHECK(back.beta == p.beta);
  CHECK(back.lambda == p.lambda);
  CHECK(back.alpha == p.alpha);
  CHECK_THROWS_AS(ParameterVector::from_working(Eigen::Vector2d(1, 2), 0.5), DomainError);
  CHECK(parse_link_mode("theta") == LinkMode::ThetaLink);
  CHECK(parse_link_mode("quantile") == LinkMode::QuantileLink);
  CHECK(to_string(LinkMode::ThetaLink) == "theta");
  CHECK_THROWS_AS(parse_link_mode("mu"), ConfigError);
}
