#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "dggqr/dgg_core.hpp"
#include "support/oracles.hpp"

using namespace dggqr;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Frozen from the 50-digit literal evaluation in support/oracles.hpp.
constexpr double kPdfLam1AlphaM025Th2T1 = 0.37755609986334471;
constexpr double kPdfLam1AlphaM025Th05T07 = 0.32081568171721847;
constexpr double kSfLam1AlphaM025Th05T07 = 0.31163122636330842;
constexpr double kQuantileLam1Alpha05Th2P025 = 0.59512656957517218;
constexpr double kCureLam1AlphaM025Th2105 = 0.32234614223924596;
constexpr double kThetaMuE13Q02 = 21.052226624479903;
constexpr double kThetaMuE20Q02 = 97.344848486703157;

const double kE13 = std::exp(1.3);

} // namespace

TEST_CASE("gg_pdf reduces to the Gompertz and exponential densities at the origin", "[dgg_core][gg_pdf]") {
  CHECK_THAT(gg_pdf({1.0, 0.0, 1.0}, 1e-14), WithinAbs(1.0, 1e-12));
  CHECK_THAT(gg_pdf({1.0, -0.25, 1.0}, 1e-14), WithinAbs(1.0, 1e-12));
  CHECK_THAT(gg_pdf({2.5, 0.3, 1.0}, 1e-14), WithinAbs(2.5, 1e-12));
}

TEST_CASE("gg_pdf matches a high-precision evaluation of the density", "[dgg_core][gg_pdf]") {
  CHECK_THAT(gg_pdf({1.0, -0.25, 2.0}, 1.0), WithinRel(kPdfLam1AlphaM025Th2T1, 1e-13));
  CHECK_THAT(oracle::gg_pdf(1.0, -0.25, 2.0, 1.0), WithinRel(kPdfLam1AlphaM025Th2T1, 1e-15));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lam(0.2, 4.0), alpha(-2.0, 2.0), theta(0.2, 40.0), t(0.01, 6.0);
  for (int i = 0; i < 300; ++i) {
    const GGParams p{lam(rng), alpha(rng), theta(rng)};
    const double tt = t(rng);
    const double expected = oracle::gg_pdf(p.lambda, p.alpha, p.theta, tt);
    if (expected < 1e-250) continue;
    CHECK_THAT(gg_pdf(p, tt), WithinRel(expected, 1e-10));
  }
}

TEST_CASE("gg_pdf rejects invalid arguments", "[dgg_core][gg_pdf]") {
  CHECK_THROWS_AS(gg_pdf({1.0, -0.25, 1.0}, 0.0), DomainError);
  CHECK_THROWS_AS(gg_pdf({1.0, -0.25, 1.0}, -1.0), DomainError);
  CHECK_THROWS_AS(gg_pdf({0.0, -0.25, 1.0}, 1.0), DomainError);
  CHECK_THROWS_AS(gg_pdf({1.0, -0.25, -2.0}, 1.0), DomainError);
  CHECK_THROWS_AS(gg_sf({-1.0, -0.25, 1.0}, 1.0), DomainError);
}

TEST_CASE("gg_sf boundary values and the defective limit", "[dgg_core][gg_sf]") {
  CHECK(gg_sf({1.3, -0.7, 4.0}, 0.0) == 1.0);
  CHECK(gg_sf({1.3, 0.7, 0.4}, 0.0) == 1.0);
  CHECK_THAT(gg_sf({1.0, -1.0, 1.0}, std::numeric_limits<double>::infinity()), WithinAbs(std::exp(-1.0), 1e-15));
  CHECK_THAT(gg_sf({1.0, -1.0, 1.0}, 1e6), WithinAbs(0.36787944117144233, 1e-15));
  CHECK(gg_sf({1.0, 0.5, 2.0}, std::numeric_limits<double>::infinity()) == 0.0);
}

TEST_CASE("gg_sf satisfies the cure-fraction mixture at the susceptible quantile", "[dgg_core][gg_sf]") {
  const GGParams p{1.0, -0.25, 21.05};
  const double p0 = cure_fraction_raw(p).p0;
  CHECK_THAT(p0, WithinRel(kCureLam1AlphaM025Th2105, 1e-13));
  // theta = 21.05 is the rounded value; with the exact theta the identity is exact.
  CHECK_THAT(gg_sf(p, kE13), WithinAbs(p0 + (1 - p0) * 0.8, 1e-4));
  const GGParams exact{1.0, -0.25, theta_from_quantile(1.0, -0.25, kE13, 0.2)};
  const double p0e = cure_fraction_raw(exact).p0;
  CHECK_THAT(gg_sf(exact, kE13), WithinAbs(p0e + (1 - p0e) * 0.8, 1e-13));
}

TEST_CASE("gg_sf matches the literal high-precision survival function", "[dgg_core][gg_sf]") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> lam(0.2, 4.0), alpha(-2.0, 2.0), theta(0.2, 40.0), t(0.0, 6.0);
  for (int i = 0; i < 300; ++i) {
    const GGParams p{lam(rng), alpha(rng), theta(rng)};
    const double tt = t(rng);
    const double expected = oracle::gg_sf(p.lambda, p.alpha, p.theta, tt);
    // the literal 1 - F form cancels below ~1e-40 even at 50 digits
    if (expected < 1e-35) continue;
    CHECK_THAT(gg_sf(p, tt), WithinRel(expected, 1e-10));
  }
}

TEST_CASE("gg_hazard special cases and ratio", "[dgg_core][gg_hazard]") {
  CHECK_THAT(gg_hazard({2.0, 0.8, 1.0}, 1e-14), WithinAbs(2.0, 1e-12));
  CHECK_THAT(gg_hazard({2.0, -0.8, 1.0}, 1e-14), WithinAbs(2.0, 1e-12));
  CHECK_THAT(gg_hazard({1.0, 0.0, 1.0}, 5.0), WithinAbs(1.0, 1e-12));
  CHECK_THAT(gg_hazard({1.0, -0.25, 0.5}, 0.7), WithinRel(kPdfLam1AlphaM025Th05T07 / kSfLam1AlphaM025Th05T07, 1e-12));
}

TEST_CASE("gg_hazard reports survival underflow distinctly", "[dgg_core][gg_hazard]") {
  CHECK_THROWS_AS(gg_hazard({1.0, 1.0, 1.0}, 10.0), OverflowError);
  CHECK(gg_sf({1.0, 1.0, 1.0}, 10.0) == 0.0);
}

TEST_CASE("gg_hazard shape follows the alpha/theta regimes", "[dgg_core][gg_hazard]") {
  SECTION("theta = 1, alpha > 0: increasing") {
    double prev = 0.0;
    for (double t = 0.05; t < 4.0; t += 0.05) {
      const double h = gg_hazard({0.5, 0.7, 1.0}, t);
      CHECK(h > prev);
      prev = h;
    }
  }
  SECTION("theta < 1, alpha > 0: bathtub") {
    const GGParams p{1.0, 1.0, 0.5};
    std::vector<double> h;
    for (double t = 0.02; t < 4.0; t += 0.02) h.push_back(gg_hazard(p, t));
    const auto low = std::min_element(h.begin(), h.end());
    REQUIRE(low != h.begin());
    REQUIRE(low != h.end() - 1);
    for (auto it = h.begin(); it != low; ++it) CHECK(*it > *(it + 1));
    for (auto it = low; it + 1 != h.end(); ++it) CHECK(*it < *(it + 1));
  }
  SECTION("theta < 1, alpha = 0: decreasing") {
    double prev = std::numeric_limits<double>::infinity();
    for (double t = 0.05; t < 4.0; t += 0.05) {
      const double h = gg_hazard({1.0, 0.0, 0.6}, t);
      CHECK(h < prev);
      prev = h;
    }
  }
}

TEST_CASE("gg_quantile", "[dgg_core][gg_quantile]") {
  CHECK_THAT(gg_quantile({1.0, 0.0, 1.0}, 0.5), WithinAbs(std::log(2.0), 1e-15));
  CHECK_THAT(gg_quantile({1.0, 0.5, 2.0}, 0.25), WithinRel(kQuantileLam1Alpha05Th2P025, 1e-12));
  CHECK_THAT(oracle::gg_quantile_bisection(1.0, 0.5, 2.0, 0.25), WithinRel(kQuantileLam1Alpha05Th2P025, 1e-12));

  SECTION("defective mass limits attainable probabilities") {
    try {
      (void)gg_quantile({1.0, -0.25, 1.0}, 0.99);
      FAIL("expected DomainError");
    } catch (const DomainError& e) {
      // message names the maximum attainable probability 1 - p0 = 1 - exp(-4)
      CHECK_THAT(std::string(e.what()), Catch::Matchers::ContainsSubstring("0.98168"));
    }
    CHECK_NOTHROW(gg_quantile({1.0, -0.25, 1.0}, 0.98));
  }

  SECTION("inverts the CDF and increases in p") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> lam(0.2, 4.0), alpha(-2.0, 2.0), theta(0.2, 30.0);
    for (int i = 0; i < 200; ++i) {
      const GGParams p{lam(rng), alpha(rng), theta(rng)};
      const double top = p.alpha < 0 ? 1.0 - cure_fraction_raw(p).p0 : 1.0;
      if (top < 1e-6) continue;
      double prev = 0.0;
      for (double frac = 0.02; frac < 0.99; frac += 0.04) {
        const double prob = frac * top;
        const double t = gg_quantile(p, prob);
        CHECK(t > prev);
        prev = t;
        CHECK_THAT(1.0 - gg_sf(p, t), WithinAbs(prob, 1e-9));
      }
    }
  }
}

TEST_CASE("cure_fraction_raw", "[dgg_core][cure_fraction]") {
  CHECK_THAT(cure_fraction_raw({1.0, -1.0, 1.0}).p0, WithinAbs(std::exp(-1.0), 1e-15));
  CHECK_THAT(cure_fraction_raw({1.0, -0.25, 1.0}).p0, WithinAbs(std::exp(-4.0), 1e-15));
  CHECK_THAT(cure_fraction_raw({1.0, -0.25, 21.05}).p0, WithinRel(kCureLam1AlphaM025Th2105, 1e-13));
  CHECK_THAT(cure_fraction_raw({1.0, -0.25, 21.05}).p0, WithinAbs(0.322, 5e-4));
  CHECK_THROWS_AS(cure_fraction_raw({1.0, 0.25, 2.0}), DomainError);
  CHECK_THROWS_AS(cure_fraction_raw({1.0, 0.0, 2.0}), DomainError);
  // close to alpha = 0 the cure fraction vanishes
  CHECK(cure_fraction_raw({1.0, -1e-9, 2.0}).p0 == 0.0);
}

TEST_CASE("susceptible survival function is proper", "[dgg_core][susceptible]") {
  const GGParams p{1.0, -0.25, 21.05};
  CHECK(susceptible_sf(p, 0.0) == 1.0);
  CHECK(susceptible_sf(p, std::numeric_limits<double>::infinity()) == 0.0);
  CHECK_THAT(susceptible_sf(p, 1e4), WithinAbs(0.0, 1e-12));
  CHECK_THAT(susceptible_sf(p, kE13), WithinAbs(0.8, 1e-4));
  CHECK_THAT(susceptible_sf(p, kE13), WithinRel(oracle::susceptible_sf(1.0, -0.25, 21.05, kE13), 1e-12));
  CHECK_THROWS_AS(susceptible_sf({1.0, 0.3, 2.0}, 1.0), DomainError);

  double prev = 1.0;
  for (double t = 0.0; t < 30.0; t += 0.1) {
    const double s = susceptible_sf(p, t);
    CHECK(s <= prev);
    prev = s;
  }
}

TEST_CASE("susceptible_sf is undefined when everyone is cured", "[dgg_core][susceptible]") {
  // lambda/alpha ~ 0 and a huge theta push (1 - exp(lambda/alpha))^theta to 0
  const GGParams all_cured{1e-300, -1.0, 1e10};
  CHECK(cure_fraction_raw(all_cured).p0 == 1.0);
  CHECK_THROWS_AS(susceptible_sf(all_cured, 1.0), DomainError);
}

TEST_CASE("susceptible_quantile", "[dgg_core][susceptible]") {
  const double theta = theta_from_quantile(1.0, -0.25, kE13, 0.2);
  CHECK_THAT(susceptible_quantile(1.0, -0.25, theta, 0.2), WithinRel(kE13, 1e-12));
  CHECK_THAT(susceptible_quantile(1.0, -0.25, 21.05, 0.2),
             WithinRel(oracle::susceptible_quantile_bisection(1.0, -0.25, 21.05, 0.2), 1e-10));
  CHECK_THAT(susceptible_quantile(1.0, -0.25, 21.05, 0.2), WithinAbs(3.6693, 1e-3));
  CHECK(susceptible_quantile(1.0, -0.25, 21.05, 1e-300) > 0.0);
  CHECK(susceptible_quantile(1.0, -0.25, 21.05, 1e-300) < susceptible_quantile(1.0, -0.25, 21.05, 1e-12));
  CHECK(susceptible_quantile(1.0, -0.25, 21.05, 1e-12) < susceptible_quantile(1.0, -0.25, 21.05, 0.2));
  CHECK_THROWS_AS(susceptible_quantile(1.0, 0.25, 2.0, 0.5), DomainError);
  CHECK_THROWS_AS(susceptible_quantile(1.0, -0.25, 2.0, 1.0), DomainError);
}

TEST_CASE("theta_from_quantile", "[dgg_core][theta]") {
  CHECK_THAT(theta_from_quantile(1.0, -0.25, kE13, 0.2), WithinRel(kThetaMuE13Q02, 1e-12));
  CHECK_THAT(theta_from_quantile(1.0, -0.25, std::exp(2.0), 0.2), WithinRel(kThetaMuE20Q02, 1e-12));
  CHECK_THAT(oracle::theta_from_quantile(1.0, -0.25, kE13, 0.2), WithinRel(kThetaMuE13Q02, 1e-15));
  CHECK_THAT(oracle::theta_from_quantile(1.0, -0.25, std::exp(2.0), 0.2), WithinRel(kThetaMuE20Q02, 1e-15));

  SECTION("round trip over random parameters") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> lam(0.1, 5.0), alpha(-3.0, -0.02), log_theta(std::log(0.1), std::log(100.0)),
        q(0.01, 0.99);
    for (int i = 0; i < 500; ++i) {
      const double l = lam(rng), a = alpha(rng), th = std::exp(log_theta(rng)), qq = q(rng);
      const double mu = susceptible_quantile(l, a, th, qq);
      CHECK_THAT(theta_from_quantile(l, a, mu, qq), WithinRel(th, 1e-8));
    }
  }

  SECTION("quantile beyond every susceptible loses precision") {
    CHECK_THROWS_AS(theta_from_quantile(1.0, -0.25, 1e6, 0.2), PrecisionError);
  }
  CHECK_THROWS_AS(theta_from_quantile(1.0, -0.25, -1.0, 0.2), DomainError);
  CHECK_THROWS_AS(theta_from_quantile(1.0, -0.25, 1.0, 0.0), DomainError);
  CHECK_THROWS_AS(theta_from_quantile(1.0, -1e-11, 1.0, 0.5), DomainError);
}

TEST_CASE("reparameterized functions route through theta_from_quantile", "[dgg_core][dgg]") {
  const DGGQuantileParams qp{1.3, -0.4, 2.2, 0.35};
  const GGParams g{qp.lambda, qp.alpha, theta_from_quantile(qp.lambda, qp.alpha, qp.mu1_q, qp.q)};
  for (double t : {0.1, 0.5, 1.0, 3.0, 10.0}) {
    CHECK(dgg_pdf(qp, t) == gg_pdf(g, t));
    CHECK(dgg_sf(qp, t) == gg_sf(g, t));
  }
  CHECK(dgg_cure_fraction(qp).p0 == cure_fraction_raw(g).p0);
  CHECK_THAT(susceptible_sf(g, qp.mu1_q), WithinAbs(1.0 - qp.q, 1e-12));
  CHECK_THROWS_AS(dgg_sf({1.0, 0.2, 1.0, 0.5}, 1.0), DomainError);
  CHECK_THROWS_AS(dgg_sf({1.0, -0.2, 1.0, 1.5}, 1.0), DomainError);
}

TEST_CASE("dgg_cure_fraction reproduces the simulation-scenario cure fractions", "[dgg_core][dgg]") {
  struct Row {
    double q, x, expected;
  };
  for (const auto& r : {Row{0.2, 0, 0.32}, Row{0.2, 1, 0.83}, Row{0.5, 0, 0.15}, Row{0.5, 1, 0.54}, Row{0.8, 0, 0.05},
                        Row{0.8, 1, 0.22}}) {
    const double p0 = dgg_cure_fraction({1.0, -0.25, std::exp(1.3 + 0.7 * r.x), r.q}).p0;
    CHECK_THAT(p0, WithinAbs(r.expected, 0.005));
    const double th = oracle::theta_from_quantile(1.0, -0.25, std::exp(1.3 + 0.7 * r.x), r.q);
    CHECK_THAT(p0, WithinRel(oracle::cure_fraction(1.0, -0.25, th), 1e-12));
  }
}

TEST_CASE("mixture identity and special cases hold across parameter space", "[dgg_core][property]") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lam(0.1, 5.0), alpha(-3.0, -0.02), theta(0.1, 80.0), t(0.0, 20.0);
  for (int i = 0; i < 1000; ++i) {
    const GGParams p{lam(rng), alpha(rng), theta(rng)};
    const double p0 = cure_fraction_raw(p).p0;
    if (p0 >= 1.0) continue;
    const double tt = t(rng);
    CHECK(std::abs(gg_sf(p, tt) - (p0 + (1.0 - p0) * susceptible_sf(p, tt))) < 1e-12);
  }
  // exponential limit
  for (double tt : {0.1, 1.0, 3.0, 7.5}) {
    CHECK_THAT(gg_sf({1.0, 1e-8, 1.0}, tt), WithinAbs(std::exp(-tt), 1e-6));
    CHECK_THAT(gg_sf({1.0, 0.0, 1.0}, tt), WithinAbs(std::exp(-tt), 1e-15));
  }
  // Gompertz at theta = 1
  for (double tt : {0.1, 1.0, 3.0}) {
    const double a = -0.3, l = 0.8;
    CHECK_THAT(gg_sf({l, a, 1.0}, tt), WithinRel(std::exp(-l / a * std::expm1(a * tt)), 1e-14));
  }
}
