#include <doctest.h>

#include <cmath>
#include <functional>

#include "metavi/distributions.hpp"

using namespace metavi;

namespace {

// Trapezoid quadrature of exp(log_prob) over [lo, hi].
double integrate_density(const DistParams& dp, double lo, double hi,
                         std::size_t steps) {
  double h = (hi - lo) / static_cast<double>(steps);
  auto f = [&](double x) {
    double v[1] = {x};
    return std::exp(log_prob(dp, v));
  };
  double total = 0.5 * (f(lo) + f(hi));
  for (std::size_t i = 1; i < steps; ++i) total += f(lo + h * i);
  return total * h;
}

DistParams make_params(FamilyTag tag, std::vector<double> theta) {
  DistParams dp;
  dp.family = Family::make(tag);
  dp.theta = std::move(theta);
  return dp;
}

}  // namespace

TEST_CASE("continuous densities integrate to one") {
  struct Case {
    DistParams dp;
    double lo, hi;
  };
  std::vector<Case> cases = {
      {make_params(FamilyTag::gaussian_fixed_var, {0.7}), -5.0, 6.0},
      {make_params(FamilyTag::log_normal_fixed_var, {0.5}), 1e-9, 20.0},
      {make_params(FamilyTag::exponential, {1.3}), 0.0, 40.0},
      {make_params(FamilyTag::beta_symmetric, {2.5}), 1e-9, 1.0 - 1e-9},
      {make_params(FamilyTag::laplace_fixed_loc, {0.8}), -30.0, 30.0},
      {make_params(FamilyTag::weibull_fixed_scale, {1.7}), 1e-9, 15.0},
      {make_params(FamilyTag::gaussian_full, {-1.0, 0.6}), -12.0, 10.0},
  };
  for (const auto& c : cases) {
    double mass = integrate_density(c.dp, c.lo, c.hi, 400000);
    INFO("family ", family_to_string(c.dp.family.tag));
    CHECK(std::fabs(mass - 1.0) < 1e-3);
  }
}

TEST_CASE("bernoulli mass sums to one") {
  DistParams dp = make_params(FamilyTag::bernoulli, {0.37});
  double x0[1] = {0.0}, x1[1] = {1.0};
  CHECK(std::exp(log_prob(dp, x0)) + std::exp(log_prob(dp, x1)) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("log_prob rejects points outside the support") {
  double neg[1] = {-0.5};
  double big[1] = {1.5};
  CHECK_THROWS_AS(
      log_prob(make_params(FamilyTag::exponential, {1.0}), neg), SupportError);
  CHECK_THROWS_AS(
      log_prob(make_params(FamilyTag::beta_symmetric, {2.0}), big),
      SupportError);
  CHECK_THROWS_AS(
      log_prob(make_params(FamilyTag::weibull_fixed_scale, {1.0}), neg),
      SupportError);
  CHECK_THROWS_AS(
      log_prob(make_params(FamilyTag::log_normal_fixed_var, {0.0}), neg),
      SupportError);
  // Bad parameters are support errors too.
  double ok[1] = {0.5};
  CHECK_THROWS_AS(
      log_prob(make_params(FamilyTag::exponential, {-1.0}), ok), SupportError);
}

TEST_CASE("samplers hit analytic moments") {
  Rng rng(123);
  const std::size_t n = 200000;

  auto moments = [&](const DistParams& dp) {
    std::vector<double> xs = sample(dp, rng, n);
    double s1 = 0.0, s2 = 0.0;
    for (double v : xs) {
      s1 += v;
      s2 += v * v;
    }
    double mean = s1 / n;
    return std::pair<double, double>{mean, s2 / n - mean * mean};
  };

  auto [gm, gv] = moments(make_params(FamilyTag::gaussian_fixed_var, {1.4}));
  CHECK(gm == doctest::Approx(1.4).epsilon(0.02));
  CHECK(gv == doctest::Approx(0.1).epsilon(0.05));

  auto [em, ev] = moments(make_params(FamilyTag::exponential, {2.0}));
  CHECK(em == doctest::Approx(0.5).epsilon(0.03));
  CHECK(ev == doctest::Approx(0.25).epsilon(0.06));

  double a = 3.0;  // symmetric beta: mean 1/2, var 1/(4(2a+1))
  auto [bm, bv] = moments(make_params(FamilyTag::beta_symmetric, {a}));
  CHECK(bm == doctest::Approx(0.5).epsilon(0.02));
  CHECK(bv == doctest::Approx(1.0 / (4.0 * (2.0 * a + 1.0))).epsilon(0.06));

  auto [lm, lv] = moments(make_params(FamilyTag::laplace_fixed_loc, {0.7}));
  CHECK(std::fabs(lm) < 0.02);
  CHECK(lv == doctest::Approx(2.0 * 0.7 * 0.7).epsilon(0.06));

  double k = 2.0;  // Weibull scale 1: mean Γ(1 + 1/k)
  auto [wm, wv] = moments(make_params(FamilyTag::weibull_fixed_scale, {k}));
  CHECK(wm == doctest::Approx(std::tgamma(1.0 + 1.0 / k)).epsilon(0.02));
  (void)wv;

  auto [pm, pv] = moments(make_params(FamilyTag::bernoulli, {0.3}));
  CHECK(pm == doctest::Approx(0.3).epsilon(0.05));
  (void)pv;
}

TEST_CASE("reparam_sample applies mean + std * noise exactly") {
  GaussianPosterior q{{1.0, -2.0}, {0.0, std::log(4.0)}};
  std::vector<double> eps = {0.5, -1.5};
  auto z = reparam_sample(q, eps);
  CHECK(z[0] == doctest::Approx(1.0 + 0.5).epsilon(1e-12));
  CHECK(z[1] == doctest::Approx(-2.0 + 2.0 * -1.5).epsilon(1e-12));
}

TEST_CASE("analytic gaussian KL matches a Monte-Carlo estimate") {
  GaussianPosterior q{{0.3, -0.8}, {-0.2, 0.4}};
  GaussianPosterior p{{0.0, 0.0}, {0.0, 0.0}};
  double analytic = kl_diag_gaussians(q, p);

  Rng rng(77);
  const std::size_t n = 200000;
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> eps = {rng.normal(), rng.normal()};
    auto z = reparam_sample(q, eps);
    double lq = 0.0, lp = 0.0;
    for (std::size_t j = 0; j < 2; ++j) {
      double vq = std::exp(q.log_var[j]);
      double dq = z[j] - q.mean[j];
      lq += -0.5 * (std::log(2.0 * 3.14159265358979323846 * vq)) -
            dq * dq / (2.0 * vq);
      lp += -0.5 * std::log(2.0 * 3.14159265358979323846) - z[j] * z[j] / 2.0;
    }
    double d = lq - lp;
    s1 += d;
    s2 += d * d;
  }
  double mc = s1 / n;
  double se = std::sqrt((s2 / n - mc * mc) / n);
  CHECK(std::fabs(analytic - mc) < 3.0 * se + 1e-12);
}

TEST_CASE("positivity link is softplus and saturates to identity") {
  CHECK(positivity_link(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(positivity_link(50.0) == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(positivity_link(-40.0) > 0.0);
  CHECK(Family::make(FamilyTag::exponential).link(0.0) ==
        doctest::Approx(std::log(2.0)));
  CHECK(Family::make(FamilyTag::gaussian_fixed_var).link(-3.0) ==
        doctest::Approx(-3.0));
}
