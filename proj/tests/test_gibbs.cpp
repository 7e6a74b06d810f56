#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "boundrat/gibbs.hpp"
#include "generators.hpp"

using namespace boundrat;
using boundrat::testing::Gen;
using boundrat::testing::max_abs_diff;

namespace {

const double kLn2 = std::log(2.0);

GibbsProblem coin(double beta) { return GibbsProblem({1.0, 0.0}, Distribution({0.5, 0.5}), beta); }

double objective(std::span<const double> u, const Distribution& q, const Distribution& p, double beta) {
  double e = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) e += p[i] * u[i];
  return e - kl_divergence(p, q).to_double() / beta;
}

}  // namespace

TEST_CASE("problem validation") {
  CHECK_THROWS_AS(GibbsProblem({1.0, 0.0}, Distribution({1.0, 0.0}), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(GibbsProblem({1.0, 0.0}, Distribution({0.5, 0.5}), -1.0), std::invalid_argument);
  CHECK_THROWS_AS(GibbsProblem({1.0}, Distribution({0.5, 0.5}), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(GibbsProblem({1.0, NAN}, Distribution({0.5, 0.5}), 1.0), std::invalid_argument);
}

TEST_CASE("partition function examples") {
  CHECK(partition_function(coin(0.0)) == 0.0);
  CHECK(partition_function(coin(kLn2)) == doctest::Approx(0.4054651081081644).epsilon(1e-14));
  const GibbsProblem flat({3.0, 3.0, 3.0}, Distribution({0.2, 0.3, 0.5}), 1.7);
  CHECK(partition_function(flat) == doctest::Approx(1.7 * 3.0).epsilon(1e-14));
}

TEST_CASE("gibbs policy examples") {
  const auto s0 = gibbs_policy(coin(0.0));
  CHECK(s0.policy[0] == 0.5);
  CHECK(s0.free_energy == doctest::Approx(0.5));

  const auto s = gibbs_policy(coin(kLn2));
  CHECK(s.policy[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(s.free_energy == doctest::Approx(0.5849625007211562).epsilon(1e-14));
  CHECK(s.kl_cost == doctest::Approx(0.056633012265132426).epsilon(1e-12));

  const GibbsProblem cold({3.0, 1.0, 0.0}, Distribution({0.7, 0.2, 0.1}), 1e3);
  CHECK(total_variation(gibbs_policy(cold).policy, Distribution::dirac(3, 0)) < 1e-6);
}

TEST_CASE("cumulant examples") {
  const auto flat = cumulants(GibbsProblem({2.5, 2.5}, Distribution({0.3, 0.7}), 4.0));
  CHECK(flat.mean == doctest::Approx(2.5));
  CHECK(flat.variance == doctest::Approx(0.0));
  const auto c = cumulants(coin(kLn2));
  CHECK(c.mean == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(c.variance == doctest::Approx(2.0 / 9.0).epsilon(1e-14));
}

TEST_CASE("rate of beta examples") {
  CHECK(rate_of_beta(coin(0.0)) == 0.0);
  CHECK(rate_of_beta(coin(kLn2)) == doctest::Approx(0.056633012265132426).epsilon(1e-12));
  CHECK(std::abs(rate_of_beta(coin(50.0)) - kLn2) < 1e-12);
  CHECK(max_rate(std::vector<double>{1.0, 0.0}, Distribution({0.5, 0.5})) == doctest::Approx(kLn2));
}

TEST_CASE("beta of rate examples") {
  const std::vector<double> u{1.0, 0.0};
  const Distribution q({0.5, 0.5});
  CHECK(beta_of_rate(u, q, 0.0) == 0.0);
  CHECK(beta_of_rate(u, q, 0.056633012265132426) == doctest::Approx(kLn2).epsilon(1e-10));
  for (double beta : {0.1, 1.0, 5.0}) {
    const double r = rate_of_beta(GibbsProblem(u, q, beta));
    CHECK(std::abs(beta_of_rate(u, q, r) - beta) < 1e-8);
  }
  CHECK_THROWS_AS(beta_of_rate(u, q, kLn2), std::invalid_argument);
  CHECK_THROWS_AS(beta_of_rate(u, q, -0.1), std::invalid_argument);
}

TEST_CASE("low temperature limit with ties conditions the prior") {
  const std::vector<double> u{2.0, 2.0, 0.0};
  const Distribution lim = low_temperature_limit(u, Distribution({0.1, 0.3, 0.6}));
  CHECK(lim[0] == doctest::Approx(0.25));
  CHECK(lim[1] == doctest::Approx(0.75));
  CHECK(lim[2] == 0.0);
  const auto far = gibbs_policy(GibbsProblem(u, Distribution({0.1, 0.3, 0.6}), 200.0));
  CHECK(max_abs_diff(far.policy, lim) < 1e-12);
}

TEST_CASE("solution geodesic examples") {
  const std::vector<double> u{3.0, 1.0, 0.0};
  const Distribution q({0.7, 0.2, 0.1});
  const std::vector<double> ts{0.0, 1e3, -1e3, 2.5};
  const auto g = solution_geodesic(u, q, ts);
  CHECK(max_abs_diff(g[0], q) == 0.0);
  CHECK(total_variation(g[1], Distribution::dirac(3, 0)) < 1e-12);
  CHECK(total_variation(g[2], Distribution::dirac(3, 2)) < 1e-12);
  CHECK(max_abs_diff(g[3], gibbs_policy(GibbsProblem(u, q, 2.5)).policy) <= 1e-12);

  const TangentVector v = solution_geodesic_tangent(u, q);
  const double h = 1e-5;
  const std::vector<double> around{-h, h};
  const auto pts = solution_geodesic(u, q, around);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs((pts[1][i] - pts[0][i]) / (2 * h) - v.components()[i]) < 1e-8);
  }
}

TEST_CASE("state dependent gibbs examples") {
  Matrix u(2, 2);
  u << 1.0, 0.0, 0.0, 1.0;
  const StochasticKernel kappa = StochasticKernel::constant(2, Distribution({0.5, 0.5}));
  CHECK(max_abs_diff(state_dependent_gibbs(u, kappa, 0.0).matrix(), kappa.matrix()) == 0.0);
  const StochasticKernel k = state_dependent_gibbs(u, kappa, kLn2);
  Matrix expect(2, 2);
  expect << 2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0;
  CHECK(max_abs_diff(k.matrix(), expect) < 1e-14);

  Matrix one(1, 3);
  one << 3.0, 1.0, 0.0;
  const Distribution q({0.7, 0.2, 0.1});
  const StochasticKernel row = state_dependent_gibbs(one, StochasticKernel::constant(1, q), 0.8);
  CHECK(max_abs_diff(row.row(0), gibbs_policy(GibbsProblem({3.0, 1.0, 0.0}, q, 0.8)).policy) < 1e-14);

  CHECK_THROWS_AS(state_dependent_gibbs(one, kappa, 1.0), std::invalid_argument);
}

TEST_CASE("property: free energy increases and ln Z is convex") {
  Gen gen(31);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + gen.index(4);
    const auto u = gen.reals(n, -2.0, 2.0);
    const Distribution q = gen.interior(n);
    double prev_f = -INFINITY;
    std::vector<double> lz;
    for (int k = 0; k <= 60; ++k) {
      const double beta = 0.05 * k;
      const GibbsProblem p(u, q, beta);
      const auto s = gibbs_policy(p);
      CHECK(s.free_energy - prev_f > 0.0);
      prev_f = s.free_energy;
      lz.push_back(s.log_partition);
    }
    for (std::size_t k = 1; k + 1 < lz.size(); ++k) CHECK(lz[k + 1] - 2 * lz[k] + lz[k - 1] >= -1e-10);
  }
}

TEST_CASE("property: sandwich inequality") {
  Gen gen(32);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + gen.index(4);
    const auto u = gen.reals(n, -2.0, 2.0);
    const Distribution q = gen.interior(n);
    const double beta = gen.uniform(0.05, 5.0);
    const auto s = gibbs_policy(GibbsProblem(u, q, beta));
    double prior_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) prior_mean += q[i] * u[i];
    CHECK(prior_mean < s.free_energy);
    CHECK(s.free_energy < s.expected_utility);
    CHECK(s.expected_utility < *std::max_element(u.begin(), u.end()));
    CHECK(s.free_energy == doctest::Approx(s.log_partition / beta).epsilon(1e-14));
  }
}

TEST_CASE("property: KKT stationarity") {
  Gen gen(33);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + gen.index(5);
    const auto u = gen.reals(n, -3.0, 3.0);
    const Distribution q = gen.interior(n);
    const double beta = gen.uniform(0.1, 10.0);
    const auto s = gibbs_policy(GibbsProblem(u, q, beta));
    const double lambda0 = u[0] - std::log(s.policy[0] / q[0]) / beta;
    for (std::size_t i = 1; i < n; ++i) {
      CHECK(std::abs(u[i] - std::log(s.policy[i] / q[i]) / beta - lambda0) < 1e-10);
    }
  }
}

TEST_CASE("property: grid oracle never beats the gibbs policy") {
  Gen gen(34);
  for (int trial = 0; trial < 3; ++trial) {
    const auto u = gen.reals(3, -1.0, 1.0);
    const Distribution q = gen.interior(3);
    const double beta = gen.uniform(0.5, 4.0);
    const double best = objective(u, q, gibbs_policy(GibbsProblem(u, q, beta)).policy, beta);
    double grid_best = -INFINITY;
    const int n = 1000;
    for (int a = 0; a <= n; ++a) {
      for (int b = 0; a + b <= n; ++b) {
        const Distribution p({a / double(n), b / double(n), (n - a - b) / double(n)});
        grid_best = std::max(grid_best, objective(u, q, p, beta));
      }
    }
    CHECK(grid_best <= best + 1e-5);
    CHECK(grid_best > best - 1e-3);
  }
}

TEST_CASE("property: r(beta) is increasing and inverts") {
  Gen gen(35);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + gen.index(4);
    const auto u = gen.reals(n, -1.0, 1.0);
    const Distribution q = gen.interior(n);
    double prev = -1.0;
    for (int k = 0; k <= 40; ++k) {
      const double r = rate_of_beta(GibbsProblem(u, q, 0.25 * k));
      CHECK(r > prev);
      prev = r;
    }
    for (double beta : {0.1, 1.0, 5.0}) {
      const double r = rate_of_beta(GibbsProblem(u, q, beta));
      CHECK(std::abs(beta_of_rate(u, q, r) - beta) < 1e-8);
    }
  }
}
