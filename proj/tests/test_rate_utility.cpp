#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "boundrat/errors.hpp"
#include "boundrat/gibbs.hpp"
#include "boundrat/rate_utility.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace boundrat;
using boundrat::testing::Gen;
using boundrat::testing::max_abs_diff;

namespace {

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

RateUtilityProblem symmetric() {
  return RateUtilityProblem(Distribution({0.5, 0.5}), UtilityMatrix(Matrix::Identity(2, 2)));
}

}  // namespace

TEST_CASE("problem validation") {
  CHECK_THROWS_AS(UtilityMatrix(mat2(1, NAN, 0, 0)), std::invalid_argument);
  CHECK_THROWS_AS(RateUtilityProblem(Distribution({1.0, 0.0}), UtilityMatrix(Matrix::Identity(2, 2))),
                  std::invalid_argument);
  CHECK_THROWS_AS(RateUtilityProblem(Distribution::uniform(3), UtilityMatrix(Matrix::Identity(2, 2))),
                  std::invalid_argument);
  SupportMask bad(2, 2);
  bad << true, true, false, false;
  CHECK_THROWS_AS(RateUtilityProblem(Distribution::uniform(2), UtilityMatrix(Matrix::Identity(2, 2)), bad),
                  std::invalid_argument);
  CHECK_THROWS_AS(solve_self_consistent(symmetric(), -1.0), std::invalid_argument);
  CHECK_THROWS_AS(solve_self_consistent(symmetric(), 1.0, SolverOptions{0.0}), std::invalid_argument);
}

TEST_CASE("optimal prior examples") {
  const Distribution half({0.5, 0.5});
  const StochasticKernel k(mat2(0.8, 0.2, 0.4, 0.6));
  CHECK(max_abs_diff(optimal_generic_prior(half, k).matrix(), k.matrix()) == 0.0);
  const Distribution q = optimal_constant_prior(half, k);
  CHECK(q[0] == doctest::Approx(0.6));
  CHECK(max_abs_diff(optimal_constant_prior(half, StochasticKernel::identity(2)), half) == 0.0);
}

TEST_CASE("optimal priors agree with grid search") {
  Gen gen(41);
  const double h = 1e-3;
  for (int trial = 0; trial < 3; ++trial) {
    const Distribution p = gen.interior(2);
    const StochasticKernel k = gen.kernel(2, 2);
    const Matrix pk = semidirect_product(p, k).table();
    const auto [a, b] = boundrat::testing::grid_argmin_2x2(
        [&](double a_, double b_) {
          return boundrat::testing::kl_joint(pk, semidirect_product(p, StochasticKernel(boundrat::testing::kernel_2x2(a_, b_))).table());
        },
        h);
    const StochasticKernel kappa = optimal_generic_prior(p, k);
    CHECK(std::abs(a - kappa(0, 0)) <= h);
    CHECK(std::abs(b - kappa(1, 0)) <= h);

    double best = INFINITY;
    double arg = 0.0;
    for (int i = 0; i <= 1000; ++i) {
      const Distribution q({i * h, 1.0 - i * h});
      const double v = boundrat::testing::kl_joint(pk, JointDistribution::product(p, q).table());
      if (v < best) {
        best = v;
        arg = i * h;
      }
    }
    CHECK(std::abs(arg - optimal_constant_prior(p, k)[0]) <= h);
  }
}

TEST_CASE("self-consistent solver examples") {
  const auto zero = solve_self_consistent(symmetric(), 0.0);
  CHECK(zero.rate == doctest::Approx(0.0));
  CHECK(max_abs_diff(zero.kernel.row(0), zero.kernel.row(1)) < 1e-15);

  const auto s = solve_self_consistent(symmetric(), 2.0);
  const double k11 = std::exp(2.0) / (1.0 + std::exp(2.0));
  CHECK(std::abs(s.kernel(0, 0) - k11) < 1e-12);
  CHECK(std::abs(s.kernel(1, 1) - k11) < 1e-12);
  CHECK(std::abs(s.rate - 0.32781332547273767) < 1e-10);
  CHECK(s.residual < 1e-12);

  Gen gen(42);
  const RateUtilityProblem generic(gen.interior(3), UtilityMatrix(gen.utilities(3, 4)));
  const auto cold = solve_self_consistent(generic, 200.0);
  const auto top = max_rate_endpoint(generic);
  CHECK(std::abs(cold.utility - top.utility) < 1e-6);
}

TEST_CASE("endpoints") {
  const auto lo = zero_rate_endpoint(symmetric());
  CHECK(lo.rate == 0.0);
  CHECK(lo.utility == doctest::Approx(0.5));
  CHECK(lo.kernel(0, 0) == 1.0);  // lowest index on ties

  const auto hi = max_rate_endpoint(symmetric());
  CHECK(hi.rate == doctest::Approx(std::log(2.0)));
  CHECK(hi.utility == doctest::Approx(1.0));
  CHECK(std::isinf(hi.beta));

  SupportMask mask(2, 2);
  mask << true, false, false, true;
  const RateUtilityProblem forced(Distribution({0.5, 0.5}), UtilityMatrix(Matrix::Identity(2, 2)), mask);
  CHECK_THROWS_AS(zero_rate_endpoint(forced), std::invalid_argument);
}

TEST_CASE("convergence failure carries the residual") {
  const RateUtilityProblem lopsided(Distribution({0.3, 0.7}), UtilityMatrix(mat2(1.0, 0.2, 0.1, 0.8)));
  try {
    (void)solve_self_consistent(lopsided, 2.0, SolverOptions{1e-12, 3});
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(e.iterations() == 3);
    CHECK(e.residual() > 1e-12);
  }
  std::vector<double> grid{2.0};
  const auto curve = rate_utility_curve(lopsided, grid, SolverOptions{1e-12, 3});
  CHECK_FALSE(curve[0].ok());
  CHECK(curve[0].failure_residual > 0.0);
}

TEST_CASE("property: fixed points are Gibbs rows with consistent marginal and rate") {
  Gen gen(43);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t nx = 2 + gen.index(3);
    const std::size_t ny = 2 + gen.index(3);
    const RateUtilityProblem prob(gen.interior(nx), UtilityMatrix(gen.utilities(nx, ny)));
    const double beta = gen.uniform(0.1, 20.0);
    const auto s = solve_self_consistent(prob, beta);
    CHECK(max_abs_diff(s.marginal, push_forward(s.kernel, prob.source())) < 1e-10);
    CHECK(std::abs(s.rate - mutual_information(prob.source(), s.kernel)) < 1e-8);
    for (std::size_t x = 0; x < nx; ++x) {
      std::vector<double> row(ny);
      for (std::size_t y = 0; y < ny; ++y) row[y] = prob.utilities()(x, y);
      if (!s.marginal.is_interior()) continue;
      const auto g = gibbs_policy(GibbsProblem(row, s.marginal, beta));
      CHECK(max_abs_diff(g.policy, s.kernel.row(x)) < 1e-10);
    }
  }
}

TEST_CASE("property: wide and masked problems converge to the free-energy maximiser") {
  Gen gen(45);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t nx = 2 + gen.index(4);
    const std::size_t ny = 2 + gen.index(4);
    SupportMask mask = SupportMask::Constant(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(ny), true);
    if (trial % 3 == 0) {
      for (std::size_t x = 0; x < nx; ++x) {
        for (std::size_t y = 0; y < ny; ++y) mask(x, y) = gen.uniform(0, 1) < 0.6;
        mask(x, gen.index(ny)) = true;
      }
    }
    const RateUtilityProblem prob(gen.interior(nx), UtilityMatrix(gen.utilities(nx, ny)), mask);
    auto free_energy = [&](const Eigen::VectorXd& q, double beta) {
      double f = 0.0;
      for (std::size_t x = 0; x < nx; ++x) {
        double z = 0.0;
        for (std::size_t y = 0; y < ny; ++y) {
          if (mask(x, y)) z += q(static_cast<Eigen::Index>(y)) * std::exp(beta * prob.utilities()(x, y));
        }
        f += prob.source()[x] * std::log(z);
      }
      return f / beta;
    };
    for (double beta : {1e-3, 0.01, 0.1, 1.0, 10.0, 100.0}) {
      const auto s = solve_self_consistent(prob, beta);
      CHECK(s.iterations < 200);
      Eigen::VectorXd q(static_cast<Eigen::Index>(ny));
      for (std::size_t y = 0; y < ny; ++y) q(static_cast<Eigen::Index>(y)) = s.marginal[y];
      const double best = free_energy(q, beta);
      for (int probe = 0; probe < 20; ++probe) {
        const Distribution r = gen.interior(ny);
        Eigen::VectorXd v(static_cast<Eigen::Index>(ny));
        for (std::size_t y = 0; y < ny; ++y) v(static_cast<Eigen::Index>(y)) = r[y];
        CHECK(free_energy(v, beta) <= best + 1e-12 * (1.0 + std::abs(best)));
      }
    }
  }
}

TEST_CASE("property: support mask is respected") {
  Gen gen(44);
  for (int trial = 0; trial < 30; ++trial) {
    SupportMask mask(3, 3);
    for (int x = 0; x < 3; ++x) {
      for (int y = 0; y < 3; ++y) mask(x, y) = gen.uniform(0, 1) < 0.6;
      mask(x, gen.index(3)) = true;
    }
    const Distribution p = gen.interior(3);
    const Matrix u = gen.utilities(3, 3);
    const RateUtilityProblem masked(p, UtilityMatrix(u), mask);
    const RateUtilityProblem free(p, UtilityMatrix(u));
    const double beta = gen.uniform(0.5, 10.0);
    const auto s = solve_self_consistent(masked, beta);
    for (int x = 0; x < 3; ++x) {
      for (int y = 0; y < 3; ++y) {
        if (!mask(x, y)) CHECK(s.kernel(x, y) == 0.0);
      }
    }
    // Second best never beats first best at the same information budget.
    const auto unconstrained = solve_at_rate(free, s.rate);
    CHECK(s.utility <= unconstrained.utility + 1e-6);
    CHECK(max_rate_endpoint(masked).utility <= max_rate_endpoint(free).utility + 1e-15);
  }
}

TEST_CASE("curve shape on a fine grid") {
  Gen gen(45);
  for (int trial = 0; trial < 5; ++trial) {
    const RateUtilityProblem prob(gen.interior(3), UtilityMatrix(gen.utilities(3, 3)));
    std::vector<double> betas;
    for (int i = 0; i < 200; ++i) betas.push_back(0.5 * std::pow(40.0, i / 199.0));
    const auto curve = rate_utility_curve(prob, betas, {}, 4);
    for (std::size_t i = 1; i < curve.size(); ++i) {
      REQUIRE(curve[i].ok());
      const auto& a = *curve[i - 1].solution;
      const auto& b = *curve[i].solution;
      CHECK(b.rate >= a.rate - 1e-12);
      CHECK(b.utility >= a.utility - 1e-12);
      if (b.rate - a.rate > 1e-9) {
        const double mid = 2.0 / (a.beta + b.beta);
        CHECK(std::abs(slope_check(a, b) - mid) <= 0.02 * mid);
      }
    }
    for (std::size_t i = 2; i < curve.size(); ++i) {
      const auto& a = *curve[i - 2].solution;
      const auto& b = *curve[i - 1].solution;
      const auto& c = *curve[i].solution;
      if (c.rate - b.rate < 1e-9 || b.rate - a.rate < 1e-9) continue;
      const double s1 = (b.utility - a.utility) / (b.rate - a.rate);
      const double s2 = (c.utility - b.utility) / (c.rate - b.rate);
      CHECK(s2 <= s1 + 1e-8);
    }
  }
}

TEST_CASE("slope examples") {
  const auto a = solve_self_consistent(symmetric(), 1.99);
  const auto b = solve_self_consistent(symmetric(), 2.01);
  CHECK(slope_check(a, b) == doctest::Approx(0.5).epsilon(1e-3));
  CHECK_THROWS_AS(slope_check(a, a), std::invalid_argument);
  const auto c = solve_self_consistent(symmetric(), 30.0);
  const auto d = solve_self_consistent(symmetric(), 31.0);
  CHECK(slope_check(c, d) < 0.05);
}

TEST_CASE("rate-parameterised queries") {
  const RateUtilityProblem prob = symmetric();
  CHECK(solve_at_rate(prob, 0.0).utility == doctest::Approx(0.5));
  CHECK(solve_at_rate(prob, std::log(2.0)).utility == doctest::Approx(1.0));
  const auto mid = solve_at_rate(prob, 0.3);
  CHECK(std::abs(mid.rate - 0.3) < 1e-8);
  const auto direct = solve_self_consistent(prob, mid.beta);
  CHECK(std::abs(direct.utility - mid.utility) < 1e-10);

  const std::vector<double> rates{0.0, 0.1, 0.2, 0.4, 0.6, 0.7};
  const auto curve = rate_utility_curve_at_rates(prob, rates, {}, 2);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    CHECK(curve[i].solution->utility >= curve[i - 1].solution->utility);
  }
  CHECK(curve.back().solution->endpoint);
}

TEST_CASE("brute-force equivalence on 2x2") {
  Gen gen(46);
  for (int trial = 0; trial < 2; ++trial) {
    const Distribution p = gen.interior(2);
    const Matrix u = gen.utilities(2, 2);
    const RateUtilityProblem prob(p, UtilityMatrix(u));
    const double r_top = max_rate_endpoint(prob).rate;
    for (double frac : {0.2, 0.6}) {
      const double r = frac * r_top;
      const auto s = solve_at_rate(prob, r);
      CHECK(std::abs(s.utility - boundrat::testing::brute_force_rate_utility(p, u, r)) < 1e-4);
    }
  }
}

TEST_CASE("expansion and contraction paths") {
  const std::vector<double> betas{0.5, 1.0, 2.0, 5.0, 10.0};
  const Distribution p({0.3, 0.7});
  const RateUtilityProblem flat(p, UtilityMatrix(mat2(1, 0, 1, 0)));
  for (const auto& pt : expansion_path(flat, betas)) {
    CHECK(pt.rate < 1e-12);
    CHECK(pt.joint(0, 0) == doctest::Approx(0.3).epsilon(1e-9));
    CHECK(pt.joint(1, 0) == doctest::Approx(0.7).epsilon(1e-9));
  }

  const auto up = expansion_path(symmetric(), betas);
  CHECK(up.front().joint(0, 0) < up.back().joint(0, 0));
  CHECK(up.back().joint(0, 0) > 0.49);
  const auto down = contraction_path(symmetric(), betas);
  CHECK(down.back().joint(0, 1) > 0.49);
  CHECK(down.back().utility < 0.01);
  const auto mirrored = expansion_path(symmetric().negated(), betas);
  for (std::size_t i = 0; i < betas.size(); ++i) {
    CHECK(max_abs_diff(down[i].joint.table(), mirrored[i].joint.table()) == 0.0);
    CHECK(down[i].tangency < 1e-4);
  }

  Gen gen(47);
  for (int trial = 0; trial < 20; ++trial) {
    const RateUtilityProblem prob(gen.interior(2), UtilityMatrix(gen.utilities(2, 3)));
    const auto e = expansion_path(prob, betas);
    const auto c = contraction_path(prob, betas);
    for (std::size_t i = 0; i < betas.size(); ++i) {
      CHECK(e[i].tangency < 1e-4);
      CHECK(c[i].tangency < 1e-4);
      CHECK(e[i].utility > c[i].utility);
    }
  }
}

TEST_CASE("bregman divergence of mutual information") {
  Gen gen(48);
  for (int trial = 0; trial < 100; ++trial) {
    const Distribution p = gen.interior(3);
    const JointDistribution a = semidirect_product(p, gen.kernel(3, 3));
    const JointDistribution b = semidirect_product(p, gen.kernel(3, 3));
    CHECK(bregman_divergence_of_I(a, a) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(bregman_divergence_of_I(a, b) >= -1e-14);
  }
  // Second-order behaviour under small perturbations.
  const Distribution p({0.4, 0.6});
  const JointDistribution base = semidirect_product(p, StochasticKernel(mat2(0.7, 0.3, 0.2, 0.8)));
  Matrix dir(2, 2);
  dir << 0.1, -0.1, -0.1, 0.1;
  const double d1 = bregman_divergence_of_I(JointDistribution(base.table() + 1e-2 * dir), base);
  const double d2 = bregman_divergence_of_I(JointDistribution(base.table() + 5e-3 * dir), base);
  CHECK(d1 / d2 == doctest::Approx(4.0).epsilon(0.02));
}
