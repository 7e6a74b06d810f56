#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "boundrat/kernel.hpp"
#include "boundrat/simplex.hpp"

namespace boundrat {

/// Multiplier-robust control problem
///
///   max_p  E_p[U] - (1/beta) KL(p || q),
///
/// whose solution is the Boltzmann-Gibbs law p_i = q_i exp(beta u_i) / Z_beta.
/// Throughout, beta multiplies the utility in the exponent and 1/beta weighs
/// the divergence in the objective.
class GibbsProblem {
 public:
  /// Requires a full-support prior, finite utilities of matching size and beta >= 0.
  GibbsProblem(std::vector<double> utilities, Distribution prior, double beta);

  std::span<const double> utilities() const { return utilities_; }
  const Distribution& prior() const { return prior_; }
  double beta() const { return beta_; }

  GibbsProblem with_beta(double beta) const { return GibbsProblem(utilities_, prior_, beta); }

 private:
  std::vector<double> utilities_;
  Distribution prior_;
  double beta_;
};

struct GibbsSolution {
  Distribution policy;
  double log_partition = 0.0;
  /// (1/beta) ln Z; at beta = 0 the limit E_q[U].
  double free_energy = 0.0;
  double expected_utility = 0.0;
  double utility_variance = 0.0;
  /// KL(policy || prior) in nats.
  double kl_cost = 0.0;
};

struct Cumulants {
  double mean = 0.0;
  double variance = 0.0;
};

/// ln Z_beta = ln sum_i q_i exp(beta u_i), via log-sum-exp.
double partition_function(const GibbsProblem& problem);

GibbsSolution gibbs_policy(const GibbsProblem& problem);

/// Mean and variance of U under the Gibbs policy: the first two derivatives of ln Z.
Cumulants cumulants(const GibbsProblem& problem);

/// r(beta) = beta E[U] - ln Z = KL(p*_beta || q).
double rate_of_beta(const GibbsProblem& problem);

/// -ln q(argmax set): the supremum of r(beta).
double max_rate(std::span<const double> utilities, const Distribution& prior);

/// Inverts r(beta) by bracket doubling and bisection.  Requires 0 <= r < max_rate.
double beta_of_rate(std::span<const double> utilities, const Distribution& prior, double rate);

/// beta -> +infinity limit: the prior conditioned on the argmax set.  With a
/// unique maximiser this is the Dirac measure at it.
Distribution low_temperature_limit(std::span<const double> utilities, const Distribution& prior);

/// Points q_i exp(t u_i) / Z_t of the exponential geodesic through the prior,
/// for arbitrary real t (negative t drifts towards argmin U).
std::vector<Distribution> solution_geodesic(std::span<const double> utilities,
                                            const Distribution& prior,
                                            std::span<const double> t_grid);

/// Initial velocity q_i (u_i - E_q[U]) of the solution geodesic.
TangentVector solution_geodesic_tangent(std::span<const double> utilities,
                                        const Distribution& prior);

/// Row-wise Gibbs reweighting k(x, y) = kappa(x, y) exp(beta U(x, y)) / Z_beta(x).
/// Entries outside the support of a prior row stay zero.
StochasticKernel state_dependent_gibbs(const Matrix& utilities, const StochasticKernel& kappa,
                                       double beta);

}  // namespace boundrat
