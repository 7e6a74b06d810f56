#include "boundrat/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace boundrat {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_utilities(std::span<const double> u, const Distribution& prior, const char* what) {
  if (u.size() != prior.size()) {
    throw std::invalid_argument(std::string(what) + ": utilities and prior differ in size");
  }
  for (double v : u) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite utility");
  }
}

// ln q_i + t u_i for every outcome; -inf where the prior vanishes.
std::vector<double> log_weights(std::span<const double> u, const Distribution& prior, double t) {
  std::vector<double> lw(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    lw[i] = prior[i] > 0.0 ? std::log(prior[i]) + t * u[i] : kNegInf;
  }
  return lw;
}

Distribution tilt(std::span<const double> u, const Distribution& prior, double t) {
  if (t == 0.0) return prior;
  std::vector<double> lw = log_weights(u, prior, t);
  const double lz = log_sum_exp(lw);
  for (double& v : lw) v = std::exp(v - lz);
  return Distribution::normalized(std::move(lw));
}

double max_utility(std::span<const double> u) { return *std::max_element(u.begin(), u.end()); }

}  // namespace

GibbsProblem::GibbsProblem(std::vector<double> utilities, Distribution prior, double beta)
    : utilities_(std::move(utilities)), prior_(std::move(prior)), beta_(beta) {
  check_utilities(utilities_, prior_, "GibbsProblem");
  if (!prior_.is_interior()) throw std::invalid_argument("GibbsProblem: prior must have full support");
  if (!(beta_ >= 0.0) || !std::isfinite(beta_)) {
    throw std::invalid_argument("GibbsProblem: beta must be finite and >= 0");
  }
}

double partition_function(const GibbsProblem& problem) {
  if (problem.beta() == 0.0) return 0.0;
  return log_sum_exp(log_weights(problem.utilities(), problem.prior(), problem.beta()));
}

Cumulants cumulants(const GibbsProblem& problem) {
  const Distribution p = tilt(problem.utilities(), problem.prior(), problem.beta());
  const auto u = problem.utilities();
  Cumulants c;
  for (std::size_t i = 0; i < u.size(); ++i) c.mean += p[i] * u[i];
  for (std::size_t i = 0; i < u.size(); ++i) c.variance += p[i] * (u[i] - c.mean) * (u[i] - c.mean);
  return c;
}

double rate_of_beta(const GibbsProblem& problem) {
  const double beta = problem.beta();
  if (beta == 0.0) return 0.0;
  const auto u = problem.utilities();
  const Distribution& q = problem.prior();
  const double lz = partition_function(problem);
  const Distribution p = tilt(u, q, beta);
  // ln(p_i / q_i) = beta u_i - ln Z on the support of p.
  double r = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) r += p[i] * (beta * u[i] - lz);
  }
  const double r_max = max_rate(u, q);
  if (r < 0.5 * r_max) return std::max(r, 0.0);

  // Near saturation the difference above cancels; evaluate the deficit
  // r_max - r = beta E_p[u* - u] + log1p(S) directly instead, with
  // S = sum over non-maximisers of (q_i / q*) exp(-beta (u* - u_i)).
  const double top = max_utility(u);
  const double q_star = std::exp(-r_max);
  double s = 0.0;
  double gap = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = top - u[i];
    if (d == 0.0) continue;
    const double w = q[i] / q_star * std::exp(-beta * d);
    s += w;
    gap += w * d;
  }
  const double deficit = beta * gap / (1.0 + s) + std::log1p(s);
  return std::max(r_max - deficit, 0.0);
}

GibbsSolution gibbs_policy(const GibbsProblem& problem) {
  const Cumulants c = cumulants(problem);
  GibbsSolution s{tilt(problem.utilities(), problem.prior(), problem.beta())};
  s.log_partition = partition_function(problem);
  s.free_energy = problem.beta() > 0.0 ? s.log_partition / problem.beta() : c.mean;
  s.expected_utility = c.mean;
  s.utility_variance = c.variance;
  s.kl_cost = rate_of_beta(problem);
  return s;
}

double max_rate(std::span<const double> utilities, const Distribution& prior) {
  check_utilities(utilities, prior, "max_rate");
  const double top = max_utility(utilities);
  double mass = 0.0;
  for (std::size_t i = 0; i < utilities.size(); ++i) {
    if (utilities[i] == top) mass += prior[i];
  }
  return -std::log(mass);
}

double beta_of_rate(std::span<const double> utilities, const Distribution& prior, double rate) {
  const double r_max = max_rate(utilities, prior);
  if (!(rate >= 0.0)) throw std::invalid_argument("beta_of_rate: rate must be >= 0");
  if (rate == 0.0) return 0.0;
  if (!(rate < r_max)) {
    throw std::invalid_argument("beta_of_rate: rate " + std::to_string(rate) +
                                " is not below the attainable maximum " + std::to_string(r_max));
  }
  const std::vector<double> u(utilities.begin(), utilities.end());
  auto r_at = [&](double beta) { return rate_of_beta(GibbsProblem(u, prior, beta)); };

  double lo = 0.0;
  double hi = 1.0;
  while (r_at(hi) <= rate) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) {
      throw std::invalid_argument("beta_of_rate: rate is numerically indistinguishable from the maximum");
    }
  }
  for (int it = 0; it < 200 && hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (r_at(mid) < rate) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

Distribution low_temperature_limit(std::span<const double> utilities, const Distribution& prior) {
  check_utilities(utilities, prior, "low_temperature_limit");
  const double top = max_utility(utilities);
  std::vector<double> w(utilities.size(), 0.0);
  for (std::size_t i = 0; i < utilities.size(); ++i) {
    if (utilities[i] == top) w[i] = prior[i];
  }
  return Distribution::normalized(std::move(w));
}

std::vector<Distribution> solution_geodesic(std::span<const double> utilities,
                                            const Distribution& prior,
                                            std::span<const double> t_grid) {
  check_utilities(utilities, prior, "solution_geodesic");
  if (!prior.is_interior()) throw std::invalid_argument("solution_geodesic: prior must be interior");
  std::vector<Distribution> out;
  out.reserve(t_grid.size());
  for (double t : t_grid) {
    if (!std::isfinite(t)) throw std::invalid_argument("solution_geodesic: non-finite t");
    out.push_back(tilt(utilities, prior, t));
  }
  return out;
}

TangentVector solution_geodesic_tangent(std::span<const double> utilities,
                                        const Distribution& prior) {
  check_utilities(utilities, prior, "solution_geodesic_tangent");
  double mean = 0.0;
  for (std::size_t i = 0; i < utilities.size(); ++i) mean += prior[i] * utilities[i];
  std::vector<double> v(utilities.size());
  for (std::size_t i = 0; i < utilities.size(); ++i) v[i] = prior[i] * (utilities[i] - mean);
  return TangentVector(prior, std::move(v));
}

StochasticKernel state_dependent_gibbs(const Matrix& utilities, const StochasticKernel& kappa,
                                       double beta) {
  if (static_cast<std::size_t>(utilities.rows()) != kappa.inputs() ||
      static_cast<std::size_t>(utilities.cols()) != kappa.outputs()) {
    throw std::invalid_argument("state_dependent_gibbs: dimension mismatch");
  }
  if (!std::isfinite(beta)) throw std::invalid_argument("state_dependent_gibbs: non-finite beta");
  if (beta == 0.0) return kappa;
  Matrix k(utilities.rows(), utilities.cols());
  std::vector<double> lw(kappa.outputs());
  for (Eigen::Index x = 0; x < utilities.rows(); ++x) {
    for (Eigen::Index y = 0; y < utilities.cols(); ++y) {
      const double prior = kappa.matrix()(x, y);
      lw[static_cast<std::size_t>(y)] =
          prior > 0.0 ? std::log(prior) + beta * utilities(x, y) : kNegInf;
    }
    const double lz = log_sum_exp(lw);
    for (Eigen::Index y = 0; y < utilities.cols(); ++y) {
      k(x, y) = std::exp(lw[static_cast<std::size_t>(y)] - lz);
    }
  }
  return StochasticKernel::normalized_rows(std::move(k));
}

}  // namespace boundrat
