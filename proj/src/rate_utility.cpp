#include "boundrat/rate_utility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "boundrat/errors.hpp"
#include "boundrat/parallel.hpp"

namespace boundrat {

namespace {

using Eigen::Index;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Index idx(std::size_t i) { return static_cast<Index>(i); }

RateUtilityPoint make_point(double beta, const RateUtilityProblem& problem, StochasticKernel kernel) {
  const JointDistribution pi = semidirect_product(problem.source(), kernel);
  const double utility = (pi.table().array() * problem.utilities().entries().array()).sum();
  Distribution marginal = push_forward(kernel, problem.source());
  return RateUtilityPoint{beta, mutual_information(pi), utility, std::move(kernel),
                          std::move(marginal)};
}

}  // namespace

UtilityMatrix::UtilityMatrix(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.size() == 0) throw std::invalid_argument("UtilityMatrix: empty matrix");
  if (!entries_.allFinite()) throw std::invalid_argument("UtilityMatrix: non-finite entry");
}

RateUtilityProblem::RateUtilityProblem(Distribution source, UtilityMatrix utilities,
                                       std::optional<SupportMask> mask)
    : source_(std::move(source)), utilities_(std::move(utilities)), mask_(std::move(mask)) {
  if (source_.size() != utilities_.rows()) {
    throw std::invalid_argument("RateUtilityProblem: source size does not match utility rows");
  }
  if (!source_.is_interior()) {
    throw std::invalid_argument("RateUtilityProblem: source must have full support");
  }
  if (mask_) {
    if (static_cast<std::size_t>(mask_->rows()) != utilities_.rows() ||
        static_cast<std::size_t>(mask_->cols()) != utilities_.cols()) {
      throw std::invalid_argument("RateUtilityProblem: mask shape does not match utilities");
    }
    for (Index x = 0; x < mask_->rows(); ++x) {
      if (!mask_->row(x).any()) {
        throw std::invalid_argument("RateUtilityProblem: state " + std::to_string(x) +
                                    " has no admissible action");
      }
    }
  }
}

RateUtilityProblem RateUtilityProblem::negated() const {
  return RateUtilityProblem(source_, utilities_.negated(), mask_);
}

StochasticKernel optimal_generic_prior(const Distribution& p, const StochasticKernel& k) {
  if (p.size() != k.inputs()) throw std::invalid_argument("optimal_generic_prior: dimension mismatch");
  return k;
}

Distribution optimal_constant_prior(const Distribution& p, const StochasticKernel& k) {
  return push_forward(k, p);
}

StochasticKernel argmax_kernel(const RateUtilityProblem& problem) {
  Matrix k = Matrix::Zero(idx(problem.states()), idx(problem.actions()));
  for (std::size_t x = 0; x < problem.states(); ++x) {
    std::size_t best = problem.actions();
    for (std::size_t y = 0; y < problem.actions(); ++y) {
      if (!problem.admissible(x, y)) continue;
      if (best == problem.actions() || problem.utilities()(x, y) > problem.utilities()(x, best)) {
        best = y;
      }
    }
    k(idx(x), idx(best)) = 1.0;
  }
  return StochasticKernel(std::move(k));
}

RateUtilityPoint zero_rate_endpoint(const RateUtilityProblem& problem) {
  const Distribution& p = problem.source();
  std::optional<std::size_t> best;
  double best_value = 0.0;
  for (std::size_t y = 0; y < problem.actions(); ++y) {
    bool everywhere = true;
    double value = 0.0;
    for (std::size_t x = 0; x < problem.states(); ++x) {
      everywhere = everywhere && problem.admissible(x, y);
      value += p[x] * problem.utilities()(x, y);
    }
    if (everywhere && (!best || value > best_value)) {
      best = y;
      best_value = value;
    }
  }
  if (!best) {
    throw std::invalid_argument("zero_rate_endpoint: no action is admissible in every state");
  }
  RateUtilityPoint point = make_point(
      0.0, problem,
      StochasticKernel::constant(problem.states(), Distribution::dirac(problem.actions(), *best)));
  point.endpoint = true;
  return point;
}

RateUtilityPoint max_rate_endpoint(const RateUtilityProblem& problem) {
  RateUtilityPoint point =
      make_point(std::numeric_limits<double>::infinity(), problem, argmax_kernel(problem));
  point.endpoint = true;
  return point;
}

namespace {

// Row-scaled Boltzmann weights exp(beta (U(x, y) - max_y U(x, y))) on admissible entries.
Matrix boltzmann_weights(const RateUtilityProblem& problem, double beta) {
  const Matrix& u = problem.utilities().entries();
  Matrix a = Matrix::Zero(u.rows(), u.cols());
  for (Index x = 0; x < u.rows(); ++x) {
    double top = kNegInf;
    for (Index y = 0; y < u.cols(); ++y) {
      if (problem.admissible(static_cast<std::size_t>(x), static_cast<std::size_t>(y))) {
        top = std::max(top, u(x, y));
      }
    }
    for (Index y = 0; y < u.cols(); ++y) {
      if (problem.admissible(static_cast<std::size_t>(x), static_cast<std::size_t>(y))) {
        a(x, y) = std::exp(beta * (u(x, y) - top));
      }
    }
  }
  return a;
}

struct Polish {
  Eigen::VectorXd q;
  std::size_t steps = 0;
  bool converged = false;
};

// The self-consistent marginals are the maximisers of G(q) = sum_x p_x ln (A q)_x
// over the simplex.  Newton steps on the free coordinates, with columns
// entering or leaving the support according to the KKT conditions
// dG/dq_y = 1 on the support and <= 1 off it.
Polish newton_polish(const Matrix& a, const Eigen::VectorXd& p, Eigen::VectorXd q) {
  constexpr double kKkt = 1e-9;
  constexpr double kReentry = 1e-8;
  constexpr double kDrop = 1e-9;
  constexpr double kFace = 1e-13;
  const Index ny = a.cols();
  Polish out;
  auto objective = [&](const Eigen::VectorXd& v) {
    const Eigen::VectorXd z = a * v;
    if ((z.array() <= 0.0).any()) return kNegInf;
    return (p.array() * z.array().log()).sum();
  };

  for (std::size_t step = 0; step < 200; ++step) {
    out.steps = step + 1;
    const Eigen::VectorXd z = a * q;
    if ((z.array() <= 0.0).any()) break;
    const Eigen::VectorXd w = p.cwiseQuotient(z);
    const Eigen::VectorXd g = a.transpose() * w;

    std::vector<Index> free;
    for (Index y = 0; y < ny; ++y) {
      if (q(y) > 0.0 && q(y) < kDrop && g(y) < 1.0 - kKkt) q(y) = 0.0;
      if (q(y) > 0.0) free.push_back(y);
    }
    q /= q.sum();
    const Index m = static_cast<Index>(free.size());
    double stationarity = 0.0;
    for (Index y : free) stationarity = std::max(stationarity, std::abs(g(y) - 1.0));

    // Once the current face is solved, admit the most violated column or stop.
    if (m <= 1 || stationarity < kFace) {
      Index enter = -1;
      for (Index y = 0; y < ny; ++y) {
        if (q(y) == 0.0 && g(y) > 1.0 + kKkt && (enter < 0 || g(y) > g(enter))) enter = y;
      }
      if (enter < 0) {
        out.converged = true;
        break;
      }
      q(enter) = kReentry;
      q /= q.sum();
      continue;
    }

    // -Hessian on the free block bordered by the simplex constraint.  The
    // maximiser need not be unique (flat directions when |Y| > |X|), so take
    // the minimum-norm Newton step.
    Matrix kkt = Matrix::Zero(m + 1, m + 1);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + 1);
    const Eigen::VectorXd w2 = w.cwiseQuotient(z);
    for (Index i = 0; i < m; ++i) {
      for (Index j = 0; j < m; ++j) {
        kkt(i, j) = (a.col(free[i]).array() * a.col(free[j]).array() * w2.array()).sum();
      }
      kkt(i, m) = 1.0;
      kkt(m, i) = 1.0;
      rhs(i) = g(free[i]);
    }
    const Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
    Eigen::VectorXd d = Eigen::VectorXd::Zero(ny);
    for (Index i = 0; i < m; ++i) d(free[i]) = sol(i);
    if (!d.allFinite()) break;

    double t = 1.0;
    Index blocking = -1;
    for (Index y = 0; y < ny; ++y) {
      if (d(y) < 0.0 && q(y) / -d(y) < t) {
        t = q(y) / -d(y);
        blocking = y;
      }
    }
    const double g0 = objective(q);
    Eigen::VectorXd next;
    for (int back = 0; back < 60; ++back) {
      next = q + t * d;
      if (blocking >= 0 && back == 0) next(blocking) = 0.0;
      next = next.cwiseMax(0.0);
      next /= next.sum();
      if (objective(next) >= g0 - 1e-15 * std::max(1.0, std::abs(g0))) break;
      t *= 0.5;
    }
    const double move = (next - q).cwiseAbs().maxCoeff();
    q = next;
    if (move == 0.0) break;
  }
  out.q = std::move(q);
  return out;
}

constexpr double kStationarity = 1e-6;

bool polish_due(std::size_t it) { return it == 50 || (it > 0 && it % 250 == 0); }

}  // namespace

RateUtilityPoint solve_self_consistent(const RateUtilityProblem& problem, double beta,
                                       const SolverOptions& options) {
  if (!(beta >= 0.0) || !std::isfinite(beta)) {
    throw std::invalid_argument("solve_self_consistent: beta must be finite and >= 0");
  }
  if (!(options.tol > 0.0)) throw std::invalid_argument("solve_self_consistent: tol must be positive");
  if (!(options.damping > 0.0 && options.damping <= 1.0)) {
    throw std::invalid_argument("solve_self_consistent: damping must lie in (0, 1]");
  }

  const Index nx = idx(problem.states());
  const Index ny = idx(problem.actions());
  const Matrix& u = problem.utilities().entries();
  Eigen::VectorXd p(nx);
  for (Index x = 0; x < nx; ++x) p(x) = problem.source()[static_cast<std::size_t>(x)];

  // Start from the uniform law on columns admissible somewhere.
  Eigen::VectorXd q = Eigen::VectorXd::Zero(ny);
  for (Index y = 0; y < ny; ++y) {
    for (Index x = 0; x < nx; ++x) {
      if (problem.admissible(static_cast<std::size_t>(x), static_cast<std::size_t>(y))) q(y) = 1.0;
    }
  }
  q /= q.sum();

  Matrix k(nx, ny);
  Matrix k_prev = Matrix::Constant(nx, ny, std::numeric_limits<double>::quiet_NaN());
  Eigen::VectorXd log_z(nx);
  std::vector<double> lw(static_cast<std::size_t>(ny));

  // K and ln Z from the current marginal.
  auto gibbs_rows = [&](const Eigen::VectorXd& marg) {
    for (Index x = 0; x < nx; ++x) {
      for (Index y = 0; y < ny; ++y) {
        const bool live = marg(y) > 0.0 &&
                          problem.admissible(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
        lw[static_cast<std::size_t>(y)] = live ? std::log(marg(y)) + beta * u(x, y) : kNegInf;
      }
      log_z(x) = log_sum_exp(lw);
      for (Index y = 0; y < ny; ++y) k(x, y) = std::exp(lw[static_cast<std::size_t>(y)] - log_z(x));
    }
  };

  double alpha = options.damping;
  double residual = std::numeric_limits<double>::infinity();
  double previous = residual;
  std::size_t damping_events = 0;
  std::size_t newton_steps = 0;
  std::size_t it = 0;
  bool converged = false;
  std::optional<Matrix> weights;
  while (it < options.max_iterations) {
    ++it;
    gibbs_rows(q);
    Eigen::VectorXd q_next = (1.0 - alpha) * q + alpha * (k.transpose() * p);
    for (Index y = 0; y < ny; ++y) {
      if (q_next(y) < kColumnDeathThreshold) q_next(y) = 0.0;
    }
    q_next /= q_next.sum();

    const double dq = (q_next - q).cwiseAbs().maxCoeff();
    const double dk = it == 1 ? std::numeric_limits<double>::infinity()
                              : (k - k_prev).cwiseAbs().maxCoeff();
    residual = std::max(dq, dk);
    k_prev = k;
    // A column with mass must be reproduced to relative precision; tiny
    // columns still decaying towards zero pass the absolute test too early.
    const Eigen::VectorXd pushed = k.transpose() * p;
    bool stationary = true;
    for (Index y = 0; y < ny; ++y) {
      if (q(y) > 0.0 && std::abs(pushed(y) / q(y) - 1.0) > kStationarity) stationary = false;
    }
    q = q_next;
    if (residual < options.tol && stationary) {
      converged = true;
      break;
    }
    const bool premature = residual < options.tol;
    if (it > 1 && residual > previous && alpha > 1.0 / 1024.0) {
      alpha *= 0.5;
      ++damping_events;
    }
    previous = residual;
    if ((premature || polish_due(it)) && beta > 0.0) {
      if (!weights) weights = boltzmann_weights(problem, beta);
      Polish polished = newton_polish(*weights, p, q);
      newton_steps += polished.steps;
      if (polished.converged) {
        q = std::move(polished.q);
        // The jump is not an oscillation; do not let it trigger damping.
        previous = std::numeric_limits<double>::infinity();
      }
    }
  }
  if (!converged) {
    throw ConvergenceError("solve_self_consistent: no fixed point at beta=" + std::to_string(beta),
                           residual, it);
  }

  gibbs_rows(q);
  StochasticKernel kernel = StochasticKernel::normalized_rows(k);
  Distribution marginal = push_forward(kernel, problem.source());

  // R = sum p k (beta u - ln Z) and U = sum p k u, evaluated on the final iterate.
  double rate = 0.0;
  double utility = 0.0;
  for (Index x = 0; x < nx; ++x) {
    for (Index y = 0; y < ny; ++y) {
      const double w = p(x) * kernel.matrix()(x, y);
      if (w <= 0.0) continue;
      rate += w * (beta * u(x, y) - log_z(x));
      utility += w * u(x, y);
    }
  }

  RateUtilityPoint point{beta, std::max(rate, 0.0), utility, std::move(kernel), std::move(marginal)};
  point.residual = residual;
  point.iterations = it;
  point.newton_steps = newton_steps;
  point.damping_events = damping_events;
  point.final_damping = alpha;
  for (Index y = 0; y < ny; ++y) {
    bool admissible = false;
    for (Index x = 0; x < nx; ++x) {
      admissible = admissible ||
                   problem.admissible(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
    }
    if (admissible && q(y) == 0.0) point.dead_columns.push_back(static_cast<std::size_t>(y));
  }
  return point;
}

std::vector<CurvePoint> rate_utility_curve(const RateUtilityProblem& problem,
                                           std::span<const double> beta_grid,
                                           const SolverOptions& options, std::size_t jobs) {
  if (beta_grid.empty()) throw std::invalid_argument("rate_utility_curve: empty grid");
  if (!std::is_sorted(beta_grid.begin(), beta_grid.end())) {
    throw std::invalid_argument("rate_utility_curve: grid must be sorted");
  }
  return parallel_map(beta_grid.size(), jobs, [&](std::size_t i) {
    CurvePoint c;
    c.beta = beta_grid[i];
    try {
      c.solution = solve_self_consistent(problem, beta_grid[i], options);
    } catch (const ConvergenceError& e) {
      c.failure = e.what();
      c.failure_residual = e.residual();
    }
    return c;
  });
}

RateUtilityPoint solve_at_rate(const RateUtilityProblem& problem, double rate,
                               const SolverOptions& options) {
  if (!(rate >= 0.0)) throw std::invalid_argument("solve_at_rate: rate must be >= 0");
  if (rate == 0.0) return zero_rate_endpoint(problem);
  RateUtilityPoint top = max_rate_endpoint(problem);
  if (rate >= top.rate) return top;

  auto solve = [&](double beta) { return solve_self_consistent(problem, beta, options); };
  double lo = 0.0;
  double hi = 1.0;
  RateUtilityPoint hi_point = solve(hi);
  while (hi_point.rate < rate) {
    if (hi >= kBetaCap) return top;
    lo = hi;
    hi = std::min(2.0 * hi, kBetaCap);
    hi_point = solve(hi);
  }
  // Achieved rate is non-decreasing in beta; keep the upper end feasible.
  for (int it = 0; it < 200; ++it) {
    if (hi_point.rate - rate < 1e-10 || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) {
      break;
    }
    const double mid = 0.5 * (lo + hi);
    RateUtilityPoint mid_point = solve(mid);
    if (mid_point.rate < rate) {
      lo = mid;
    } else {
      hi = mid;
      hi_point = std::move(mid_point);
    }
  }
  return hi_point;
}

std::vector<CurvePoint> rate_utility_curve_at_rates(const RateUtilityProblem& problem,
                                                    std::span<const double> rate_grid,
                                                    const SolverOptions& options, std::size_t jobs) {
  if (rate_grid.empty()) throw std::invalid_argument("rate_utility_curve_at_rates: empty grid");
  if (!std::is_sorted(rate_grid.begin(), rate_grid.end())) {
    throw std::invalid_argument("rate_utility_curve_at_rates: grid must be sorted");
  }
  return parallel_map(rate_grid.size(), jobs, [&](std::size_t i) {
    CurvePoint c;
    try {
      c.solution = solve_at_rate(problem, rate_grid[i], options);
      c.beta = c.solution->beta;
    } catch (const ConvergenceError& e) {
      c.beta = std::numeric_limits<double>::quiet_NaN();
      c.failure = e.what();
      c.failure_residual = e.residual();
    }
    return c;
  });
}

double slope_check(const RateUtilityPoint& point, const RateUtilityPoint& neighbor) {
  const double dr = neighbor.rate - point.rate;
  if (dr == 0.0) throw std::invalid_argument("slope_check: points have equal rate");
  return (neighbor.utility - point.utility) / dr;
}

double tangency_residual(const UtilityMatrix& utilities, const JointDistribution& pi,
                         double orientation) {
  if (utilities.rows() != pi.rows() || utilities.cols() != pi.cols()) {
    throw std::invalid_argument("tangency_residual: dimension mismatch");
  }
  const Matrix& t = pi.table();
  const Eigen::VectorXd px = t.rowwise().sum();
  const Eigen::RowVectorXd py = t.colwise().sum();
  Matrix nu = Matrix::Zero(t.rows(), t.cols());
  Matrix ni = Matrix::Zero(t.rows(), t.cols());
  for (Index x = 0; x < t.rows(); ++x) {
    double su = 0.0;
    double si = 0.0;
    int n = 0;
    for (Index y = 0; y < t.cols(); ++y) {
      if (t(x, y) <= kSupportTolerance) continue;
      nu(x, y) = orientation * utilities.entries()(x, y);
      ni(x, y) = std::log(t(x, y) / (px(x) * py(y))) - 1.0;
      su += nu(x, y);
      si += ni(x, y);
      ++n;
    }
    for (Index y = 0; y < t.cols(); ++y) {
      if (t(x, y) <= kSupportTolerance) continue;
      nu(x, y) -= su / n;
      ni(x, y) -= si / n;
    }
  }
  const double a = nu.norm();
  const double b = ni.norm();
  constexpr double kFlat = 1e-12;
  if (a < kFlat && b < kFlat) return 0.0;
  if (a < kFlat || b < kFlat) return 1.0;
  return (nu / a - ni / b).cwiseAbs().maxCoeff();
}

namespace {

std::vector<PathPoint> trace_path(const RateUtilityProblem& solved, const UtilityMatrix& reported,
                                  double orientation, std::span<const double> beta_grid,
                                  const SolverOptions& options) {
  std::vector<PathPoint> out;
  out.reserve(beta_grid.size());
  for (double beta : beta_grid) {
    if (!(beta > 0.0)) throw std::invalid_argument("path: grid values must be positive");
    RateUtilityPoint s = solve_self_consistent(solved, beta, options);
    JointDistribution pi = semidirect_product(solved.source(), s.kernel);
    const double utility = (pi.table().array() * reported.entries().array()).sum();
    const double tangency = tangency_residual(reported, pi, orientation);
    out.push_back(PathPoint{beta, std::move(pi), s.rate, utility, tangency});
  }
  return out;
}

}  // namespace

std::vector<PathPoint> expansion_path(const RateUtilityProblem& problem,
                                      std::span<const double> beta_grid,
                                      const SolverOptions& options) {
  return trace_path(problem, problem.utilities(), 1.0, beta_grid, options);
}

std::vector<PathPoint> contraction_path(const RateUtilityProblem& problem,
                                        std::span<const double> beta_grid,
                                        const SolverOptions& options) {
  return trace_path(problem.negated(), problem.utilities(), -1.0, beta_grid, options);
}

double bregman_divergence_of_I(const JointDistribution& pi, const JointDistribution& pi0) {
  if (pi.rows() != pi0.rows() || pi.cols() != pi0.cols()) {
    throw std::invalid_argument("bregman_divergence_of_I: dimension mismatch");
  }
  if (!(pi.table().array() > 0.0).all()) {
    throw std::invalid_argument("bregman_divergence_of_I: pi must be strictly positive");
  }
  const Matrix grad = mutual_information_gradient(pi0);
  const double linear = (grad.array() * (pi.table() - pi0.table()).array()).sum();
  return mutual_information(pi) - mutual_information(pi0) - linear;
}

}  // namespace boundrat
