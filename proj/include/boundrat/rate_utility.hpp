#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "boundrat/kernel.hpp"
#include "boundrat/simplex.hpp"

namespace boundrat {

using SupportMask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// State-action utility U(x, y).
class UtilityMatrix {
 public:
  explicit UtilityMatrix(Matrix entries);

  std::size_t rows() const { return static_cast<std::size_t>(entries_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(entries_.cols()); }
  const Matrix& entries() const { return entries_; }
  double operator()(std::size_t x, std::size_t y) const {
    return entries_(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
  }
  UtilityMatrix negated() const { return UtilityMatrix(-entries_); }

 private:
  Matrix entries_;
};

/// max E_{P x| K}[U] subject to I(P; K) <= R, optionally with K restricted
/// to an admissible support per state.
class RateUtilityProblem {
 public:
  RateUtilityProblem(Distribution source, UtilityMatrix utilities,
                     std::optional<SupportMask> mask = std::nullopt);

  const Distribution& source() const { return source_; }
  const UtilityMatrix& utilities() const { return utilities_; }
  const std::optional<SupportMask>& mask() const { return mask_; }
  std::size_t states() const { return utilities_.rows(); }
  std::size_t actions() const { return utilities_.cols(); }
  bool admissible(std::size_t x, std::size_t y) const {
    return !mask_ || (*mask_)(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
  }

  /// Same source and mask, utility replaced by -U.
  RateUtilityProblem negated() const;

 private:
  Distribution source_;
  UtilityMatrix utilities_;
  std::optional<SupportMask> mask_;
};

struct SolverOptions {
  double tol = 1e-12;
  std::size_t max_iterations = 10000;
  /// Initial relaxation weight on the new marginal; halved whenever the residual grows.
  double damping = 1.0;
};

inline constexpr double kColumnDeathThreshold = 1e-300;
inline constexpr double kBetaCap = 1e4;

struct RateUtilityPoint {
  double beta = 0.0;
  double rate = 0.0;
  double utility = 0.0;
  StochasticKernel kernel;
  Distribution marginal;
  double residual = 0.0;
  std::size_t iterations = 0;
  /// Newton steps spent polishing the marginal between plain iterations.
  std::size_t newton_steps = 0;
  std::size_t damping_events = 0;
  double final_damping = 1.0;
  /// Columns carrying no mass at the fixed point.
  std::vector<std::size_t> dead_columns;
  /// True for closed-form endpoint points rather than solver output.
  bool endpoint = false;
};

/// Optimal state-dependent prior for a fixed kernel: kappa* = K.
StochasticKernel optimal_generic_prior(const Distribution& p, const StochasticKernel& k);

/// Optimal constant prior for a fixed kernel: q* = K_* P.
Distribution optimal_constant_prior(const Distribution& p, const StochasticKernel& k);

/// Row-wise argmax Dirac kernel (lowest index on ties, admissible entries only).
StochasticKernel argmax_kernel(const RateUtilityProblem& problem);

/// Zero-rate end of the curve: the best admissible constant action.
RateUtilityPoint zero_rate_endpoint(const RateUtilityProblem& problem);

/// Maximal-utility end of the curve, attained by argmax_kernel.
RateUtilityPoint max_rate_endpoint(const RateUtilityProblem& problem);

/// Iterates
///   k(x, y) = q(y) exp(beta U(x, y)) / Z(x),  q = K_* P,  Z(x) = sum_y q(y) exp(beta U(x, y))
/// from the uniform admissible marginal until successive K and q differ by
/// less than options.tol in sup norm.  Slow phases (columns whose mass decays
/// geometrically towards zero) are shortcut by periodic Newton steps on the
/// equivalent concave problem max_q sum_x p(x) ln Z(x); the reported residual
/// is always that of a plain iteration.  Throws ConvergenceError otherwise.
RateUtilityPoint solve_self_consistent(const RateUtilityProblem& problem, double beta,
                                       const SolverOptions& options = {});

struct CurvePoint {
  double beta = 0.0;
  std::optional<RateUtilityPoint> solution;
  std::string failure;
  double failure_residual = 0.0;

  bool ok() const { return solution.has_value(); }
};

/// One solver run per beta; failures are reported per point.
std::vector<CurvePoint> rate_utility_curve(const RateUtilityProblem& problem,
                                           std::span<const double> beta_grid,
                                           const SolverOptions& options = {},
                                           std::size_t jobs = 1);

/// Solves for the smallest beta whose achieved rate reaches `rate`.
/// Rates at or above the rate of argmax_kernel, or beyond beta = kBetaCap,
/// return the maximal-utility endpoint; rate 0 returns the zero-rate endpoint.
RateUtilityPoint solve_at_rate(const RateUtilityProblem& problem, double rate,
                               const SolverOptions& options = {});

std::vector<CurvePoint> rate_utility_curve_at_rates(const RateUtilityProblem& problem,
                                                    std::span<const double> rate_grid,
                                                    const SolverOptions& options = {},
                                                    std::size_t jobs = 1);

/// Finite-difference slope dU/dR between two curve points.  Close to 1/beta
/// for neighbouring points of a fine grid.
double slope_check(const RateUtilityPoint& point, const RateUtilityPoint& neighbor);

/// Angle-free tangency defect between the utility hyperplane and the level set
/// of I at pi: both U and grad I are projected onto the row-wise zero-sum
/// directions on the support of pi, normalised, and compared in sup norm.
/// `orientation` is +1 for the expansion path and -1 for contraction.
double tangency_residual(const UtilityMatrix& utilities, const JointDistribution& pi,
                         double orientation = 1.0);

struct PathPoint {
  double beta = 0.0;
  JointDistribution joint;
  double rate = 0.0;
  double utility = 0.0;
  double tangency = 0.0;
};

/// P x| K(beta) along the grid, for utility maximisation.
std::vector<PathPoint> expansion_path(const RateUtilityProblem& problem,
                                      std::span<const double> beta_grid,
                                      const SolverOptions& options = {});

/// The same for utility minimisation (the fixed point of -U).  Utilities in
/// the returned points are expectations of the original U.
std::vector<PathPoint> contraction_path(const RateUtilityProblem& problem,
                                        std::span<const double> beta_grid,
                                        const SolverOptions& options = {});

/// I(pi) - I(pi0) - <grad I(pi0), pi - pi0>; both joints strictly positive.
double bregman_divergence_of_I(const JointDistribution& pi, const JointDistribution& pi0);

}  // namespace boundrat
