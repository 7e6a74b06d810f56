#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "boundrat/simplex.hpp"

namespace boundrat {

using Matrix = Eigen::MatrixXd;

/// Row-stochastic |X| x |Y| matrix: row x is the conditional law K(x, .).
class StochasticKernel {
 public:
  explicit StochasticKernel(Matrix rows);

  static StochasticKernel identity(std::size_t n);
  /// Every row equal to q.
  static StochasticKernel constant(std::size_t inputs, const Distribution& q);
  /// Rescales each non-negative row with positive mass to unit sum.
  static StochasticKernel normalized_rows(Matrix rows);

  std::size_t inputs() const { return static_cast<std::size_t>(rows_.rows()); }
  std::size_t outputs() const { return static_cast<std::size_t>(rows_.cols()); }
  const Matrix& matrix() const { return rows_; }
  double operator()(std::size_t x, std::size_t y) const {
    return rows_(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
  }
  Distribution row(std::size_t x) const;

 private:
  Matrix rows_;
};

/// Probability table on X x Y.
class JointDistribution {
 public:
  explicit JointDistribution(Matrix table);

  static JointDistribution product(const Distribution& px, const Distribution& py);

  std::size_t rows() const { return static_cast<std::size_t>(table_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(table_.cols()); }
  const Matrix& table() const { return table_; }
  double operator()(std::size_t x, std::size_t y) const {
    return table_(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
  }

  Distribution x_marginal() const;
  Distribution y_marginal() const;
  /// Row-major view as a distribution on |X|*|Y| outcomes.
  Distribution flattened() const;
  bool is_interior() const;

 private:
  Matrix table_;
};

/// Surjective relabelling {0..n-1} -> {0..m-1}.
class IndexMap {
 public:
  IndexMap(std::vector<std::size_t> map, std::size_t target_size);

  static IndexMap identity(std::size_t n);
  /// Everything to a single target.
  static IndexMap collapse(std::size_t n);

  std::size_t source_size() const { return map_.size(); }
  std::size_t target_size() const { return target_size_; }
  std::size_t operator()(std::size_t i) const { return map_[i]; }
  const std::vector<std::size_t>& values() const { return map_; }

 private:
  std::vector<std::size_t> map_;
  std::size_t target_size_;
};

/// then o first.
IndexMap compose(const IndexMap& first, const IndexMap& then);

/// Pair of coarse grainings: f on the input space, g on the output space.
struct CoarseGraining {
  IndexMap f;
  IndexMap g;
};

/// (P x| K)(x, y) = P(x) K(x, y).
JointDistribution semidirect_product(const Distribution& p, const StochasticKernel& k);

/// K_* P, the law of the output when the input is drawn from P.
Distribution push_forward(const StochasticKernel& k, const Distribution& p);

/// f_* P.
Distribution push_forward(const IndexMap& f, const Distribution& p);

/// (f x g)_* pi.
JointDistribution push_forward(const IndexMap& f, const IndexMap& g, const JointDistribution& pi);

struct Disintegration {
  Distribution marginal;
  StochasticKernel kernel;
};

/// pi = pi_X x| K.  Rows where pi_X vanishes are filled with pi_Y.
Disintegration disintegrate(const JointDistribution& pi);

/// Bayes inverse (mu x| K) / K_* mu, a |Y| x |X| kernel.  Throws when some
/// output has zero mass under K_* mu.
StochasticKernel reciprocal_kernel(const Distribution& mu, const StochasticKernel& k);

/// KL(pi || pi_X (x) pi_Y).
double mutual_information(const JointDistribution& pi);
double mutual_information(const Distribution& p, const StochasticKernel& k);

/// Entrywise partial derivative of I in ambient coordinates:
/// ln(pi / (pi_X pi_Y)) - 1.  Requires every entry to be positive.
Matrix mutual_information_gradient(const JointDistribution& pi);

/// g_* K: outputs relabelled through g.
StochasticKernel push_forward_kernel(const StochasticKernel& k, const IndexMap& g);

/// f_*^P K = (P x| K) / f_* P: the P-weighted average of the rows in each f-block.
StochasticKernel conditional_kernel(const StochasticKernel& k, const Distribution& p,
                                    const IndexMap& f);

/// g_*(f_*^P K).  Throws when some f-block carries no P-mass.
StochasticKernel coarse_grain_kernel(const StochasticKernel& k, const Distribution& p,
                                     const CoarseGraining& cg);

struct DataProcessingResult {
  double before = 0.0;
  double after = 0.0;
  bool holds = false;
};

/// I(P; K) against I(P; g_* K).
DataProcessingResult data_processing_check(const Distribution& p, const StochasticKernel& k,
                                           const IndexMap& g);

struct CapacityResult {
  double capacity = 0.0;
  Distribution input = Distribution::uniform(1);
  double lower_bound = 0.0;
  double upper_bound = 0.0;
  std::size_t iterations = 0;
};

inline constexpr std::size_t kCapacityIterationCap = 10000;

/// Blahut-Arimoto iteration for max_P I(P; K).  Stops when the bracket
/// [lower, upper] around the capacity is narrower than tol * max(1, upper).
/// Throws ConvergenceError when the cap is reached first.
CapacityResult channel_capacity(const StochasticKernel& k, double tol,
                                std::size_t max_iterations = kCapacityIterationCap);

}  // namespace boundrat
