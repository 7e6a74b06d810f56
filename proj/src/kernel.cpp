#include "boundrat/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "boundrat/errors.hpp"

namespace boundrat {

namespace {

using Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

std::vector<double> to_vector(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

void check_entries(const Matrix& m, const char* what) {
  if (m.size() == 0) throw std::invalid_argument(std::string(what) + ": empty matrix");
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      if (!std::isfinite(v) || v < 0.0) {
        throw std::invalid_argument(std::string(what) + ": entry (" + std::to_string(i) + "," +
                                    std::to_string(j) + ") is negative or not finite");
      }
    }
  }
}

}  // namespace

StochasticKernel::StochasticKernel(Matrix rows) : rows_(std::move(rows)) {
  check_entries(rows_, "StochasticKernel");
  for (Index i = 0; i < rows_.rows(); ++i) {
    const double s = rows_.row(i).sum();
    if (std::abs(s - 1.0) > kSumTolerance) {
      throw std::invalid_argument("StochasticKernel: row " + std::to_string(i) + " sums to " +
                                  std::to_string(s));
    }
  }
}

StochasticKernel StochasticKernel::identity(std::size_t n) {
  return StochasticKernel(Matrix::Identity(idx(n), idx(n)));
}

StochasticKernel StochasticKernel::constant(std::size_t inputs, const Distribution& q) {
  Matrix m(idx(inputs), idx(q.size()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = q[static_cast<std::size_t>(j)];
  }
  return StochasticKernel(std::move(m));
}

StochasticKernel StochasticKernel::normalized_rows(Matrix rows) {
  check_entries(rows, "StochasticKernel::normalized_rows");
  for (Index i = 0; i < rows.rows(); ++i) {
    const double s = rows.row(i).sum();
    if (!(s > 0.0)) {
      throw std::invalid_argument("StochasticKernel::normalized_rows: row " + std::to_string(i) +
                                  " has zero mass");
    }
    rows.row(i) /= s;
  }
  return StochasticKernel(std::move(rows));
}

Distribution StochasticKernel::row(std::size_t x) const {
  return Distribution(to_vector(rows_.row(idx(x)).transpose()));
}

JointDistribution::JointDistribution(Matrix table) : table_(std::move(table)) {
  check_entries(table_, "JointDistribution");
  const double s = table_.sum();
  if (std::abs(s - 1.0) > kSumTolerance) {
    throw std::invalid_argument("JointDistribution: entries sum to " + std::to_string(s));
  }
}

JointDistribution JointDistribution::product(const Distribution& px, const Distribution& py) {
  Matrix m(idx(px.size()), idx(py.size()));
  for (std::size_t i = 0; i < px.size(); ++i) {
    for (std::size_t j = 0; j < py.size(); ++j) m(idx(i), idx(j)) = px[i] * py[j];
  }
  return JointDistribution(std::move(m));
}

Distribution JointDistribution::x_marginal() const {
  return Distribution::normalized(to_vector(table_.rowwise().sum()));
}

Distribution JointDistribution::y_marginal() const {
  return Distribution::normalized(to_vector(table_.colwise().sum().transpose()));
}

Distribution JointDistribution::flattened() const {
  std::vector<double> w;
  w.reserve(static_cast<std::size_t>(table_.size()));
  for (Index i = 0; i < table_.rows(); ++i) {
    for (Index j = 0; j < table_.cols(); ++j) w.push_back(table_(i, j));
  }
  return Distribution(std::move(w));
}

bool JointDistribution::is_interior() const { return (table_.array() > kSupportTolerance).all(); }

IndexMap::IndexMap(std::vector<std::size_t> map, std::size_t target_size)
    : map_(std::move(map)), target_size_(target_size) {
  if (map_.empty() || target_size_ == 0) throw std::invalid_argument("IndexMap: empty map");
  std::vector<bool> hit(target_size_, false);
  for (std::size_t i = 0; i < map_.size(); ++i) {
    if (map_[i] >= target_size_) {
      throw std::invalid_argument("IndexMap: image of " + std::to_string(i) + " out of range");
    }
    hit[map_[i]] = true;
  }
  for (std::size_t t = 0; t < target_size_; ++t) {
    if (!hit[t]) {
      throw std::invalid_argument("IndexMap: not surjective, target " + std::to_string(t) +
                                  " has empty preimage");
    }
  }
}

IndexMap IndexMap::identity(std::size_t n) {
  std::vector<std::size_t> m(n);
  for (std::size_t i = 0; i < n; ++i) m[i] = i;
  return IndexMap(std::move(m), n);
}

IndexMap IndexMap::collapse(std::size_t n) { return IndexMap(std::vector<std::size_t>(n, 0), 1); }

IndexMap compose(const IndexMap& first, const IndexMap& then) {
  if (first.target_size() != then.source_size()) {
    throw std::invalid_argument("compose: target of first map does not match source of second");
  }
  std::vector<std::size_t> m(first.source_size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = then(first(i));
  return IndexMap(std::move(m), then.target_size());
}

JointDistribution semidirect_product(const Distribution& p, const StochasticKernel& k) {
  if (p.size() != k.inputs()) throw std::invalid_argument("semidirect_product: dimension mismatch");
  Matrix m = k.matrix();
  for (std::size_t i = 0; i < p.size(); ++i) m.row(idx(i)) *= p[i];
  return JointDistribution(std::move(m));
}

Distribution push_forward(const StochasticKernel& k, const Distribution& p) {
  if (p.size() != k.inputs()) throw std::invalid_argument("push_forward: dimension mismatch");
  Eigen::Map<const Eigen::VectorXd> pv(p.weights().data(), idx(p.size()));
  return Distribution::normalized(to_vector(k.matrix().transpose() * pv));
}

Distribution push_forward(const IndexMap& f, const Distribution& p) {
  if (p.size() != f.source_size()) throw std::invalid_argument("push_forward: dimension mismatch");
  std::vector<double> w(f.target_size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) w[f(i)] += p[i];
  return Distribution::normalized(std::move(w));
}

JointDistribution push_forward(const IndexMap& f, const IndexMap& g, const JointDistribution& pi) {
  if (pi.rows() != f.source_size() || pi.cols() != g.source_size()) {
    throw std::invalid_argument("push_forward: dimension mismatch");
  }
  Matrix m = Matrix::Zero(idx(f.target_size()), idx(g.target_size()));
  for (std::size_t i = 0; i < pi.rows(); ++i) {
    for (std::size_t j = 0; j < pi.cols(); ++j) m(idx(f(i)), idx(g(j))) += pi(i, j);
  }
  return JointDistribution(std::move(m));
}

Disintegration disintegrate(const JointDistribution& pi) {
  const Distribution px = pi.x_marginal();
  const Distribution py = pi.y_marginal();
  Matrix k(idx(pi.rows()), idx(pi.cols()));
  for (std::size_t i = 0; i < pi.rows(); ++i) {
    const double mass = pi.table().row(idx(i)).sum();
    if (mass > 0.0) {
      k.row(idx(i)) = pi.table().row(idx(i)) / mass;
    } else {
      for (std::size_t j = 0; j < pi.cols(); ++j) k(idx(i), idx(j)) = py[j];
    }
  }
  return {px, StochasticKernel::normalized_rows(std::move(k))};
}

StochasticKernel reciprocal_kernel(const Distribution& mu, const StochasticKernel& k) {
  const JointDistribution pi = semidirect_product(mu, k);
  Matrix inv(idx(k.outputs()), idx(k.inputs()));
  for (std::size_t y = 0; y < k.outputs(); ++y) {
    const double mass = pi.table().col(idx(y)).sum();
    if (!(mass > 0.0)) {
      throw std::invalid_argument("reciprocal_kernel: output " + std::to_string(y) +
                                  " has zero mass under K_* mu");
    }
    inv.row(idx(y)) = pi.table().col(idx(y)).transpose() / mass;
  }
  return StochasticKernel::normalized_rows(std::move(inv));
}

double mutual_information(const JointDistribution& pi) {
  const Eigen::VectorXd px = pi.table().rowwise().sum();
  const Eigen::RowVectorXd py = pi.table().colwise().sum();
  double s = 0.0;
  for (Index i = 0; i < pi.table().rows(); ++i) {
    for (Index j = 0; j < pi.table().cols(); ++j) {
      const double v = pi.table()(i, j);
      if (v > 0.0) s += v * std::log(v / (px(i) * py(j)));
    }
  }
  return std::max(s, 0.0);
}

double mutual_information(const Distribution& p, const StochasticKernel& k) {
  return mutual_information(semidirect_product(p, k));
}

Matrix mutual_information_gradient(const JointDistribution& pi) {
  if (!(pi.table().array() > 0.0).all()) {
    throw std::invalid_argument("mutual_information_gradient: joint must be strictly positive");
  }
  const Eigen::VectorXd px = pi.table().rowwise().sum();
  const Eigen::RowVectorXd py = pi.table().colwise().sum();
  Matrix g(pi.table().rows(), pi.table().cols());
  for (Index i = 0; i < g.rows(); ++i) {
    for (Index j = 0; j < g.cols(); ++j) g(i, j) = std::log(pi.table()(i, j) / (px(i) * py(j))) - 1.0;
  }
  return g;
}

StochasticKernel push_forward_kernel(const StochasticKernel& k, const IndexMap& g) {
  if (g.source_size() != k.outputs()) {
    throw std::invalid_argument("push_forward_kernel: dimension mismatch");
  }
  Matrix m = Matrix::Zero(idx(k.inputs()), idx(g.target_size()));
  for (std::size_t j = 0; j < k.outputs(); ++j) m.col(idx(g(j))) += k.matrix().col(idx(j));
  return StochasticKernel::normalized_rows(std::move(m));
}

StochasticKernel conditional_kernel(const StochasticKernel& k, const Distribution& p,
                                    const IndexMap& f) {
  if (p.size() != k.inputs() || f.source_size() != k.inputs()) {
    throw std::invalid_argument("conditional_kernel: dimension mismatch");
  }
  Matrix m = Matrix::Zero(idx(f.target_size()), idx(k.outputs()));
  std::vector<double> block_mass(f.target_size(), 0.0);
  for (std::size_t i = 0; i < k.inputs(); ++i) {
    m.row(idx(f(i))) += p[i] * k.matrix().row(idx(i));
    block_mass[f(i)] += p[i];
  }
  for (std::size_t b = 0; b < block_mass.size(); ++b) {
    if (!(block_mass[b] > 0.0)) {
      throw std::invalid_argument("conditional_kernel: block " + std::to_string(b) +
                                  " of f has zero P-mass");
    }
    m.row(idx(b)) /= block_mass[b];
  }
  return StochasticKernel::normalized_rows(std::move(m));
}

StochasticKernel coarse_grain_kernel(const StochasticKernel& k, const Distribution& p,
                                     const CoarseGraining& cg) {
  return push_forward_kernel(conditional_kernel(k, p, cg.f), cg.g);
}

DataProcessingResult data_processing_check(const Distribution& p, const StochasticKernel& k,
                                           const IndexMap& g) {
  DataProcessingResult r;
  r.before = mutual_information(p, k);
  r.after = mutual_information(p, push_forward_kernel(k, g));
  r.holds = r.before >= r.after - 1e-12;
  return r;
}

CapacityResult channel_capacity(const StochasticKernel& k, double tol, std::size_t max_iterations) {
  if (!(tol > 0.0)) throw std::invalid_argument("channel_capacity: tol must be positive");
  const Index nx = k.matrix().rows();
  const Index ny = k.matrix().cols();
  const Matrix& km = k.matrix();
  Eigen::VectorXd p = Eigen::VectorXd::Constant(nx, 1.0 / static_cast<double>(nx));
  Eigen::VectorXd log_c(nx);

  double lower = 0.0;
  double upper = 0.0;
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    const Eigen::VectorXd q = km.transpose() * p;
    for (Index x = 0; x < nx; ++x) {
      double d = 0.0;
      for (Index y = 0; y < ny; ++y) {
        const double v = km(x, y);
        if (v > 0.0) d += v * std::log(v / q(y));
      }
      log_c(x) = d;
    }
    // ln sum_x p_x e^{D_x} <= C <= max_x D_x
    std::vector<double> terms(static_cast<std::size_t>(nx));
    for (Index x = 0; x < nx; ++x) {
      terms[static_cast<std::size_t>(x)] =
          p(x) > 0.0 ? std::log(p(x)) + log_c(x) : -std::numeric_limits<double>::infinity();
    }
    lower = std::max(0.0, log_sum_exp(terms));
    upper = std::max(lower, log_c.maxCoeff());
    if (upper - lower < tol * std::max(1.0, upper)) {
      CapacityResult r;
      r.capacity = lower;
      r.input = Distribution::normalized(to_vector(p));
      r.lower_bound = lower;
      r.upper_bound = upper;
      r.iterations = it;
      return r;
    }
    for (Index x = 0; x < nx; ++x) p(x) *= std::exp(log_c(x) - upper);
    p /= p.sum();
  }
  throw ConvergenceError("channel_capacity: bracket did not close", upper - lower, max_iterations);
}

}  // namespace boundrat
