#include "boundrat/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace boundrat {

namespace {

void require_same_size(const Distribution& p, const Distribution& q, const char* what) {
  if (p.size() != q.size()) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" +
                                std::to_string(p.size()) + " vs " + std::to_string(q.size()) + ")");
  }
}

}  // namespace

double ExtendedReal::value() const {
  if (infinite_) throw std::domain_error("ExtendedReal::value: value is +infinity");
  return value_;
}

Distribution::Distribution(std::vector<double> weights) : weights_(std::move(weights)) {
  if (weights_.empty()) throw std::invalid_argument("Distribution: empty weight vector");
  double sum = 0.0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    const double w = weights_[i];
    if (!std::isfinite(w) || w < 0.0) {
      throw std::invalid_argument("Distribution: weight " + std::to_string(i) +
                                  " is negative or not finite");
    }
    sum += w;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw std::invalid_argument("Distribution: weights sum to " + std::to_string(sum) +
                                ", expected 1");
  }
}

Distribution Distribution::normalized(std::vector<double> weights) {
  double sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw std::invalid_argument("Distribution::normalized: negative or non-finite weight");
    }
    sum += w;
  }
  if (!(sum > 0.0)) throw std::invalid_argument("Distribution::normalized: zero total mass");
  for (double& w : weights) w /= sum;
  return Distribution(std::move(weights));
}

Distribution Distribution::uniform(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Distribution::uniform: n must be positive");
  return Distribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

Distribution Distribution::dirac(std::size_t n, std::size_t index) {
  if (index >= n) throw std::invalid_argument("Distribution::dirac: index out of range");
  std::vector<double> w(n, 0.0);
  w[index] = 1.0;
  return Distribution(std::move(w));
}

std::vector<std::size_t> Distribution::support() const {
  std::vector<std::size_t> s;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (in_support(i)) s.push_back(i);
  }
  return s;
}

bool Distribution::is_interior() const {
  return std::all_of(weights_.begin(), weights_.end(),
                     [](double w) { return w > kSupportTolerance; });
}

TangentVector::TangentVector(Distribution base, std::vector<double> components)
    : base_(std::move(base)), components_(std::move(components)) {
  if (components_.size() != base_.size()) {
    throw std::invalid_argument("TangentVector: dimension mismatch");
  }
  double sum = 0.0;
  double scale = 1.0;
  for (double c : components_) {
    sum += c;
    scale = std::max(scale, std::abs(c));
  }
  // Tolerance is relative to the largest component so that steep directions are accepted.
  if (std::abs(sum) > kSumTolerance * scale) {
    throw std::invalid_argument("TangentVector: components must sum to zero");
  }
}

BregmanBall::BregmanBall(Distribution center, double radius)
    : center_(std::move(center)), radius_(radius) {
  if (!center_.is_interior()) throw std::invalid_argument("BregmanBall: center must be interior");
  if (!(radius_ >= 0.0)) throw std::invalid_argument("BregmanBall: radius must be non-negative");
}

double log_sum_exp(std::span<const double> x) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

ExtendedReal kl_divergence(const Distribution& p, const Distribution& q) {
  require_same_size(p, q, "kl_divergence");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = p[i];
    if (pi == 0.0) continue;
    if (!q.in_support(i)) {
      if (p.in_support(i)) return ExtendedReal::infinity();
      // Sub-tolerance mass on a sub-tolerance prior weight counts as a structural zero.
      continue;
    }
    d += pi * std::log(pi / q[i]);
  }
  return ExtendedReal(std::max(d, 0.0));
}

double entropy(const Distribution& p) {
  double h = 0.0;
  for (double w : p.weights()) {
    if (w > 0.0) h -= w * std::log(w);
  }
  return h;
}

double total_variation(const Distribution& p, const Distribution& q) {
  require_same_size(p, q, "total_variation");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

Distribution m_geodesic(const Distribution& p, const Distribution& q, double t) {
  require_same_size(p, q, "m_geodesic");
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("m_geodesic: t must lie in [0, 1]");
  std::vector<double> w(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) w[i] = (1.0 - t) * p[i] + t * q[i];
  return Distribution(std::move(w));
}

Distribution e_geodesic(const Distribution& p, const Distribution& q, double t) {
  require_same_size(p, q, "e_geodesic");
  if (!p.is_interior() || !q.is_interior()) {
    throw std::invalid_argument("e_geodesic: endpoints must have full support");
  }
  if (!std::isfinite(t)) throw std::invalid_argument("e_geodesic: t must be finite");
  if (t == 0.0) return p;
  if (t == 1.0) return q;
  std::vector<double> logw(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    logw[i] = (1.0 - t) * std::log(p[i]) + t * std::log(q[i]);
  }
  const double psi = log_sum_exp(logw);
  for (double& l : logw) l = std::exp(l - psi);
  return Distribution::normalized(std::move(logw));
}

bool bregman_ball_contains(const BregmanBall& ball, const Distribution& p) {
  return kl_divergence(p, ball.center()) <= ball.radius() + 1e-12;
}

}  // namespace boundrat
