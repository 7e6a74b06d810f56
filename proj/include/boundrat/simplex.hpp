#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace boundrat {

/// Weights at or below this value are treated as structural zeros.
inline constexpr double kSupportTolerance = 1e-14;
/// Allowed deviation of a distribution's total mass from one.
inline constexpr double kSumTolerance = 1e-12;

/// A non-negative real that may also be +infinity.  Returned by divergences so
/// that callers can test absolute continuity explicitly.
class ExtendedReal {
 public:
  constexpr explicit ExtendedReal(double finite) : value_(finite), infinite_(false) {}
  static constexpr ExtendedReal infinity() { return ExtendedReal(); }

  constexpr bool is_finite() const { return !infinite_; }
  constexpr bool is_infinite() const { return infinite_; }

  /// Throws std::domain_error when infinite.
  double value() const;
  /// +inf as a float when infinite.
  constexpr double to_double() const {
    return infinite_ ? std::numeric_limits<double>::infinity() : value_;
  }

  friend constexpr bool operator<=(const ExtendedReal& a, double b) {
    return a.is_finite() && a.value_ <= b;
  }
  friend constexpr bool operator>(const ExtendedReal& a, double b) { return !(a <= b); }

 private:
  constexpr ExtendedReal() : value_(0.0), infinite_(true) {}
  double value_;
  bool infinite_;
};

/// Point of the probability simplex over {0, ..., n-1}.  Immutable.
class Distribution {
 public:
  /// Validates non-negativity and unit mass (within kSumTolerance).
  explicit Distribution(std::vector<double> weights);

  /// Rescales a non-negative vector with positive mass onto the simplex.
  static Distribution normalized(std::vector<double> weights);
  static Distribution uniform(std::size_t n);
  static Distribution dirac(std::size_t n, std::size_t index);

  std::size_t size() const { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_[i]; }
  std::span<const double> weights() const { return weights_; }

  bool in_support(std::size_t i) const { return weights_[i] > kSupportTolerance; }
  std::vector<std::size_t> support() const;
  /// Full support, i.e. a point of the open simplex.
  bool is_interior() const;

 private:
  std::vector<double> weights_;
};

/// Mean-zero direction at an interior base point.
class TangentVector {
 public:
  TangentVector(Distribution base, std::vector<double> components);

  const Distribution& base() const { return base_; }
  std::span<const double> components() const { return components_; }

 private:
  Distribution base_;
  std::vector<double> components_;
};

/// {p : KL(p || center) <= radius}.
class BregmanBall {
 public:
  BregmanBall(Distribution center, double radius);

  const Distribution& center() const { return center_; }
  double radius() const { return radius_; }

 private:
  Distribution center_;
  double radius_;
};

/// log(sum_i exp(x_i)) with max subtraction; -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> x);

/// Sum_i p_i ln(p_i / q_i) in nats, +inf when supp(p) is not inside supp(q).
ExtendedReal kl_divergence(const Distribution& p, const Distribution& q);

double entropy(const Distribution& p);

double total_variation(const Distribution& p, const Distribution& q);

/// (1 - t) p + t q for t in [0, 1].
Distribution m_geodesic(const Distribution& p, const Distribution& q, double t);

/// Normalised p^(1-t) q^t.  Both endpoints must be interior; t may be any real.
Distribution e_geodesic(const Distribution& p, const Distribution& q, double t);

bool bregman_ball_contains(const BregmanBall& ball, const Distribution& p);

}  // namespace boundrat
