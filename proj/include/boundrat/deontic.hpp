#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "boundrat/rate_utility.hpp"
#include "boundrat/simplex.hpp"

namespace boundrat {

/// Finite states acted on by finite actions, with a potential (utility) on states.
class StateSpace {
 public:
  /// action_map[a][x] is the consequence a.x of action a in state x.
  StateSpace(std::vector<std::vector<std::size_t>> action_map, std::vector<double> potential);

  std::size_t states() const { return potential_.size(); }
  std::size_t actions() const { return action_map_.size(); }
  std::size_t apply(std::size_t action, std::size_t state) const { return action_map_[action][state]; }
  double potential(std::size_t state) const { return potential_[state]; }

 private:
  std::vector<std::vector<std::size_t>> action_map_;
  std::vector<double> potential_;
};

/// U(x, a) = u(a.x) - u(x).
UtilityMatrix derive_utility_matrix(const StateSpace& space);

/// Permitted actions per state.  Every state keeps at least one permitted action.
class PolicyMatrix {
 public:
  explicit PolicyMatrix(SupportMask mask);
  static PolicyMatrix full(std::size_t states, std::size_t actions);

  std::size_t states() const { return static_cast<std::size_t>(mask_.rows()); }
  std::size_t actions() const { return static_cast<std::size_t>(mask_.cols()); }
  bool allows(std::size_t x, std::size_t a) const {
    return mask_(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(a));
  }
  std::vector<std::size_t> ought_set(std::size_t x) const;
  const SupportMask& mask() const { return mask_; }

 private:
  SupportMask mask_;
};

using ActionPredicate = std::function<bool(std::size_t state, std::size_t action)>;

/// Entrywise AND of the permitted set with the predicate.  Throws if some
/// state loses every permitted action.
PolicyMatrix select_restriction(const PolicyMatrix& mask, const ActionPredicate& predicate);

/// Same selection without the totality demand; rows may come back empty.
SupportMask select_entries(const PolicyMatrix& mask, const ActionPredicate& predicate);

/// a.x is a legal state and at least as good as x.  Throws std::invalid_argument
/// when the action is out of range or not permitted by `ought`.
bool legality_check(const StateSpace& space, const std::set<std::size_t>& legal_states,
                    std::size_t x, std::size_t a, const PolicyMatrix* ought = nullptr);

enum class DisutilityKind { reciprocal, exponential, linear };

std::string to_string(DisutilityKind kind);
std::optional<DisutilityKind> parse_disutility_kind(const std::string& name);

/// Strictly decreasing convex penalty of the divergence d from the prior:
/// 1/d, exp(-d), or max(0, d_max - d).
struct DisutilitySpec {
  DisutilityKind kind = DisutilityKind::linear;
  /// Linear kind only.  When unset it is taken as -ln(min prior weight).
  std::optional<double> d_max;
};

/// D(d).  The reciprocal kind is +infinity at d = 0.
ExtendedReal disutility(const DisutilitySpec& spec, double d);

/// A proposed restriction of rights in one situation: prior over the full
/// ought set, the restricted face, the public utility of each face vertex.
class RestrictionScenario {
 public:
  RestrictionScenario(Distribution prior, std::vector<std::size_t> face,
                      std::vector<double> utilities, double beta,
                      std::vector<std::size_t> protected_set = {});

  const Distribution& prior() const { return prior_; }
  const std::vector<std::size_t>& face() const { return face_; }
  const std::vector<double>& utilities() const { return utilities_; }
  double beta() const { return beta_; }

  RestrictionScenario with_beta(double beta) const;

 private:
  Distribution prior_;
  std::vector<std::size_t> face_;
  std::vector<double> utilities_;
  double beta_;
  std::vector<std::size_t> protected_;
};

struct FaceDivergenceBounds {
  /// KL of the prior conditioned on the face: the least divergence on the face.
  double d_min = 0.0;
  /// Largest vertex divergence and the face-local vertex attaining it.
  double d_star = 0.0;
  std::size_t j_star = 0;
  /// -ln of the smallest prior weight.
  double d_max = 0.0;
};

FaceDivergenceBounds face_divergence_bounds(const RestrictionScenario& scenario);

/// Disutility with d_max resolved against the scenario prior.  For the linear
/// kind this also rejects a face containing the least likely outcome.
DisutilitySpec resolve_disutility(const DisutilitySpec& spec, const RestrictionScenario& scenario);

/// F = E_p[U] - temperature * D(KL(p || prior)), p supported on the face
/// (given in face-local coordinates).  -infinity where D is infinite.
double net_utility(const RestrictionScenario& scenario, const DisutilitySpec& resolved,
                   std::span<const double> face_weights, double temperature);

enum class SearchMethod { vertex_enumeration, grid };

struct ProportionalityDiagnostics {
  SearchMethod method = SearchMethod::vertex_enumeration;
  bool convexity_verified = false;
  std::size_t convexity_samples = 0;
  /// F at each face vertex, face-local order.
  std::vector<double> vertex_objectives;
  double margin = 0.0;  // beta E[U] - D at the maximiser
  FaceDivergenceBounds bounds;
  DisutilitySpec disutility;
};

struct ProportionalityResult {
  /// Empty when the net-benefit condition fails at the maximiser (no solution).
  std::optional<Distribution> policy;
  /// Maximiser of F over the face, over the full ought set.
  Distribution maximizer;
  /// Face-local vertex index when the maximiser is a vertex.
  std::optional<std::size_t> vertex;
  double objective = 0.0;
  bool feasible = false;
  ProportionalityDiagnostics diagnostics;
};

struct SearchOptions {
  std::uint64_t seed = 0;
  std::size_t convexity_samples = 64;
};

/// Maximises F_beta over the face.  When a sampled midpoint test confirms
/// convexity of F the maximiser is the best vertex (lowest index on ties);
/// otherwise a dense grid over the face is searched.  Feasibility requires
/// beta E[U] - D > 1e-12 at the maximiser.
ProportionalityResult proportionality_optimize(const RestrictionScenario& scenario,
                                               const DisutilitySpec& spec,
                                               const SearchOptions& options = {});

struct ScanRow {
  double beta = 0.0;  // +inf at zero temperature
  double temperature = 0.0;
  std::size_t winner = 0;  // face-local
  double objective = 0.0;
  bool feasible = false;
  std::vector<double> vertex_objectives;
};

struct VertexSwitch {
  std::size_t row = 0;  // first row with the new winner
  std::size_t from = 0;
  std::size_t to = 0;
  double temperature_lo = 0.0;
  double temperature_hi = 0.0;
  /// Crossing refined by bisection between the bracketing rows.
  double temperature = 0.0;
  double beta = 0.0;
};

struct ScanResult {
  std::vector<ScanRow> rows;
  std::vector<VertexSwitch> switches;
  SearchMethod method = SearchMethod::vertex_enumeration;
};

/// Winner and feasibility per beta (sorted, positive).
ScanResult critical_beta_scan(const RestrictionScenario& scenario, const DisutilitySpec& spec,
                              std::span<const double> beta_grid, const SearchOptions& options = {});

/// Same scan parameterised by temperature 1/beta >= 0 (sorted).
ScanResult temperature_scan(const RestrictionScenario& scenario, const DisutilitySpec& spec,
                            std::span<const double> temperature_grid,
                            const SearchOptions& options = {});

/// Smallest beta at which some face point has positive net benefit, i.e.
/// min over vertices of D_v / u_v.  Empty when no vertex has positive utility.
std::optional<double> feasibility_onset(const RestrictionScenario& scenario,
                                        const DisutilitySpec& spec);

}  // namespace boundrat
