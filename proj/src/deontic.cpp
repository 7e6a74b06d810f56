#include "boundrat/deontic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace boundrat {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kStrictMargin = 1e-12;

// Outcome-space distribution from face-local weights.
Distribution lift(const RestrictionScenario& s, std::span<const double> face_weights) {
  std::vector<double> w(s.prior().size(), 0.0);
  for (std::size_t j = 0; j < s.face().size(); ++j) w[s.face()[j]] = face_weights[j];
  return Distribution::normalized(std::move(w));
}

double expected_utility(const RestrictionScenario& s, std::span<const double> face_weights) {
  double e = 0.0;
  for (std::size_t j = 0; j < face_weights.size(); ++j) e += face_weights[j] * s.utilities()[j];
  return e;
}

ExtendedReal disutility_at(const RestrictionScenario& s, const DisutilitySpec& resolved,
                           std::span<const double> face_weights) {
  return disutility(resolved, kl_divergence(lift(s, face_weights), s.prior()).value());
}

std::vector<double> vertex(std::size_t k, std::size_t j) {
  std::vector<double> w(k, 0.0);
  w[j] = 1.0;
  return w;
}

// -D(d(p)) is convex on the face iff F is convex for every positive temperature.
std::pair<bool, std::size_t> convexity_check(const RestrictionScenario& s,
                                             const DisutilitySpec& resolved,
                                             const SearchOptions& options) {
  const std::size_t k = s.face().size();
  if (k == 1) return {true, 0};
  std::mt19937_64 rng(options.seed);
  std::exponential_distribution<double> expo(1.0);
  auto sample = [&] {
    std::vector<double> w(k);
    double t = 0.0;
    for (double& v : w) t += (v = expo(rng));
    for (double& v : w) v /= t;
    return w;
  };
  auto penalty = [&](std::span<const double> w) { return -disutility_at(s, resolved, w).to_double(); };

  std::size_t checked = 0;
  for (std::size_t n = 0; n < options.convexity_samples; ++n) {
    // Alternate interior pairs with vertex-to-interior pairs to probe the boundary.
    const std::vector<double> a = n % 2 == 0 ? sample() : vertex(k, n / 2 % k);
    const std::vector<double> b = sample();
    std::vector<double> mid(k);
    for (std::size_t j = 0; j < k; ++j) mid[j] = 0.5 * (a[j] + b[j]);
    const double fa = penalty(a);
    const double fb = penalty(b);
    const double fm = penalty(mid);
    ++checked;
    if (!std::isfinite(fa) || !std::isfinite(fb) || !std::isfinite(fm)) return {false, checked};
    const double scale = std::max({1.0, std::abs(fa), std::abs(fb)});
    if (fm > 0.5 * (fa + fb) + 1e-12 * scale) return {false, checked};
  }
  return {true, checked};
}

// Points j/N of the face simplex, with N chosen to keep the count near 2e5.
std::vector<std::vector<double>> face_grid(std::size_t k) {
  std::size_t n = 1000;
  auto count = [](std::size_t n_, std::size_t k_) {
    double c = 1.0;
    for (std::size_t i = 1; i < k_; ++i) c = c * static_cast<double>(n_ + i) / static_cast<double>(i);
    return c;
  };
  while (n > 2 && count(n, k) > 2e5) n = n * 9 / 10;
  std::vector<std::vector<double>> out;
  std::vector<std::size_t> c(k, 0);
  // Enumerate compositions of n into k parts.
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t pos, std::size_t left) {
    if (pos + 1 == k) {
      c[pos] = left;
      std::vector<double> w(k);
      for (std::size_t j = 0; j < k; ++j) w[j] = static_cast<double>(c[j]) / static_cast<double>(n);
      out.push_back(std::move(w));
      return;
    }
    for (std::size_t v = 0; v <= left; ++v) {
      c[pos] = v;
      rec(pos + 1, left - v);
    }
  };
  rec(0, n);
  return out;
}

double margin_at(const RestrictionScenario& s, const DisutilitySpec& resolved,
                 std::span<const double> w, double beta) {
  const double e = expected_utility(s, w);
  const double d = disutility_at(s, resolved, w).to_double();
  if (std::isinf(beta)) return e;
  return beta * e - d;
}

struct Winner {
  std::size_t index = 0;  // vertex index or grid index
  double objective = -kInf;
};

Winner best_vertex(const RestrictionScenario& s, const DisutilitySpec& resolved, double temperature,
                   std::vector<double>* objectives) {
  Winner w;
  const std::size_t k = s.face().size();
  if (objectives) objectives->assign(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    const std::vector<double> v = vertex(k, j);
    const double f = net_utility(s, resolved, v, temperature);
    if (objectives) (*objectives)[j] = f;
    if (f > w.objective) w = {j, f};
  }
  return w;
}

}  // namespace

StateSpace::StateSpace(std::vector<std::vector<std::size_t>> action_map, std::vector<double> potential)
    : action_map_(std::move(action_map)), potential_(std::move(potential)) {
  if (potential_.empty()) throw std::invalid_argument("StateSpace: no states");
  if (action_map_.empty()) throw std::invalid_argument("StateSpace: no actions");
  for (double u : potential_) {
    if (!std::isfinite(u)) throw std::invalid_argument("StateSpace: non-finite potential");
  }
  for (std::size_t a = 0; a < action_map_.size(); ++a) {
    if (action_map_[a].size() != potential_.size()) {
      throw std::invalid_argument("StateSpace: action " + std::to_string(a) +
                                  " is not defined on every state");
    }
    for (std::size_t target : action_map_[a]) {
      if (target >= potential_.size()) {
        throw std::invalid_argument("StateSpace: action " + std::to_string(a) +
                                    " leads outside the state space");
      }
    }
  }
}

UtilityMatrix derive_utility_matrix(const StateSpace& space) {
  Matrix u(static_cast<Eigen::Index>(space.states()), static_cast<Eigen::Index>(space.actions()));
  for (std::size_t x = 0; x < space.states(); ++x) {
    for (std::size_t a = 0; a < space.actions(); ++a) {
      u(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(a)) =
          space.potential(space.apply(a, x)) - space.potential(x);
    }
  }
  return UtilityMatrix(std::move(u));
}

PolicyMatrix::PolicyMatrix(SupportMask mask) : mask_(std::move(mask)) {
  if (mask_.size() == 0) throw std::invalid_argument("PolicyMatrix: empty mask");
  for (Eigen::Index x = 0; x < mask_.rows(); ++x) {
    if (!mask_.row(x).any()) {
      throw std::invalid_argument("PolicyMatrix: state " + std::to_string(x) +
                                  " has an empty ought set");
    }
  }
}

PolicyMatrix PolicyMatrix::full(std::size_t states, std::size_t actions) {
  return PolicyMatrix(SupportMask::Constant(static_cast<Eigen::Index>(states),
                                            static_cast<Eigen::Index>(actions), true));
}

std::vector<std::size_t> PolicyMatrix::ought_set(std::size_t x) const {
  std::vector<std::size_t> out;
  for (std::size_t a = 0; a < actions(); ++a) {
    if (allows(x, a)) out.push_back(a);
  }
  return out;
}

SupportMask select_entries(const PolicyMatrix& mask, const ActionPredicate& predicate) {
  SupportMask out = mask.mask();
  for (Eigen::Index x = 0; x < out.rows(); ++x) {
    for (Eigen::Index a = 0; a < out.cols(); ++a) {
      out(x, a) = out(x, a) && predicate(static_cast<std::size_t>(x), static_cast<std::size_t>(a));
    }
  }
  return out;
}

PolicyMatrix select_restriction(const PolicyMatrix& mask, const ActionPredicate& predicate) {
  SupportMask out = select_entries(mask, predicate);
  for (Eigen::Index x = 0; x < out.rows(); ++x) {
    if (!out.row(x).any()) {
      throw std::invalid_argument("select_restriction: selection empties the ought set of state " +
                                  std::to_string(x));
    }
  }
  return PolicyMatrix(std::move(out));
}

bool legality_check(const StateSpace& space, const std::set<std::size_t>& legal_states,
                    std::size_t x, std::size_t a, const PolicyMatrix* ought) {
  if (x >= space.states() || a >= space.actions()) {
    throw std::invalid_argument("legality_check: state or action out of range");
  }
  if (ought && !ought->allows(x, a)) {
    throw std::invalid_argument("legality_check: action " + std::to_string(a) +
                                " is not admissible in state " + std::to_string(x));
  }
  const std::size_t next = space.apply(a, x);
  return legal_states.contains(next) && space.potential(next) >= space.potential(x);
}

std::string to_string(DisutilityKind kind) {
  switch (kind) {
    case DisutilityKind::reciprocal:
      return "reciprocal";
    case DisutilityKind::exponential:
      return "exponential";
    case DisutilityKind::linear:
      return "linear";
  }
  return "unknown";
}

std::optional<DisutilityKind> parse_disutility_kind(const std::string& name) {
  if (name == "reciprocal") return DisutilityKind::reciprocal;
  if (name == "exponential") return DisutilityKind::exponential;
  if (name == "linear") return DisutilityKind::linear;
  return std::nullopt;
}

ExtendedReal disutility(const DisutilitySpec& spec, double d) {
  if (!(d >= 0.0)) throw std::invalid_argument("disutility: divergence must be >= 0");
  switch (spec.kind) {
    case DisutilityKind::reciprocal:
      if (d == 0.0) return ExtendedReal::infinity();
      return ExtendedReal(1.0 / d);
    case DisutilityKind::exponential:
      return ExtendedReal(std::exp(-d));
    case DisutilityKind::linear:
      if (!spec.d_max || !(*spec.d_max > 0.0)) {
        throw std::invalid_argument("disutility: linear kind needs a positive d_max");
      }
      return ExtendedReal(std::max(0.0, *spec.d_max - d));
  }
  throw std::invalid_argument("disutility: unknown kind");
}

RestrictionScenario::RestrictionScenario(Distribution prior, std::vector<std::size_t> face,
                                         std::vector<double> utilities, double beta,
                                         std::vector<std::size_t> protected_set)
    : prior_(std::move(prior)),
      face_(std::move(face)),
      utilities_(std::move(utilities)),
      beta_(beta),
      protected_(std::move(protected_set)) {
  if (!prior_.is_interior()) throw std::invalid_argument("RestrictionScenario: prior must be interior");
  if (face_.empty()) throw std::invalid_argument("RestrictionScenario: face is empty");
  std::vector<bool> seen(prior_.size(), false);
  for (std::size_t i : face_) {
    if (i >= prior_.size()) throw std::invalid_argument("RestrictionScenario: face index out of range");
    if (seen[i]) throw std::invalid_argument("RestrictionScenario: repeated face index");
    seen[i] = true;
  }
  for (std::size_t c : protected_) {
    if (c < seen.size() && seen[c]) {
      throw std::invalid_argument("RestrictionScenario: face restricts protected right " +
                                  std::to_string(c));
    }
  }
  if (utilities_.size() != face_.size()) {
    throw std::invalid_argument("RestrictionScenario: one utility per face vertex required");
  }
  for (double u : utilities_) {
    if (!std::isfinite(u) || u < 0.0) {
      throw std::invalid_argument("RestrictionScenario: utilities must be finite and >= 0");
    }
  }
  if (!(beta_ > 0.0)) throw std::invalid_argument("RestrictionScenario: beta must be positive");
}

RestrictionScenario RestrictionScenario::with_beta(double beta) const {
  return RestrictionScenario(prior_, face_, utilities_, beta, protected_);
}

FaceDivergenceBounds face_divergence_bounds(const RestrictionScenario& scenario) {
  const Distribution& q = scenario.prior();
  FaceDivergenceBounds b;
  double face_mass = 0.0;
  for (std::size_t i : scenario.face()) face_mass += q[i];
  b.d_min = -std::log(face_mass);
  b.d_star = -kInf;
  for (std::size_t j = 0; j < scenario.face().size(); ++j) {
    const double d = -std::log(q[scenario.face()[j]]);
    if (d > b.d_star) {
      b.d_star = d;
      b.j_star = j;
    }
  }
  const auto w = q.weights();
  b.d_max = -std::log(*std::min_element(w.begin(), w.end()));
  return b;
}

DisutilitySpec resolve_disutility(const DisutilitySpec& spec, const RestrictionScenario& scenario) {
  DisutilitySpec out = spec;
  if (spec.kind != DisutilityKind::linear) return out;
  const auto w = scenario.prior().weights();
  const std::size_t i_min =
      static_cast<std::size_t>(std::min_element(w.begin(), w.end()) - w.begin());
  if (std::find(scenario.face().begin(), scenario.face().end(), i_min) != scenario.face().end()) {
    throw std::invalid_argument(
        "resolve_disutility: the least likely outcome " + std::to_string(i_min) +
        " lies on the restricted face, so the linear disutility is not bounded away from zero");
  }
  if (!out.d_max) out.d_max = face_divergence_bounds(scenario).d_max;
  return out;
}

double net_utility(const RestrictionScenario& scenario, const DisutilitySpec& resolved,
                   std::span<const double> face_weights, double temperature) {
  if (face_weights.size() != scenario.face().size()) {
    throw std::invalid_argument("net_utility: weights do not match the face");
  }
  const double e = expected_utility(scenario, face_weights);
  if (temperature == 0.0) return e;
  const ExtendedReal d = disutility_at(scenario, resolved, face_weights);
  if (d.is_infinite()) return -kInf;
  return e - temperature * d.value();
}

ProportionalityResult proportionality_optimize(const RestrictionScenario& scenario,
                                               const DisutilitySpec& spec,
                                               const SearchOptions& options) {
  const DisutilitySpec resolved = resolve_disutility(spec, scenario);
  const double temperature = 1.0 / scenario.beta();
  const std::size_t k = scenario.face().size();

  ProportionalityDiagnostics diag;
  diag.disutility = resolved;
  diag.bounds = face_divergence_bounds(scenario);
  const auto [convex, samples] = convexity_check(scenario, resolved, options);
  diag.convexity_verified = convex;
  diag.convexity_samples = samples;

  std::vector<double> best;
  std::optional<std::size_t> vertex_index;
  double objective = -kInf;
  const Winner v = best_vertex(scenario, resolved, temperature, &diag.vertex_objectives);
  if (convex) {
    diag.method = SearchMethod::vertex_enumeration;
    best = vertex(k, v.index);
    vertex_index = v.index;
    objective = v.objective;
  } else {
    diag.method = SearchMethod::grid;
    for (auto& w : face_grid(k)) {
      const double f = net_utility(scenario, resolved, w, temperature);
      if (f > objective) {
        objective = f;
        best = std::move(w);
      }
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (best[j] == 1.0) vertex_index = j;
    }
  }

  ProportionalityResult r{std::nullopt, lift(scenario, best)};
  r.vertex = vertex_index;
  r.objective = objective;
  diag.margin = margin_at(scenario, resolved, best, scenario.beta());
  r.feasible = diag.margin > kStrictMargin;
  if (r.feasible) r.policy = r.maximizer;
  r.diagnostics = std::move(diag);
  return r;
}

ScanResult temperature_scan(const RestrictionScenario& scenario, const DisutilitySpec& spec,
                            std::span<const double> temperature_grid, const SearchOptions& options) {
  if (!std::is_sorted(temperature_grid.begin(), temperature_grid.end())) {
    throw std::invalid_argument("temperature_scan: grid must be sorted");
  }
  const DisutilitySpec resolved = resolve_disutility(spec, scenario);
  const bool convex = convexity_check(scenario, resolved, options).first;
  const std::size_t k = scenario.face().size();
  const std::vector<std::vector<double>> grid = convex ? std::vector<std::vector<double>>{} : face_grid(k);

  // Winner index and objective at one temperature.
  auto evaluate = [&](double temperature, std::vector<double>* objectives) -> Winner {
    const Winner v = best_vertex(scenario, resolved, temperature, objectives);
    if (convex) return v;
    Winner w;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const double f = net_utility(scenario, resolved, grid[g], temperature);
      if (f > w.objective) w = {g, f};
    }
    return w;
  };
  auto weights_of = [&](std::size_t index) { return convex ? vertex(k, index) : grid[index]; };

  ScanResult out;
  out.method = convex ? SearchMethod::vertex_enumeration : SearchMethod::grid;
  for (double t : temperature_grid) {
    if (!(t >= 0.0) || !std::isfinite(t)) {
      throw std::invalid_argument("temperature_scan: temperatures must be finite and >= 0");
    }
    ScanRow row;
    row.temperature = t;
    row.beta = t == 0.0 ? kInf : 1.0 / t;
    const Winner w = evaluate(t, &row.vertex_objectives);
    row.winner = w.index;
    row.objective = w.objective;
    row.feasible = margin_at(scenario, resolved, weights_of(w.index), row.beta) > kStrictMargin;
    out.rows.push_back(std::move(row));
  }
  for (std::size_t i = 1; i < out.rows.size(); ++i) {
    const ScanRow& a = out.rows[i - 1];
    const ScanRow& b = out.rows[i];
    if (a.winner == b.winner) continue;
    VertexSwitch sw;
    sw.row = i;
    sw.from = a.winner;
    sw.to = b.winner;
    sw.temperature_lo = a.temperature;
    sw.temperature_hi = b.temperature;
    double lo = a.temperature;
    double hi = b.temperature;
    for (int it = 0; it < 100 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
      const double mid = 0.5 * (lo + hi);
      if (evaluate(mid, nullptr).index == a.winner) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    sw.temperature = 0.5 * (lo + hi);
    sw.beta = sw.temperature > 0.0 ? 1.0 / sw.temperature : kInf;
    out.switches.push_back(sw);
  }
  return out;
}

ScanResult critical_beta_scan(const RestrictionScenario& scenario, const DisutilitySpec& spec,
                              std::span<const double> beta_grid, const SearchOptions& options) {
  std::vector<double> temperatures;
  temperatures.reserve(beta_grid.size());
  for (double b : beta_grid) {
    if (!(b > 0.0)) throw std::invalid_argument("critical_beta_scan: beta must be positive");
    temperatures.push_back(1.0 / b);
  }
  if (!std::is_sorted(beta_grid.begin(), beta_grid.end())) {
    throw std::invalid_argument("critical_beta_scan: grid must be sorted");
  }
  // Increasing beta is decreasing temperature; scan in temperature order and flip back.
  std::reverse(temperatures.begin(), temperatures.end());
  ScanResult r = temperature_scan(scenario, spec, temperatures, options);
  std::reverse(r.rows.begin(), r.rows.end());
  const std::size_t n = r.rows.size();
  for (VertexSwitch& sw : r.switches) {
    sw.row = n - sw.row;
    std::swap(sw.from, sw.to);
  }
  std::reverse(r.switches.begin(), r.switches.end());
  return r;
}

std::optional<double> feasibility_onset(const RestrictionScenario& scenario,
                                        const DisutilitySpec& spec) {
  const DisutilitySpec resolved = resolve_disutility(spec, scenario);
  const std::size_t k = scenario.face().size();
  const bool convex = convexity_check(scenario, resolved, SearchOptions{}).first;
  std::optional<double> onset;
  auto consider = [&](std::span<const double> w) {
    const double e = expected_utility(scenario, w);
    if (!(e > 0.0)) return;
    const double d = disutility_at(scenario, resolved, w).to_double();
    const double b = d / e;
    if (!onset || b < *onset) onset = b;
  };
  for (std::size_t j = 0; j < k; ++j) consider(vertex(k, j));
  if (!convex) {
    for (const auto& w : face_grid(k)) consider(w);
  }
  return onset;
}

}  // namespace boundrat
