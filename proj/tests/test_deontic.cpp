#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "boundrat/deontic.hpp"
#include "generators.hpp"

using namespace boundrat;
using boundrat::testing::Gen;

namespace {

// q = (0.7, 0.2, 0.1), face {0, 1}, utilities (7, 5), linear disutility.
RestrictionScenario two_vertex(double beta) {
  return RestrictionScenario(Distribution({0.7, 0.2, 0.1}), {0, 1}, {7.0, 5.0}, beta);
}

const DisutilitySpec kLinear{DisutilityKind::linear, std::nullopt};

std::vector<double> temperatures(double hi, int n) {
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i) t[i] = hi * i / (n - 1);
  return t;
}

}  // namespace

TEST_CASE("utility matrix from a state space") {
  // Action 0 is the identity; action 1 sends 0 -> 2; action 2 agrees with action 1 on state 0.
  const StateSpace space({{0, 1, 2}, {2, 1, 0}, {2, 0, 0}}, {0.0, 1.0, 3.0});
  const UtilityMatrix u = derive_utility_matrix(space);
  for (std::size_t x = 0; x < 3; ++x) CHECK(u(x, 0) == 0.0);
  CHECK(u(0, 1) == 3.0);
  CHECK(u(0, 1) == u(0, 2));
  CHECK(u(2, 1) == -3.0);

  CHECK_THROWS_AS(StateSpace({{0, 5}}, {0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(StateSpace({{0}}, {0.0, 1.0}), std::invalid_argument);
}

TEST_CASE("policy matrices and selection") {
  const PolicyMatrix full = PolicyMatrix::full(2, 3);
  CHECK(select_restriction(full, [](std::size_t, std::size_t) { return true; }).mask() == full.mask());
  CHECK_THROWS_AS(select_restriction(full, [](std::size_t, std::size_t) { return false; }),
                  std::invalid_argument);
  const PolicyMatrix kept = select_restriction(full, [](std::size_t, std::size_t a) { return a >= 1; });
  CHECK(kept.ought_set(0) == std::vector<std::size_t>{1, 2});
  CHECK(kept.ought_set(1) == std::vector<std::size_t>{1, 2});

  const SupportMask partial = select_entries(full, [](std::size_t x, std::size_t) { return x == 0; });
  CHECK(partial.row(0).all());
  CHECK_FALSE(partial.row(1).any());

  SupportMask empty_row(2, 2);
  empty_row << true, false, false, false;
  CHECK_THROWS_AS(PolicyMatrix{empty_row}, std::invalid_argument);
}

TEST_CASE("legality checks") {
  const StateSpace space({{0, 1, 2}, {1, 2, 2}, {0, 0, 0}}, {0.0, 1.0, 3.0});
  const std::set<std::size_t> legal{0, 1};
  CHECK(legality_check(space, legal, 1, 0));
  CHECK(legality_check(space, legal, 0, 1));
  CHECK_FALSE(legality_check(space, legal, 1, 1));  // target not legal
  CHECK_FALSE(legality_check(space, legal, 1, 2));  // potential drops
  CHECK_FALSE(legality_check(space, {0, 1, 2}, 2, 2));

  SupportMask m = SupportMask::Constant(3, 3, true);
  m(0, 2) = false;
  const PolicyMatrix ought(m);
  CHECK_THROWS_AS(legality_check(space, legal, 0, 2, &ought), std::invalid_argument);
  CHECK_THROWS_AS(legality_check(space, legal, 0, 9), std::invalid_argument);
}

TEST_CASE("disutility kinds") {
  CHECK(disutility({DisutilityKind::exponential, {}}, 0.0).value() == 1.0);
  CHECK(disutility({DisutilityKind::linear, 2.302585092994046}, 0.35667494393873245).value() ==
        doctest::Approx(1.945910149055313).epsilon(1e-12));
  CHECK(disutility({DisutilityKind::reciprocal, {}}, 1e12).value() < 1e-11);
  CHECK(disutility({DisutilityKind::reciprocal, {}}, 0.0).is_infinite());
  CHECK(disutility({DisutilityKind::linear, 1.0}, 3.0).value() == 0.0);
  CHECK_THROWS_AS(disutility({DisutilityKind::linear, {}}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(disutility({DisutilityKind::exponential, {}}, -1.0), std::invalid_argument);
  CHECK(parse_disutility_kind("linear") == DisutilityKind::linear);
  CHECK_FALSE(parse_disutility_kind("quadratic").has_value());
  CHECK(to_string(DisutilityKind::reciprocal) == "reciprocal");
}

TEST_CASE("scenario validation") {
  const Distribution q({0.7, 0.2, 0.1});
  CHECK_THROWS_AS(RestrictionScenario(q, {}, {}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(RestrictionScenario(q, {0, 0}, {1, 1}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(RestrictionScenario(q, {0, 1}, {1}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(RestrictionScenario(q, {0, 1}, {1, -1}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(RestrictionScenario(q, {0, 1}, {1, 1}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(RestrictionScenario(q, {0, 1}, {1, 1}, 1.0, {1}), std::invalid_argument);
  CHECK_NOTHROW(RestrictionScenario(q, {0, 1}, {1, 1}, 1.0, {2}));

  // The least likely outcome may not lie on the face under linear disutility.
  const RestrictionScenario bad(q, {1, 2}, {1, 1}, 1.0);
  CHECK_THROWS_AS(resolve_disutility(kLinear, bad), std::invalid_argument);
  CHECK_NOTHROW(resolve_disutility({DisutilityKind::exponential, {}}, bad));
}

TEST_CASE("face divergence bounds") {
  const auto b = face_divergence_bounds(two_vertex(1.0));
  CHECK(b.d_min == doctest::Approx(-std::log(0.9)));
  CHECK(b.d_star == doctest::Approx(-std::log(0.2)));
  CHECK(b.j_star == 1);
  CHECK(b.d_max == doctest::Approx(2.3025850929940455));

  Gen gen(51);
  const RestrictionScenario s = two_vertex(1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto w = gen.positive_weights(2, 0.0);
    std::vector<double> full{w[0], w[1], 0.0};
    const double d = kl_divergence(Distribution::normalized(full), s.prior()).value();
    CHECK(d >= b.d_min - 1e-12);
    CHECK(d <= b.d_star + 1e-12);
    // Linear disutility stays bounded away from zero on the face.
    CHECK(disutility(resolve_disutility(kLinear, s), d).value() >= b.d_max - b.d_star - 1e-12);
  }
}

TEST_CASE("two-vertex scenario: vertices and switch") {
  const auto cold = proportionality_optimize(two_vertex(100.0), kLinear);
  REQUIRE(cold.policy.has_value());
  CHECK(cold.vertex == 0);
  CHECK(cold.diagnostics.method == SearchMethod::vertex_enumeration);
  CHECK(cold.diagnostics.convexity_verified);

  const auto warm = proportionality_optimize(two_vertex(0.5), kLinear);
  REQUIRE(warm.policy.has_value());
  CHECK(warm.vertex == 1);

  const auto hot = proportionality_optimize(two_vertex(0.1), kLinear);
  CHECK_FALSE(hot.policy.has_value());
  CHECK_FALSE(hot.feasible);

  const auto scan = temperature_scan(two_vertex(1.0), kLinear, temperatures(8.0, 81));
  REQUIRE(scan.switches.size() == 1);
  CHECK(scan.switches[0].from == 0);
  CHECK(scan.switches[0].to == 1);
  CHECK(std::abs(scan.switches[0].temperature - 1.5964712002958563) < 1e-9);
  CHECK(scan.rows.front().winner == 0);
  CHECK(std::isinf(scan.rows.front().beta));
  CHECK(scan.rows.front().objective == 7.0);
  CHECK_FALSE(scan.rows.back().feasible);

  const auto onset = feasibility_onset(two_vertex(1.0), kLinear);
  REQUIRE(onset.has_value());
  CHECK(std::abs(*onset - 0.13862943611198902) < 1e-12);
}

TEST_CASE("critical beta scan mirrors the temperature scan") {
  std::vector<double> betas;
  for (int i = 1; i <= 40; ++i) betas.push_back(0.05 * i);
  const auto scan = critical_beta_scan(two_vertex(1.0), kLinear, betas);
  REQUIRE(scan.rows.size() == betas.size());
  CHECK(scan.rows[0].beta == doctest::Approx(0.05));
  CHECK_FALSE(scan.rows[0].feasible);  // below the onset
  CHECK(scan.rows.back().winner == 0);
  REQUIRE(scan.switches.size() == 1);
  CHECK(scan.switches[0].from == 1);
  CHECK(scan.switches[0].to == 0);
  CHECK(scan.switches[0].beta == doctest::Approx(0.6263814842476839).epsilon(1e-9));
  CHECK(scan.rows[scan.switches[0].row].winner == 0);
  CHECK(scan.rows[scan.switches[0].row - 1].winner == 1);

  std::vector<double> tiny{0.01, 0.05, 0.1};
  for (const auto& row : critical_beta_scan(two_vertex(1.0), kLinear, tiny).rows) CHECK_FALSE(row.feasible);
}

TEST_CASE("property: vertex winner is not beaten by a fine face grid") {
  Gen gen(52);
  int convex_cases = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 3 + gen.index(2);
    const Distribution q = gen.interior(n);
    std::vector<std::size_t> face{0, 1};
    // Keep the least likely outcome off the face.
    const auto w = q.weights();
    const std::size_t i_min = std::min_element(w.begin(), w.end()) - w.begin();
    if (i_min < 2) continue;
    const RestrictionScenario s(q, face, gen.reals(2, 0.0, 10.0), gen.uniform(0.2, 5.0));
    const auto r = proportionality_optimize(s, kLinear, {static_cast<std::uint64_t>(trial)});
    if (!r.diagnostics.convexity_verified) continue;
    ++convex_cases;
    const DisutilitySpec resolved = resolve_disutility(kLinear, s);
    const double t = 1.0 / s.beta();
    for (int k = 0; k <= 1000; ++k) {
      const std::vector<double> fw{k / 1000.0, 1.0 - k / 1000.0};
      CHECK(net_utility(s, resolved, fw, t) <= r.objective + 1e-6);
    }
  }
  CHECK(convex_cases > 5);
}

TEST_CASE("non-convex penalties fall back to grid search") {
  // With d_max inside the range of d on the face the clamp creates flat
  // regions next to a convex bowl, and the midpoint test rejects convexity.
  const RestrictionScenario s(Distribution({0.45, 0.45, 0.1}), {0, 1}, {1.0, 1.2}, 0.5);
  const DisutilitySpec clamped{DisutilityKind::linear, 0.3};
  const auto r = proportionality_optimize(s, clamped, {7});
  CHECK_FALSE(r.diagnostics.convexity_verified);
  CHECK(r.diagnostics.method == SearchMethod::grid);
  for (int k = 0; k <= 100; ++k) {
    const std::vector<double> fw{k / 100.0, 1.0 - k / 100.0};
    CHECK(net_utility(s, clamped, fw, 2.0) <= r.objective + 1e-9);
  }
  CHECK(r.objective == doctest::Approx(1.2));
}

TEST_CASE("net utility at zero temperature is the expected utility") {
  const RestrictionScenario s = two_vertex(1.0);
  const DisutilitySpec resolved = resolve_disutility(kLinear, s);
  const std::vector<double> w{0.25, 0.75};
  CHECK(net_utility(s, resolved, w, 0.0) == doctest::Approx(0.25 * 7 + 0.75 * 5));
  CHECK_THROWS_AS(net_utility(s, resolved, std::vector<double>{1.0}, 1.0), std::invalid_argument);
}
