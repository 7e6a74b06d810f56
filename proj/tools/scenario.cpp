#include "scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <variant>

#include "boundrat/deontic.hpp"
#include "boundrat/errors.hpp"
#include "boundrat/gibbs.hpp"
#include "boundrat/kernel.hpp"
#include "boundrat/parallel.hpp"
#include "boundrat/rate_utility.hpp"
#include "boundrat/simplex.hpp"

namespace boundrat::cli {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
// Distributions typed by hand rarely sum to 1 within a few ulps; anything
// within this is renormalised (and reported), anything further is an error.
constexpr double kInputSumTolerance = 1e-9;
constexpr std::size_t kMaxGridCount = 1000000;

std::string join(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

std::string at(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

std::string show(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct Grid {
  std::vector<double> values;
  bool raw = false;
  std::string path;

  std::string path_of(std::size_t i) const { return raw ? at(path, i) : path; }
};

struct GibbsSpec {
  Distribution prior = Distribution::uniform(1);
  std::vector<double> utilities;
  Grid beta;
};

struct RateUtilitySpec {
  Distribution source = Distribution::uniform(1);
  Matrix utilities;
  std::optional<SupportMask> mask;
  Grid grid;
  bool by_rate = false;
  SolverOptions solver;
  bool tol_given = false;
};

struct GeodesicSpec {
  Distribution prior = Distribution::uniform(1);
  std::vector<double> utilities;
  Grid t;
};

struct CoarseGrainSpec {
  Distribution source = Distribution::uniform(1);
  Matrix kernel;
  std::vector<std::size_t> f;
  std::vector<std::size_t> g;
};

struct CapacitySpec {
  Matrix kernel;
  double tol = 1e-12;
  std::size_t max_iterations = kCapacityIterationCap;
  bool tol_given = false;
};

struct LegalSpec {
  Distribution prior = Distribution::uniform(1);
  std::vector<std::size_t> face;
  std::vector<double> utilities;
  std::vector<std::size_t> protected_set;
  DisutilitySpec disutility;
  Grid grid;
  bool by_temperature = true;
  std::size_t convexity_samples = SearchOptions{}.convexity_samples;
  std::optional<std::uint64_t> seed;
};

using Spec = std::variant<GibbsSpec, RateUtilitySpec, GeodesicSpec, CoarseGrainSpec, CapacitySpec, LegalSpec>;

struct Parsed {
  Spec spec;
  std::vector<std::string> warnings;
};

// Accumulates issues while walking the document; every accessor returns
// nullopt after recording why.
class Reader {
 public:
  std::vector<Issue> issues;
  std::vector<std::string> warnings;

  void fail(std::string path, std::string message) { issues.push_back({std::move(path), std::move(message)}); }

  void only_keys(const Json& obj, const std::string& path, std::initializer_list<const char*> keys) {
    for (const auto& [name, value] : obj.items()) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return name == k; })) {
        fail(join(path, name), "unknown field");
      }
    }
  }

  const Json* field(const Json& obj, const std::string& path, const char* key, bool required) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
      if (required) fail(join(path, key), "required field is missing");
      return nullptr;
    }
    return &*it;
  }

  std::optional<double> real(const Json& v, const std::string& path) {
    if (!v.is_number()) {
      fail(path, "expected a number");
      return std::nullopt;
    }
    const double x = v.get<double>();
    if (!std::isfinite(x)) {
      fail(path, "must be finite");
      return std::nullopt;
    }
    return x;
  }

  std::optional<std::uint64_t> count(const Json& v, const std::string& path) {
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0)) {
      fail(path, "expected a non-negative integer");
      return std::nullopt;
    }
    return v.get<std::uint64_t>();
  }

  std::optional<std::vector<double>> reals(const Json& v, const std::string& path) {
    if (!v.is_array() || v.empty()) {
      fail(path, "expected a non-empty array of numbers");
      return std::nullopt;
    }
    std::vector<double> out;
    bool ok = true;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto x = real(v[i], at(path, i));
      ok = ok && x.has_value();
      out.push_back(x.value_or(0.0));
    }
    if (!ok) return std::nullopt;
    return out;
  }

  std::optional<std::vector<std::size_t>> indices(const Json& v, const std::string& path, bool allow_empty) {
    if (!v.is_array() || (!allow_empty && v.empty())) {
      fail(path, allow_empty ? "expected an array of indices" : "expected a non-empty array of indices");
      return std::nullopt;
    }
    std::vector<std::size_t> out;
    bool ok = true;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto x = count(v[i], at(path, i));
      ok = ok && x.has_value();
      out.push_back(static_cast<std::size_t>(x.value_or(0)));
    }
    if (!ok) return std::nullopt;
    return out;
  }

  std::optional<Matrix> matrix(const Json& v, const std::string& path) {
    if (!v.is_array() || v.empty()) {
      fail(path, "expected a non-empty array of rows");
      return std::nullopt;
    }
    std::vector<std::vector<double>> rows;
    bool ok = true;
    for (std::size_t r = 0; r < v.size(); ++r) {
      auto row = reals(v[r], at(path, r));
      if (!row) {
        ok = false;
        continue;
      }
      if (!rows.empty() && row->size() != rows.front().size()) {
        fail(at(path, r), "has " + std::to_string(row->size()) + " entries, expected " +
                              std::to_string(rows.front().size()));
        ok = false;
        continue;
      }
      rows.push_back(std::move(*row));
    }
    if (!ok) return std::nullopt;
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < rows[r].size(); ++c) {
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
    }
    return m;
  }

  std::optional<SupportMask> mask(const Json& v, const std::string& path, Eigen::Index rows, Eigen::Index cols) {
    if (!v.is_array() || v.size() != static_cast<std::size_t>(rows)) {
      fail(path, "expected " + std::to_string(rows) + " rows of booleans");
      return std::nullopt;
    }
    SupportMask m(rows, cols);
    bool ok = true;
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Json& row = v[static_cast<std::size_t>(r)];
      const std::string rp = at(path, static_cast<std::size_t>(r));
      if (!row.is_array() || row.size() != static_cast<std::size_t>(cols)) {
        fail(rp, "expected " + std::to_string(cols) + " booleans");
        ok = false;
        continue;
      }
      for (Eigen::Index c = 0; c < cols; ++c) {
        const Json& e = row[static_cast<std::size_t>(c)];
        if (!e.is_boolean()) {
          fail(at(rp, static_cast<std::size_t>(c)), "expected true or false");
          ok = false;
          continue;
        }
        m(r, c) = e.get<bool>();
      }
    }
    if (!ok) return std::nullopt;
    return m;
  }

  // Non-negative weights summing to 1.
  std::optional<Distribution> distribution_of(const std::vector<double>& w, const std::string& path) {
    bool ok = true;
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (w[i] < 0.0) {
        fail(at(path, i), "probability " + show(w[i]) + " is negative");
        ok = false;
      }
      sum += w[i];
    }
    if (!ok) return std::nullopt;
    if (std::abs(sum - 1.0) > kInputSumTolerance) {
      fail(path, "weights sum to " + show(sum) + ", expected 1");
      return std::nullopt;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
      warnings.push_back(path + ": weights summed to " + show(sum) + " and were renormalised");
    }
    return Distribution::normalized(w);
  }

  std::optional<Distribution> distribution(const Json& obj, const std::string& key, bool interior) {
    const Json* v = field(obj, "", key.c_str(), true);
    if (!v) return std::nullopt;
    const auto w = reals(*v, key);
    if (!w) return std::nullopt;
    auto d = distribution_of(*w, key);
    if (d && interior && !d->is_interior()) {
      fail(key, "every weight must be positive");
      return std::nullopt;
    }
    return d;
  }

  std::optional<Matrix> kernel(const Json& obj, const std::string& key) {
    const Json* v = field(obj, "", key.c_str(), true);
    if (!v) return std::nullopt;
    auto m = matrix(*v, key);
    if (!m) return std::nullopt;
    bool ok = true;
    for (Eigen::Index r = 0; r < m->rows(); ++r) {
      std::vector<double> row(m->row(r).begin(), m->row(r).end());
      const auto d = distribution_of(row, at(key, static_cast<std::size_t>(r)));
      if (!d) {
        ok = false;
        continue;
      }
      for (Eigen::Index c = 0; c < m->cols(); ++c) (*m)(r, c) = (*d)[static_cast<std::size_t>(c)];
    }
    if (!ok) return std::nullopt;
    return m;
  }

  std::optional<Grid> grid(const Json& obj, const char* key, bool required) {
    const Json* v = field(obj, "", key, required);
    if (!v) return std::nullopt;
    Grid g;
    g.path = key;
    if (v->is_array()) {
      auto values = reals(*v, key);
      if (!values) return std::nullopt;
      g.values = std::move(*values);
      g.raw = true;
      return g;
    }
    if (!v->is_object()) {
      fail(key, "expected an array of numbers or {start, stop, count, scale}");
      return std::nullopt;
    }
    only_keys(*v, key, {"start", "stop", "count", "scale"});
    const Json* start_v = field(*v, key, "start", true);
    const Json* stop_v = field(*v, key, "stop", true);
    const Json* count_v = field(*v, key, "count", true);
    const Json* scale_v = field(*v, key, "scale", false);
    const auto start_o = start_v ? real(*start_v, join(key, "start")) : std::nullopt;
    const auto stop_o = stop_v ? real(*stop_v, join(key, "stop")) : std::nullopt;
    const auto n_o = count_v ? count(*count_v, join(key, "count")) : std::nullopt;
    bool ok = start_o && stop_o && n_o;
    const double start = start_o.value_or(0.0);
    const double stop = stop_o.value_or(0.0);
    const std::uint64_t n = n_o.value_or(0);
    bool log_scale = false;
    if (scale_v) {
      if (!scale_v->is_string() || (*scale_v != "linear" && *scale_v != "log")) {
        fail(join(key, "scale"), "expected \"linear\" or \"log\"");
        ok = false;
      } else {
        log_scale = *scale_v == "log";
      }
    }
    if (n_o && (n == 0 || n > kMaxGridCount)) {
      fail(join(key, "count"), "must lie in [1, " + std::to_string(kMaxGridCount) + "]");
      ok = false;
    }
    if (ok && log_scale && !(start > 0.0 && stop > 0.0)) {
      fail(key, "a log grid needs start > 0 and stop > 0");
      ok = false;
    }
    if (ok && n == 1 && start != stop) {
      fail(join(key, "count"), "a single-point grid needs start == stop");
      ok = false;
    }
    if (!ok) return std::nullopt;
    g.values = expand_grid(start, stop, static_cast<std::size_t>(n), log_scale);
    return g;
  }

  // Reports each offending point once for raw arrays, once overall for
  // generated grids.
  template <class Pred>
  bool check_points(const Grid& g, Pred&& valid, const std::string& requirement) {
    bool ok = true;
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      if (valid(g.values[i])) continue;
      fail(g.path_of(i), "value " + show(g.values[i]) + " violates " + requirement);
      ok = false;
      if (!g.raw) break;
    }
    return ok;
  }

  bool check_sorted(const Grid& g) {
    for (std::size_t i = 1; i < g.values.size(); ++i) {
      if (g.values[i] < g.values[i - 1]) {
        fail(g.path_of(i), "grid must be sorted in increasing order");
        return false;
      }
    }
    return true;
  }

  std::optional<std::vector<double>> utilities_vector(const Json& obj, const char* key, std::size_t n) {
    const Json* v = field(obj, "", key, true);
    if (!v) return std::nullopt;
    auto u = reals(*v, key);
    if (u && n > 0 && u->size() != n) {
      fail(key, "has " + std::to_string(u->size()) + " entries, expected " + std::to_string(n));
      return std::nullopt;
    }
    return u;
  }
};

const char* const kCommon[] = {"kind", "schema", "name", "description"};

std::vector<const char*> keys_for(std::initializer_list<const char*> extra) {
  std::vector<const char*> keys(std::begin(kCommon), std::end(kCommon));
  keys.insert(keys.end(), extra.begin(), extra.end());
  return keys;
}

void only(Reader& r, const Json& doc, std::initializer_list<const char*> extra) {
  const auto keys = keys_for(extra);
  for (const auto& [name, value] : doc.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return name == k; })) {
      r.fail(name, "unknown field");
    }
  }
}

std::optional<Spec> parse_gibbs(Reader& r, const Json& doc) {
  only(r, doc, {"prior", "utilities", "beta"});
  auto prior = r.distribution(doc, "prior", true);
  auto u = r.utilities_vector(doc, "utilities", prior ? prior->size() : 0);
  auto beta = r.grid(doc, "beta", true);
  if (beta) {
    r.check_points(*beta, [](double b) { return b >= 0.0; }, "beta >= 0 (inverse temperature is non-negative)");
  }
  if (!prior || !u || !beta || !r.issues.empty()) return std::nullopt;
  return GibbsSpec{std::move(*prior), std::move(*u), std::move(*beta)};
}

std::optional<SolverOptions> parse_solver(Reader& r, const Json& doc, bool& tol_given) {
  SolverOptions opts;
  const Json* v = r.field(doc, "", "solver", false);
  if (!v) return opts;
  if (!v->is_object()) {
    r.fail("solver", "expected an object with tol, max_iterations, damping");
    return std::nullopt;
  }
  r.only_keys(*v, "solver", {"tol", "max_iterations", "damping"});
  bool ok = true;
  if (const Json* t = r.field(*v, "solver", "tol", false)) {
    const auto x = r.real(*t, "solver.tol");
    if (x && *x > 0.0) {
      opts.tol = *x;
      tol_given = true;
    } else {
      if (x) r.fail("solver.tol", "must be positive");
      ok = false;
    }
  }
  if (const Json* m = r.field(*v, "solver", "max_iterations", false)) {
    const auto x = r.count(*m, "solver.max_iterations");
    if (x && *x > 0) {
      opts.max_iterations = static_cast<std::size_t>(*x);
    } else {
      if (x) r.fail("solver.max_iterations", "must be positive");
      ok = false;
    }
  }
  if (const Json* d = r.field(*v, "solver", "damping", false)) {
    const auto x = r.real(*d, "solver.damping");
    if (x && *x > 0.0 && *x <= 1.0) {
      opts.damping = *x;
    } else {
      if (x) r.fail("solver.damping", "must lie in (0, 1]");
      ok = false;
    }
  }
  if (!ok) return std::nullopt;
  return opts;
}

std::optional<Spec> parse_rate_utility(Reader& r, const Json& doc) {
  only(r, doc, {"source", "utilities", "mask", "beta", "rate", "solver"});
  RateUtilitySpec spec;
  auto source = r.distribution(doc, "source", true);
  const Json* uv = r.field(doc, "", "utilities", true);
  auto u = uv ? r.matrix(*uv, "utilities") : std::nullopt;
  if (source && u && static_cast<std::size_t>(u->rows()) != source->size()) {
    r.fail("utilities", "has " + std::to_string(u->rows()) + " rows, expected one per source state (" +
                            std::to_string(source->size()) + ")");
  }
  if (u) {
    if (const Json* mv = r.field(doc, "", "mask", false)) spec.mask = r.mask(*mv, "mask", u->rows(), u->cols());
  }
  const bool has_beta = doc.contains("beta");
  const bool has_rate = doc.contains("rate");
  if (has_beta == has_rate) r.fail("beta", "give exactly one of \"beta\" or \"rate\"");
  std::optional<Grid> grid;
  if (has_beta && !has_rate) {
    grid = r.grid(doc, "beta", true);
    if (grid) {
      r.check_points(*grid, [](double b) { return b >= 0.0; }, "beta >= 0 (inverse temperature is non-negative)");
      r.check_sorted(*grid);
    }
  } else if (has_rate && !has_beta) {
    grid = r.grid(doc, "rate", true);
    if (grid) {
      r.check_points(*grid, [](double x) { return x >= 0.0; }, "rate >= 0");
      r.check_sorted(*grid);
    }
    spec.by_rate = true;
  }
  auto solver = parse_solver(r, doc, spec.tol_given);
  if (!source || !u || !grid || !solver || !r.issues.empty()) return std::nullopt;
  try {
    RateUtilityProblem(*source, UtilityMatrix(*u), spec.mask);
  } catch (const std::invalid_argument& e) {
    r.fail(spec.mask ? "mask" : "utilities", e.what());
    return std::nullopt;
  }
  spec.source = std::move(*source);
  spec.utilities = std::move(*u);
  spec.grid = std::move(*grid);
  spec.solver = *solver;
  return spec;
}

std::optional<Spec> parse_geodesic(Reader& r, const Json& doc) {
  only(r, doc, {"prior", "utilities", "t"});
  auto prior = r.distribution(doc, "prior", true);
  auto u = r.utilities_vector(doc, "utilities", prior ? prior->size() : 0);
  auto t = r.grid(doc, "t", true);
  if (!prior || !u || !t || !r.issues.empty()) return std::nullopt;
  return GeodesicSpec{std::move(*prior), std::move(*u), std::move(*t)};
}

std::optional<std::vector<std::size_t>> surjection(Reader& r, const Json& doc, const char* key, std::size_t n) {
  const Json* v = r.field(doc, "", key, true);
  if (!v) return std::nullopt;
  auto map = r.indices(*v, key, false);
  if (!map) return std::nullopt;
  if (n > 0 && map->size() != n) {
    r.fail(key, "maps " + std::to_string(map->size()) + " labels, expected " + std::to_string(n));
    return std::nullopt;
  }
  const std::size_t m = *std::max_element(map->begin(), map->end()) + 1;
  std::vector<bool> hit(m, false);
  for (std::size_t i : *map) hit[i] = true;
  for (std::size_t j = 0; j < m; ++j) {
    if (!hit[j]) {
      r.fail(key, "is not onto: coarse label " + std::to_string(j) + " has no preimage");
      return std::nullopt;
    }
  }
  return map;
}

std::optional<Spec> parse_coarse_grain(Reader& r, const Json& doc) {
  only(r, doc, {"source", "kernel", "f", "g"});
  auto source = r.distribution(doc, "source", false);
  auto k = r.kernel(doc, "kernel");
  if (source && k && static_cast<std::size_t>(k->rows()) != source->size()) {
    r.fail("kernel", "has " + std::to_string(k->rows()) + " rows, expected " + std::to_string(source->size()));
  }
  auto f = surjection(r, doc, "f", source ? source->size() : 0);
  auto g = surjection(r, doc, "g", k ? static_cast<std::size_t>(k->cols()) : 0);
  if (!source || !k || !f || !g || !r.issues.empty()) return std::nullopt;
  const std::size_t blocks = *std::max_element(f->begin(), f->end()) + 1;
  std::vector<double> mass(blocks, 0.0);
  for (std::size_t x = 0; x < f->size(); ++x) mass[(*f)[x]] += (*source)[x];
  for (std::size_t b = 0; b < blocks; ++b) {
    if (mass[b] <= 0.0) {
      r.fail("f", "coarse input " + std::to_string(b) + " carries no source mass");
      return std::nullopt;
    }
  }
  return CoarseGrainSpec{std::move(*source), std::move(*k), std::move(*f), std::move(*g)};
}

std::optional<Spec> parse_capacity(Reader& r, const Json& doc) {
  only(r, doc, {"kernel", "tol", "max_iterations"});
  CapacitySpec spec;
  auto k = r.kernel(doc, "kernel");
  if (const Json* t = r.field(doc, "", "tol", false)) {
    const auto x = r.real(*t, "tol");
    if (x && *x > 0.0) {
      spec.tol = *x;
      spec.tol_given = true;
    } else if (x) {
      r.fail("tol", "must be positive");
    }
  }
  if (const Json* m = r.field(doc, "", "max_iterations", false)) {
    const auto x = r.count(*m, "max_iterations");
    if (x && *x > 0) {
      spec.max_iterations = static_cast<std::size_t>(*x);
    } else if (x) {
      r.fail("max_iterations", "must be positive");
    }
  }
  if (!k || !r.issues.empty()) return std::nullopt;
  spec.kernel = std::move(*k);
  return spec;
}

std::optional<DisutilitySpec> parse_disutility(Reader& r, const Json& doc) {
  const Json* v = r.field(doc, "", "disutility", true);
  if (!v) return std::nullopt;
  if (!v->is_object()) {
    r.fail("disutility", "expected {\"kind\": \"reciprocal\" | \"exponential\" | \"linear\", \"d_max\": x}");
    return std::nullopt;
  }
  r.only_keys(*v, "disutility", {"kind", "d_max"});
  DisutilitySpec spec;
  const Json* kind = r.field(*v, "disutility", "kind", true);
  bool ok = kind != nullptr;
  if (kind) {
    const auto parsed = kind->is_string() ? parse_disutility_kind(kind->get<std::string>()) : std::nullopt;
    if (parsed) {
      spec.kind = *parsed;
    } else {
      r.fail("disutility.kind", "expected \"reciprocal\", \"exponential\" or \"linear\"");
      ok = false;
    }
  }
  if (const Json* d = r.field(*v, "disutility", "d_max", false)) {
    const auto x = r.real(*d, "disutility.d_max");
    if (!x) {
      ok = false;
    } else if (!(*x > 0.0)) {
      r.fail("disutility.d_max", "must be positive");
      ok = false;
    } else if (spec.kind != DisutilityKind::linear) {
      r.fail("disutility.d_max", "only applies to the linear kind");
      ok = false;
    } else {
      spec.d_max = *x;
    }
  }
  if (!ok) return std::nullopt;
  return spec;
}

std::optional<Spec> parse_legal(Reader& r, const Json& doc) {
  only(r, doc, {"prior", "face", "utilities", "protected", "disutility", "temperature", "beta",
                "convexity_samples", "seed"});
  LegalSpec spec;
  auto prior = r.distribution(doc, "prior", true);
  const Json* fv = r.field(doc, "", "face", true);
  auto face = fv ? r.indices(*fv, "face", false) : std::nullopt;
  auto u = r.utilities_vector(doc, "utilities", face ? face->size() : 0);
  if (const Json* pv = r.field(doc, "", "protected", false)) {
    if (auto p = r.indices(*pv, "protected", true)) spec.protected_set = std::move(*p);
  }
  auto dis = parse_disutility(r, doc);
  const bool has_t = doc.contains("temperature");
  const bool has_b = doc.contains("beta");
  if (has_t == has_b) r.fail("temperature", "give exactly one of \"temperature\" or \"beta\"");
  std::optional<Grid> grid;
  if (has_t && !has_b) {
    grid = r.grid(doc, "temperature", true);
    if (grid) {
      r.check_points(*grid, [](double t) { return t >= 0.0; }, "temperature >= 0");
      r.check_sorted(*grid);
    }
  } else if (has_b && !has_t) {
    grid = r.grid(doc, "beta", true);
    if (grid) {
      r.check_points(*grid, [](double b) { return b > 0.0; }, "beta > 0");
      r.check_sorted(*grid);
    }
    spec.by_temperature = false;
  }
  if (const Json* cv = r.field(doc, "", "convexity_samples", false)) {
    if (auto c = r.count(*cv, "convexity_samples")) spec.convexity_samples = static_cast<std::size_t>(*c);
  }
  if (const Json* sv = r.field(doc, "", "seed", false)) {
    if (auto s = r.count(*sv, "seed")) spec.seed = *s;
  }
  if (!prior || !face || !u || !dis || !grid || !r.issues.empty()) return std::nullopt;
  std::optional<RestrictionScenario> scenario;
  try {
    scenario.emplace(*prior, *face, *u, 1.0, spec.protected_set);
  } catch (const std::invalid_argument& e) {
    r.fail("face", e.what());
    return std::nullopt;
  }
  try {
    spec.disutility = resolve_disutility(*dis, *scenario);
  } catch (const std::invalid_argument& e) {
    r.fail("disutility", e.what());
    return std::nullopt;
  }
  spec.prior = std::move(*prior);
  spec.face = std::move(*face);
  spec.utilities = std::move(*u);
  spec.grid = std::move(*grid);
  return spec;
}

std::optional<Parsed> parse(const Json& doc, std::vector<Issue>& issues) {
  Reader r;
  if (!doc.is_object()) {
    issues.push_back({"", "scenario must be a JSON object"});
    return std::nullopt;
  }
  const Json* schema = r.field(doc, "", "schema", true);
  if (schema && !(schema->is_number_integer() && schema->get<std::int64_t>() == kSchemaVersion)) {
    r.fail("schema", "unsupported schema version (this build reads version " + std::to_string(kSchemaVersion) + ")");
  }
  for (const char* key : {"name", "description"}) {
    if (doc.contains(key) && !doc[key].is_string()) r.fail(key, "expected a string");
  }
  const Json* kind = r.field(doc, "", "kind", true);
  std::optional<Spec> spec;
  if (kind) {
    const std::string k = kind->is_string() ? kind->get<std::string>() : "";
    if (k == "gibbs") {
      spec = parse_gibbs(r, doc);
    } else if (k == "rate_utility") {
      spec = parse_rate_utility(r, doc);
    } else if (k == "geodesic") {
      spec = parse_geodesic(r, doc);
    } else if (k == "coarse_grain") {
      spec = parse_coarse_grain(r, doc);
    } else if (k == "capacity") {
      spec = parse_capacity(r, doc);
    } else if (k == "legal") {
      spec = parse_legal(r, doc);
    } else {
      r.fail("kind", "expected one of gibbs, rate_utility, geodesic, coarse_grain, capacity, legal");
    }
  }
  issues = std::move(r.issues);
  if (!issues.empty() || !spec) return std::nullopt;
  return Parsed{std::move(*spec), std::move(r.warnings)};
}

Json to_json(const std::vector<std::size_t>& v) {
  Json a = Json::array();
  for (std::size_t x : v) a.push_back(x);
  return a;
}

Json real_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

void add_column(Table& t, std::string name, std::vector<double> values) {
  t.names.push_back(std::move(name));
  t.columns.push_back(std::move(values));
}

Table run(const GibbsSpec& s, const RunOptions& opt) {
  const auto& b = s.beta.values;
  const auto sols = parallel_map(b.size(), opt.jobs, [&](std::size_t i) {
    return gibbs_policy(GibbsProblem(s.utilities, s.prior, b[i]));
  });
  Table t;
  const std::size_t n = b.size();
  std::vector<double> lnz(n), f(n), mean(n), var(n), kl(n);
  for (std::size_t i = 0; i < n; ++i) {
    lnz[i] = sols[i].log_partition;
    f[i] = sols[i].free_energy;
    mean[i] = sols[i].expected_utility;
    var[i] = sols[i].utility_variance;
    kl[i] = sols[i].kl_cost;
  }
  add_column(t, "beta", b);
  add_column(t, "lnZ", std::move(lnz));
  add_column(t, "free_energy", std::move(f));
  add_column(t, "expected_utility", std::move(mean));
  add_column(t, "variance", std::move(var));
  add_column(t, "kl_cost", std::move(kl));
  for (std::size_t j = 0; j < s.prior.size(); ++j) {
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = sols[i].policy[j];
    add_column(t, "policy_" + std::to_string(j), std::move(col));
  }
  t.metadata["max_rate"] = max_rate(s.utilities, s.prior);
  t.metadata["free_energy_at_beta_0"] = "expected utility under the prior (limit of ln Z / beta)";
  return t;
}

Json endpoint_json(const RateUtilityProblem& problem, bool zero) {
  try {
    const RateUtilityPoint p = zero ? zero_rate_endpoint(problem) : max_rate_endpoint(problem);
    return Json{{"R", p.rate}, {"U_bar", p.utility}};
  } catch (const std::invalid_argument& e) {
    return Json{{"R", nullptr}, {"U_bar", nullptr}, {"reason", e.what()}};
  }
}

Table run(const RateUtilitySpec& s, const RunOptions& opt) {
  const RateUtilityProblem problem(s.source, UtilityMatrix(s.utilities), s.mask);
  SolverOptions solver = s.solver;
  std::string tol_source = s.tol_given ? "scenario" : "default";
  if (opt.tol) {
    solver.tol = *opt.tol;
    tol_source = "--tol";
  }
  const auto& grid = s.grid.values;
  const auto curve = s.by_rate ? rate_utility_curve_at_rates(problem, grid, solver, opt.jobs)
                               : rate_utility_curve(problem, grid, solver, opt.jobs);
  const std::size_t n = grid.size();
  std::vector<double> beta(n, kNaN), rate(n, kNaN), util(n, kNaN), slope(n, kNaN);
  Json points = Json::array();
  Table t;
  for (std::size_t i = 0; i < n; ++i) {
    const CurvePoint& c = curve[i];
    Json pj = Json::object();
    pj["index"] = i;
    if (!c.ok()) {
      if (!s.by_rate) beta[i] = grid[i];
      pj["converged"] = false;
      pj["residual"] = c.failure_residual;
      pj["error"] = c.failure;
      t.failures.push_back(s.grid.path_of(i) + " = " + show(grid[i]) + ": " + c.failure);
      points.push_back(std::move(pj));
      continue;
    }
    const RateUtilityPoint& p = *c.solution;
    beta[i] = p.beta;
    rate[i] = p.rate;
    util[i] = p.utility;
    if (i > 0 && curve[i - 1].ok()) {
      const RateUtilityPoint& q = *curve[i - 1].solution;
      const double mid = std::sqrt(p.beta * q.beta);
      if (p.rate != q.rate && std::isfinite(mid) && mid > 0.0) slope[i] = mid * slope_check(q, p);
    }
    pj["converged"] = true;
    pj["endpoint"] = p.endpoint;
    pj["residual"] = p.residual;
    pj["iterations"] = p.iterations;
    pj["newton_steps"] = p.newton_steps;
    pj["damping_events"] = p.damping_events;
    pj["final_damping"] = p.final_damping;
    pj["dead_columns"] = to_json(p.dead_columns);
    points.push_back(std::move(pj));
  }
  if (s.by_rate) add_column(t, "rate_target", grid);
  add_column(t, "beta", std::move(beta));
  add_column(t, "R", std::move(rate));
  add_column(t, "U_bar", std::move(util));
  add_column(t, "slope_check", std::move(slope));
  t.metadata["solver"] = {{"tol", solver.tol},
                          {"tol_source", tol_source},
                          {"max_iterations", solver.max_iterations},
                          {"damping", solver.damping},
                          {"damping_floor", 1.0 / 1024.0}};
  t.metadata["slope_check"] = "sqrt(beta[i-1] beta[i]) * (U_bar[i] - U_bar[i-1]) / (R[i] - R[i-1]); 1 when the slope is 1/beta";
  t.metadata["endpoints"] = {{"zero_rate", endpoint_json(problem, true)},
                             {"max_rate", endpoint_json(problem, false)}};
  t.metadata["tie_break"] = "argmax actions resolve to the lowest column index";
  t.metadata["points"] = std::move(points);
  return t;
}

Table run(const GeodesicSpec& s, const RunOptions& opt) {
  const auto& tv = s.t.values;
  const auto path = parallel_map(tv.size(), opt.jobs, [&](std::size_t i) {
    const double ti = tv[i];
    return solution_geodesic(s.utilities, s.prior, std::span<const double>(&ti, 1)).front();
  });
  const std::size_t n = tv.size();
  Table t;
  add_column(t, "t", tv);
  for (std::size_t j = 0; j < s.prior.size(); ++j) {
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = path[i][j];
    add_column(t, "p_" + std::to_string(j), std::move(col));
  }
  std::vector<double> mean(n, 0.0), kl(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < s.prior.size(); ++j) mean[i] += path[i][j] * s.utilities[j];
    kl[i] = kl_divergence(path[i], s.prior).to_double();
  }
  add_column(t, "expected_utility", std::move(mean));
  add_column(t, "kl_from_prior", std::move(kl));
  const TangentVector v = solution_geodesic_tangent(s.utilities, s.prior);
  Json tangent = Json::array();
  for (double c : v.components()) tangent.push_back(c);
  t.metadata["tangent_at_prior"] = std::move(tangent);
  return t;
}

Table run(const CoarseGrainSpec& s, const RunOptions&) {
  const Distribution p = s.source;
  const StochasticKernel k(s.kernel);
  const std::size_t fm = *std::max_element(s.f.begin(), s.f.end()) + 1;
  const std::size_t gm = *std::max_element(s.g.begin(), s.g.end()) + 1;
  const CoarseGraining cg{IndexMap(s.f, fm), IndexMap(s.g, gm)};
  const StochasticKernel coarse = coarse_grain_kernel(k, p, cg);
  const Distribution fp = push_forward(cg.f, p);
  const JointDistribution fine_joint = semidirect_product(p, k);
  const JointDistribution lhs = push_forward(cg.f, cg.g, fine_joint);
  const JointDistribution rhs = semidirect_product(fp, coarse);
  const double before = mutual_information(fine_joint);
  const double after = mutual_information(rhs);
  Table t;
  std::vector<double> x(fm), px(fm);
  for (std::size_t i = 0; i < fm; ++i) {
    x[i] = static_cast<double>(i);
    px[i] = fp[i];
  }
  add_column(t, "x", std::move(x));
  add_column(t, "p", std::move(px));
  for (std::size_t j = 0; j < gm; ++j) {
    std::vector<double> col(fm);
    for (std::size_t i = 0; i < fm; ++i) col[i] = coarse(i, j);
    add_column(t, "k_" + std::to_string(j), std::move(col));
  }
  t.metadata["I_before"] = before;
  t.metadata["I_after"] = after;
  t.metadata["data_processing_holds"] = after <= before + 1e-12;
  t.metadata["factorisation_error"] = (lhs.table() - rhs.table()).cwiseAbs().maxCoeff();
  return t;
}

Table run(const CapacitySpec& s, const RunOptions& opt) {
  const double tol = opt.tol.value_or(s.tol);
  const CapacityResult c = channel_capacity(StochasticKernel(s.kernel), tol, s.max_iterations);
  Table t;
  std::vector<double> x(c.input.size()), px(c.input.size());
  for (std::size_t i = 0; i < c.input.size(); ++i) {
    x[i] = static_cast<double>(i);
    px[i] = c.input[i];
  }
  add_column(t, "x", std::move(x));
  add_column(t, "p_star", std::move(px));
  t.metadata["capacity"] = c.capacity;
  t.metadata["lower_bound"] = c.lower_bound;
  t.metadata["upper_bound"] = c.upper_bound;
  t.metadata["iterations"] = c.iterations;
  t.metadata["solver"] = {{"tol", tol},
                          {"tol_source", opt.tol ? "--tol" : (s.tol_given ? "scenario" : "default")},
                          {"max_iterations", s.max_iterations}};
  return t;
}

Table run(const LegalSpec& s, const RunOptions& opt) {
  const RestrictionScenario scenario(s.prior, s.face, s.utilities, 1.0, s.protected_set);
  SearchOptions search;
  search.convexity_samples = s.convexity_samples;
  std::string seed_source = "default";
  if (s.seed) {
    search.seed = *s.seed;
    seed_source = "scenario";
  }
  if (opt.seed) {
    search.seed = *opt.seed;
    seed_source = "--seed";
  }
  const ScanResult scan = s.by_temperature
                              ? temperature_scan(scenario, s.disutility, s.grid.values, search)
                              : critical_beta_scan(scenario, s.disutility, s.grid.values, search);
  const std::size_t n = scan.rows.size();
  const std::size_t k = s.face.size();
  Table t;
  std::vector<double> inv(n), winner(n), feasible(n), flagged(n, 0.0);
  std::vector<std::vector<double>> fv(k, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const ScanRow& row = scan.rows[i];
    inv[i] = row.temperature;
    winner[i] = static_cast<double>(row.winner);
    feasible[i] = row.feasible ? 1.0 : 0.0;
    for (std::size_t j = 0; j < k; ++j) fv[j][i] = row.vertex_objectives[j];
  }
  Json switches = Json::array();
  for (const VertexSwitch& sw : scan.switches) {
    flagged[sw.row] = 1.0;
    switches.push_back({{"row", sw.row},
                        {"from", sw.from},
                        {"to", sw.to},
                        {"temperature", sw.temperature},
                        {"beta", real_or_null(sw.beta)},
                        {"bracket", {sw.temperature_lo, sw.temperature_hi}}});
  }
  if (!s.by_temperature) add_column(t, "beta", s.grid.values);
  add_column(t, "inv_beta", std::move(inv));
  for (std::size_t j = 0; j < k; ++j) add_column(t, "F_vertex_" + std::to_string(j), std::move(fv[j]));
  add_column(t, "winner", std::move(winner));
  add_column(t, "feasible", std::move(feasible));
  add_column(t, "switch", std::move(flagged));

  const FaceDivergenceBounds b = face_divergence_bounds(scenario);
  const auto onset = feasibility_onset(scenario, s.disutility);
  Json dis = {{"kind", to_string(s.disutility.kind)}};
  if (s.disutility.d_max) dis["d_max"] = *s.disutility.d_max;
  t.metadata["disutility"] = std::move(dis);
  t.metadata["search"] = {{"method", scan.method == SearchMethod::vertex_enumeration ? "vertex_enumeration" : "grid"},
                          {"convexity_samples", search.convexity_samples},
                          {"seed", search.seed},
                          {"seed_source", seed_source}};
  t.metadata["bounds"] = {{"d_min", b.d_min}, {"d_star", b.d_star}, {"j_star", b.j_star}, {"d_max", b.d_max}};
  t.metadata["feasibility_onset_beta"] = onset ? Json(*onset) : Json(nullptr);
  t.metadata["switches"] = std::move(switches);
  t.metadata["tie_break"] = "equal vertex objectives resolve to the lowest face index";
  t.metadata["feasible"] = "beta E[U] - D > 1e-12 at the maximiser; infeasible rows have no solution";
  return t;
}

}  // namespace

std::string describe(const std::vector<Issue>& issues) {
  std::string out;
  for (const Issue& i : issues) {
    if (!out.empty()) out += '\n';
    out += (i.path.empty() ? "(document)" : i.path) + ": " + i.message;
  }
  return out;
}

std::vector<double> expand_grid(double start, double stop, std::size_t count, bool log_scale) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = start;
    return out;
  }
  const double a = log_scale ? std::log(start) : start;
  const double b = log_scale ? std::log(stop) : stop;
  const double n = static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) {
    const double s = a + (b - a) * (static_cast<double>(i) / n);
    out[i] = log_scale ? std::exp(s) : s;
  }
  out.front() = start;
  out.back() = stop;
  return out;
}

Json read_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ValidationError(std::vector<Issue>{{"", std::string("not valid JSON: ") + e.what()}});
  }
}

std::vector<Issue> validate_scenario(const Json& doc) {
  std::vector<Issue> issues;
  parse(doc, issues);
  return issues;
}

Table run_scenario(const Json& doc, const RunOptions& options) {
  std::vector<Issue> issues;
  auto parsed = parse(doc, issues);
  if (!parsed) throw ValidationError(std::move(issues));
  if (options.tol && !(*options.tol > 0.0)) throw ValidationError(std::vector<Issue>{{"--tol", "must be positive"}});

  Table t = std::visit([&](const auto& s) { return run(s, options); }, parsed->spec);
  Json meta = Json::object();
  meta["kind"] = doc["kind"];
  meta["schema"] = kSchemaVersion;
  meta["rows"] = t.rows();
  for (auto& [key, value] : t.metadata.items()) meta[key] = value;
  Json warnings = Json::array();
  for (const auto& w : parsed->warnings) warnings.push_back(w);
  for (const auto& f : t.failures) warnings.push_back("no convergence at " + f);
  meta["warnings"] = std::move(warnings);
  meta["scenario"] = doc;
  t.metadata = std::move(meta);
  return t;
}

}  // namespace boundrat::cli
