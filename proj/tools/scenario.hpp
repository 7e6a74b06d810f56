#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace boundrat::cli {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// One schema violation, located by a path such as "utilities[1][0]".
struct Issue {
  std::string path;
  std::string message;
};

std::string describe(const std::vector<Issue>& issues);

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<Issue> issues)
      : std::runtime_error(describe(issues)), issues_(std::move(issues)) {}
  const std::vector<Issue>& issues() const { return issues_; }

 private:
  std::vector<Issue> issues_;
};

struct RunOptions {
  /// Worker threads; 0 means one per hardware core.
  std::size_t jobs = 0;
  std::optional<double> tol;
  std::optional<std::uint64_t> seed;
};

/// Named real columns of equal length plus free-form metadata.  Points that
/// failed to converge are NaN in every column but the grid column.
struct Table {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
  Json metadata = Json::object();
  std::vector<std::string> failures;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
  bool converged() const { return failures.empty(); }
};

Json read_scenario_file(const std::string& path);

/// Every schema violation in the document; empty when it is runnable.
std::vector<Issue> validate_scenario(const Json& doc);

/// Throws ValidationError on a schema violation.
Table run_scenario(const Json& doc, const RunOptions& options);

/// Expands {start, stop, count, scale} (scale "linear" or "log").
std::vector<double> expand_grid(double start, double stop, std::size_t count, bool log_scale);

}  // namespace boundrat::cli
