#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "boundrat/errors.hpp"
#include "output.hpp"
#include "scenario.hpp"

namespace {

enum Exit { kOk = 0, kInvalid = 1, kNoConvergence = 2 };

int run_command(const std::string& path, const std::string& format, const std::string& out_path,
                const boundrat::cli::RunOptions& options) {
  using namespace boundrat::cli;
  const Table table = run_scenario(read_scenario_file(path), options);

  std::ostringstream buf;
  if (format == "json") {
    write_json(buf, table);
  } else {
    write_csv(buf, table);
  }
  if (out_path.empty() || out_path == "-") {
    std::cout << buf.str();
    std::cout.flush();
  } else {
    std::ofstream out(out_path, std::ios::binary);
    out << buf.str();
    if (!out) throw std::runtime_error("cannot write " + out_path);
  }
  for (const auto& f : table.failures) std::cerr << path << ": no convergence at " << f << '\n';
  return table.converged() ? kOk : kNoConvergence;
}

int validate_command(const std::string& path) {
  using namespace boundrat::cli;
  const auto issues = validate_scenario(read_scenario_file(path));
  for (const Issue& i : issues) {
    std::cerr << path << ": " << (i.path.empty() ? "(document)" : i.path) << ": " << i.message << '\n';
  }
  return issues.empty() ? kOk : kInvalid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bounded-rational decision policies: Gibbs sweeps, rate-utility curves, kernels, restriction scenarios"};
  app.require_subcommand(1);

  std::string path;
  std::string format = "csv";
  std::string out_path;
  std::size_t jobs = 0;
  double tol = 0.0;
  std::uint64_t seed = 0;

  CLI::App* run = app.add_subcommand("run", "Evaluate a scenario file and emit its columns");
  run->add_option("scenario", path, "Scenario file (JSON)")->required();
  run->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  run->add_option("--out", out_path, "Output file (default: stdout)");
  run->add_option("--jobs", jobs, "Worker threads (default: number of processors)");
  CLI::Option* tol_opt = run->add_option("--tol", tol, "Override the solver tolerance")->check(CLI::PositiveNumber);
  CLI::Option* seed_opt = run->add_option("--seed", seed, "Seed for randomised checks");

  CLI::App* validate = app.add_subcommand("validate", "Check a scenario file against its schema");
  validate->add_option("scenario", path, "Scenario file (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (*validate) return validate_command(path);
    boundrat::cli::RunOptions options;
    options.jobs = jobs;
    if (*tol_opt) options.tol = tol;
    if (*seed_opt) options.seed = seed;
    return run_command(path, format, out_path, options);
  } catch (const boundrat::cli::ValidationError& e) {
    for (const auto& i : e.issues()) {
      std::cerr << path << ": " << (i.path.empty() ? "(document)" : i.path) << ": " << i.message << '\n';
    }
    return kInvalid;
  } catch (const boundrat::ConvergenceError& e) {
    std::cerr << path << ": " << e.what() << '\n';
    return kNoConvergence;
  } catch (const std::exception& e) {
    std::cerr << path << ": " << e.what() << '\n';
    return kInvalid;
  }
}
