#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pdmp/asymptotics.hpp"
#include "pdmp/config.hpp"
#include "pdmp/flux_solver.hpp"
#include "pdmp/invariant_structure.hpp"
#include "pdmp/perron_frobenius.hpp"
#include "pdmp/simulator.hpp"

namespace pdmp {

struct CommandOptions {
  std::filesystem::path out;
  int threads = 0;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> density_path;  // validate only
};

/// Outcome of one subcommand; the exit code follows the CLI contract
/// (0 pass, 3 validation failure). Errors propagate as exceptions.
struct CommandResult {
  int exit_code = 0;
  json report;
  std::vector<std::string> warnings;
  std::vector<std::filesystem::path> files;
};

CommandResult cmd_analyze(const RunConfig& config, const CommandOptions& options);
CommandResult cmd_simulate(const RunConfig& config, const CommandOptions& options);
CommandResult cmd_solve(const RunConfig& config, const CommandOptions& options);
CommandResult cmd_asymptotics(const RunConfig& config, const CommandOptions& options);
CommandResult cmd_validate(const RunConfig& config, const CommandOptions& options);

FluxSolveOptions flux_options(const RunConfig& config);
AsymptoticsOptions asymptotics_options(const RunConfig& config);
FixedPointOptions fixed_point_options(const RunConfig& config, int threads);

json structure_report(const SwitchingSystem& system);
json to_json(const CriticalPointReport& report);

/// Per-bin density of one state on the sigma side of xi, sampled at the
/// geometric bin centres in the local coordinate eta.
struct LocalSamples {
  std::vector<double> eta;
  std::vector<double> rho;
};
LocalSamples histogram_local_samples(const OccupationHistogram& histogram, int state, double xi, int sigma);

/// Sum over states and bins of |estimate - bin average of f| * bin width.
double histogram_l1(const OccupationHistogram& histogram, const DensityFunction& f);

/// CSV with columns state,bin_left,bin_right,occupation_time,density_estimate.
void write_histogram_csv(std::ostream& os, const OccupationHistogram& histogram);

/// Inverse of write_density_csv; masses use piecewise weights on `interval`.
DensityGrid read_density_csv(std::istream& is, Interval interval, const std::vector<double>& breaks);

}  // namespace pdmp
