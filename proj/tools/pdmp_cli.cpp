#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "pdmp/config.hpp"
#include "pdmp/errors.hpp"
#include "pdmp/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 1, kNumerical = 2, kValidation = 3 };

int report_error(const char* kind, const std::string& message, const std::filesystem::path& out) {
  pdmp::json doc;
  doc["schema_version"] = pdmp::kSchemaVersion;
  doc["status"] = "error";
  doc["error"] = {{"kind", kind}, {"message", message}};
  const std::string text = pdmp::dump_json(doc);
  std::cout << text;
  if (!out.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (!ec) std::ofstream(out / "error.json") << text;
  }
  return std::string(kind) == "numerical" ? kNumerical : kConfig;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Randomly switched 1-D ODEs: invariant structure, densities and asymptotics"};
  app.require_subcommand(1);

  std::string config_path, out_dir, density_path;
  std::uint64_t seed = 0;
  int threads = 0;
  struct Entry {
    const char* name;
    const char* help;
    pdmp::CommandResult (*run)(const pdmp::RunConfig&, const pdmp::CommandOptions&);
  };
  const Entry entries[] = {
      {"analyze", "minimal invariant sets, critical-point cases, existence report", pdmp::cmd_analyze},
      {"simulate", "event-driven simulation and occupation histogram", pdmp::cmd_simulate},
      {"solve", "flux-ODE and fixed-point densities with residuals", pdmp::cmd_solve},
      {"asymptotics", "behaviour of the densities at critical points", pdmp::cmd_asymptotics},
      {"validate", "cross-route comparison against the predicted asymptotics", pdmp::cmd_validate},
  };
  std::vector<CLI::App*> subs;
  for (const auto& e : entries) {
    auto* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides the config)");
    sub->add_option("--seed", seed, "RNG seed (overrides the config)");
    sub->add_option("--threads", threads, "worker threads, 0 for all cores")->check(CLI::NonNegativeNumber);
    if (std::string(e.name) == "validate")
      sub->add_option("--density", density_path, "density CSV to check instead of trusting the solver")
          ->check(CLI::ExistingFile);
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  std::filesystem::path out = out_dir;
  try {
    const auto config = pdmp::load_config(config_path);
    if (out.empty()) out = config.output;
    pdmp::CommandOptions opts;
    opts.out = out;
    opts.threads = threads;
    for (std::size_t k = 0; k < subs.size(); ++k) {
      if (!subs[k]->parsed()) continue;
      if (subs[k]->count("--seed")) opts.seed = seed;
      if (!density_path.empty()) opts.density_path = density_path;
      const auto res = entries[k].run(config, opts);
      for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
      for (const auto& f : res.files) std::cerr << "wrote " << f.string() << "\n";
      if (res.exit_code == kValidation) std::cerr << "validation FAILED\n";
      return res.exit_code;
    }
  } catch (const pdmp::ConfigError& e) {
    return report_error("config", e.what(), out);
  } catch (const pdmp::UnsupportedConfiguration& e) {
    return report_error("unsupported", e.what(), out);
  } catch (const pdmp::NumericalError& e) {
    return report_error("numerical", e.what(), out);
  } catch (const std::exception& e) {
    return report_error("numerical", e.what(), out);
  }
  return kConfig;
}
