// samlab command-line harness: single runs, sweeps, figure presets, and the
// verification/calibration suites. Exit codes: 0 success, 1 check failure or
// divergence, 2 configuration error.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "samlab/errors.hpp"
#include "samlab/harness.hpp"
#include "samlab/verification.hpp"

namespace fs = std::filesystem;
using namespace samlab;

namespace {

fs::path default_out_dir() {
  if (const char* env = std::getenv("SAMLAB_OUT")) {
    return fs::path(env);
  }
  return fs::path(".");
}

void print_report(const CheckReport& r) {
  std::printf("[%s] %-24s max_residual=%.6g tolerance=%.6g  %s\n",
              r.passed ? "PASS" : "FAIL", r.name.c_str(), r.max_residual,
              r.tolerance, r.details.c_str());
}

int cmd_run(const std::string& config_file, std::string out_file,
            long long seed_override) {
  RunConfig config = load_run_config(config_file);
  if (seed_override >= 0) {
    config.seed = static_cast<std::uint64_t>(seed_override);
  }
  if (out_file.empty()) {
    const std::string stem =
        config.preset_name.empty() ? "run" : config.preset_name;
    out_file = (default_out_dir() / (stem + ".csv")).string();
  }
  const std::vector<TrajectoryRecord> records = run_experiment(config);
  write_csv(out_file, config, records);
  std::printf("wrote %s (%zu rows)\n", out_file.c_str(), records.size());
  return 0;
}

int cmd_sweep(const std::string& config_file, const std::string& axis,
              const std::vector<double>& values, std::string out_dir,
              bool sequential) {
  SweepConfig sweep;
  sweep.base = load_run_config(config_file);
  sweep.axis = axis;
  sweep.values = values;
  if (out_dir.empty()) {
    out_dir = default_out_dir().string();
  }
  const std::vector<SweepRunResult> results =
      run_sweep(sweep, out_dir, !sequential);
  bool ok = true;
  for (const SweepRunResult& r : results) {
    std::printf("%s = %g: %s\n", axis.c_str(), r.value, r.status.c_str());
    ok = ok && r.status == "ok";
  }
  std::printf("wrote %s\n", (fs::path(out_dir) / "summary.csv").c_str());
  return ok ? 0 : 1;
}

int cmd_preset(const std::string& name, std::string out_dir, bool emit_config,
               bool no_run) {
  if (out_dir.empty()) {
    out_dir = default_out_dir().string();
  }
  fs::create_directories(out_dir);
  for (const PresetMember& member : preset_configs(name)) {
    if (emit_config) {
      const fs::path file = fs::path(out_dir) / (member.name + ".json");
      std::ofstream out(file, std::ios::binary);
      if (!out) {
        throw ConfigError("cannot open " + file.string());
      }
      out << run_config_to_json(member.config);
      std::printf("wrote %s\n", file.c_str());
    }
    if (!no_run) {
      const fs::path file = fs::path(out_dir) / (member.name + ".csv");
      write_csv(file, member.config, run_experiment(member.config));
      std::printf("wrote %s\n", file.c_str());
    }
  }
  return 0;
}

int cmd_verify(const std::string& suite) {
  const std::vector<CheckReport> reports =
      suite == "all" ? run_all_checks() : run_suite(suite);
  bool ok = true;
  for (const CheckReport& r : reports) {
    print_report(r);
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

int cmd_calibrate() {
  const CalibrationResult c = run_calibration();
  std::printf("// paste into include/samlab/calibration.hpp:\n");
  std::printf("inline constexpr bool kCalibrated = true;\n");
  std::printf("inline constexpr double kNopResid = %.17g;\n", c.nop_resid);
  std::printf("inline constexpr double kOpResid = %.17g;\n", c.op_resid);
  std::printf("inline constexpr double kMlResid = %.17g;\n", c.ml_resid);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"balancedness dynamics lab: runs, sweeps, presets, checks"};
  app.require_subcommand(1);

  std::string config_file, out_path, axis, suite = "all", preset;
  std::vector<double> values;
  long long seed_override = -1;
  bool sequential = false, emit_config = false, no_run = false;

  CLI::App* run = app.add_subcommand("run", "execute one configured run");
  run->add_option("--config", config_file, "JSON run config")->required();
  run->add_option("--out", out_path, "output CSV file");
  run->add_option("--seed", seed_override, "override the config seed");

  CLI::App* sweep = app.add_subcommand("sweep", "sweep one config axis");
  sweep->add_option("--config", config_file, "JSON run config")->required();
  sweep->add_option("--axis", axis, "snr_alpha|rho|eta|m|alpha0|seed")
      ->required();
  sweep->add_option("--values", values, "comma-separated values")
      ->required()
      ->delimiter(',');
  sweep->add_option("--out", out_path, "output directory");
  sweep->add_flag("--sequential", sequential, "disable concurrent members");

  CLI::App* preset_cmd =
      app.add_subcommand("preset", "run a named figure preset");
  preset_cmd->add_option("name", preset, "preset name")
      ->required()
      ->check(CLI::IsMember(preset_names()));
  preset_cmd->add_option("--out", out_path, "output directory");
  preset_cmd->add_flag("--emit-config", emit_config,
                       "write each member's JSON config");
  preset_cmd->add_flag("--no-run", no_run, "emit configs without running");

  CLI::App* verify = app.add_subcommand("verify", "run check suites");
  std::vector<std::string> suites = check_suite_names();
  suites.push_back("all");
  verify->add_option("--suite", suite, "suite name or 'all'")
      ->check(CLI::IsMember(suites));

  app.add_subcommand("calibrate",
                     "recompute the dynamics residual-band constants");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) return cmd_run(config_file, out_path, seed_override);
    if (sweep->parsed()) {
      return cmd_sweep(config_file, axis, values, out_path, sequential);
    }
    if (preset_cmd->parsed()) {
      return cmd_preset(preset, out_path, emit_config, no_run);
    }
    if (verify->parsed()) return cmd_verify(suite);
    return cmd_calibrate();
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "diverged: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
