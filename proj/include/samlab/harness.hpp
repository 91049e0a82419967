#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "samlab/diagnostics.hpp"
#include "samlab/optimizers.hpp"
#include "samlab/problems.hpp"

namespace samlab {

// One fully specified run: problem, initialization, step rule, horizon.
struct RunConfig {
  Problem problem;
  std::vector<FactorPair> init;  // one pair, or one per layer
  StepRule rule;
  long steps = 0;
  std::uint64_t seed = 1;
  long record_every = 100;
  std::string preset_name;  // optional label, carried into output names
};

// Sweep of one axis of a base config.
struct SweepConfig {
  RunConfig base;
  std::string axis;  // snr_alpha | rho | eta | m | alpha0 | seed
  std::vector<double> values;
};

// Throws ConfigError on any invariant violation.
void validate(const RunConfig& config);

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& file);
std::string run_config_to_json(const RunConfig& config);

// One evaluation of the configured problem at the current parameters.
struct EvalSummary {
  double loss = 0.0;
  std::vector<GradPair> grads;  // one per pair
  double fprime = 0.0;          // op problems only
  std::optional<Mat> grad_w;    // single-pair nop only
  double gx_sq = 0.0;           // joint over layers
  double gy_sq = 0.0;
};
EvalSummary evaluate_state(const ParamState& state, const Problem& problem,
                           const Batch& batch);

// Applies one step of config.rule at step index t.
StepFlags advance_state(ParamState& state, const RunConfig& config,
                        const Batch& batch, long t);

// Executes the configured rule for `steps` steps. Records a row every
// record_every steps plus a final row at step `steps` (none when steps = 0).
// Deterministic in (config, seed); throws DivergenceError if the guard trips.
std::vector<TrajectoryRecord> run_experiment(const RunConfig& config);

// CSV column order is fixed: step,loss,B,C,gx_norm,gy_norm,dbdt_pred,b_bar,
// flags; layered runs append B_l/C_l per layer. Reals use 17 significant
// digits so values round-trip exactly.
std::string records_to_csv(const RunConfig& config,
                           const std::vector<TrajectoryRecord>& records);
void write_csv(const std::filesystem::path& file, const RunConfig& config,
               const std::vector<TrajectoryRecord>& records);

struct SweepRunResult {
  double value = 0.0;
  std::string status;  // "ok" or the error message
  std::filesystem::path csv_path;
  double final_B = 0.0;
  double final_loss = 0.0;
  long first_passage_half_B = -1;  // -1 when never reached
};

// One CSV per value plus summary.csv in out_dir. Members may run
// concurrently; outputs are byte-identical to sequential execution.
std::vector<SweepRunResult> run_sweep(const SweepConfig& sweep,
                                      const std::filesystem::path& out_dir,
                                      bool parallel);

// Apply one sweep value to a copy of the base config.
RunConfig apply_axis(const RunConfig& base, const std::string& axis,
                     double value);

// Named preset members (name -> config), e.g. fig1a -> {fig1a-sam, fig1a-sgd}.
struct PresetMember {
  std::string name;
  RunConfig config;
};
std::vector<PresetMember> preset_configs(const std::string& preset);
std::vector<std::string> preset_names();

}  // namespace samlab
