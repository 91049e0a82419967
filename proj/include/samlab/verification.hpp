#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "samlab/harness.hpp"
#include "samlab/optimizers.hpp"
#include "samlab/problems.hpp"

namespace samlab {

struct CheckReport {
  std::string name;
  bool passed = false;     // always equals max_residual <= tolerance
  double max_residual = 0.0;
  double tolerance = 0.0;
  std::string details;
};

enum class ProblemKind { Nop, Op, MultiNop };

// Central-difference gradient of the fixed-batch loss vs the analytic
// (gx, gy). max_residual is the relative error (absolute near zero gradient).
CheckReport finite_diff_check(const Problem& problem, const FactorPair& point,
                              const Batch& batch, double h);

// finite_diff_check over `instances` random NOP and OP instances each.
CheckReport gradient_suite(std::uint64_t seed, int instances = 100);

// Exact per-step identities, relative tolerance 1e-10 (relative to
// max(1, |B_t|)):
//   sgd/nop:   B' - B  = (eta^2/2)(||gx||^2 - ||gy||^2)
//   sgd/op:    B'      = (1 - eta^2 f'^2) B
//   sngd:      B' - B  = (eta^2/2)(||gx||^2 - ||gy||^2)/(||gx||^2 + ||gy||^2)
//   nbar/obar (scale part): B' = (1 + s^2) B +- s (||x||^2 + ||y||^2)
CheckReport step_identity_check(RuleKind rule, ProblemKind kind,
                                std::uint64_t seed, long steps);

// Measured per-step dB of a SAM run vs the predicted leading term, asserted
// within the calibrated residual band; also counts sign violations of the
// two-sided bound on steps where the predicted term exceeds the band.
// Throws ConfigError when the calibration constants are not frozen yet.
CheckReport dynamics_consistency_check(ProblemKind kind, double eta,
                                       double rho,
                                       const std::vector<std::uint64_t>& seeds,
                                       long steps);

// Seed-averaged first-passage time to |B| <= 0.5 |B0| under SAM must be
// non-increasing in the noise knob alpha.
CheckReport snr_monotonicity_check(ProblemKind kind,
                                   const std::vector<double>& alphas,
                                   const std::vector<std::uint64_t>& seeds);

// SGD started on x = -y stays on the line (exactly, to 1e-12) and contracts
// to the origin; oBAR from the same start leaves the line.
CheckReport saddle_trap_check();

// Full default suite, in a fixed order, as run by `verify --suite all`.
std::vector<CheckReport> run_all_checks();
std::vector<std::string> check_suite_names();
std::vector<CheckReport> run_suite(const std::string& name);

// Brute-force maxima over the frozen calibration grid; the `calibrate`
// subcommand prints these as a paste-ready header block.
struct CalibrationResult {
  double nop_resid = 0.0;
  double op_resid = 0.0;
  double ml_resid = 0.0;
};
CalibrationResult run_calibration();

}  // namespace samlab
