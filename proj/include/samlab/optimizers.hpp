#pragma once

#include <vector>

#include "samlab/problems.hpp"

namespace samlab {

enum class RuleKind { Sgd, Sngd, Sam, MSam, NBar, OBar };
enum class ScheduleKind { Constant, Linear, Cosine };
enum class BarMode { NBar, OBar };

// One optimizer configuration. rho is SAM's perturbation radius (also the
// radius a mimic-mode BAR run reproduces), m the number of minibatch subsets
// for m-sharpness, alpha0 the BAR regularization coefficient.
struct StepRule {
  RuleKind kind = RuleKind::Sgd;
  double eta = 1e-4;
  double rho = 0.0;
  int m = 1;
  double alpha0 = 0.0;
  ScheduleKind schedule = ScheduleKind::Constant;
  bool mimic = false;      // BAR only: derive alpha_t from current gradients
  double grad_eps = 1e-12;
};

struct ParamState {
  std::vector<FactorPair> pairs;
  double squared_norm() const;
};

struct GradPair {
  Vec x;
  Vec y;
};

// Per-step annotations: fallback = a SAM/SNGD step degraded to plain SGD
// because the gradient was below grad_eps; guard = a BAR scale was skipped.
struct StepFlags {
  bool fallback = false;
  bool guard = false;
};

inline constexpr double kDivergenceGuard = 1e6;

// Throws DivergenceError if any entry is non-finite or the total parameter
// norm exceeds kDivergenceGuard.
void check_divergence(const ParamState& state, long step);

void sgd_step(ParamState& state, const std::vector<GradPair>& grads,
              double eta);
StepFlags sngd_step(ParamState& state, const std::vector<GradPair>& grads,
                    double eta, double grad_eps);
StepFlags sam_nop_step(ParamState& state, const NopProblem& problem,
                       const Batch& batch, double eta, double rho,
                       double grad_eps);
StepFlags sam_op_step(ParamState& state, const OpProblem& problem,
                      const Batch& batch, double eta, double rho,
                      double grad_eps);
StepFlags msharp_sam_op_step(ParamState& state, const OpProblem& problem,
                             const Batch& batch, double eta, double rho, int m,
                             double grad_eps);
StepFlags sam_ml_step(ParamState& state, const MultiNopProblem& problem,
                      const Batch& batch, double eta, double rho,
                      double grad_eps);

// Multiplicative rebalancing with factor s = alpha_t * eta_t, applied to each
// (x, y) pair independently. NBar keys the direction on gradient norms, OBar
// on parameter norms. Requires 0 <= s < 1.
void bar_scale(ParamState& state, const std::vector<GradPair>& grads,
               BarMode mode, double s);

// Full BAR step: evaluate gradients, rescale, then SGD with the original
// gradients (in that order). In mimic mode alpha_t is chosen per pair so the
// leading-order balancedness drift matches a SAM step of radius rule.rho.
StepFlags bar_step(ParamState& state, const Problem& problem,
                   const Batch& batch, const StepRule& rule, long t, long total_steps);

double alpha_schedule(long t, long total_steps, double alpha0,
                      ScheduleKind kind);

}  // namespace samlab
