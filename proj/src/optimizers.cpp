#include "samlab/optimizers.hpp"

#include <cmath>

namespace samlab {

namespace {

double joint_grad_norm(const std::vector<GradPair>& grads) {
  double sq = 0.0;
  for (const GradPair& g : grads) {
    sq += g.x.squaredNorm() + g.y.squaredNorm();
  }
  return std::sqrt(sq);
}

void check_pair_count(const ParamState& state,
                      const std::vector<GradPair>& grads) {
  if (state.pairs.size() != grads.size()) {
    throw DimensionError("step: gradient/parameter pair count mismatch");
  }
}

void scale_pair(FactorPair& pair, bool grow_x, double s) {
  if (s < 0.0 || s >= 1.0) {
    throw ConfigError("bar_scale: factor s must lie in [0, 1)");
  }
  if (grow_x) {
    pair.x *= (1.0 + s);
    pair.y *= (1.0 - s);
  } else {
    pair.x *= (1.0 - s);
    pair.y *= (1.0 + s);
  }
}

void bar_scale_pair(FactorPair& pair, const GradPair& grad, BarMode mode,
                    double s) {
  const bool grow_x = mode == BarMode::NBar
                          ? grad.x.norm() >= grad.y.norm()
                          : pair.x.norm() < pair.y.norm();
  scale_pair(pair, grow_x, s);
}

std::vector<GradPair> collect_grads(const ParamState& state,
                                    const Problem& problem,
                                    const Batch& batch) {
  std::vector<GradPair> grads;
  if (const auto* nop = std::get_if<NopProblem>(&problem)) {
    NopEval e = nop_eval(state.pairs[0].x, state.pairs[0].y, *nop, batch);
    grads.push_back({std::move(e.gx), std::move(e.gy)});
  } else if (const auto* op = std::get_if<OpProblem>(&problem)) {
    OpEval e = op_eval(state.pairs[0].x, state.pairs[0].y, *op, batch);
    grads.push_back({std::move(e.gx), std::move(e.gy)});
  } else {
    const auto& ml = std::get<MultiNopProblem>(problem);
    MlEval e = ml_eval(state.pairs, ml, batch);
    for (NopEval& layer : e.layers) {
      grads.push_back({std::move(layer.gx), std::move(layer.gy)});
    }
  }
  return grads;
}

}  // namespace

double ParamState::squared_norm() const {
  double sq = 0.0;
  for (const FactorPair& p : pairs) {
    sq += p.x.squaredNorm() + p.y.squaredNorm();
  }
  return sq;
}

void check_divergence(const ParamState& state, long step) {
  const double sq = state.squared_norm();
  if (!std::isfinite(sq) || sq > kDivergenceGuard * kDivergenceGuard) {
    throw DivergenceError(step, std::sqrt(sq));
  }
}

void sgd_step(ParamState& state, const std::vector<GradPair>& grads,
              double eta) {
  check_pair_count(state, grads);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    state.pairs[i].x -= eta * grads[i].x;
    state.pairs[i].y -= eta * grads[i].y;
  }
}

StepFlags sngd_step(ParamState& state, const std::vector<GradPair>& grads,
                    double eta, double grad_eps) {
  check_pair_count(state, grads);
  const double norm = joint_grad_norm(grads);
  if (norm <= grad_eps) {
    return {.fallback = false, .guard = true};
  }
  sgd_step(state, grads, eta / norm);
  return {};
}

StepFlags sam_nop_step(ParamState& state, const NopProblem& problem,
                       const Batch& batch, double eta, double rho,
                       double grad_eps) {
  Vec& x = state.pairs[0].x;
  Vec& y = state.pairs[0].y;
  const NopEval base = nop_eval(x, y, problem, batch);
  const double joint =
      std::sqrt(base.gx.squaredNorm() + base.gy.squaredNorm());
  if (joint <= grad_eps) {
    sgd_step(state, {{base.gx, base.gy}}, eta);
    return {.fallback = true, .guard = false};
  }
  const double ru = rho / joint;
  const Vec xt = x + ru * base.gx;
  const Vec yt = y + ru * base.gy;
  const NopEval perturbed = nop_eval(xt, yt, problem, batch);
  x -= eta * perturbed.gx;
  y -= eta * perturbed.gy;
  return {};
}

StepFlags sam_op_step(ParamState& state, const OpProblem& problem,
                      const Batch& batch, double eta, double rho,
                      double grad_eps) {
  Vec& x = state.pairs[0].x;
  Vec& y = state.pairs[0].y;
  const OpEval base = op_eval(x, y, problem, batch);
  const double norms = std::sqrt(x.squaredNorm() + y.squaredNorm());
  if (std::abs(base.fprime) <= grad_eps || norms <= grad_eps) {
    sgd_step(state, {{base.gx, base.gy}}, eta);
    return {.fallback = true, .guard = false};
  }
  const double ru = rho * (base.fprime > 0.0 ? 1.0 : -1.0) / norms;
  const Vec xt = x + ru * y;
  const Vec yt = y + ru * x;
  const OpEval perturbed = op_eval(xt, yt, problem, batch);
  x -= eta * perturbed.gx;
  y -= eta * perturbed.gy;
  return {};
}

StepFlags msharp_sam_op_step(ParamState& state, const OpProblem& problem,
                             const Batch& batch, double eta, double rho, int m,
                             double grad_eps) {
  const int n = static_cast<int>(batch.op_samples.size());
  if (m < 1 || n % m != 0) {
    throw ConfigError("m-sharpness: m must divide the batch size");
  }
  Vec& x = state.pairs[0].x;
  Vec& y = state.pairs[0].y;
  const int subset = n / m;
  const double norms = std::sqrt(x.squaredNorm() + y.squaredNorm());

  StepFlags flags;
  Vec acc_x = Vec::Zero(x.size());
  Vec acc_y = Vec::Zero(y.size());
  for (int i = 0; i < m; ++i) {
    const OpEval base =
        op_eval_subset(x, y, problem, batch, i * subset, (i + 1) * subset);
    if (std::abs(base.fprime) <= grad_eps || norms <= grad_eps) {
      acc_x += base.gx;
      acc_y += base.gy;
      flags.fallback = true;
      continue;
    }
    const double ru = rho * (base.fprime > 0.0 ? 1.0 : -1.0) / norms;
    const Vec xt = x + ru * y;
    const Vec yt = y + ru * x;
    const OpEval perturbed =
        op_eval_subset(xt, yt, problem, batch, i * subset, (i + 1) * subset);
    acc_x += perturbed.gx;
    acc_y += perturbed.gy;
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  x -= eta * (inv_m * acc_x);
  y -= eta * (inv_m * acc_y);
  return flags;
}

StepFlags sam_ml_step(ParamState& state, const MultiNopProblem& problem,
                      const Batch& batch, double eta, double rho,
                      double grad_eps) {
  const MlEval base = ml_eval(state.pairs, problem, batch);
  double joint_sq = 0.0;
  for (const NopEval& layer : base.layers) {
    joint_sq += layer.gx.squaredNorm() + layer.gy.squaredNorm();
  }
  const double joint = std::sqrt(joint_sq);
  if (joint <= grad_eps) {
    std::vector<GradPair> grads;
    for (const NopEval& layer : base.layers) {
      grads.push_back({layer.gx, layer.gy});
    }
    sgd_step(state, grads, eta);
    return {.fallback = true, .guard = false};
  }
  const double ru = rho / joint;
  std::vector<FactorPair> perturbed;
  perturbed.reserve(state.pairs.size());
  for (std::size_t l = 0; l < state.pairs.size(); ++l) {
    perturbed.push_back({state.pairs[l].x + ru * base.layers[l].gx,
                         state.pairs[l].y + ru * base.layers[l].gy});
  }
  const MlEval at_perturbed = ml_eval(perturbed, problem, batch);
  for (std::size_t l = 0; l < state.pairs.size(); ++l) {
    state.pairs[l].x -= eta * at_perturbed.layers[l].gx;
    state.pairs[l].y -= eta * at_perturbed.layers[l].gy;
  }
  return {};
}

void bar_scale(ParamState& state, const std::vector<GradPair>& grads,
               BarMode mode, double s) {
  check_pair_count(state, grads);
  for (std::size_t i = 0; i < state.pairs.size(); ++i) {
    bar_scale_pair(state.pairs[i], grads[i], mode, s);
  }
}

StepFlags bar_step(ParamState& state, const Problem& problem,
                   const Batch& batch, const StepRule& rule, long t,
                   long total_steps) {
  const std::vector<GradPair> grads = collect_grads(state, problem, batch);
  const BarMode mode =
      rule.kind == RuleKind::NBar ? BarMode::NBar : BarMode::OBar;

  StepFlags flags;
  for (std::size_t i = 0; i < state.pairs.size(); ++i) {
    if (rule.mimic) {
      // Gradient-derived coefficient alpha_t = rho ||(gx, gy)|| / (||x||^2 +
      // ||y||^2), so each rescale moves B by eta * rho * ||(gx, gy)|| in the
      // branch direction. On scalar-product problems this is exactly
      // alpha_t = rho |f'| / sqrt(||x||^2 + ||y||^2), the coefficient that
      // recovers SAM's balancedness dynamics from one gradient evaluation.
      const double joint = std::sqrt(grads[i].x.squaredNorm() +
                                     grads[i].y.squaredNorm());
      const double norms =
          state.pairs[i].x.squaredNorm() + state.pairs[i].y.squaredNorm();
      if (joint <= rule.grad_eps || norms <= 0.0) {
        flags.guard = true;
        continue;
      }
      bar_scale_pair(state.pairs[i], grads[i], mode,
                     rule.eta * rule.rho * joint / norms);
    } else {
      const double s =
          rule.eta * alpha_schedule(t, total_steps, rule.alpha0, rule.schedule);
      bar_scale_pair(state.pairs[i], grads[i], mode, s);
    }
  }
  sgd_step(state, grads, rule.eta);
  return flags;
}

double alpha_schedule(long t, long total_steps, double alpha0,
                      ScheduleKind kind) {
  if (t < 0 || t > total_steps) {
    throw ConfigError("alpha_schedule: step index out of range");
  }
  const double frac =
      total_steps > 0 ? static_cast<double>(t) / static_cast<double>(total_steps)
                      : 0.0;
  switch (kind) {
    case ScheduleKind::Constant:
      return alpha0;
    case ScheduleKind::Linear:
      return alpha0 * (1.0 - frac);
    case ScheduleKind::Cosine:
      return alpha0 * 0.5 * (1.0 + std::cos(M_PI * frac));
  }
  throw ConfigError("alpha_schedule: unknown schedule kind");
}

}  // namespace samlab
