#pragma once

#include <optional>
#include <vector>

#include "samlab/problems.hpp"

namespace samlab {

// Half the squared-norm gap: B = (||x||^2 - ||y||^2) / 2.
double balancedness(const Vec& x, const Vec& y);

// Norm gap C = | ||x|| - ||y|| |; always satisfies C^2 <= 2|B|.
double c_gap(const Vec& x, const Vec& y);

// Leading term of SAM's balancedness drift on rank-1 fitting:
//   rho * (||gx||^2 - ||gy||^2) / sqrt(||gx||^2 + ||gy||^2).
// Throws std::domain_error when the joint gradient vanishes.
double predicted_dbdt_nop(const Vec& gx, const Vec& gy, double rho);

// Leading term of SAM's balancedness drift on scalar-product fitting:
//   -2 rho |f'| B / sqrt(||x||^2 + ||y||^2).
// With m_terms given (per-subset derivatives of an m-sharpness step), |f'|
// is replaced by the mean of |m_terms|.
double predicted_dbdt_op(const Vec& x, const Vec& y, double fprime, double rho,
                         const std::vector<double>* m_terms = nullptr);

// Balancedness level below which SAM's leading-term contraction is no longer
// guaranteed. Computed in the rho -> 0 form: rescale (x, y) to the balanced
// representative (xb, yb) of the same product, set ab^2 = ||G yb|| / ||G^T xb||
// and return (||ab xb||^2 - ||yb / ab||^2) / 2. Invariant under
// (x, y) -> (c x, y / c) for c > 0. Throws std::domain_error on degenerate
// norms.
double balance_threshold(const Vec& x, const Vec& y, const Mat& grad_w);

// Largest Hessian eigenvalue on the solution set of scalar-product fitting:
// fsecond * (||x||^2 + ||y||^2).
double sharpness_op(const Vec& x, const Vec& y, double fsecond);

// One recorded row of a run.
struct TrajectoryRecord {
  long step = 0;
  double loss = 0.0;
  double B = 0.0;
  double C = 0.0;
  double gx_norm = 0.0;  // joint over layers for layered runs
  double gy_norm = 0.0;
  double dbdt_pred = 0.0;
  std::optional<double> b_bar;
  bool flag_fallback = false;
  bool flag_guard = false;
  std::vector<double> layer_B;  // per-layer values, layered runs only
  std::vector<double> layer_C;
};

}  // namespace samlab
