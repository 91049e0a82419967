#pragma once

#include <Eigen/Dense>
#include <variant>
#include <vector>

#include "samlab/errors.hpp"
#include "samlab/rng.hpp"

namespace samlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// One (x, y) factor pair; multi-layer problems hold one per layer.
struct FactorPair {
  Vec x;
  Vec y;
};

// Rank-1 matrix fitting with additive noise:
//   loss(x, y) = mean_xi || x y^T - (A + alpha * N_xi) ||_F^2,
//   N_xi = diag(noise_diag) * U_xi, U_xi entries iid standard normal.
// alpha is the SNR knob: larger alpha means noisier targets.
struct NopProblem {
  Mat target;        // A, d1 x d2
  Vec noise_diag;    // length d1
  double snr_alpha = 0.0;
  int batch_size = 1;
};

// Scalar product fitting with additive noise:
//   loss(x, y) = mean_xi ( x^T y - (a + alpha * n_xi) )^2,
//   n_xi standard normal.
struct OpProblem {
  double target = 0.0;
  double snr_alpha = 0.0;
  int batch_size = 1;
};

// Additive stack of independent rank-1 fitting layers. Layers interact only
// through the optimizer (joint perturbation normalization in SAM).
struct MultiNopProblem {
  std::vector<NopProblem> layers;
};

using Problem = std::variant<NopProblem, OpProblem, MultiNopProblem>;

// Fresh noise draws for one optimizer step.
struct Batch {
  std::vector<Mat> nop_samples;                  // NOP: batch_size matrices
  std::vector<double> op_samples;                // OP: batch_size scalars
  std::vector<std::vector<Mat>> layer_samples;   // MultiNop: [layer][sample]
};

Batch sample_batch(const NopProblem& problem, RngStream& rng);
Batch sample_batch(const OpProblem& problem, RngStream& rng);
Batch sample_batch(const MultiNopProblem& problem, RngStream& rng);
Batch sample_batch(const Problem& problem, RngStream& rng);

struct NopEval {
  double loss = 0.0;
  Mat grad_w;  // gradient of the batch loss in W = x y^T
  Vec gx;      // grad_w * y
  Vec gy;      // grad_w^T * x
};

struct OpEval {
  double loss = 0.0;
  double fprime = 0.0;  // scalar derivative of the batch loss in w = x^T y
  Vec gx;               // fprime * y
  Vec gy;               // fprime * x
};

struct MlEval {
  double loss = 0.0;
  std::vector<NopEval> layers;
};

NopEval nop_eval(const Vec& x, const Vec& y, const NopProblem& problem,
                 const Batch& batch);
OpEval op_eval(const Vec& x, const Vec& y, const OpProblem& problem,
               const Batch& batch);
// Evaluate on samples [begin, end) only; the m-sharpness update works on
// disjoint subsets of one batch.
OpEval op_eval_subset(const Vec& x, const Vec& y, const OpProblem& problem,
                      const Batch& batch, int begin, int end);
MlEval ml_eval(const std::vector<FactorPair>& params,
               const MultiNopProblem& problem, const Batch& batch);

}  // namespace samlab
