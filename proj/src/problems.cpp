#include "samlab/problems.hpp"

namespace samlab {

namespace {

Mat sample_noise_matrix(const NopProblem& problem, RngStream& rng) {
  const auto rows = problem.target.rows();
  const auto cols = problem.target.cols();
  Mat n(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      n(i, j) = problem.noise_diag(i) * rng.next_normal();
    }
  }
  return n;
}

NopEval nop_eval_samples(const Vec& x, const Vec& y, const NopProblem& problem,
                         const std::vector<Mat>& samples) {
  if (x.size() != problem.target.rows() || y.size() != problem.target.cols()) {
    throw DimensionError("nop_eval: (x, y) dims do not match target");
  }
  if (samples.empty()) {
    throw DimensionError("nop_eval: empty batch");
  }
  const Mat residual = x * y.transpose() - problem.target;
  const double alpha = problem.snr_alpha;

  NopEval out;
  Mat mean_noise = Mat::Zero(residual.rows(), residual.cols());
  for (const Mat& n : samples) {
    out.loss += (residual - alpha * n).squaredNorm();
    mean_noise += n;
  }
  const double inv_b = 1.0 / static_cast<double>(samples.size());
  out.loss *= inv_b;
  mean_noise *= inv_b;

  out.grad_w = 2.0 * (residual - alpha * mean_noise);
  out.gx = out.grad_w * y;
  out.gy = out.grad_w.transpose() * x;
  return out;
}

}  // namespace

Batch sample_batch(const NopProblem& problem, RngStream& rng) {
  Batch batch;
  batch.nop_samples.reserve(problem.batch_size);
  for (int i = 0; i < problem.batch_size; ++i) {
    batch.nop_samples.push_back(sample_noise_matrix(problem, rng));
  }
  return batch;
}

Batch sample_batch(const OpProblem& problem, RngStream& rng) {
  Batch batch;
  batch.op_samples.reserve(problem.batch_size);
  for (int i = 0; i < problem.batch_size; ++i) {
    batch.op_samples.push_back(rng.next_normal());
  }
  return batch;
}

Batch sample_batch(const MultiNopProblem& problem, RngStream& rng) {
  Batch batch;
  batch.layer_samples.reserve(problem.layers.size());
  for (const NopProblem& layer : problem.layers) {
    std::vector<Mat> samples;
    samples.reserve(layer.batch_size);
    for (int i = 0; i < layer.batch_size; ++i) {
      samples.push_back(sample_noise_matrix(layer, rng));
    }
    batch.layer_samples.push_back(std::move(samples));
  }
  return batch;
}

Batch sample_batch(const Problem& problem, RngStream& rng) {
  return std::visit([&rng](const auto& p) { return sample_batch(p, rng); },
                    problem);
}

NopEval nop_eval(const Vec& x, const Vec& y, const NopProblem& problem,
                 const Batch& batch) {
  return nop_eval_samples(x, y, problem, batch.nop_samples);
}

OpEval op_eval(const Vec& x, const Vec& y, const OpProblem& problem,
               const Batch& batch) {
  return op_eval_subset(x, y, problem, batch,
                        0, static_cast<int>(batch.op_samples.size()));
}

OpEval op_eval_subset(const Vec& x, const Vec& y, const OpProblem& problem,
                      const Batch& batch, int begin, int end) {
  if (x.size() != y.size()) {
    throw DimensionError("op_eval: dim(x) != dim(y)");
  }
  if (begin < 0 || end > static_cast<int>(batch.op_samples.size()) ||
      begin >= end) {
    throw DimensionError("op_eval: bad sample range");
  }
  const double residual = x.dot(y) - problem.target;
  const double alpha = problem.snr_alpha;

  OpEval out;
  double mean_noise = 0.0;
  for (int i = begin; i < end; ++i) {
    const double r = residual - alpha * batch.op_samples[i];
    out.loss += r * r;
    mean_noise += batch.op_samples[i];
  }
  const double inv_b = 1.0 / static_cast<double>(end - begin);
  out.loss *= inv_b;
  mean_noise *= inv_b;

  out.fprime = 2.0 * (residual - alpha * mean_noise);
  out.gx = out.fprime * y;
  out.gy = out.fprime * x;
  return out;
}

MlEval ml_eval(const std::vector<FactorPair>& params,
               const MultiNopProblem& problem, const Batch& batch) {
  if (params.size() != problem.layers.size() ||
      batch.layer_samples.size() != problem.layers.size()) {
    throw DimensionError("ml_eval: layer count mismatch");
  }
  MlEval out;
  out.layers.reserve(params.size());
  for (std::size_t l = 0; l < params.size(); ++l) {
    NopEval layer = nop_eval_samples(params[l].x, params[l].y,
                                     problem.layers[l], batch.layer_samples[l]);
    out.loss += layer.loss;
    out.layers.push_back(std::move(layer));
  }
  return out;
}

}  // namespace samlab
