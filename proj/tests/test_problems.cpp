#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "samlab/problems.hpp"

using namespace samlab;

namespace {

NopProblem reference_nop(double alpha) {
  NopProblem p;
  p.target = Mat::Zero(3, 3);
  p.target(0, 0) = 0.5;
  p.noise_diag = Vec(3);
  p.noise_diag << 1.0, 0.8, 0.5;
  p.snr_alpha = alpha;
  return p;
}

FactorPair reference_init() {
  Vec x(3);
  x << 0.2, -0.1, 0.3;
  return {x, -3.0 * x};
}

Batch zero_nop_batch(int rows, int cols, int count = 1) {
  Batch b;
  for (int i = 0; i < count; ++i) b.nop_samples.push_back(Mat::Zero(rows, cols));
  return b;
}

}  // namespace

TEST_CASE("rank-1 fitting loss and gradients at the reference point") {
  const NopProblem p = reference_nop(0.0);
  const FactorPair init = reference_init();
  const NopEval e = nop_eval(init.x, init.y, p, zero_nop_batch(3, 3));

  // Hand-computed: x = (0.2, -0.1, 0.3), y = -3x, A = 0.5 e1 e1^T.
  CHECK(e.loss == doctest::Approx(0.5464).epsilon(1e-14));
  CHECK(e.gx(0) == doctest::Approx(1.104).epsilon(1e-14));
  CHECK(e.gx(1) == doctest::Approx(-0.252).epsilon(1e-14));
  CHECK(e.gx(2) == doctest::Approx(0.756).epsilon(1e-14));
  CHECK(e.gy(0) == doctest::Approx(-0.368).epsilon(1e-13));
  CHECK(e.gy(1) == doctest::Approx(0.084).epsilon(1e-13));
  CHECK(e.gy(2) == doctest::Approx(-0.252).epsilon(1e-13));

  // grad_w is the matrix gradient; gx and gy are its contractions.
  CHECK((e.gx - e.grad_w * init.y).norm() == 0.0);
  CHECK((e.gy - e.grad_w.transpose() * init.x).norm() == 0.0);
}

TEST_CASE("scalar product loss and derivative at the reference point") {
  const OpProblem p{0.5, 0.0, 1};
  const FactorPair init = reference_init();
  Batch b;
  b.op_samples = {0.0};
  const OpEval e = op_eval(init.x, init.y, p, b);

  // x^T y = -0.42, so f' = 2(-0.42 - 0.5) = -1.84.
  CHECK(e.loss == doctest::Approx(0.8464).epsilon(1e-14));
  CHECK(e.fprime == doctest::Approx(-1.84).epsilon(1e-14));
  CHECK((e.gx - e.fprime * init.y).norm() == 0.0);
  CHECK((e.gy - e.fprime * init.x).norm() == 0.0);
}

TEST_CASE("both losses are scale invariant under (cx, y/c)") {
  const FactorPair init = reference_init();
  const double c = 7.3;
  const Vec xc = c * init.x;
  const Vec yc = init.y / c;

  RngStream rng = RngStream::derive(11, 0);
  NopProblem nop = reference_nop(1.5);
  nop.batch_size = 3;
  const Batch nb = sample_batch(nop, rng);
  CHECK(nop_eval(init.x, init.y, nop, nb).loss ==
        doctest::Approx(nop_eval(xc, yc, nop, nb).loss).epsilon(1e-12));

  OpProblem op{0.5, 1.0, 2};
  const Batch ob = sample_batch(op, rng);
  CHECK(op_eval(init.x, init.y, op, ob).loss ==
        doctest::Approx(op_eval(xc, yc, op, ob).loss).epsilon(1e-12));
}

TEST_CASE("batch loss equals the mean of per-sample losses") {
  OpProblem p{0.5, 2.0, 4};
  RngStream rng = RngStream::derive(3, 0);
  const Batch b = sample_batch(p, rng);
  const FactorPair init = reference_init();

  const OpEval full = op_eval(init.x, init.y, p, b);
  double loss = 0.0, fprime = 0.0;
  for (int i = 0; i < 4; ++i) {
    const OpEval e = op_eval_subset(init.x, init.y, p, b, i, i + 1);
    loss += e.loss;
    fprime += e.fprime;
  }
  CHECK(full.loss == doctest::Approx(loss / 4.0).epsilon(1e-14));
  CHECK(full.fprime == doctest::Approx(fprime / 4.0).epsilon(1e-14));
}

TEST_CASE("noise rows scale with noise_diag; a zero entry silences the row") {
  NopProblem p = reference_nop(1.0);
  p.noise_diag << 2.0, 0.0, 0.5;
  RngStream rng = RngStream::derive(19, 0);
  double row_sq[3] = {0.0, 0.0, 0.0};
  int count = 0;
  for (int k = 0; k < 2000; ++k) {
    const Batch b = sample_batch(p, rng);
    for (int i = 0; i < 3; ++i) row_sq[i] += b.nop_samples[0].row(i).squaredNorm();
    count += 3;  // three entries per row
  }
  CHECK(row_sq[1] == 0.0);
  CHECK(std::sqrt(row_sq[0] / count) == doctest::Approx(2.0).epsilon(0.05));
  CHECK(std::sqrt(row_sq[2] / count) == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("layered loss is the sum of independent layer losses") {
  MultiNopProblem ml;
  ml.layers.assign(3, reference_nop(1.0));
  std::vector<FactorPair> params(3, reference_init());
  RngStream rng = RngStream::derive(5, 0);
  const Batch b = sample_batch(ml, rng);

  const MlEval e = ml_eval(params, ml, b);
  REQUIRE(e.layers.size() == 3);
  double total = 0.0;
  for (std::size_t l = 0; l < 3; ++l) {
    Batch single;
    single.nop_samples = b.layer_samples[l];
    const NopEval ref = nop_eval(params[l].x, params[l].y, ml.layers[l], single);
    CHECK(e.layers[l].loss == ref.loss);
    CHECK((e.layers[l].gx - ref.gx).norm() == 0.0);
    CHECK((e.layers[l].gy - ref.gy).norm() == 0.0);
    total += ref.loss;
  }
  CHECK(e.loss == doctest::Approx(total).epsilon(1e-14));
}

TEST_CASE("shape mismatches are rejected") {
  const NopProblem p = reference_nop(0.0);
  const FactorPair init = reference_init();
  const Batch b = zero_nop_batch(3, 3);

  Vec short_x(2);
  short_x << 1.0, 2.0;
  CHECK_THROWS_AS(nop_eval(short_x, init.y, p, b), DimensionError);
  CHECK_THROWS_AS(nop_eval(init.x, short_x, p, b), DimensionError);
  CHECK_THROWS_AS(nop_eval(init.x, init.y, p, Batch{}), DimensionError);

  const OpProblem op{0.5, 0.0, 2};
  Batch ob;
  ob.op_samples = {0.1, -0.2};
  CHECK_THROWS_AS(op_eval(short_x, init.y, op, ob), DimensionError);
  CHECK_THROWS_AS(op_eval_subset(init.x, init.y, op, ob, 0, 3), DimensionError);
  CHECK_THROWS_AS(op_eval_subset(init.x, init.y, op, ob, 1, 1), DimensionError);
  CHECK_THROWS_AS(op_eval_subset(init.x, init.y, op, ob, -1, 1),
                  DimensionError);

  MultiNopProblem ml;
  ml.layers.assign(2, p);
  std::vector<FactorPair> params(3, init);
  RngStream rng = RngStream::derive(1, 0);
  const Batch mb = sample_batch(ml, rng);
  CHECK_THROWS_AS(ml_eval(params, ml, mb), DimensionError);
}

TEST_CASE("sampling is deterministic in (seed, counter)") {
  NopProblem p = reference_nop(1.0);
  RngStream a = RngStream::derive(123, 0);
  RngStream b = RngStream::derive(123, 0);
  const Batch ba = sample_batch(p, a);
  const Batch bb = sample_batch(p, b);
  CHECK((ba.nop_samples[0] - bb.nop_samples[0]).norm() == 0.0);
  CHECK(a.counter == b.counter);
}
