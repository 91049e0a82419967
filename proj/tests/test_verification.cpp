#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "samlab/calibration.hpp"
#include "samlab/verification.hpp"

using namespace samlab;

namespace {

FactorPair reference_init() {
  Vec x(3);
  x << 0.2, -0.1, 0.3;
  return {x, -3.0 * x};
}

}  // namespace

TEST_CASE("finite differences confirm the analytic gradients") {
  NopProblem p;
  p.target = Mat::Zero(3, 3);
  p.target(0, 0) = 0.5;
  p.noise_diag = Vec(3);
  p.noise_diag << 1.0, 0.8, 0.5;
  p.snr_alpha = 1.0;
  RngStream rng = RngStream::derive(71, 0);
  const Batch batch = sample_batch(p, rng);

  const CheckReport r = finite_diff_check(Problem{p}, reference_init(), batch,
                                          1e-6);
  CHECK(r.passed);
  CHECK(r.max_residual <= 1e-6);
}

TEST_CASE("finite-diff step sizes outside the stable window are rejected") {
  OpProblem p{0.5, 0.0, 1};
  Batch batch;
  batch.op_samples = {0.0};
  const FactorPair point = reference_init();
  CHECK_THROWS_AS(finite_diff_check(Problem{p}, point, batch, 1e-9),
                  ConfigError);
  CHECK_THROWS_AS(finite_diff_check(Problem{p}, point, batch, 1e-3),
                  ConfigError);
  MultiNopProblem ml;
  CHECK_THROWS_AS(finite_diff_check(Problem{ml}, point, batch, 1e-6),
                  ConfigError);
}

TEST_CASE("gradient suite passes on a reduced instance count") {
  const CheckReport r = gradient_suite(123, 20);
  CHECK(r.passed);
}

TEST_CASE("step identities hold on short traces for every eligible rule") {
  for (ProblemKind kind : {ProblemKind::Nop, ProblemKind::Op}) {
    for (RuleKind rule :
         {RuleKind::Sgd, RuleKind::Sngd, RuleKind::NBar, RuleKind::OBar}) {
      const CheckReport r = step_identity_check(rule, kind, 9, 500);
      INFO(r.name);
      CHECK(r.passed);
      CHECK(r.max_residual <= 1e-10);
    }
  }
  CHECK_THROWS_AS(step_identity_check(RuleKind::Sam, ProblemKind::Nop, 1, 10),
                  ConfigError);
  CHECK_THROWS_AS(
      step_identity_check(RuleKind::Sgd, ProblemKind::MultiNop, 1, 10),
      ConfigError);
}

TEST_CASE("dynamics check runs against the frozen calibration constants") {
  REQUIRE(kCalibrated);
  const CheckReport r =
      dynamics_consistency_check(ProblemKind::Nop, 1e-5, 1e-2, {1}, 500);
  CHECK(r.passed);
  CHECK(r.tolerance == kNopResid);
  // Step sizes beyond the calibrated regime are refused rather than compared
  // against a band that no longer applies.
  CHECK_THROWS_AS(
      dynamics_consistency_check(ProblemKind::Nop, 1e-2, 1e-2, {1}, 10),
      ConfigError);
}

TEST_CASE("snr monotonicity check validates its grid") {
  CHECK_THROWS_AS(snr_monotonicity_check(ProblemKind::Nop, {}, {1}),
                  ConfigError);
  CHECK_THROWS_AS(snr_monotonicity_check(ProblemKind::Nop, {2.0, 1.0}, {1}),
                  ConfigError);
}

TEST_CASE("saddle demo: descent stays trapped, the rescaler escapes") {
  const CheckReport r = saddle_trap_check();
  CHECK(r.passed);
}

TEST_CASE("suites are enumerable and reject unknown names") {
  const std::vector<std::string> names = check_suite_names();
  REQUIRE(names.size() == 5);
  CHECK(names[0] == "gradients");
  CHECK_THROWS_AS(run_suite("nonsense"), ConfigError);
  // Cheap suites run end to end through the dispatcher.
  for (const CheckReport& r : run_suite("saddle")) CHECK(r.passed);
}
