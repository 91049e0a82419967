#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "samlab/harness.hpp"

using namespace samlab;
namespace fs = std::filesystem;

namespace {

RunConfig small_nop_config() {
  NopProblem p;
  p.target = Mat::Zero(3, 3);
  p.target(0, 0) = 0.5;
  p.noise_diag = Vec(3);
  p.noise_diag << 1.0, 0.8, 0.5;
  p.snr_alpha = 1.0;

  RunConfig config;
  config.problem = p;
  Vec x(3);
  x << 0.2, -0.1, 0.3;
  config.init = {{x, -3.0 * x}};
  config.rule.kind = RuleKind::Sam;
  config.rule.eta = 1e-4;
  config.rule.rho = 0.1;
  config.steps = 500;
  config.seed = 1;
  config.record_every = 100;
  return config;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

fs::path temp_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / ("samlab_test_" + leaf);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("config JSON round-trips through serialize and parse") {
  const RunConfig config = small_nop_config();
  const std::string text = run_config_to_json(config);
  const RunConfig back = parse_run_config(text);
  CHECK(run_config_to_json(back) == text);

  // A layered preset round-trips too (layers in both problem and init).
  const RunConfig ml = preset_configs("multilayer")[0].config;
  CHECK(run_config_to_json(parse_run_config(run_config_to_json(ml))) ==
        run_config_to_json(ml));
}

TEST_CASE("unknown keys and malformed configs are rejected") {
  const std::string good = run_config_to_json(small_nop_config());
  CHECK_NOTHROW(parse_run_config(good));

  auto with = [&good](const std::string& needle, const std::string& repl) {
    std::string s = good;
    s.replace(s.find(needle), needle.size(), repl);
    return s;
  };
  CHECK_THROWS_AS(parse_run_config(with("\"steps\"", "\"stepz\"")),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(with("\"eta\"", "\"learning_rate\"")),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(with("\"nop\"", "\"frobnicate\"")),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config("not json at all"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{}"), ConfigError);
}

TEST_CASE("validation enforces the rule and shape invariants") {
  RunConfig config = small_nop_config();
  CHECK_NOTHROW(validate(config));

  RunConfig bad = config;
  bad.rule.eta = 0.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);

  bad = config;
  bad.rule.rho = -0.1;
  CHECK_THROWS_AS(validate(bad), ConfigError);

  bad = config;
  bad.rule.kind = RuleKind::NBar;
  bad.rule.eta = 0.5;
  bad.rule.alpha0 = 3.0;  // s = 1.5 would flip the rescale sign
  CHECK_THROWS_AS(validate(bad), ConfigError);

  bad = config;
  bad.rule.kind = RuleKind::MSam;  // msam needs the scalar-product problem
  CHECK_THROWS_AS(validate(bad), ConfigError);

  bad = config;
  bad.init[0].x = Vec::Ones(2);
  CHECK_THROWS_AS(validate(bad), ConfigError);

  RunConfig op = preset_configs("msharp")[2].config;  // msharp-m4
  CHECK_NOTHROW(validate(op));
  op.rule.m = 3;  // does not divide batch_size = 4
  CHECK_THROWS_AS(validate(op), ConfigError);
}

TEST_CASE("runs record on schedule and are empty at zero steps") {
  RunConfig config = small_nop_config();
  const std::vector<TrajectoryRecord> records = run_experiment(config);
  REQUIRE(records.size() == 6);  // steps 0, 100, 200, 300, 400 plus final 500
  for (int i = 0; i < 5; ++i) CHECK(records[i].step == 100 * i);
  CHECK(records.back().step == 500);
  CHECK(records[0].B == doctest::Approx(-0.56).epsilon(1e-14));
  CHECK(records[0].b_bar.has_value());  // rank-1 runs carry the threshold

  config.steps = 0;
  CHECK(run_experiment(config).empty());
}

TEST_CASE("identical configs produce byte-identical CSV output") {
  const RunConfig config = small_nop_config();
  const std::string a = records_to_csv(config, run_experiment(config));
  const std::string b = records_to_csv(config, run_experiment(config));
  CHECK(a == b);
  CHECK(a.rfind("step,loss,B,C,gx_norm,gy_norm,dbdt_pred,b_bar,flags\n", 0) ==
        0);

  // Layered runs append per-layer columns.
  RunConfig ml = preset_configs("multilayer")[0].config;
  ml.steps = 200;
  const std::string header =
      records_to_csv(ml, run_experiment(ml)).substr(0, 200);
  CHECK(header.find("flags,B_1,C_1,B_2,C_2,B_3,C_3,B_4,C_4\n") !=
        std::string::npos);
}

TEST_CASE("apply_axis updates exactly one knob and validates the result") {
  const RunConfig base = small_nop_config();
  CHECK(std::get<NopProblem>(apply_axis(base, "snr_alpha", 2.0).problem)
            .snr_alpha == 2.0);
  CHECK(apply_axis(base, "rho", 0.05).rule.rho == 0.05);
  CHECK(apply_axis(base, "eta", 1e-3).rule.eta == 1e-3);
  CHECK(apply_axis(base, "m", 2.0).rule.m == 2);
  CHECK(apply_axis(base, "alpha0", 0.3).rule.alpha0 == 0.3);
  CHECK(apply_axis(base, "seed", 9.0).seed == 9);

  CHECK_THROWS_AS(apply_axis(base, "seed", 1.5), ConfigError);
  CHECK_THROWS_AS(apply_axis(base, "m", -1.0), ConfigError);
  CHECK_THROWS_AS(apply_axis(base, "snr_alpha", -1.0), ConfigError);
  CHECK_THROWS_AS(apply_axis(base, "eta", 0.0), ConfigError);
  CHECK_THROWS_AS(apply_axis(base, "banana", 1.0), ConfigError);

  // Layered problems get the alpha applied to every layer.
  const RunConfig ml = preset_configs("multilayer")[0].config;
  const RunConfig swept = apply_axis(ml, "snr_alpha", 0.25);
  for (const NopProblem& layer :
       std::get<MultiNopProblem>(swept.problem).layers) {
    CHECK(layer.snr_alpha == 0.25);
  }
}

TEST_CASE("sweeps produce identical bytes sequentially and concurrently") {
  SweepConfig sweep;
  sweep.base = small_nop_config();
  sweep.axis = "seed";
  sweep.values = {1.0, 2.0, 3.0};

  const fs::path seq_dir = temp_dir("sweep_seq");
  const fs::path par_dir = temp_dir("sweep_par");
  const auto seq = run_sweep(sweep, seq_dir, /*parallel=*/false);
  const auto par = run_sweep(sweep, par_dir, /*parallel=*/true);
  REQUIRE(seq.size() == 3);
  REQUIRE(par.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(seq[i].status == "ok");
    CHECK(par[i].status == "ok");
    CHECK(slurp(seq[i].csv_path) == slurp(par[i].csv_path));
  }
  CHECK(slurp(seq_dir / "summary.csv") == slurp(par_dir / "summary.csv"));
  CHECK(slurp(seq_dir / "summary.csv")
            .rfind("axis,value,status,final_B,final_loss,first_passage_half_B",
                   0) == 0);

  sweep.values = {};
  CHECK_THROWS_AS(run_sweep(sweep, seq_dir, false), ConfigError);
}

TEST_CASE("presets are enumerable, validated, and self-labeled") {
  const std::vector<std::string> names = preset_names();
  CHECK(names.size() == 7);
  for (const std::string& name : names) {
    const std::vector<PresetMember> members = preset_configs(name);
    CHECK(!members.empty());
    for (const PresetMember& m : members) {
      CHECK(m.config.preset_name == m.name);
      CHECK_NOTHROW(validate(m.config));
    }
  }
  CHECK(preset_configs("fig1a").size() == 2);
  CHECK(preset_configs("fig2a").size() == 3);
  CHECK_THROWS_AS(preset_configs("fig9z"), ConfigError);
}

TEST_CASE("config files load from disk and reject missing paths") {
  const fs::path dir = temp_dir("configs");
  const RunConfig config = small_nop_config();
  {
    std::ofstream out(dir / "run.json", std::ios::binary);
    out << run_config_to_json(config);
  }
  const RunConfig loaded = load_run_config(dir / "run.json");
  CHECK(run_config_to_json(loaded) == run_config_to_json(config));
  CHECK_THROWS_AS(load_run_config(dir / "missing.json"), ConfigError);
}
