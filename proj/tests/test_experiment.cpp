// Experiment-layer tests: config documents and overrides, frame assembly,
// the per-seed runner with its on-disk artifacts, trace round-trips, sweep
// reproducibility, and metric comparison over existing run directories.
#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "dsekit/config.hpp"
#include "dsekit/experiment.hpp"
#include "support/test_util.hpp"

using namespace dsekit;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::MessageMatches;
using Catch::Matchers::WithinRel;
namespace fs = std::filesystem;

namespace {

MachineParams bench_params() {
  MachineParams p;
  p.T_J = 12.8;
  p.D = 2.0;
  p.T_d0p = 6.0;
  p.T_q0p = 0.535;
  p.X_d = 0.8958;
  p.X_q = 0.8645;
  p.X_dp = 0.1198;
  p.X_qp = 0.1969;
  return p;
}

/// One-second voltage-dip scenario, small enough for fast end-to-end runs.
Scenario short_scenario() {
  Scenario sc;
  sc.name = "short-dip";
  sc.params_ref = "bench";
  sc.duration = 1.0;
  sc.step = 0.02;
  sc.operating_point = OperatingPoint{1.0, 0.0, 0.8, 0.0};
  sc.Ut_segments = {SegmentSpec{SegmentKind::hold, 0.0, 0.3, 1.0, 0.0, 0.0},
                    SegmentSpec{SegmentKind::hold, 0.3, 0.4, 0.8, 0.0, 0.0},
                    SegmentSpec{SegmentKind::hold, 0.4, 1.0, 1.0, 0.0, 0.0}};
  return sc;
}

ChannelNoise gauss_channel(double scale, NoiseUnits units) {
  ChannelNoise ch;
  ch.spec = NoiseSpec{NoiseFamily::gaussian, 0.0, scale, units};
  return ch;
}

/// Gaussian profile without any gross-error schedule (safe on short runs).
NoiseProfile quiet_profile() {
  NoiseProfile p;
  p.name = "quiet";
  p.master_seed = 909;
  p.delta_z = gauss_channel(2.0, NoiseUnits::degrees);
  p.omega_z = gauss_channel(0.001, NoiseUnits::pu_fraction);
  p.Ut = gauss_channel(0.001, NoiseUnits::pu_fraction);
  p.phi = gauss_channel(0.1, NoiseUnits::degrees);
  return p;
}

ExperimentConfig unit_config() {
  ExperimentConfig cfg;
  cfg.name = "unit";
  cfg.seeds = {1};
  return cfg;
}

/// Three-sample dataset with hand-picked, distinguishable column values.
Dataset tiny_dataset() {
  Dataset ds;
  ds.t = {0.0, 0.02, 0.04};
  ds.delta_true = {0.4, 0.41, 0.42};
  ds.omega_true = {1.0, 1.001, 1.002};
  ds.edp_true = {0.3, 0.31, 0.32};
  ds.eqp_true = {0.9, 0.91, 0.92};
  ds.Tm = {1.0, 1.1, 1.2};
  ds.Ef = {2.0, 2.1, 2.2};
  ds.Ut_true = {1.0, 1.0, 1.0};
  ds.phi_true = {0.0, 0.0, 0.0};
  ds.Ut_meas = {1.01, 1.02, 1.03};
  ds.phi_meas = {0.1, 0.2, 0.3};
  ds.delta_z = {9.0, 0.5, 0.6};
  ds.omega_z = {9.0, 1.001, 1.002};
  ds.Pe_z = {9.0, 0.8, 0.81};
  ds.meta.step = 0.02;
  ds.meta.duration = 0.04;
  return ds;
}

std::vector<std::string> nonempty_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

std::vector<std::string> relative_files(const fs::path& root) {
  std::vector<std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file()) out.push_back(fs::relative(entry.path(), root).generic_string());
  std::sort(out.begin(), out.end());
  return out;
}

void replace_first(std::string& text, const std::string& from, const std::string& to) {
  const std::size_t pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  text.replace(pos, from.size(), to);
}

}  // namespace

TEST_CASE("bundled machine parameters load with exact values", "[experiment][config]") {
  const ConfigStore store("configs");
  const MachineParams p = store.load_params("g2-ieee9-like");
  CHECK(p.T_J == 12.8);
  CHECK(p.D == 2.0);
  CHECK(p.T_d0p == 6.0);
  CHECK(p.T_q0p == 0.535);
  CHECK(p.X_d == 0.8958);
  CHECK(p.X_q == 0.8645);
  CHECK(p.X_dp == 0.1198);
  CHECK(p.X_qp == 0.1969);
}

TEST_CASE("bundled noise profiles load channels, seed, and schedule", "[experiment][config]") {
  const ConfigStore store("configs");

  const NoiseProfile gauss = store.load_profile("ieee9/gaussian-white");
  CHECK(gauss.name == "gaussian-white");
  CHECK(gauss.master_seed == 909);
  CHECK(gauss.delta_z.spec.family == NoiseFamily::gaussian);
  CHECK(gauss.delta_z.spec.scale == 2.0);
  CHECK(gauss.delta_z.spec.loc == 0.0);
  CHECK(gauss.delta_z.spec.units == NoiseUnits::degrees);
  CHECK(gauss.delta_z.schedule.events.empty());
  CHECK(gauss.omega_z.spec.scale == 0.001);
  CHECK(gauss.omega_z.spec.units == NoiseUnits::pu_fraction);
  REQUIRE(gauss.omega_z.schedule.events.size() == 2);
  CHECK(gauss.omega_z.schedule.events[0].start_time == 6.0);
  CHECK(gauss.omega_z.schedule.events[0].count == 1);
  CHECK(gauss.omega_z.schedule.events[0].magnitude == 150.0);
  CHECK(gauss.omega_z.schedule.events[0].mode == BadDataMode::add);
  CHECK(gauss.omega_z.schedule.events[1].start_time == 12.0);
  CHECK(gauss.omega_z.schedule.events[1].count == 10);
  CHECK(gauss.Ut.spec.scale == 0.001);
  CHECK(gauss.phi.spec.scale == 0.1);
  CHECK(gauss.phi.spec.units == NoiseUnits::degrees);

  // The heavy-tailed profile keeps the same nominal sigma via scale = std/sqrt(2).
  const NoiseProfile lap = store.load_profile("ieee9/laplace");
  CHECK(lap.delta_z.spec.family == NoiseFamily::laplace);
  CHECK(lap.delta_z.spec.scale == 1.4142135623730951);
  CHECK(lap.delta_z.spec.loc == 20.0);
  CHECK(lap.omega_z.spec.scale == 7.071067811865476e-04);
  CHECK(lap.omega_z.spec.loc == 0.01);
  CHECK_THAT(nominal_sigma(lap.delta_z.spec), WithinRel(2.0, 1e-15));
}

TEST_CASE("bundled scenario and experiment documents load", "[experiment][config]") {
  const ConfigStore store("configs");

  const Scenario sc = store.load_scenario("ieee9-like");
  CHECK(sc.name == "ieee9-like");
  CHECK(sc.params_ref == "g2-ieee9-like");
  CHECK(sc.profile_ref == "ieee9/gaussian-white");
  CHECK(sc.duration == 20.0);
  CHECK(sc.step == 0.02);
  CHECK(sc.operating_point.U_t == 1.0);
  CHECK(sc.operating_point.phi == 0.0);
  CHECK(sc.operating_point.P_target == 0.8);
  CHECK(sc.operating_point.Q_target == 0.0);
  REQUIRE(sc.Ut_segments.size() == 3);
  CHECK(sc.Ut_segments[1].kind == SegmentKind::hold);
  CHECK(sc.Ut_segments[1].start == 1.2);
  CHECK(sc.Ut_segments[1].end == 1.3);
  CHECK(sc.Ut_segments[1].value == 0.6);
  CHECK(sc.phi_segments.empty());

  const ExperimentConfig sweep = store.load_experiment("ieee9-sweep");
  CHECK(sweep.name == "ieee9-sweep");
  CHECK(sweep.scenario_ref == "ieee9-like");
  REQUIRE(sweep.profile_refs.size() == 4);
  CHECK(sweep.profile_refs[0] == "ieee9/gaussian-white");
  CHECK(sweep.profile_refs[3] == "ieee9/cauchy");
  CHECK(sweep.run_ckf);
  CHECK(sweep.run_rckf);
  CHECK(sweep.huber_c == 1.5);
  REQUIRE(sweep.seeds.size() == 10);
  CHECK(sweep.seeds.front() == 1);
  CHECK(sweep.seeds.back() == 10);
  CHECK(sweep.out_dir == "out");
  CHECK_FALSE(sweep.timing);
  CHECK(sweep.warmup == 0);
  CHECK(sweep.threads == 0);
  // The sweep starts each filter at the exact truth sample, so it pins the
  // initial covariance tighter than the library default to keep the metrics
  // about noise robustness rather than initial-transient recovery.
  CHECK(sweep.p0_diag == std::array<double, 4>{1e-6, 1e-8, 1e-6, 1e-6});

  const ExperimentConfig single = store.load_experiment("ieee9-gaussian");
  CHECK(single.profile_refs == std::vector<std::string>{"ieee9/gaussian-white"});
  CHECK(single.seeds == std::vector<std::uint64_t>{1});
  CHECK(single.timing);
}

TEST_CASE("unknown references name the file that was looked for", "[experiment][config]") {
  const ConfigStore store("configs");
  REQUIRE_THROWS_MATCHES(store.load_profile("no-such-profile"), ConfigError,
                         MessageMatches(ContainsSubstring("unknown profile reference") &&
                                        ContainsSubstring("looked for")));
  REQUIRE_THROWS_MATCHES(store.load_scenario("missing"), ConfigError,
                         MessageMatches(ContainsSubstring("unknown scenario reference")));
  REQUIRE_THROWS_MATCHES(store.load_params("missing"), ConfigError,
                         MessageMatches(ContainsSubstring("unknown param reference")));
  REQUIRE_THROWS_MATCHES(store.load_experiment("missing"), ConfigError,
                         MessageMatches(ContainsSubstring("unknown experiment reference")));
}

TEST_CASE("document validation rejects missing and unknown keys", "[experiment][config]") {
  const testutil::TempDir tmp;
  const ConfigStore store("configs");

  testutil::write_file(tmp.str("missing.json"),
                       R"({"T_J": 12.8, "D": 2.0, "T_d0p": 6.0, "T_q0p": 0.535,
                           "X_d": 0.8958, "X_q": 0.8645, "X_dp": 0.1198})");
  REQUIRE_THROWS_MATCHES(store.load_params(tmp.str("missing.json")), ConfigError,
                         MessageMatches(ContainsSubstring("missing key \"X_qp\"")));

  testutil::write_file(tmp.str("extra.json"),
                       R"({"T_J": 12.8, "D": 2.0, "T_d0p": 6.0, "T_q0p": 0.535,
                           "X_d": 0.8958, "X_q": 0.8645, "X_dp": 0.1198, "X_qp": 0.1969,
                           "bogus": 1})");
  REQUIRE_THROWS_MATCHES(store.load_params(tmp.str("extra.json")), ConfigError,
                         MessageMatches(ContainsSubstring("unknown key \"bogus\"")));

  testutil::write_file(tmp.str("notobj.json"), "[1, 2]");
  REQUIRE_THROWS_MATCHES(store.load_params(tmp.str("notobj.json")), ConfigError,
                         MessageMatches(ContainsSubstring("expected a JSON object")));
}

TEST_CASE("malformed JSON reports line and column", "[experiment][config]") {
  const testutil::TempDir tmp;
  const ConfigStore store("configs");
  testutil::write_file(tmp.str("bad.json"), "{\n  \"a\": oops\n}\n");
  try {
    store.load_params(tmp.str("bad.json"));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
    CHECK(e.column >= 5);
    CHECK_THAT(e.what(), ContainsSubstring("parse error at line 2"));
    CHECK(std::string(e.category()) == "data");
  }
}

TEST_CASE("overrides parse, route to their document, and reject typos", "[experiment][config]") {
  const Override ov = parse_override("scenario.duration=2");
  CHECK(ov.path == "scenario.duration");
  CHECK(ov.value == "2");
  REQUIRE_THROWS_MATCHES(parse_override("nonsense"), ConfigError,
                         MessageMatches(ContainsSubstring("path=value")));
  REQUIRE_THROWS_MATCHES(parse_override("=5"), ConfigError,
                         MessageMatches(ContainsSubstring("path=value")));

  // A scenario-prefixed override reaches the scenario document only.
  const ConfigStore scoped("configs", {Override{"scenario.duration", "2"}});
  CHECK(scoped.load_scenario("ieee9-like").duration == 2.0);
  CHECK(scoped.load_experiment("ieee9-gaussian").huber_c == 1.5);  // untouched

  // An unprefixed override belongs to the experiment document.
  const ConfigStore flat("configs", {Override{"huber_c", "2.5"}});
  CHECK(flat.load_experiment("ieee9-gaussian").huber_c == 2.5);
  CHECK(flat.load_scenario("ieee9-like").duration == 20.0);  // untouched

  const ConfigStore seeded("configs", {Override{"profile.master_seed", "1234"}});
  CHECK(seeded.load_profile("ieee9/gaussian-white").master_seed == 1234);

  // A typo'd key lands in the document and fails its unknown-key check.
  const ConfigStore typo("configs", {Override{"scenario.duratoin", "2"}});
  REQUIRE_THROWS_MATCHES(typo.load_scenario("ieee9-like"), ConfigError,
                         MessageMatches(ContainsSubstring("unknown key \"duratoin\"")));
}

TEST_CASE("frames pair each interval's inputs with the next measurement", "[experiment]") {
  const Dataset ds = tiny_dataset();
  const std::vector<FilterFrame> frames = build_frames(ds);
  REQUIRE(frames.size() == 2);

  // Frame 0 predicts 0 -> 1 with the inputs recorded at sample 0 and updates
  // with sample 1; the measured phasor rides along, never the true one.
  CHECK(frames[0].u[0] == 1.0);
  CHECK(frames[0].u[1] == 2.0);
  CHECK(frames[0].u[2] == 1.01);
  CHECK(frames[0].u[3] == 0.1);
  CHECK(frames[0].u_meas[0] == 1.1);
  CHECK(frames[0].u_meas[1] == 2.1);
  CHECK(frames[0].u_meas[2] == 1.02);
  CHECK(frames[0].u_meas[3] == 0.2);
  CHECK(frames[0].z[0] == 0.5);
  CHECK(frames[0].z[1] == 1.001);
  CHECK(frames[0].z[2] == 0.8);
  CHECK(frames[1].z[0] == 0.6);
  CHECK(frames[1].z[1] == 1.002);
  CHECK(frames[1].z[2] == 0.81);

  Dataset no_meas = ds;
  no_meas.delta_z.clear();
  REQUIRE_THROWS_MATCHES(build_frames(no_meas), DataError,
                         MessageMatches(ContainsSubstring("no measurement columns")));

  Dataset single = ds;
  for (int i = 0; i < 14; ++i) {
    auto* col = detail::dataset_columns(single, i);
    col->resize(1);
  }
  REQUIRE_THROWS_MATCHES(build_frames(single), DataError,
                         MessageMatches(ContainsSubstring("at least two samples")));
}

TEST_CASE("initial belief applies the configured offset and covariance", "[experiment]") {
  const Dataset ds = tiny_dataset();
  ExperimentConfig cfg = unit_config();
  cfg.initial_offset = {0.01, -0.002, 0.03, -0.04};
  cfg.p0_diag = {1e-3, 2e-6, 3e-4, 4e-4};

  const FilterBelief b = initial_belief(ds, cfg);
  CHECK(b.mean[0] == 0.4 + 0.01);
  CHECK(b.mean[1] == 1.0 + -0.002);
  CHECK(b.mean[2] == 0.3 + 0.03);
  CHECK(b.mean[3] == 0.9 + -0.04);
  CHECK(b.cov.is_diagonal());
  CHECK(b.cov(0, 0) == 1e-3);
  CHECK(b.cov(1, 1) == 2e-6);
  CHECK(b.cov(2, 2) == 3e-4);
  CHECK(b.cov(3, 3) == 4e-4);
  CHECK(b.step_index == 0);
  CHECK_FALSE(b.diagnostics.has_value());

  REQUIRE_THROWS_MATCHES(initial_belief(Dataset{}, cfg), DataError,
                         MessageMatches(ContainsSubstring("dataset is empty")));
}

TEST_CASE("filter noise levels come from the profile's phasor channels", "[experiment]") {
  const PmuNoiseConfig quiet = noise_config_from_profile(quiet_profile());
  CHECK(quiet.sigma_Ut == 0.001);
  CHECK_THAT(quiet.sigma_phi, WithinRel(0.1 * kDegToRad, 1e-15));

  // Non-Gaussian channels contribute their nominal (equivalent) sigma.
  NoiseProfile heavy = quiet_profile();
  heavy.phi.spec.family = NoiseFamily::laplace;
  heavy.phi.spec.scale = 0.2;
  const PmuNoiseConfig lap = noise_config_from_profile(heavy);
  CHECK_THAT(lap.sigma_phi, WithinRel(0.2 * std::sqrt(2.0) * kDegToRad, 1e-15));
}

TEST_CASE("one seed end to end writes every artifact", "[experiment][integration]") {
  const Scenario sc = short_scenario();
  const MachineParams params = bench_params();
  const Dataset truth = generate_truth(sc, params);
  const NoiseProfile profile = quiet_profile();
  const ExperimentConfig cfg = unit_config();
  const testutil::TempDir tmp;
  const fs::path dir = tmp.path() / "s1";

  const SeedOutcome outcome = run_one_seed(truth, profile, params, cfg, 1, dir);
  INFO(outcome.error);
  REQUIRE(outcome.ok);
  CHECK(outcome.seed == 1);
  CHECK(outcome.error.empty());
  CHECK(outcome.steps == 50);
  REQUIRE(outcome.ckf_metrics.has_value());
  REQUIRE(outcome.rckf_metrics.has_value());
  REQUIRE(outcome.comparison.has_value());
  CHECK(outcome.comparison->rows.size() == 6);
  CHECK(outcome.ckf_step_seconds > 0.0);
  CHECK(outcome.rckf_step_seconds > 0.0);

  for (const char* name : {"dataset.csv", "dataset.csv.meta.json", "trace_ckf.csv",
                           "trace_rckf.csv", "metrics.csv", "timing.csv"}) {
    INFO(name);
    CHECK(fs::exists(dir / name));
  }

  const auto metric_lines = nonempty_lines(testutil::read_file((dir / "metrics.csv").string()));
  REQUIRE(metric_lines.size() == 21);  // header + 10 rows per filter
  CHECK(metric_lines[0] == "filter,variable,metric,value");
  CHECK_THAT(metric_lines[1], ContainsSubstring("ckf,"));

  const auto timing_lines = nonempty_lines(testutil::read_file((dir / "timing.csv").string()));
  REQUIRE(timing_lines.size() == 3);
  CHECK(timing_lines[0] == "filter,steps,mean_step_ms");
  CHECK_THAT(timing_lines[1], ContainsSubstring("ckf,50,"));

  const auto trace_lines = nonempty_lines(testutil::read_file((dir / "trace_ckf.csv").string()));
  REQUIRE(trace_lines.size() == 52);  // header + initial row + 50 posteriors
  CHECK(trace_lines[0] == kTraceHeader);
}

TEST_CASE("a saved trace reproduces the in-memory run bitwise", "[experiment][integration]") {
  const Scenario sc = short_scenario();
  const MachineParams params = bench_params();
  const Dataset truth = generate_truth(sc, params);
  const NoiseProfile profile = quiet_profile();
  const ExperimentConfig cfg = unit_config();
  const testutil::TempDir tmp;
  const fs::path dir = tmp.path() / "s1";
  REQUIRE(run_one_seed(truth, profile, params, cfg, 1, dir).ok);

  // The printed dataset and trace both round-trip doubles exactly, so a
  // rerun from the files must match the files bit for bit.
  const Dataset ds = load_dataset((dir / "dataset.csv").string());
  const std::vector<FilterFrame> frames = build_frames(ds);
  const FilterBelief initial = initial_belief(ds, cfg);
  const ModelInterface model =
      make_generator_model(params, noise_config_from_profile(profile), ds.meta.step);

  const TraceData plain_trace = load_trace((dir / "trace_ckf.csv").string());
  REQUIRE(plain_trace.size() == 51);
  CHECK(plain_trace.t[0] == 0.0);
  const std::vector<FilterBelief> plain_again = run_filter(model, initial, frames, false);
  const std::vector<FilterBelief> plain_read = beliefs_from_trace(plain_trace);
  REQUIRE(plain_read.size() == plain_again.size());
  for (std::size_t k = 0; k < plain_again.size(); ++k) {
    INFO("step " << k);
    CHECK(plain_again[k].mean.bits_equal(plain_read[k].mean));
  }

  const TraceData robust_trace = load_trace((dir / "trace_rckf.csv").string());
  const std::vector<FilterBelief> robust_again =
      run_filter(model, initial, frames, true, HuberConfig{cfg.huber_c});
  const std::vector<FilterBelief> robust_read = beliefs_from_trace(robust_trace);
  REQUIRE(robust_read.size() == robust_again.size());
  for (std::size_t k = 0; k < robust_again.size(); ++k)
    CHECK(robust_again[k].mean.bits_equal(robust_read[k].mean));
}

TEST_CASE("trace files are validated on load", "[experiment]") {
  const testutil::TempDir tmp;

  REQUIRE_THROWS_MATCHES(load_trace(tmp.str("absent.csv")), DataError,
                         MessageMatches(ContainsSubstring("cannot open trace file")));

  testutil::write_file(tmp.str("wrong_header.csv"), "t,delta_est\n");
  REQUIRE_THROWS_AS(load_trace(tmp.str("wrong_header.csv")), SchemaError);

  testutil::write_file(tmp.str("empty.csv"), std::string(kTraceHeader) + "\n");
  REQUIRE_THROWS_MATCHES(load_trace(tmp.str("empty.csv")), DataError,
                         MessageMatches(ContainsSubstring("no rows")));

  testutil::write_file(tmp.str("bad_cell.csv"),
                       std::string(kTraceHeader) +
                           "\n0,0,0,0,0,1,1,1,1,1,1,1,0,0,0\n"
                           "0.02,oops,0,0,0,1,1,1,1,1,1,1,0,0,0\n");
  try {
    load_trace(tmp.str("bad_cell.csv"));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line == 3);
    CHECK(e.column == 6);
  }
}

TEST_CASE("identical seeds write byte-identical artifacts", "[experiment][integration]") {
  const Scenario sc = short_scenario();
  const MachineParams params = bench_params();
  const Dataset truth = generate_truth(sc, params);
  const NoiseProfile profile = quiet_profile();
  const ExperimentConfig cfg = unit_config();
  const testutil::TempDir tmp;

  REQUIRE(run_one_seed(truth, profile, params, cfg, 1, tmp.path() / "a").ok);
  REQUIRE(run_one_seed(truth, profile, params, cfg, 1, tmp.path() / "b").ok);
  REQUIRE(run_one_seed(truth, profile, params, cfg, 2, tmp.path() / "c").ok);

  // Everything except wall-clock timing must be reproducible.
  for (const char* name : {"dataset.csv", "dataset.csv.meta.json", "trace_ckf.csv",
                           "trace_rckf.csv", "metrics.csv"}) {
    INFO(name);
    CHECK(testutil::read_file(tmp.str("a/") + name) == testutil::read_file(tmp.str("b/") + name));
  }
  CHECK(testutil::read_file(tmp.str("a/dataset.csv")) !=
        testutil::read_file(tmp.str("c/dataset.csv")));
}

TEST_CASE("sweep, run truncation, reproducibility, and compare", "[experiment][integration]") {
  // A miniature but complete configs tree: one scenario, two noise families,
  // two seeds, one second of data.
  const testutil::TempDir tree;
  testutil::write_file(tree.str("params/mini-params.json"),
                       R"({"T_J": 12.8, "D": 2.0, "T_d0p": 6.0, "T_q0p": 0.535,
                           "X_d": 0.8958, "X_q": 0.8645, "X_dp": 0.1198, "X_qp": 0.1969})");
  const std::string common_channels =
      R"("omega_z": {"family": "gaussian", "scale": 0.001, "units": "pu_fraction"},
         "Ut": {"family": "gaussian", "scale": 0.001, "units": "pu_fraction"},
         "phi": {"family": "gaussian", "scale": 0.1, "units": "deg"})";
  testutil::write_file(tree.str("profiles/fam-a.json"),
                       R"({"master_seed": 11,
                           "delta_z": {"family": "gaussian", "scale": 2.0, "units": "deg"},)" +
                           common_channels + "}");
  testutil::write_file(tree.str("profiles/fam-b.json"),
                       R"({"master_seed": 22,
                           "delta_z": {"family": "laplace", "scale": 1.0, "units": "deg"},)" +
                           common_channels + "}");
  testutil::write_file(tree.str("scenarios/mini-scn.json"),
                       R"({"params_ref": "mini-params", "duration": 1.0, "step": 0.02,
                           "operating_point": {"U_t": 1.0, "P_target": 0.8},
                           "disturbance": {"Ut": [
                             {"kind": "hold", "start": 0.0, "end": 0.3, "value": 1.0},
                             {"kind": "hold", "start": 0.3, "end": 0.4, "value": 0.8},
                             {"kind": "hold", "start": 0.4, "end": 1.0, "value": 1.0}]}})");
  testutil::write_file(tree.str("experiments/mini-exp.json"),
                       R"({"scenario_ref": "mini-scn",
                           "profile_ref": ["fam-a", "fam-b"],
                           "seeds": [1, 2]})");

  const ConfigStore store(tree.str());
  ExperimentConfig cfg = store.load_experiment("mini-exp");
  CHECK(cfg.name == "mini-exp");
  REQUIRE(cfg.profile_refs.size() == 2);
  cfg.threads = 2;

  const testutil::TempDir out;
  cfg.out_dir = out.str("sweep1");
  std::ostringstream status1;
  const ExperimentResult sweep = run_experiment(store, cfg, true, status1);

  // --- full sweep: nested layout, two families x two seeds ---
  CHECK(sweep.out_root == fs::path(cfg.out_dir) / "mini-exp");
  CHECK(sweep.any_success());
  REQUIRE(sweep.families.size() == 2);
  CHECK(sweep.families[0].family == "fam-a");
  CHECK(sweep.families[1].family == "fam-b");
  for (const FamilyOutcome& family : sweep.families) {
    REQUIRE(family.seeds.size() == 2);
    for (const SeedOutcome& seed : family.seeds) {
      INFO(family.family << " seed " << seed.seed << ": " << seed.error);
      CHECK(seed.ok);
    }
  }

  REQUIRE(sweep.summary.size() == 8);
  const char* expect_metric[4] = {"eps1", "eps1", "eps2", "eps2"};
  const char* expect_variable[4] = {"delta", "omega", "delta", "omega"};
  for (int i = 0; i < 8; ++i) {
    CHECK(sweep.summary[static_cast<std::size_t>(i)].family == (i < 4 ? "fam-a" : "fam-b"));
    CHECK(sweep.summary[static_cast<std::size_t>(i)].metric == expect_metric[i % 4]);
    CHECK(sweep.summary[static_cast<std::size_t>(i)].variable == expect_variable[i % 4]);
  }

  // Summary statistics agree with the per-seed comparison rows they pool.
  {
    const ComparisonReport& s1 = *sweep.families[0].seeds[0].comparison;
    const ComparisonReport& s2 = *sweep.families[0].seeds[1].comparison;
    REQUIRE(s1.rows.size() == 6);
    CHECK(s1.rows[0].variable == "delta");
    CHECK(s1.rows[0].metric == "eps1");
    CHECK(sweep.summary[0].ckf_mean == (s1.rows[0].ckf + s2.rows[0].ckf) / 2.0);
    CHECK(sweep.summary[0].rckf_mean == (s1.rows[0].rckf + s2.rows[0].rckf) / 2.0);
    CHECK(sweep.summary[0].improvement_median_pct ==
          0.5 * (s1.rows[0].improvement + s2.rows[0].improvement));
  }

  const fs::path root1 = sweep.out_root;
  for (const char* name :
       {"summary.csv", "plotdata_fam-a_delta.csv", "plotdata_fam-a_omega.csv",
        "plotdata_fam-b_delta.csv", "plotdata_fam-b_omega.csv", "fam-a/1/dataset.csv",
        "fam-a/2/metrics.csv", "fam-b/1/trace_ckf.csv", "fam-b/2/trace_rckf.csv"}) {
    INFO(name);
    CHECK(fs::exists(root1 / name));
  }
  const auto summary_lines = nonempty_lines(testutil::read_file((root1 / "summary.csv").string()));
  REQUIRE(summary_lines.size() == 9);
  CHECK(summary_lines[0] ==
        "family,metric,variable,ckf_mean,ckf_std,rckf_mean,rckf_std,"
        "improvement_median_pct,improvement_mean_pct");
  const auto plot_lines =
      nonempty_lines(testutil::read_file((root1 / "plotdata_fam-a_delta.csv").string()));
  REQUIRE(plot_lines.size() == 52);  // header + 51 samples
  CHECK(plot_lines[0] == "t,truth,measured,ckf,rckf");
  CHECK_THAT(status1.str(), ContainsSubstring("fam-a") && ContainsSubstring("med_impr%"));
  CHECK_THAT(status1.str(), !ContainsSubstring("note:"));

  // --- run mode: first profile only, flat layout, explanatory note ---
  ExperimentConfig cfg_run = cfg;
  cfg_run.out_dir = out.str("run1");
  std::ostringstream status2;
  const ExperimentResult one = run_experiment(store, cfg_run, false, status2);
  CHECK_THAT(status2.str(),
             ContainsSubstring("note: 2 profiles configured; running \"fam-a\" (use sweep for all)"));
  REQUIRE(one.families.size() == 1);
  CHECK(one.families[0].family == "fam-a");
  CHECK(one.summary.size() == 4);
  CHECK(fs::exists(one.out_root / "1" / "dataset.csv"));
  CHECK_FALSE(fs::exists(one.out_root / "fam-a"));

  // Same seed, same family: the run-mode artifacts match the sweep's.
  CHECK(testutil::read_file((one.out_root / "1" / "trace_rckf.csv").string()) ==
        testutil::read_file((root1 / "fam-a" / "1" / "trace_rckf.csv").string()));

  // --- reproducibility: a second sweep is byte-identical except timing ---
  ExperimentConfig cfg_again = cfg;
  cfg_again.out_dir = out.str("sweep2");
  std::ostringstream devnull;
  const ExperimentResult sweep2 = run_experiment(store, cfg_again, true, devnull);
  const fs::path root2 = sweep2.out_root;
  const std::vector<std::string> files1 = relative_files(root1);
  REQUIRE(files1 == relative_files(root2));
  for (const std::string& rel : files1) {
    if (fs::path(rel).filename() == "timing.csv") continue;
    INFO(rel);
    CHECK(testutil::read_file((root1 / rel).string()) ==
          testutil::read_file((root2 / rel).string()));
  }

  // --- compare: recompute the same reports from the files alone ---
  CompareRequest req;
  req.run_dirs = {(root1 / "fam-a" / "1").string(), (root1 / "fam-a" / "2").string(),
                  (root1 / "fam-b" / "1").string()};
  req.out_dir = out.str("cmp");
  const CompareResult cres = run_compare(req, devnull);
  REQUIRE(cres.per_run.size() == 3);
  CHECK(cres.per_run[0].first == "fam-a");
  CHECK(cres.per_run[1].first == "fam-a");
  CHECK(cres.per_run[2].first == "fam-b");
  REQUIRE(cres.summary.size() == 8);  // fam-a pools two runs, fam-b one

  const ComparisonReport& from_disk = cres.per_run[0].second;
  const ComparisonReport& in_memory = *sweep.families[0].seeds[0].comparison;
  REQUIRE(from_disk.rows.size() == 6);
  for (std::size_t r = 0; r < 6; ++r) {
    INFO("row " << r);
    CHECK(from_disk.rows[r].variable == in_memory.rows[r].variable);
    CHECK(from_disk.rows[r].metric == in_memory.rows[r].metric);
    CHECK(from_disk.rows[r].ckf == in_memory.rows[r].ckf);
    CHECK(from_disk.rows[r].rckf == in_memory.rows[r].rckf);
    CHECK(from_disk.rows[r].improvement == in_memory.rows[r].improvement);
  }
  CHECK(fs::exists(out.str("cmp/summary.csv")));
  CHECK(fs::exists(out.str("cmp/plotdata_fam-a_delta.csv")));
  CHECK(fs::exists(out.str("cmp/plotdata_fam-b_omega.csv")));

  // Comparing a filter against itself reports zero improvement everywhere.
  CompareRequest self = req;
  self.run_dirs = {(root1 / "fam-a" / "1").string()};
  self.out_dir = out.str("cmp_self");
  self.baseline_filter = "ckf";
  self.robust_filter = "ckf";
  const CompareResult self_res = run_compare(self, devnull);
  for (const ComparisonRow& row : self_res.per_run[0].second.rows) {
    CHECK(row.ckf == row.rckf);
    CHECK(row.improvement == 0.0);
  }

  CompareRequest bad_filter = req;
  bad_filter.baseline_filter = "kalman";
  REQUIRE_THROWS_MATCHES(run_compare(bad_filter, devnull), ConfigError,
                         MessageMatches(ContainsSubstring("unknown filter")));
  CompareRequest empty = req;
  empty.run_dirs.clear();
  REQUIRE_THROWS_MATCHES(run_compare(empty, devnull), ConfigError,
                         MessageMatches(ContainsSubstring("at least one run directory")));

  // --- mismatched traces are rejected, not silently paired ---
  const fs::path tampered = out.path() / "tampered";
  fs::copy(root1 / "fam-a" / "1", tampered, fs::copy_options::recursive);
  const std::string trace_path = (tampered / "trace_ckf.csv").string();
  const std::string original = testutil::read_file(trace_path);

  std::string truncated = original;
  truncated.erase(truncated.rfind('\n', truncated.size() - 2) + 1);
  testutil::write_file(trace_path, truncated);
  CompareRequest mism = req;
  mism.run_dirs = {tampered.string()};
  mism.out_dir = out.str("cmp_bad");
  REQUIRE_THROWS_MATCHES(run_compare(mism, devnull), DatasetMismatch,
                         MessageMatches(ContainsSubstring("trace has 50 rows")));

  std::string shifted = original;
  replace_first(shifted, "\n0.02,", "\n0.021,");
  testutil::write_file(trace_path, shifted);
  REQUIRE_THROWS_MATCHES(run_compare(mism, devnull), DatasetMismatch,
                         MessageMatches(ContainsSubstring("time grid differs")));
}

TEST_CASE("toolkit errors map onto the CLI exit codes", "[experiment]") {
  CHECK(exit_code_for(ConfigError("x")) == 2);
  CHECK(exit_code_for(DataError("x")) == 3);
  CHECK(exit_code_for(ParseError(1, 2, "x")) == 3);
  CHECK(exit_code_for(SchemaError("x")) == 3);
  CHECK(exit_code_for(DatasetMismatch("x")) == 3);
  CHECK(exit_code_for(NumericError("x")) == 4);
  CHECK(exit_code_for(NotPositiveDefinite("x")) == 4);
  // A wrapped step error keeps the inner category's code.
  CHECK(exit_code_for(FilterStepError(3, NumericError("boom"))) == 4);
  CHECK(exit_code_for(FilterStepError(3, DataError("bad"))) == 3);
}
