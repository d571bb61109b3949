#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dsekit/config.hpp"
#include "dsekit/errors.hpp"
#include "dsekit/filter.hpp"
#include "dsekit/machine.hpp"
#include "dsekit/metrics.hpp"
#include "dsekit/noise.hpp"
#include "dsekit/scenario.hpp"

namespace dsekit {

// ---------------------------------------------------------------------------
// Frame assembly and initial belief
// ---------------------------------------------------------------------------

/**
 * @brief Turn a measured dataset into filter frames.
 *
 * Frame k predicts from sample k to k+1 using the inputs recorded at k
 * (the same zero-order hold the truth integrator applied) and updates with
 * the measurements at k+1. Only the measured phasor is available to the
 * filter, so both input vectors carry Ut_meas/phi_meas, never the truth.
 */
inline std::vector<FilterFrame> build_frames(const Dataset& ds) {
  if (!ds.has_measurements()) throw DataError("dataset has no measurement columns");
  if (ds.size() < 2) throw DataError("dataset needs at least two samples");
  std::vector<FilterFrame> frames;
  frames.reserve(ds.size() - 1);
  for (std::size_t j = 0; j + 1 < ds.size(); ++j) {
    frames.push_back(FilterFrame{
        Vec::of({ds.Tm[j], ds.Ef[j], ds.Ut_meas[j], ds.phi_meas[j]}),
        Vec::of({ds.Tm[j + 1], ds.Ef[j + 1], ds.Ut_meas[j + 1], ds.phi_meas[j + 1]}),
        Vec::of({ds.delta_z[j + 1], ds.omega_z[j + 1], ds.Pe_z[j + 1]})});
  }
  return frames;
}

/** @brief Initial belief: truth at t=0 plus a configurable offset, diagonal P0. */
inline FilterBelief initial_belief(const Dataset& ds, const ExperimentConfig& cfg) {
  if (ds.size() == 0) throw DataError("dataset is empty");
  Vec mean = Vec::of({ds.delta_true[0] + cfg.initial_offset[0],
                      ds.omega_true[0] + cfg.initial_offset[1],
                      ds.edp_true[0] + cfg.initial_offset[2],
                      ds.eqp_true[0] + cfg.initial_offset[3]});
  Vec p0(4);
  for (int i = 0; i < 4; ++i) p0[i] = cfg.p0_diag[static_cast<std::size_t>(i)];
  return FilterBelief{std::move(mean), SymMatrix::diagonal(p0), 0, std::nullopt};
}

/**
 * @brief Noise levels the filter should assume, taken from the profile's
 *        voltage channels: the nominal one-sigma of each spec, converted to
 *        the series' native units (degrees → radians).
 */
inline PmuNoiseConfig noise_config_from_profile(const NoiseProfile& profile) {
  auto native_sigma = [](const NoiseSpec& spec) {
    const double s = nominal_sigma(spec);
    return spec.units == NoiseUnits::degrees ? s * kDegToRad : s;
  };
  PmuNoiseConfig out;
  out.sigma_Ut = native_sigma(profile.Ut.spec);
  out.sigma_phi = native_sigma(profile.phi.spec);
  return out;
}

// ---------------------------------------------------------------------------
// Timed driver
// ---------------------------------------------------------------------------

/**
 * @brief Same recursion as run_filter, with a wall clock wrapped around each
 *        predict/update pair. Outputs are bit-identical to run_filter; only
 *        *mean_step_seconds is extra.
 */
inline std::vector<FilterBelief> run_filter_timed(const ModelInterface& model,
                                                  const FilterBelief& initial,
                                                  const std::vector<FilterFrame>& frames,
                                                  bool robustify, const HuberConfig& cfg,
                                                  double* mean_step_seconds) {
  if (frames.empty()) throw ConfigError("run_filter requires at least one frame");
  std::vector<FilterBelief> out;
  out.reserve(frames.size());
  FilterBelief belief = initial;
  std::chrono::steady_clock::duration elapsed{0};
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const FilterFrame& frame = frames[k];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const FilterBelief predicted = predict(belief, frame.u, model);
      belief = robustify ? robust_update(predicted, frame.u_meas, frame.z, model, cfg)
                         : update(predicted, frame.u_meas, frame.z, model);
    } catch (const Error& err) {
      throw FilterStepError(static_cast<int>(k), err);
    }
    elapsed += std::chrono::steady_clock::now() - t0;
    out.push_back(belief);
  }
  if (mean_step_seconds)
    *mean_step_seconds = std::chrono::duration<double>(elapsed).count() /
                         static_cast<double>(frames.size());
  return out;
}

// ---------------------------------------------------------------------------
// Trace files
// ---------------------------------------------------------------------------

inline constexpr const char* kTraceHeader =
    "t,delta_est,omega_est,edp_est,eqp_est,delta_std,omega_std,edp_std,eqp_std,"
    "w_delta_z,w_omega_z,w_pe_z,innov_delta,innov_omega,innov_pe";

/**
 * @brief Write one filter's trajectory. Row 0 is the initial belief (unit
 *        weights, zero innovation); row k>0 is the posterior after frame k-1.
 */
inline void save_trace(const std::string& path, const std::vector<double>& t,
                       const FilterBelief& initial, const std::vector<FilterBelief>& run) {
  if (run.size() + 1 != t.size())
    throw DataError("trace length does not match the dataset time grid");
  namespace fs = std::filesystem;
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open \"" + path + "\" for writing");
  out << kTraceHeader << "\n";
  auto write_row = [&out](double time, const FilterBelief& b) {
    out << detail::fmt17(time);
    for (int i = 0; i < 4; ++i) out << ',' << detail::fmt17(b.mean[i]);
    for (int i = 0; i < 4; ++i) out << ',' << detail::fmt17(std::sqrt(b.cov(i, i)));
    for (int i = 0; i < 3; ++i)
      out << ',' << detail::fmt17(b.diagnostics ? b.diagnostics->weights[i] : 1.0);
    for (int i = 0; i < 3; ++i)
      out << ',' << detail::fmt17(b.diagnostics ? b.diagnostics->innovation[i] : 0.0);
    out << "\n";
  };
  write_row(t[0], initial);
  for (std::size_t k = 0; k < run.size(); ++k) write_row(t[k + 1], run[k]);
  if (!out) throw DataError("write to \"" + path + "\" failed");
}

/** In-memory form of a trace file, column-major like Dataset. */
struct TraceData {
  std::vector<double> t;
  std::array<std::vector<double>, 4> mean;  ///< delta, omega, edp, eqp
  std::array<std::vector<double>, 4> std_dev;
  std::array<std::vector<double>, 3> weights;
  std::array<std::vector<double>, 3> innovation;

  std::size_t size() const { return t.size(); }
};

inline TraceData load_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open trace file \"" + path + "\"");
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("trace file \"" + path + "\" is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTraceHeader)
    throw SchemaError("trace file \"" + path + "\" has an unexpected header");

  TraceData tr;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<double, 15> row{};
    std::size_t col_start = 0;
    for (int c = 0; c < 15; ++c) {
      const std::size_t end = line.find(',', col_start);
      const bool last = c == 14;
      if (last != (end == std::string::npos))
        throw ParseError(line_no, col_start + 1, "expected 15 fields per trace row");
      const std::string token = line.substr(col_start, end - col_start);
      char* parsed_end = nullptr;
      const double v = std::strtod(token.c_str(), &parsed_end);
      if (token.empty() || parsed_end != token.c_str() + token.size() || !std::isfinite(v))
        throw ParseError(line_no, col_start + 1, "malformed number \"" + token + "\"");
      row[static_cast<std::size_t>(c)] = v;
      col_start = end + 1;
    }
    tr.t.push_back(row[0]);
    for (int i = 0; i < 4; ++i) tr.mean[static_cast<std::size_t>(i)].push_back(row[static_cast<std::size_t>(1 + i)]);
    for (int i = 0; i < 4; ++i) tr.std_dev[static_cast<std::size_t>(i)].push_back(row[static_cast<std::size_t>(5 + i)]);
    for (int i = 0; i < 3; ++i) tr.weights[static_cast<std::size_t>(i)].push_back(row[static_cast<std::size_t>(9 + i)]);
    for (int i = 0; i < 3; ++i) tr.innovation[static_cast<std::size_t>(i)].push_back(row[static_cast<std::size_t>(12 + i)]);
  }
  if (tr.t.empty()) throw DataError("trace file \"" + path + "\" has no rows");
  return tr;
}

/** @brief Rebuild posterior beliefs (means + diagonal stds) from a trace. */
inline std::vector<FilterBelief> beliefs_from_trace(const TraceData& tr) {
  std::vector<FilterBelief> run;
  for (std::size_t k = 1; k < tr.size(); ++k) {
    Vec mean = Vec::of({tr.mean[0][k], tr.mean[1][k], tr.mean[2][k], tr.mean[3][k]});
    Vec var(4);
    for (int i = 0; i < 4; ++i) {
      const double s = tr.std_dev[static_cast<std::size_t>(i)][k];
      var[i] = s * s;
    }
    run.push_back(FilterBelief{std::move(mean), SymMatrix::diagonal(var),
                               static_cast<int>(k), std::nullopt});
  }
  return run;
}

// ---------------------------------------------------------------------------
// Per-seed execution
// ---------------------------------------------------------------------------

/** Everything measured for one (profile, seed) cell of the grid. */
struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;  ///< category-prefixed message when !ok
  std::optional<MetricReport> ckf_metrics;
  std::optional<MetricReport> rckf_metrics;
  std::optional<ComparisonReport> comparison;  ///< present when both filters ran
  double ckf_step_seconds = 0.0;
  double rckf_step_seconds = 0.0;
  std::size_t steps = 0;
};

/** All seeds of one noise family, in the configured seed order. */
struct FamilyOutcome {
  std::string family;
  std::vector<SeedOutcome> seeds;
};

inline void write_metrics_csv(const std::string& path, const SeedOutcome& outcome) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open \"" + path + "\" for writing");
  out << "filter,variable,metric,value\n";
  auto write_report = [&out](const char* filter, const MetricReport& report) {
    for (const VariableMetrics& vm : report.variables) {
      if (vm.eps1)
        out << filter << ',' << vm.variable << ",eps1," << detail::fmt17(*vm.eps1) << "\n";
      out << filter << ',' << vm.variable << ",eps2," << detail::fmt17(vm.eps2) << "\n";
      out << filter << ',' << vm.variable << ",rms," << detail::fmt17(vm.rms) << "\n";
    }
  };
  if (outcome.ckf_metrics) write_report("ckf", *outcome.ckf_metrics);
  if (outcome.rckf_metrics) write_report("rckf", *outcome.rckf_metrics);
  if (!out) throw DataError("write to \"" + path + "\" failed");
}

inline void write_timing_csv(const std::string& path, const SeedOutcome& outcome) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open \"" + path + "\" for writing");
  out << "filter,steps,mean_step_ms\n";
  if (outcome.ckf_metrics)
    out << "ckf," << outcome.steps << ',' << detail::fmt17(outcome.ckf_step_seconds * 1e3) << "\n";
  if (outcome.rckf_metrics)
    out << "rckf," << outcome.steps << ',' << detail::fmt17(outcome.rckf_step_seconds * 1e3)
        << "\n";
  if (!out) throw DataError("write to \"" + path + "\" failed");
}

/**
 * @brief Synthesize, filter, and persist one seed into seed_dir.
 *
 * Writes dataset.csv (+ sidecar), a trace per enabled filter, metrics.csv,
 * and timing.csv. Any toolkit error is captured in the outcome rather than
 * thrown, so one bad seed never aborts a batch.
 */
inline SeedOutcome run_one_seed(const Dataset& truth, const NoiseProfile& profile,
                                const MachineParams& params, const ExperimentConfig& cfg,
                                std::uint64_t seed, const std::filesystem::path& seed_dir) {
  SeedOutcome outcome;
  outcome.seed = seed;
  try {
    const Dataset ds = synthesize_measurements(truth, profile, params, seed);
    save_dataset(ds, (seed_dir / "dataset.csv").string());

    const std::vector<FilterFrame> frames = build_frames(ds);
    const FilterBelief initial = initial_belief(ds, cfg);
    const ModelInterface model =
        make_generator_model(params, noise_config_from_profile(profile), ds.meta.step);
    outcome.steps = frames.size();

    std::vector<FilterBelief> ckf_run, rckf_run;
    if (cfg.run_ckf) {
      ckf_run = run_filter_timed(model, initial, frames, false, HuberConfig{},
                                 &outcome.ckf_step_seconds);
      save_trace((seed_dir / "trace_ckf.csv").string(), ds.t, initial, ckf_run);
      outcome.ckf_metrics = compute_report(ckf_run, ds, cfg.warmup);
    }
    if (cfg.run_rckf) {
      rckf_run = run_filter_timed(model, initial, frames, true, HuberConfig{cfg.huber_c},
                                  &outcome.rckf_step_seconds);
      save_trace((seed_dir / "trace_rckf.csv").string(), ds.t, initial, rckf_run);
      outcome.rckf_metrics = compute_report(rckf_run, ds, cfg.warmup);
    }
    if (cfg.run_ckf && cfg.run_rckf)
      outcome.comparison = compare_report(ckf_run, rckf_run, ds, cfg.warmup);

    write_metrics_csv((seed_dir / "metrics.csv").string(), outcome);
    write_timing_csv((seed_dir / "timing.csv").string(), outcome);
    outcome.ok = true;
  } catch (const Error& e) {
    outcome.ok = false;
    outcome.error = std::string(e.category()) + ": " + e.what();
  }
  return outcome;
}

// ---------------------------------------------------------------------------
// Worker pool
// ---------------------------------------------------------------------------

/**
 * @brief Run body(0..count-1) on a small thread pool.
 *
 * Tasks only write into their own slots and their own output files, so the
 * results are independent of scheduling. Non-toolkit exceptions (which
 * run_one_seed does not capture) propagate after the join.
 */
inline void parallel_for(std::size_t count, int threads,
                         const std::function<void(std::size_t)>& body) {
  if (count == 0) return;
  unsigned n = threads > 0 ? static_cast<unsigned>(threads) : std::thread::hardware_concurrency();
  if (n == 0) n = 4;
  n = static_cast<unsigned>(std::min<std::size_t>(n, count));
  if (n <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(n);
  for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
  for (std::thread& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Summary aggregation
// ---------------------------------------------------------------------------

/** One aggregated line of summary.csv. */
struct SummaryRow {
  std::string family;
  std::string metric;    ///< "eps1" or "eps2"
  std::string variable;  ///< "delta" or "omega"
  double ckf_mean = 0.0;
  double ckf_std = 0.0;
  double rckf_mean = 0.0;
  double rckf_std = 0.0;
  double improvement_median_pct = 0.0;
  double improvement_mean_pct = 0.0;
};

namespace detail {
inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline const ComparisonRow* find_row(const ComparisonReport& report, const std::string& variable,
                                     const std::string& metric) {
  for (const ComparisonRow& row : report.rows)
    if (row.variable == variable && row.metric == metric) return &row;
  return nullptr;
}
}  // namespace detail

/**
 * @brief Collapse one family's seeds into the summary lines (eps1/eps2 for
 *        the two measured state variables). Seeds that failed or ran only
 *        one filter are left out.
 */
inline std::vector<SummaryRow> summarize_family(const FamilyOutcome& family) {
  std::vector<SummaryRow> rows;
  for (const char* metric : {"eps1", "eps2"}) {
    for (const char* variable : {"delta", "omega"}) {
      std::vector<double> ckf, rckf, improvement;
      for (const SeedOutcome& seed : family.seeds) {
        if (!seed.ok || !seed.comparison) continue;
        const ComparisonRow* row = detail::find_row(*seed.comparison, variable, metric);
        if (!row) continue;
        ckf.push_back(row->ckf);
        rckf.push_back(row->rckf);
        improvement.push_back(row->improvement);
      }
      if (ckf.empty()) continue;
      SummaryRow out;
      out.family = family.family;
      out.metric = metric;
      out.variable = variable;
      out.ckf_mean = detail::mean_of(ckf);
      out.ckf_std = detail::sample_std(ckf, out.ckf_mean);
      out.rckf_mean = detail::mean_of(rckf);
      out.rckf_std = detail::sample_std(rckf, out.rckf_mean);
      out.improvement_median_pct = detail::median_of(improvement);
      out.improvement_mean_pct = detail::mean_of(improvement);
      rows.push_back(std::move(out));
    }
  }
  return rows;
}

inline void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
  namespace fs = std::filesystem;
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open \"" + path + "\" for writing");
  out << "family,metric,variable,ckf_mean,ckf_std,rckf_mean,rckf_std,"
         "improvement_median_pct,improvement_mean_pct\n";
  for (const SummaryRow& r : rows) {
    out << r.family << ',' << r.metric << ',' << r.variable << ',' << detail::fmt17(r.ckf_mean)
        << ',' << detail::fmt17(r.ckf_std) << ',' << detail::fmt17(r.rckf_mean) << ','
        << detail::fmt17(r.rckf_std) << ',' << detail::fmt17(r.improvement_median_pct) << ','
        << detail::fmt17(r.improvement_mean_pct) << "\n";
  }
  if (!out) throw DataError("write to \"" + path + "\" failed");
}

inline void print_summary_table(std::ostream& os, const std::vector<SummaryRow>& rows) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-18s %-5s %-8s %12s %12s %10s", "family", "metric", "variable",
                "ckf_mean", "rckf_mean", "med_impr%");
  os << buf << "\n";
  for (const SummaryRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-18s %-5s %-8s %12.5g %12.5g %10.2f", r.family.c_str(),
                  r.metric.c_str(), r.variable.c_str(), r.ckf_mean, r.rckf_mean,
                  r.improvement_median_pct);
    os << buf << "\n";
  }
}

// ---------------------------------------------------------------------------
// Plot data
// ---------------------------------------------------------------------------

/**
 * @brief Time-series file for one variable: truth, measurement, and each
 *        available filter estimate, ready for external plotting.
 */
inline void write_plotdata(const std::string& path, const Dataset& ds, const char* variable,
                           const TraceData* ckf, const TraceData* rckf) {
  const std::vector<double>* truth = nullptr;
  const std::vector<double>* measured = nullptr;
  int component = -1;
  if (std::strcmp(variable, "delta") == 0) {
    truth = &ds.delta_true;
    measured = &ds.delta_z;
    component = 0;
  } else if (std::strcmp(variable, "omega") == 0) {
    truth = &ds.omega_true;
    measured = &ds.omega_z;
    component = 1;
  } else {
    throw ConfigError(std::string("no plot data for variable \"") + variable + "\"");
  }
  for (const TraceData* tr : {ckf, rckf})
    if (tr && tr->size() != ds.size())
      throw DatasetMismatch("trace length does not match the dataset");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open \"" + path + "\" for writing");
  out << "t,truth,measured";
  if (ckf) out << ",ckf";
  if (rckf) out << ",rckf";
  out << "\n";
  const auto c = static_cast<std::size_t>(component);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << detail::fmt17(ds.t[i]) << ',' << detail::fmt17((*truth)[i]) << ','
        << detail::fmt17((*measured)[i]);
    if (ckf) out << ',' << detail::fmt17(ckf->mean[c][i]);
    if (rckf) out << ',' << detail::fmt17(rckf->mean[c][i]);
    out << "\n";
  }
  if (!out) throw DataError("write to \"" + path + "\" failed");
}

// ---------------------------------------------------------------------------
// Experiment drivers
// ---------------------------------------------------------------------------

/** Fully resolved experiment: configs loaded, truth integrated once. */
struct ResolvedExperiment {
  ExperimentConfig cfg;
  Scenario scenario;
  MachineParams params;
  std::vector<NoiseProfile> profiles;
  std::vector<std::string> families;  ///< directory label per profile
  Dataset truth;
};

inline ResolvedExperiment resolve_experiment(const ConfigStore& store,
                                             const ExperimentConfig& cfg) {
  ResolvedExperiment rx;
  rx.cfg = cfg;
  rx.scenario = store.load_scenario(cfg.scenario_ref);
  const std::string params_ref = cfg.params_ref.empty() ? rx.scenario.params_ref : cfg.params_ref;
  rx.params = store.load_params(params_ref);

  std::vector<std::string> refs = cfg.profile_refs;
  if (refs.empty()) {
    if (rx.scenario.profile_ref.empty())
      throw ConfigError("experiment \"" + cfg.name + "\" names no noise profile");
    refs.push_back(rx.scenario.profile_ref);
  }
  for (const std::string& ref : refs) {
    rx.profiles.push_back(store.load_profile(ref));
    const std::string label = std::filesystem::path(ref).stem().string();
    for (const std::string& seen : rx.families)
      if (seen == label)
        throw ConfigError("two noise profiles share the label \"" + label + "\"");
    rx.families.push_back(label);
  }
  rx.truth = generate_truth(rx.scenario, rx.params);
  return rx;
}

/** Per-family outcomes plus the flat summary written to disk. */
struct ExperimentResult {
  std::filesystem::path out_root;
  std::vector<FamilyOutcome> families;
  std::vector<SummaryRow> summary;

  bool any_success() const {
    for (const FamilyOutcome& f : families)
      for (const SeedOutcome& s : f.seeds)
        if (s.ok) return true;
    return false;
  }
};

namespace detail {
inline std::filesystem::path seed_directory(const std::filesystem::path& out_root, bool nested,
                                            const std::string& family, std::uint64_t seed) {
  return nested ? out_root / family / std::to_string(seed) : out_root / std::to_string(seed);
}
}  // namespace detail

/**
 * @brief Run the full grid (profiles × seeds × enabled filters) and write the
 *        per-seed files, summary.csv, and per-family plot data.
 *
 * @param all_profiles false runs only the first configured profile (flat
 *        layout); true runs every profile under out/<name>/<family>/.
 */
inline ExperimentResult run_experiment(const ConfigStore& store, const ExperimentConfig& cfg,
                                       bool all_profiles, std::ostream& status = std::cout) {
  ResolvedExperiment rx = resolve_experiment(store, cfg);
  if (!all_profiles && rx.profiles.size() > 1) {
    status << "note: " << rx.profiles.size() << " profiles configured; running \""
           << rx.families[0] << "\" (use sweep for all)\n";
    rx.profiles.resize(1);
    rx.families.resize(1);
  }
  const bool nested = rx.profiles.size() > 1;

  ExperimentResult result;
  result.out_root = std::filesystem::path(cfg.out_dir) / cfg.name;
  result.families.resize(rx.profiles.size());
  for (std::size_t f = 0; f < rx.profiles.size(); ++f) {
    result.families[f].family = rx.families[f];
    result.families[f].seeds.resize(cfg.seeds.size());
  }

  const std::size_t per_family = cfg.seeds.size();
  parallel_for(rx.profiles.size() * per_family, cfg.threads, [&](std::size_t task) {
    const std::size_t f = task / per_family;
    const std::size_t s = task % per_family;
    const std::uint64_t seed = cfg.seeds[s];
    const std::filesystem::path dir =
        detail::seed_directory(result.out_root, nested, rx.families[f], seed);
    result.families[f].seeds[s] = run_one_seed(rx.truth, rx.profiles[f], rx.params, cfg, seed, dir);
  });

  for (const FamilyOutcome& family : result.families)
    for (const SeedOutcome& seed : family.seeds)
      if (!seed.ok)
        std::cerr << "[" << cfg.name << "/" << family.family << "] seed " << seed.seed
                  << " failed: " << seed.error << "\n";

  for (const FamilyOutcome& family : result.families) {
    const std::vector<SummaryRow> rows = summarize_family(family);
    result.summary.insert(result.summary.end(), rows.begin(), rows.end());
  }
  write_summary_csv((result.out_root / "summary.csv").string(), result.summary);

  // Plot data mirrors the first surviving seed of each family.
  for (std::size_t f = 0; f < result.families.size(); ++f) {
    const FamilyOutcome& family = result.families[f];
    for (std::size_t s = 0; s < family.seeds.size(); ++s) {
      if (!family.seeds[s].ok) continue;
      const std::filesystem::path dir =
          detail::seed_directory(result.out_root, nested, family.family, cfg.seeds[s]);
      const Dataset ds = load_dataset((dir / "dataset.csv").string());
      std::optional<TraceData> ckf, rckf;
      if (cfg.run_ckf) ckf = load_trace((dir / "trace_ckf.csv").string());
      if (cfg.run_rckf) rckf = load_trace((dir / "trace_rckf.csv").string());
      for (const char* variable : {"delta", "omega"}) {
        const std::string name = "plotdata_" + family.family + "_" + variable + ".csv";
        write_plotdata((result.out_root / name).string(), ds, variable,
                       ckf ? &*ckf : nullptr, rckf ? &*rckf : nullptr);
      }
      break;
    }
  }

  print_summary_table(status, result.summary);
  if (cfg.timing) {
    for (const FamilyOutcome& family : result.families) {
      std::vector<double> ckf_ms, rckf_ms;
      for (const SeedOutcome& seed : family.seeds) {
        if (!seed.ok) continue;
        if (seed.ckf_metrics) ckf_ms.push_back(seed.ckf_step_seconds * 1e3);
        if (seed.rckf_metrics) rckf_ms.push_back(seed.rckf_step_seconds * 1e3);
      }
      char buf[160];
      std::snprintf(buf, sizeof(buf), "timing %-18s ckf %8.4f ms/step   rckf %8.4f ms/step",
                    family.family.c_str(), ckf_ms.empty() ? 0.0 : detail::mean_of(ckf_ms),
                    rckf_ms.empty() ? 0.0 : detail::mean_of(rckf_ms));
      status << buf << "\n";
    }
  }
  return result;
}

/** @brief Datasets only: synthesize and save every (profile, seed) cell. */
inline void run_generate(const ConfigStore& store, const ExperimentConfig& cfg,
                         std::ostream& status = std::cout) {
  const ResolvedExperiment rx = resolve_experiment(store, cfg);
  const bool nested = rx.profiles.size() > 1;
  const std::filesystem::path out_root = std::filesystem::path(cfg.out_dir) / cfg.name;
  const std::size_t per_family = cfg.seeds.size();
  parallel_for(rx.profiles.size() * per_family, cfg.threads, [&](std::size_t task) {
    const std::size_t f = task / per_family;
    const std::uint64_t seed = cfg.seeds[task % per_family];
    const Dataset ds = synthesize_measurements(rx.truth, rx.profiles[f], rx.params, seed);
    const std::filesystem::path dir =
        detail::seed_directory(out_root, nested, rx.families[f], seed);
    save_dataset(ds, (dir / "dataset.csv").string());
  });
  status << "generated " << rx.profiles.size() * per_family << " dataset(s) under "
         << out_root.string() << "\n";
}

// ---------------------------------------------------------------------------
// Comparison over existing run directories
// ---------------------------------------------------------------------------

struct CompareRequest {
  std::vector<std::string> run_dirs;  ///< each holds dataset.csv + trace files
  std::string out_dir = "out/compare";
  std::size_t warmup = 0;
  std::string baseline_filter = "ckf";
  std::string robust_filter = "rckf";
};

struct CompareResult {
  /// One (family label, report) pair per run directory, in argument order.
  std::vector<std::pair<std::string, ComparisonReport>> per_run;
  std::vector<SummaryRow> summary;
};

namespace detail {
inline void require_same_grid(const std::vector<double>& trace_t, const std::vector<double>& ds_t,
                              const std::string& what) {
  if (trace_t.size() != ds_t.size())
    throw DatasetMismatch(what + ": trace has " + std::to_string(trace_t.size()) +
                          " rows, dataset has " + std::to_string(ds_t.size()));
  for (std::size_t i = 0; i < ds_t.size(); ++i)
    if (std::memcmp(&trace_t[i], &ds_t[i], sizeof(double)) != 0)
      throw DatasetMismatch(what + ": trace time grid differs from the dataset");
}
}  // namespace detail

/**
 * @brief Re-derive comparison metrics from runs already on disk.
 *
 * Each directory must hold dataset.csv plus the two selected traces; the
 * traces must sit on exactly the dataset's time grid (bitwise), otherwise
 * the pairing is rejected. Directories with the same family label aggregate
 * into one set of summary rows.
 */
inline CompareResult run_compare(const CompareRequest& req, std::ostream& status = std::cout) {
  if (req.run_dirs.size() < 1) throw ConfigError("compare needs at least one run directory");
  for (const std::string& f : {req.baseline_filter, req.robust_filter})
    if (f != "ckf" && f != "rckf")
      throw ConfigError("unknown filter \"" + f + "\" (expected ckf or rckf)");

  CompareResult result;
  std::vector<FamilyOutcome> families;
  std::vector<std::pair<std::string, std::string>> plot_sources;  // family → first dir

  for (const std::string& dir : req.run_dirs) {
    namespace fs = std::filesystem;
    const fs::path base(dir);
    const Dataset ds = load_dataset((base / "dataset.csv").string());
    const TraceData baseline = load_trace((base / ("trace_" + req.baseline_filter + ".csv")).string());
    const TraceData robust = load_trace((base / ("trace_" + req.robust_filter + ".csv")).string());
    detail::require_same_grid(baseline.t, ds.t, dir);
    detail::require_same_grid(robust.t, ds.t, dir);

    const ComparisonReport report =
        compare_report(beliefs_from_trace(baseline), beliefs_from_trace(robust), ds, req.warmup);
    const std::string family = ds.meta.profile.empty() ? base.filename().string() : ds.meta.profile;
    result.per_run.emplace_back(family, report);

    SeedOutcome seed;
    seed.seed = ds.meta.run_seed;
    seed.ok = true;
    seed.comparison = report;
    bool found = false;
    for (FamilyOutcome& f : families)
      if (f.family == family) {
        f.seeds.push_back(seed);
        found = true;
      }
    if (!found) {
      families.push_back(FamilyOutcome{family, {std::move(seed)}});
      plot_sources.emplace_back(family, dir);
    }
  }

  for (const FamilyOutcome& family : families) {
    const std::vector<SummaryRow> rows = summarize_family(family);
    result.summary.insert(result.summary.end(), rows.begin(), rows.end());
  }

  const std::filesystem::path out_root(req.out_dir);
  write_summary_csv((out_root / "summary.csv").string(), result.summary);
  for (const auto& [family, dir] : plot_sources) {
    const std::filesystem::path base(dir);
    const Dataset ds = load_dataset((base / "dataset.csv").string());
    const TraceData baseline = load_trace((base / ("trace_" + req.baseline_filter + ".csv")).string());
    const TraceData robust = load_trace((base / ("trace_" + req.robust_filter + ".csv")).string());
    for (const char* variable : {"delta", "omega"}) {
      const std::string name = "plotdata_" + family + "_" + variable + ".csv";
      write_plotdata((out_root / name).string(), ds, variable, &baseline, &robust);
    }
  }

  print_summary_table(status, result.summary);
  return result;
}

/** @brief Process exit code for a toolkit error (CLI contract). */
inline int exit_code_for(const Error& e) {
  const std::string category = e.category();
  if (category == "config") return 2;
  if (category == "data") return 3;
  if (category == "numeric") return 4;
  return 1;
}

}  // namespace dsekit
