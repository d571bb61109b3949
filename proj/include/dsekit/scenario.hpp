#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsekit/errors.hpp"
#include "dsekit/machine.hpp"
#include "dsekit/noise.hpp"

namespace dsekit {

// ---------------------------------------------------------------------------
// Disturbance segments
// ---------------------------------------------------------------------------

enum class SegmentKind { hold, ramp };

/**
 * @brief One piece of a piecewise input signal over [start, end).
 *
 * `hold` keeps `value`; `ramp` moves linearly from `from` to `to`. A step
 * change is expressed as adjacent holds with different values.
 */
struct SegmentSpec {
  SegmentKind kind = SegmentKind::hold;
  double start = 0.0;
  double end = 0.0;
  double value = 0.0;  ///< hold level
  double from = 0.0;   ///< ramp start level
  double to = 0.0;     ///< ramp end level
};

/** @brief Signal value at time t; constant `fallback` when no segments. */
inline double segment_value(const std::vector<SegmentSpec>& segments, double t, double fallback) {
  if (segments.empty()) return fallback;
  for (const SegmentSpec& s : segments) {
    if (t >= s.start && t < s.end)
      return s.kind == SegmentKind::hold ? s.value
                                         : s.from + (s.to - s.from) * (t - s.start) / (s.end - s.start);
  }
  // Sampling exactly at the end of the grid: extend the final segment.
  const SegmentSpec& last = segments.back();
  return last.kind == SegmentKind::hold ? last.value : last.to;
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

/** Pre-disturbance steady state the truth trajectory starts from. */
struct OperatingPoint {
  double U_t = 1.0;       ///< terminal voltage magnitude (pu)
  double phi = 0.0;       ///< terminal voltage phase (rad)
  double P_target = 0.8;  ///< active power (pu)
  double Q_target = 0.0;  ///< reactive power (pu)
};

/**
 * @brief One simulated run: operating point, duration, and the terminal
 *        phasor disturbance played through the machine model.
 */
struct Scenario {
  std::string name;
  std::string params_ref;   ///< machine parameter set name
  std::string profile_ref;  ///< default noise profile name
  double duration = 20.0;   ///< seconds
  double step = kDefaultStepSeconds;
  OperatingPoint operating_point;
  std::vector<SegmentSpec> Ut_segments;   ///< empty → hold at operating point
  std::vector<SegmentSpec> phi_segments;  ///< empty → hold at operating point
};

namespace detail {
inline void validate_segments(const std::vector<SegmentSpec>& segments, double duration,
                              const std::string& channel, bool must_be_positive) {
  if (segments.empty()) return;
  constexpr double tol = 1e-9;
  if (std::fabs(segments.front().start) > tol)
    throw ConfigError(channel + " segments must start at t=0");
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const SegmentSpec& s = segments[i];
    if (!(s.end > s.start))
      throw ConfigError(channel + " segment " + std::to_string(i) + " has end <= start");
    if (i + 1 < segments.size() && std::fabs(segments[i + 1].start - s.end) > tol)
      throw ConfigError(channel + " segments must tile the run without gaps or overlap");
    if (must_be_positive) {
      const bool ok = s.kind == SegmentKind::hold ? s.value > 0.0 : (s.from > 0.0 && s.to > 0.0);
      if (!ok) throw ConfigError(channel + " segment " + std::to_string(i) + " must stay > 0");
    }
  }
  if (segments.back().end < duration - tol)
    throw ConfigError(channel + " segments end before the scenario duration");
}
}  // namespace detail

inline void validate(const Scenario& sc) {
  if (!(sc.duration > 0.0)) throw ConfigError("scenario: duration must be > 0");
  if (!(sc.step > 0.0)) throw ConfigError("scenario: step must be > 0");
  if (!(sc.operating_point.U_t > 0.0)) throw ConfigError("scenario: U_t must be > 0");
  detail::validate_segments(sc.Ut_segments, sc.duration, "U_t", true);
  detail::validate_segments(sc.phi_segments, sc.duration, "phi", false);
  constexpr double tol = 1e-12;
  if (std::fabs(segment_value(sc.Ut_segments, 0.0, sc.operating_point.U_t) -
                sc.operating_point.U_t) > tol)
    throw ConfigError("scenario: U_t disturbance must start at the operating-point value");
  if (std::fabs(segment_value(sc.phi_segments, 0.0, sc.operating_point.phi) -
                sc.operating_point.phi) > tol)
    throw ConfigError("scenario: phi disturbance must start at the operating-point value");
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/** Everything needed to regenerate the dataset from configuration alone. */
struct DatasetMeta {
  std::string scenario;
  std::string params_ref;
  std::string profile;  ///< empty until measurements are synthesized
  std::uint64_t master_seed = 0;
  std::uint64_t run_seed = 0;
  double step = kDefaultStepSeconds;
  double duration = 0.0;
};

/**
 * @brief Aligned truth / input / measurement series on a uniform grid.
 *
 * Column names match the on-disk CSV header one-to-one. The five
 * measurement columns stay empty on a truth-only dataset.
 */
struct Dataset {
  std::vector<double> t;
  std::vector<double> delta_true;
  std::vector<double> omega_true;
  std::vector<double> edp_true;
  std::vector<double> eqp_true;
  std::vector<double> Tm;
  std::vector<double> Ef;
  std::vector<double> Ut_true;
  std::vector<double> phi_true;
  std::vector<double> Ut_meas;
  std::vector<double> phi_meas;
  std::vector<double> delta_z;
  std::vector<double> omega_z;
  std::vector<double> Pe_z;
  DatasetMeta meta;

  std::size_t size() const { return t.size(); }
  bool has_measurements() const { return delta_z.size() == t.size() && !t.empty(); }
};

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/**
 * @brief Integrate the truth trajectory: equilibrium start, then repeated
 *        one-step transitions with T_m, E_f frozen at their equilibrium
 *        values and the terminal phasor following the disturbance segments
 *        (held constant across each step).
 *
 * Measurement columns are left empty. Deterministic — no randomness here.
 */
inline Dataset generate_truth(const Scenario& sc, const MachineParams& params) {
  validate(sc);
  validate(params);
  const OperatingPoint& op = sc.operating_point;
  const Equilibrium eq = solve_equilibrium({0.0, 0.0, op.U_t, op.phi}, params, op.P_target,
                                           EquilibriumOptions{op.Q_target, 1e-13, 100, false});

  const std::size_t n = static_cast<std::size_t>(std::llround(sc.duration / sc.step)) + 1;
  Dataset ds;
  ds.meta = DatasetMeta{sc.name, sc.params_ref, "", 0, 0, sc.step, sc.duration};
  ds.t.reserve(n);
  ds.delta_true.reserve(n);
  ds.omega_true.reserve(n);
  ds.edp_true.reserve(n);
  ds.eqp_true.reserve(n);
  ds.Tm.reserve(n);
  ds.Ef.reserve(n);
  ds.Ut_true.reserve(n);
  ds.phi_true.reserve(n);

  GeneratorState x = eq.state;
  bool warned = false;
  for (std::size_t k = 0; k < n; ++k) {
    const double tk = static_cast<double>(k) * sc.step;
    if (k > 0) {
      const double t_prev = static_cast<double>(k - 1) * sc.step;
      const ExogenousInput u{eq.T_m, eq.E_f, segment_value(sc.Ut_segments, t_prev, op.U_t),
                             segment_value(sc.phi_segments, t_prev, op.phi)};
      x = transition(x, u, params, sc.step);
    }
    if (!warned && (x.omega <= 0.5 || x.omega >= 1.5)) {
      std::fprintf(stderr, "warning: scenario \"%s\" drives omega to %g pu at t=%g s\n",
                   sc.name.c_str(), x.omega, tk);
      warned = true;
    }
    ds.t.push_back(tk);
    ds.delta_true.push_back(x.delta);
    ds.omega_true.push_back(x.omega);
    ds.edp_true.push_back(x.E_dp);
    ds.eqp_true.push_back(x.E_qp);
    ds.Tm.push_back(eq.T_m);
    ds.Ef.push_back(eq.E_f);
    ds.Ut_true.push_back(segment_value(sc.Ut_segments, tk, op.U_t));
    ds.phi_true.push_back(segment_value(sc.phi_segments, tk, op.phi));
  }
  return ds;
}

/**
 * @brief Fill the measurement columns of a truth dataset.
 *
 * Angle and speed channels are the truth plus channel noise and scheduled
 * gross errors; the terminal phasor is re-measured with its own noise; the
 * power measurement is then computed from the noisy phasor and the true
 * rotor quantities, so its error enters exactly through U_t and φ.
 *
 * Channels draw from disjoint substreams keyed by (profile master seed,
 * run_seed, channel tag): reordering channels cannot change any series.
 */
inline Dataset synthesize_measurements(const Dataset& truth, const NoiseProfile& profile,
                                       const MachineParams& params, std::uint64_t run_seed) {
  if (truth.t.empty()) throw DataError("synthesize_measurements: dataset has no truth samples");
  Dataset ds = truth;
  const double dt = ds.meta.step;

  SplitMix64 s_delta = channel_stream(profile.master_seed, run_seed, kChannelDeltaZ);
  SplitMix64 s_omega = channel_stream(profile.master_seed, run_seed, kChannelOmegaZ);
  SplitMix64 s_ut = channel_stream(profile.master_seed, run_seed, kChannelUt);
  SplitMix64 s_phi = channel_stream(profile.master_seed, run_seed, kChannelPhi);

  ds.delta_z = corrupt_series(ds.delta_true, profile.delta_z.spec, profile.delta_z.schedule,
                              nominal_sigma(profile.delta_z.spec), ApplyMode::add_radians, dt,
                              s_delta);
  ds.omega_z = corrupt_series(ds.omega_true, profile.omega_z.spec, profile.omega_z.schedule,
                              nominal_sigma(profile.omega_z.spec), ApplyMode::add_absolute, dt,
                              s_omega);
  ds.Ut_meas = corrupt_series(ds.Ut_true, profile.Ut.spec, profile.Ut.schedule,
                              nominal_sigma(profile.Ut.spec), ApplyMode::relative, dt, s_ut);
  ds.phi_meas = corrupt_series(ds.phi_true, profile.phi.spec, profile.phi.schedule,
                               nominal_sigma(profile.phi.spec), ApplyMode::add_radians, dt, s_phi);

  ds.Pe_z.resize(ds.t.size());
  for (std::size_t i = 0; i < ds.t.size(); ++i) {
    const GeneratorState x{ds.delta_true[i], ds.omega_true[i], ds.edp_true[i], ds.eqp_true[i]};
    const ExogenousInput u{ds.Tm[i], ds.Ef[i], ds.Ut_meas[i], ds.phi_meas[i]};
    ds.Pe_z[i] = electrical_power(x, u, params);
  }

  ds.meta.profile = profile.name;
  ds.meta.master_seed = profile.master_seed;
  ds.meta.run_seed = run_seed;
  return ds;
}

// ---------------------------------------------------------------------------
// CSV + sidecar persistence
// ---------------------------------------------------------------------------

inline constexpr const char* kDatasetHeader =
    "t,delta_true,omega_true,edp_true,eqp_true,Tm,Ef,Ut_true,phi_true,Ut_meas,phi_meas,"
    "delta_z,omega_z,Pe_z";

namespace detail {
/// 17-significant-digit decimal form: round-trips every finite double.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline const std::vector<double>* dataset_columns(const Dataset& ds, int i) {
  const std::vector<double>* cols[14] = {&ds.t,       &ds.delta_true, &ds.omega_true,
                                         &ds.edp_true, &ds.eqp_true,   &ds.Tm,
                                         &ds.Ef,       &ds.Ut_true,    &ds.phi_true,
                                         &ds.Ut_meas,  &ds.phi_meas,   &ds.delta_z,
                                         &ds.omega_z,  &ds.Pe_z};
  return cols[i];
}

inline std::vector<double>* dataset_columns(Dataset& ds, int i) {
  return const_cast<std::vector<double>*>(dataset_columns(static_cast<const Dataset&>(ds), i));
}
}  // namespace detail

/**
 * @brief Write the dataset CSV plus a `<path>.meta.json` provenance sidecar.
 *
 * Requires complete measurement columns; every number is emitted with 17
 * significant digits so a reload is bit-exact.
 */
inline void save_dataset(const Dataset& ds, const std::string& path) {
  for (int c = 0; c < 14; ++c)
    if (detail::dataset_columns(ds, c)->size() != ds.t.size())
      throw DataError("save_dataset: dataset columns have mismatched lengths");
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_dataset: cannot open \"" + path + "\" for writing");
  out << kDatasetHeader << '\n';
  for (std::size_t i = 0; i < ds.t.size(); ++i) {
    for (int c = 0; c < 14; ++c) {
      if (c) out << ',';
      out << detail::fmt17((*detail::dataset_columns(ds, c))[i]);
    }
    out << '\n';
  }
  if (!out) throw DataError("save_dataset: write to \"" + path + "\" failed");
  out.close();

  nlohmann::json meta;
  meta["scenario"] = ds.meta.scenario;
  meta["params_ref"] = ds.meta.params_ref;
  meta["profile"] = ds.meta.profile;
  meta["master_seed"] = ds.meta.master_seed;
  meta["run_seed"] = ds.meta.run_seed;
  meta["step"] = ds.meta.step;
  meta["duration"] = ds.meta.duration;
  std::ofstream side(path + ".meta.json", std::ios::binary);
  if (!side) throw DataError("save_dataset: cannot open \"" + path + ".meta.json\"");
  side << meta.dump(2) << '\n';
}

/**
 * @brief Load a dataset CSV (and its provenance sidecar when present).
 *
 * @throws SchemaError naming the offending column on a header mismatch;
 *         ParseError with 1-based line/column on malformed cells or rows.
 */
inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_dataset: cannot open \"" + path + "\"");

  const std::vector<std::string> expected = {
      "t",       "delta_true", "omega_true", "edp_true", "eqp_true", "Tm",      "Ef",
      "Ut_true", "phi_true",   "Ut_meas",    "phi_meas", "delta_z",  "omega_z", "Pe_z"};

  auto split = [](const std::string& line) {
    std::vector<std::string> fields;
    std::size_t begin = 0;
    while (true) {
      const std::size_t comma = line.find(',', begin);
      if (comma == std::string::npos) {
        fields.push_back(line.substr(begin));
        return fields;
      }
      fields.push_back(line.substr(begin, comma - begin));
      begin = comma + 1;
    }
  };

  std::string line;
  if (!std::getline(in, line)) throw SchemaError("load_dataset: empty file, header row missing");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split(line);
  for (const std::string& name : expected) {
    bool found = false;
    for (const std::string& h : header) found = found || h == name;
    if (!found) throw SchemaError("load_dataset: missing column \"" + name + "\"");
  }
  if (header != expected)
    throw SchemaError("load_dataset: columns must appear in the documented order");

  Dataset ds;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;  // tolerate a trailing blank line
    const std::vector<std::string> fields = split(line);
    if (fields.size() != 14)
      throw ParseError(line_no, line.size() + 1,
                       "expected 14 fields, found " + std::to_string(fields.size()));
    std::size_t col_offset = 1;
    for (int c = 0; c < 14; ++c) {
      const std::string& tok = fields[static_cast<std::size_t>(c)];
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (tok.empty() || end != tok.c_str() + tok.size() || !std::isfinite(v))
        throw ParseError(line_no, col_offset, "malformed number \"" + tok + "\"");
      detail::dataset_columns(ds, c)->push_back(v);
      col_offset += tok.size() + 1;
    }
  }

  const std::string side_path = path + ".meta.json";
  if (std::filesystem::exists(side_path)) {
    std::ifstream side(side_path, std::ios::binary);
    try {
      nlohmann::json meta = nlohmann::json::parse(side);
      ds.meta.scenario = meta.value("scenario", std::string());
      ds.meta.params_ref = meta.value("params_ref", std::string());
      ds.meta.profile = meta.value("profile", std::string());
      ds.meta.master_seed = meta.value("master_seed", std::uint64_t{0});
      ds.meta.run_seed = meta.value("run_seed", std::uint64_t{0});
      ds.meta.step = meta.value("step", kDefaultStepSeconds);
      ds.meta.duration = meta.value("duration", 0.0);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("load_dataset: bad provenance sidecar \"" + side_path + "\": " + e.what());
    }
  } else if (ds.t.size() >= 2) {
    ds.meta.step = ds.t[1] - ds.t[0];
    ds.meta.duration = ds.t.back();
  }
  return ds;
}

}  // namespace dsekit
