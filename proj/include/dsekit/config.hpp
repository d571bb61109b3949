#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dsekit/errors.hpp"
#include "dsekit/machine.hpp"
#include "dsekit/noise.hpp"
#include "dsekit/scenario.hpp"

namespace dsekit {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// JSON plumbing
// ---------------------------------------------------------------------------

namespace detail {
/// Translate a byte offset into 1-based line/column for error reporting.
inline std::pair<std::size_t, std::size_t> line_column(const std::string& text,
                                                       std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}
}  // namespace detail

/** @brief Parse a JSON document; syntax errors carry 1-based line/column. */
inline json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports the byte just past the offending token.
    const std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
    const auto [line, col] = detail::line_column(text, byte);
    throw ParseError(line, col, origin + ": " + e.what());
  }
}

inline json parse_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file \"" + path + "\"");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_json_text(buf.str(), path);
}

namespace detail {
/// Reject unknown keys so config typos (and typo'd overrides) fail loudly.
inline void require_keys(const json& j, const std::string& context,
                         const std::vector<std::string>& required,
                         const std::vector<std::string>& optional) {
  if (!j.is_object()) throw ConfigError(context + ": expected a JSON object");
  for (const std::string& key : required)
    if (!j.contains(key)) throw ConfigError(context + ": missing key \"" + key + "\"");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const std::string& key : required) known = known || key == item.key();
    for (const std::string& key : optional) known = known || key == item.key();
    if (!known) throw ConfigError(context + ": unknown key \"" + item.key() + "\"");
  }
}

inline double get_num(const json& j, const std::string& key, const std::string& context) {
  if (!j.at(key).is_number())
    throw ConfigError(context + ": key \"" + key + "\" must be a number");
  return j.at(key).get<double>();
}

inline std::string get_str(const json& j, const std::string& key, const std::string& context) {
  if (!j.at(key).is_string())
    throw ConfigError(context + ": key \"" + key + "\" must be a string");
  return j.at(key).get<std::string>();
}

inline bool get_bool(const json& j, const std::string& key, const std::string& context) {
  if (!j.at(key).is_boolean())
    throw ConfigError(context + ": key \"" + key + "\" must be a boolean");
  return j.at(key).get<bool>();
}

inline std::uint64_t get_u64(const json& j, const std::string& key, const std::string& context) {
  if (!j.at(key).is_number_unsigned() && !j.at(key).is_number_integer())
    throw ConfigError(context + ": key \"" + key + "\" must be an integer");
  return j.at(key).get<std::uint64_t>();
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Document parsers
// ---------------------------------------------------------------------------

/** @brief Machine parameter file: a flat object with exactly the 8 keys. */
inline MachineParams params_from_json(const json& j, const std::string& context) {
  detail::require_keys(j, context, {"T_J", "D", "T_d0p", "T_q0p", "X_d", "X_q", "X_dp", "X_qp"},
                       {});
  MachineParams p;
  p.T_J = detail::get_num(j, "T_J", context);
  p.D = detail::get_num(j, "D", context);
  p.T_d0p = detail::get_num(j, "T_d0p", context);
  p.T_q0p = detail::get_num(j, "T_q0p", context);
  p.X_d = detail::get_num(j, "X_d", context);
  p.X_q = detail::get_num(j, "X_q", context);
  p.X_dp = detail::get_num(j, "X_dp", context);
  p.X_qp = detail::get_num(j, "X_qp", context);
  validate(p);
  return p;
}

inline json params_to_json(const MachineParams& p) {
  json j;
  j["T_J"] = p.T_J;
  j["D"] = p.D;
  j["T_d0p"] = p.T_d0p;
  j["T_q0p"] = p.T_q0p;
  j["X_d"] = p.X_d;
  j["X_q"] = p.X_q;
  j["X_dp"] = p.X_dp;
  j["X_qp"] = p.X_qp;
  return j;
}

namespace detail {
inline NoiseSpec noise_spec_from_json(const json& j, const std::string& context) {
  require_keys(j, context, {"family", "scale", "units"}, {"loc"});
  NoiseSpec spec;
  spec.family = family_from_string(get_str(j, "family", context));
  spec.scale = get_num(j, "scale", context);
  spec.units = units_from_string(get_str(j, "units", context));
  spec.loc = j.contains("loc") ? get_num(j, "loc", context) : 0.0;
  validate(spec);
  return spec;
}

inline BadDataSchedule schedule_from_json(const json& j, const std::string& context) {
  BadDataSchedule schedule;
  if (!j.is_array()) throw ConfigError(context + ": bad_data must be an array");
  std::size_t i = 0;
  for (const json& ev : j) {
    const std::string ctx = context + "[" + std::to_string(i++) + "]";
    require_keys(ev, ctx, {"start_time", "count"}, {"magnitude", "mode"});
    BadDataEvent e;
    e.start_time = get_num(ev, "start_time", ctx);
    e.count = static_cast<int>(get_num(ev, "count", ctx));
    if (ev.contains("magnitude")) e.magnitude = get_num(ev, "magnitude", ctx);
    if (ev.contains("mode")) e.mode = bad_data_mode_from_string(get_str(ev, "mode", ctx));
    schedule.events.push_back(e);
  }
  validate(schedule);
  return schedule;
}

inline ChannelNoise channel_from_json(const json& j, const std::string& context) {
  require_keys(j, context, {"family", "scale", "units"}, {"loc", "bad_data"});
  json spec_only = j;
  spec_only.erase("bad_data");
  ChannelNoise ch;
  ch.spec = noise_spec_from_json(spec_only, context);
  if (j.contains("bad_data")) ch.schedule = schedule_from_json(j["bad_data"], context + ".bad_data");
  return ch;
}
}  // namespace detail

/** @brief Noise profile document: master seed plus the four channels. */
inline NoiseProfile profile_from_json(const json& j, const std::string& default_name,
                                      const std::string& context) {
  detail::require_keys(j, context, {"master_seed", "delta_z", "omega_z", "Ut", "phi"}, {"name"});
  NoiseProfile p;
  p.name = j.contains("name") ? detail::get_str(j, "name", context) : default_name;
  p.master_seed = detail::get_u64(j, "master_seed", context);
  p.delta_z = detail::channel_from_json(j["delta_z"], context + ".delta_z");
  p.omega_z = detail::channel_from_json(j["omega_z"], context + ".omega_z");
  p.Ut = detail::channel_from_json(j["Ut"], context + ".Ut");
  p.phi = detail::channel_from_json(j["phi"], context + ".phi");
  return p;
}

namespace detail {
inline std::vector<SegmentSpec> segments_from_json(const json& j, const std::string& context) {
  if (!j.is_array()) throw ConfigError(context + ": expected an array of segments");
  std::vector<SegmentSpec> segments;
  std::size_t i = 0;
  for (const json& s : j) {
    const std::string ctx = context + "[" + std::to_string(i++) + "]";
    require_keys(s, ctx, {"kind", "start", "end"}, {"value", "from", "to"});
    SegmentSpec seg;
    const std::string kind = get_str(s, "kind", ctx);
    seg.start = get_num(s, "start", ctx);
    seg.end = get_num(s, "end", ctx);
    if (kind == "hold" || kind == "step") {
      seg.kind = SegmentKind::hold;
      if (!s.contains("value")) throw ConfigError(ctx + ": hold segment needs \"value\"");
      seg.value = get_num(s, "value", ctx);
    } else if (kind == "ramp") {
      seg.kind = SegmentKind::ramp;
      if (!s.contains("from") || !s.contains("to"))
        throw ConfigError(ctx + ": ramp segment needs \"from\" and \"to\"");
      seg.from = get_num(s, "from", ctx);
      seg.to = get_num(s, "to", ctx);
    } else {
      throw ConfigError(ctx + ": unknown segment kind \"" + kind + "\"");
    }
    segments.push_back(seg);
  }
  return segments;
}
}  // namespace detail

/** @brief Scenario document (see docs/formats.md for the schema). */
inline Scenario scenario_from_json(const json& j, const std::string& default_name,
                                   const std::string& context) {
  detail::require_keys(j, context, {"params_ref", "duration"},
                       {"name", "profile_ref", "step", "operating_point", "disturbance"});
  Scenario sc;
  sc.name = j.contains("name") ? detail::get_str(j, "name", context) : default_name;
  sc.params_ref = detail::get_str(j, "params_ref", context);
  if (j.contains("profile_ref")) sc.profile_ref = detail::get_str(j, "profile_ref", context);
  sc.duration = detail::get_num(j, "duration", context);
  if (j.contains("step")) sc.step = detail::get_num(j, "step", context);
  if (j.contains("operating_point")) {
    const json& op = j["operating_point"];
    const std::string ctx = context + ".operating_point";
    detail::require_keys(op, ctx, {"U_t", "P_target"}, {"phi", "Q_target"});
    sc.operating_point.U_t = detail::get_num(op, "U_t", ctx);
    sc.operating_point.P_target = detail::get_num(op, "P_target", ctx);
    sc.operating_point.phi = op.contains("phi") ? detail::get_num(op, "phi", ctx) : 0.0;
    sc.operating_point.Q_target =
        op.contains("Q_target") ? detail::get_num(op, "Q_target", ctx) : 0.0;
  }
  if (j.contains("disturbance")) {
    const json& d = j["disturbance"];
    const std::string ctx = context + ".disturbance";
    detail::require_keys(d, ctx, {}, {"Ut", "phi"});
    if (d.contains("Ut")) sc.Ut_segments = detail::segments_from_json(d["Ut"], ctx + ".Ut");
    if (d.contains("phi")) sc.phi_segments = detail::segments_from_json(d["phi"], ctx + ".phi");
  }
  validate(sc);
  return sc;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

/** Full description of one experiment (or sweep) run. */
struct ExperimentConfig {
  std::string name;
  std::string scenario_ref;
  std::string params_ref;  ///< empty → use the scenario's reference
  std::vector<std::string> profile_refs;
  bool run_ckf = true;
  bool run_rckf = true;
  double huber_c = 1.5;
  std::vector<std::uint64_t> seeds;
  std::string out_dir = "out";
  bool timing = false;
  std::size_t warmup = 0;  ///< posteriors excluded from the metric window
  std::array<double, 4> initial_offset{0.0, 0.0, 0.0, 0.0};
  std::array<double, 4> p0_diag{1e-4, 1e-6, 1e-4, 1e-4};
  int threads = 0;  ///< worker count; 0 = hardware concurrency
};

inline ExperimentConfig experiment_from_json(const json& j, const std::string& default_name,
                                             const std::string& context) {
  detail::require_keys(j, context, {"scenario_ref", "seeds"},
                       {"name", "params_ref", "profile_ref", "filters", "huber_c", "out_dir",
                        "timing", "warmup", "initial_offset", "p0_diag", "threads"});
  ExperimentConfig cfg;
  cfg.name = j.contains("name") ? detail::get_str(j, "name", context) : default_name;
  cfg.scenario_ref = detail::get_str(j, "scenario_ref", context);
  if (j.contains("params_ref")) cfg.params_ref = detail::get_str(j, "params_ref", context);

  if (j.contains("profile_ref")) {
    const json& pr = j["profile_ref"];
    if (pr.is_string()) {
      cfg.profile_refs.push_back(pr.get<std::string>());
    } else if (pr.is_array()) {
      for (const json& item : pr) {
        if (!item.is_string())
          throw ConfigError(context + ": profile_ref entries must be strings");
        cfg.profile_refs.push_back(item.get<std::string>());
      }
    } else {
      throw ConfigError(context + ": profile_ref must be a string or array of strings");
    }
  }

  if (j.contains("filters")) {
    if (!j["filters"].is_array()) throw ConfigError(context + ": filters must be an array");
    cfg.run_ckf = false;
    cfg.run_rckf = false;
    for (const json& f : j["filters"]) {
      const std::string name = f.get<std::string>();
      if (name == "ckf") {
        cfg.run_ckf = true;
      } else if (name == "rckf") {
        cfg.run_rckf = true;
      } else {
        throw ConfigError(context + ": unknown filter \"" + name + "\"");
      }
    }
    if (!cfg.run_ckf && !cfg.run_rckf) throw ConfigError(context + ": filters must name at least one filter");
  }

  if (j.contains("huber_c")) cfg.huber_c = detail::get_num(j, "huber_c", context);
  if (!(cfg.huber_c > 0.0)) throw ConfigError(context + ": huber_c must be > 0");

  if (!j["seeds"].is_array() || j["seeds"].empty())
    throw ConfigError(context + ": seeds must be a non-empty array");
  for (const json& s : j["seeds"]) {
    if (!s.is_number_integer() && !s.is_number_unsigned())
      throw ConfigError(context + ": seeds must be integers");
    cfg.seeds.push_back(s.get<std::uint64_t>());
  }

  if (j.contains("out_dir")) cfg.out_dir = detail::get_str(j, "out_dir", context);
  if (j.contains("timing")) cfg.timing = detail::get_bool(j, "timing", context);
  if (j.contains("warmup"))
    cfg.warmup = static_cast<std::size_t>(detail::get_num(j, "warmup", context));
  if (j.contains("threads"))
    cfg.threads = static_cast<int>(detail::get_num(j, "threads", context));

  auto read_vec4 = [&](const char* key, std::array<double, 4>& out) {
    if (!j.contains(key)) return;
    const json& a = j[key];
    if (!a.is_array() || a.size() != 4)
      throw ConfigError(context + ": " + key + " must be an array of 4 numbers");
    for (int i = 0; i < 4; ++i) out[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(i)].get<double>();
  };
  read_vec4("initial_offset", cfg.initial_offset);
  read_vec4("p0_diag", cfg.p0_diag);
  for (double v : cfg.p0_diag)
    if (!(v > 0.0)) throw ConfigError(context + ": p0_diag entries must be > 0");
  return cfg;
}

// ---------------------------------------------------------------------------
// Overrides and the by-name store
// ---------------------------------------------------------------------------

/** One `--set path=value` assignment, applied before document parsing. */
struct Override {
  std::string path;   ///< dotted, e.g. "huber_c" or "scenario.duration"
  std::string value;  ///< JSON literal, or a bare string
};

inline Override parse_override(const std::string& text) {
  const std::size_t eq = text.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override \"" + text + "\" must look like path=value");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

/**
 * @brief Apply assignments under one document prefix.
 *
 * An override "scenario.duration=10" targets the scenario document when
 * called with prefix "scenario"; paths with no known document prefix belong
 * to the experiment document (prefix ""). Values parse as JSON when they
 * can, otherwise they are taken as plain strings.
 */
inline void apply_overrides(json& doc, const std::vector<Override>& overrides,
                            const std::string& prefix) {
  static const std::vector<std::string> kDocPrefixes = {"scenario", "profile", "params"};
  for (const Override& ov : overrides) {
    std::string rest;
    if (prefix.empty()) {
      const std::size_t dot = ov.path.find('.');
      const std::string head = ov.path.substr(0, dot);
      bool is_doc = false;
      for (const std::string& d : kDocPrefixes) is_doc = is_doc || d == head;
      if (is_doc && dot != std::string::npos) continue;  // belongs to a sub-document
      rest = ov.path;
    } else {
      if (ov.path.rfind(prefix + ".", 0) != 0) continue;
      rest = ov.path.substr(prefix.size() + 1);
    }
    std::string pointer = "/";
    for (char c : rest) pointer += c == '.' ? '/' : c;
    json value;
    try {
      value = json::parse(ov.value);
    } catch (const json::parse_error&) {
      value = ov.value;  // bare strings are convenient on a command line
    }
    try {
      doc[json::json_pointer(pointer)] = value;
    } catch (const json::exception& e) {
      throw ConfigError("cannot apply override \"" + ov.path + "\": " + e.what());
    }
  }
}

/**
 * @brief By-name resolver over a configs directory tree:
 *        params/<ref>.json, profiles/<ref>.json, scenarios/<ref>.json,
 *        experiments/<ref>.json. A ref that is an existing .json path is
 *        loaded directly.
 */
class ConfigStore {
 public:
  explicit ConfigStore(std::string root, std::vector<Override> overrides = {})
      : root_(std::move(root)), overrides_(std::move(overrides)) {}

  const std::string& root() const { return root_; }

  MachineParams load_params(const std::string& ref) const {
    json j = load_doc("params", ref);
    apply_overrides(j, overrides_, "params");
    return params_from_json(j, "params \"" + ref + "\"");
  }

  NoiseProfile load_profile(const std::string& ref) const {
    json j = load_doc("profiles", ref);
    apply_overrides(j, overrides_, "profile");
    return profile_from_json(j, base_name(ref), "profile \"" + ref + "\"");
  }

  Scenario load_scenario(const std::string& ref) const {
    json j = load_doc("scenarios", ref);
    apply_overrides(j, overrides_, "scenario");
    return scenario_from_json(j, base_name(ref), "scenario \"" + ref + "\"");
  }

  ExperimentConfig load_experiment(const std::string& ref) const {
    json j = load_doc("experiments", ref);
    apply_overrides(j, overrides_, "");
    return experiment_from_json(j, base_name(ref), "experiment \"" + ref + "\"");
  }

 private:
  static std::string base_name(const std::string& ref) {
    return std::filesystem::path(ref).stem().string();
  }

  json load_doc(const std::string& kind, const std::string& ref) const {
    namespace fs = std::filesystem;
    if (ref.size() > 5 && ref.substr(ref.size() - 5) == ".json" && fs::exists(ref))
      return parse_json_file(ref);
    const fs::path candidate = fs::path(root_) / kind / (ref + ".json");
    if (!fs::exists(candidate))
      throw ConfigError("unknown " + kind.substr(0, kind.size() - 1) + " reference \"" + ref +
                        "\" (looked for " + candidate.string() + ")");
    return parse_json_file(candidate.string());
  }

  std::string root_;
  std::vector<Override> overrides_;
};

}  // namespace dsekit
