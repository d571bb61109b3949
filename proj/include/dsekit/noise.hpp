#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "dsekit/errors.hpp"
#include "dsekit/prng.hpp"

namespace dsekit {

// ---------------------------------------------------------------------------
// Channel description types
// ---------------------------------------------------------------------------

enum class NoiseFamily { gaussian, gaussian_biased, laplace, cauchy };

/// Units a channel's loc/scale are written in; conversion into the series'
/// native units happens where the noise is applied, never inside samplers.
enum class NoiseUnits { degrees, pu_fraction };

/**
 * @brief One channel's ambient-noise description.
 *
 * loc/scale are family-specific: mean/std for the Gaussian variants,
 * median/diversity for Laplace, location/half-width for Cauchy.
 */
struct NoiseSpec {
  NoiseFamily family = NoiseFamily::gaussian;
  double loc = 0.0;
  double scale = 1.0;
  NoiseUnits units = NoiseUnits::degrees;
};

inline void validate(const NoiseSpec& spec) {
  if (!(spec.scale > 0.0)) throw ConfigError("noise spec: scale must be > 0");
}

enum class BadDataMode { add, replace };

/** One burst of gross errors: `count` consecutive samples from start_time. */
struct BadDataEvent {
  double start_time = 0.0;  ///< seconds
  int count = 1;            ///< consecutive corrupted samples
  double magnitude = 20.0;  ///< multiple of the channel's nominal sigma
  BadDataMode mode = BadDataMode::add;
};

struct BadDataSchedule {
  std::vector<BadDataEvent> events;
};

inline void validate(const BadDataSchedule& schedule) {
  for (const BadDataEvent& e : schedule.events) {
    if (!(e.start_time >= 0.0)) throw ConfigError("bad-data event: start_time must be >= 0");
    if (e.count < 1) throw ConfigError("bad-data event: count must be >= 1");
  }
}

/** Ambient noise plus gross-error schedule for one measurement channel. */
struct ChannelNoise {
  NoiseSpec spec;
  BadDataSchedule schedule;
};

/**
 * @brief Complete per-channel noise description of one experiment.
 *
 * Each channel consumes its own independently seeded substream derived from
 * master_seed, the run seed, and the channel tag below.
 */
struct NoiseProfile {
  std::string name;
  std::uint64_t master_seed = 0;
  ChannelNoise delta_z;
  ChannelNoise omega_z;
  ChannelNoise Ut;
  ChannelNoise phi;
};

/// Channel tags feeding channel_stream (fixed, part of the on-disk contract).
inline constexpr std::uint64_t kChannelDeltaZ = 0;
inline constexpr std::uint64_t kChannelOmegaZ = 1;
inline constexpr std::uint64_t kChannelUt = 2;
inline constexpr std::uint64_t kChannelPhi = 3;

// ---------------------------------------------------------------------------
// String forms (config files, docs, report labels)
// ---------------------------------------------------------------------------

inline const char* to_string(NoiseFamily f) {
  switch (f) {
    case NoiseFamily::gaussian: return "gaussian";
    case NoiseFamily::gaussian_biased: return "gaussian_biased";
    case NoiseFamily::laplace: return "laplace";
    case NoiseFamily::cauchy: return "cauchy";
  }
  return "gaussian";
}

inline NoiseFamily family_from_string(const std::string& s) {
  if (s == "gaussian") return NoiseFamily::gaussian;
  if (s == "gaussian_biased" || s == "gaussian-biased") return NoiseFamily::gaussian_biased;
  if (s == "laplace") return NoiseFamily::laplace;
  if (s == "cauchy") return NoiseFamily::cauchy;
  throw ConfigError("unknown noise family \"" + s + "\"");
}

inline const char* to_string(NoiseUnits u) {
  return u == NoiseUnits::degrees ? "deg" : "pu_fraction";
}

inline NoiseUnits units_from_string(const std::string& s) {
  if (s == "deg" || s == "degrees") return NoiseUnits::degrees;
  if (s == "pu_fraction" || s == "pu-fraction") return NoiseUnits::pu_fraction;
  throw ConfigError("unknown noise units \"" + s + "\"");
}

inline const char* to_string(BadDataMode m) { return m == BadDataMode::add ? "add" : "replace"; }

inline BadDataMode bad_data_mode_from_string(const std::string& s) {
  if (s == "add") return BadDataMode::add;
  if (s == "replace") return BadDataMode::replace;
  throw ConfigError("unknown bad-data mode \"" + s + "\"");
}

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

/**
 * @brief Draw from N(loc, scale²) via the Box-Muller cosine transform.
 *
 * Consumes exactly two uniforms per call (no cached second branch), so the
 * stream position after k draws is identical on every platform.
 */
inline double gaussian_sample(double loc, double scale, SplitMix64& stream) {
  const double u1 = stream.next_open01();
  const double u2 = stream.next_open01();
  return loc + scale * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/**
 * @brief Laplace(m, s) draw: m − s·sgn(U)·ln(1 − |U|), U uniform on (−1, 1).
 *
 * The uniform never hits 0 or ±1 exactly (odd-numerator construction), so
 * both sgn and the logarithm are well defined. Consumes one uniform.
 */
inline double laplace_sample(double m, double s, SplitMix64& stream) {
  const double u = stream.next_symmetric_open();
  return m - s * std::copysign(1.0, u) * std::log(1.0 - std::fabs(u));
}

/**
 * @brief Cauchy(a, b) draw: a + b·tan(π·(U − 0.5)), U uniform on (0, 1).
 *
 * The open-interval uniform cannot produce the degenerate endpoints (or an
 * exact 0.5), so the tangent stays finite. Consumes one uniform.
 */
inline double cauchy_sample(double a, double b, SplitMix64& stream) {
  const double u = stream.next_open01();
  return a + b * std::tan(std::numbers::pi * (u - 0.5));
}

/** @brief Family-dispatching draw in the channel's own units. */
inline double sample_noise(const NoiseSpec& spec, SplitMix64& stream) {
  switch (spec.family) {
    case NoiseFamily::gaussian:
    case NoiseFamily::gaussian_biased:
      return gaussian_sample(spec.loc, spec.scale, stream);
    case NoiseFamily::laplace:
      return laplace_sample(spec.loc, spec.scale, stream);
    case NoiseFamily::cauchy:
      return cauchy_sample(spec.loc, spec.scale, stream);
  }
  return gaussian_sample(spec.loc, spec.scale, stream);
}

/**
 * @brief Channel accuracy in the channel's units, used to size gross errors.
 *
 * Gaussian: the standard deviation itself. Laplace: the standard deviation
 * s·√2 implied by the diversity s. Cauchy: no finite std exists, so the
 * scale parameter b stands in.
 */
inline double nominal_sigma(const NoiseSpec& spec) {
  return spec.family == NoiseFamily::laplace ? spec.scale * std::numbers::sqrt2 : spec.scale;
}

// ---------------------------------------------------------------------------
// Series corruption
// ---------------------------------------------------------------------------

/// How a sampled deviation (in spec units) maps onto the clean series.
enum class ApplyMode {
  add_radians,   ///< deviation is in degrees; convert and add (angle channels)
  add_absolute,  ///< deviation is already in the series' units; add
  relative       ///< deviation is a fraction: x → x·(1 + deviation)
};

/**
 * @brief Ambient noise plus scheduled gross errors over a whole series.
 *
 * Every sample draws its ambient deviation from the stream (a replaced
 * sample discards the draw), so add/replace schedules and schedule-free
 * runs stay sample-aligned on the same stream. Gross errors deviate by
 * magnitude·nominal_sigma in spec units: `add` stacks the deviation on the
 * ambient noise, `replace` substitutes it for the ambient noise.
 *
 * @param nominal_sigma channel accuracy in spec units (see nominal_sigma())
 * @param dt sample period (s), used to place events on the grid
 * @throws ScheduleOutOfRange if an event starts beyond the series end or
 *         its `count` samples run past it
 */
inline std::vector<double> corrupt_series(const std::vector<double>& clean, const NoiseSpec& spec,
                                          const BadDataSchedule& schedule, double nominal_sigma,
                                          ApplyMode mode, double dt, SplitMix64& stream) {
  validate(spec);
  validate(schedule);
  if (!(dt > 0.0)) throw ConfigError("corrupt_series: dt must be > 0");
  const bool degree_spec = spec.units == NoiseUnits::degrees;
  if (mode == ApplyMode::add_radians ? !degree_spec : degree_spec)
    throw ConfigError("noise units \"" + std::string(to_string(spec.units)) +
                      "\" do not match the channel's application mode");

  const std::size_t n = clean.size();
  std::vector<double> spike(n, 0.0);
  std::vector<char> replaced(n, 0);
  for (const BadDataEvent& e : schedule.events) {
    const long long first = std::llround(e.start_time / dt);
    if (first < 0 || static_cast<std::size_t>(first) >= n)
      throw ScheduleOutOfRange("bad-data event at t=" + std::to_string(e.start_time) +
                               " starts beyond the series end");
    if (static_cast<std::size_t>(first) + static_cast<std::size_t>(e.count) > n)
      throw ScheduleOutOfRange("bad-data event at t=" + std::to_string(e.start_time) +
                               " runs past the series end");
    for (int k = 0; k < e.count; ++k) {
      const std::size_t i = static_cast<std::size_t>(first) + static_cast<std::size_t>(k);
      if (e.mode == BadDataMode::add) {
        spike[i] += e.magnitude * nominal_sigma;
      } else {
        replaced[i] = 1;
        spike[i] = e.magnitude * nominal_sigma;
      }
    }
  }

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double ambient = sample_noise(spec, stream);
    const double deviation = replaced[i] ? spike[i] : ambient + spike[i];
    switch (mode) {
      case ApplyMode::add_radians:
        out[i] = clean[i] + deviation * std::numbers::pi / 180.0;
        break;
      case ApplyMode::add_absolute:
        out[i] = clean[i] + deviation;
        break;
      case ApplyMode::relative:
        out[i] = clean[i] * (1.0 + deviation);
        break;
    }
  }
  return out;
}

}  // namespace dsekit
