#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dsekit/errors.hpp"
#include "dsekit/filter.hpp"
#include "dsekit/scenario.hpp"

namespace dsekit {

// ---------------------------------------------------------------------------
// Index primitives
// ---------------------------------------------------------------------------

namespace detail {
inline void require_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b || a == 0)
    throw ConfigError(std::string(what) + ": series must be non-empty and equal-length");
}
}  // namespace detail

/**
 * @brief Estimation error normalized by the raw measurement error:
 *        √(Σ(x̂ᵢ − xᵢᵗ)² / Σ(xᵢᶻ − xᵢᵗ)²).
 *
 * Dimensionless; < 1 means the filter beats the raw sensor.
 * @throws DegenerateDenominator when measurements equal truth everywhere.
 */
inline double epsilon1(const std::vector<double>& est, const std::vector<double>& truth,
                       const std::vector<double>& meas) {
  detail::require_aligned(est.size(), truth.size(), "epsilon1");
  detail::require_aligned(meas.size(), truth.size(), "epsilon1");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double e = est[i] - truth[i];
    const double r = meas[i] - truth[i];
    num += e * e;
    den += r * r;
  }
  if (den == 0.0) throw DegenerateDenominator("epsilon1: measurements equal truth everywhere");
  return std::sqrt(num / den);
}

/**
 * @brief RMS relative estimation error: √(1/S·Σ((x̂ᵢ − xᵢᵗ)/xᵢᵗ)²).
 *
 * @throws ZeroTruthSample (with the offending index) when any truth sample
 *         is exactly zero — the relative error is undefined there.
 */
inline double epsilon2(const std::vector<double>& est, const std::vector<double>& truth) {
  detail::require_aligned(est.size(), truth.size(), "epsilon2");
  double s = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (truth[i] == 0.0) throw ZeroTruthSample(i);
    const double rel = (est[i] - truth[i]) / truth[i];
    s += rel * rel;
  }
  return std::sqrt(s / static_cast<double>(est.size()));
}

/** @brief Plain root-mean-square error in the series' own units. */
inline double rms_error(const std::vector<double>& est, const std::vector<double>& truth) {
  detail::require_aligned(est.size(), truth.size(), "rms_error");
  double s = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double e = est[i] - truth[i];
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(est.size()));
}

/**
 * @brief Relative accuracy gain of a robust run over the baseline,
 *        (1 − ε_robust/ε_baseline)·100%.
 *
 * Identical errors give exactly 0; both-zero errors are treated as equal.
 */
inline double improvement_pct(double eps_baseline, double eps_robust) {
  if (eps_baseline == 0.0) {
    if (eps_robust == 0.0) return 0.0;
    throw DegenerateDenominator("improvement_pct: baseline error is zero");
  }
  return (1.0 - eps_robust / eps_baseline) * 100.0;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/** Indices for one state variable; eps1 exists only on measured channels. */
struct VariableMetrics {
  std::string variable;
  std::optional<double> eps1;
  double eps2 = 0.0;
  double rms = 0.0;
};

struct MetricReport {
  std::vector<VariableMetrics> variables;
  std::size_t samples = 0;
};

/** One baseline-vs-robust comparison line (per variable, per index). */
struct ComparisonRow {
  std::string variable;
  std::string metric;
  double ckf = 0.0;
  double rckf = 0.0;
  double improvement = 0.0;  ///< percent
};

struct ComparisonReport {
  MetricReport ckf;
  MetricReport rckf;
  std::vector<ComparisonRow> rows;
};

namespace detail {
/// One state component of a posterior sequence as a flat series.
inline std::vector<double> state_series(const std::vector<FilterBelief>& run, int component) {
  std::vector<double> out;
  out.reserve(run.size());
  for (const FilterBelief& b : run) out.push_back(b.mean[component]);
  return out;
}

/// Drop the first `from` samples (used to align with posterior indices).
inline std::vector<double> tail(const std::vector<double>& v, std::size_t from) {
  return std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(from), v.end());
}
}  // namespace detail

/**
 * @brief Per-variable indices of one filter run against the dataset truth.
 *
 * The run holds one posterior per frame, covering dataset samples 1..N−1
 * (the seeded initial state is not an estimate and is excluded); @p warmup
 * additionally drops that many leading posteriors from every index.
 */
inline MetricReport compute_report(const std::vector<FilterBelief>& run, const Dataset& ds,
                                   std::size_t warmup = 0) {
  if (run.size() + 1 != ds.size())
    throw DataError("compute_report: run is not aligned with the dataset grid");
  if (!ds.has_measurements()) throw DataError("compute_report: dataset has no measurements");
  if (warmup >= run.size()) throw ConfigError("compute_report: warmup swallows the whole run");
  const std::size_t from = warmup;        // into the run
  const std::size_t ds_from = warmup + 1; // into the dataset columns

  MetricReport report;
  report.samples = run.size() - warmup;

  auto add = [&](const char* name, int component, const std::vector<double>& truth,
                 const std::vector<double>* meas) {
    const std::vector<double> est = detail::tail(detail::state_series(run, component), from);
    const std::vector<double> tru = detail::tail(truth, ds_from);
    VariableMetrics vm;
    vm.variable = name;
    if (meas) vm.eps1 = epsilon1(est, tru, detail::tail(*meas, ds_from));
    vm.eps2 = epsilon2(est, tru);
    vm.rms = rms_error(est, tru);
    report.variables.push_back(vm);
  };
  add("delta", 0, ds.delta_true, &ds.delta_z);
  add("omega", 1, ds.omega_true, &ds.omega_z);
  add("edp", 2, ds.edp_true, nullptr);
  add("eqp", 3, ds.eqp_true, nullptr);
  return report;
}

/**
 * @brief Side-by-side indices for a baseline and a robust run over one
 *        dataset, with improvement percentages on the measured variables.
 */
inline ComparisonReport compare_report(const std::vector<FilterBelief>& ckf_run,
                                       const std::vector<FilterBelief>& rckf_run,
                                       const Dataset& ds, std::size_t warmup = 0) {
  if (ckf_run.size() != rckf_run.size())
    throw DataError("compare_report: runs have different lengths");
  ComparisonReport report;
  report.ckf = compute_report(ckf_run, ds, warmup);
  report.rckf = compute_report(rckf_run, ds, warmup);

  for (std::size_t v = 0; v < report.ckf.variables.size(); ++v) {
    const VariableMetrics& c = report.ckf.variables[v];
    const VariableMetrics& r = report.rckf.variables[v];
    if (c.eps1 && r.eps1)
      report.rows.push_back(
          {c.variable, "eps1", *c.eps1, *r.eps1, improvement_pct(*c.eps1, *r.eps1)});
    report.rows.push_back({c.variable, "eps2", c.eps2, r.eps2, improvement_pct(c.eps2, r.eps2)});
  }
  return report;
}

}  // namespace dsekit
