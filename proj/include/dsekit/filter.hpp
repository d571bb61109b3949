#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "dsekit/errors.hpp"
#include "dsekit/matrix.hpp"

namespace dsekit {

// ---------------------------------------------------------------------------
// Model abstraction
// ---------------------------------------------------------------------------

/**
 * @brief Discrete-time stochastic model as seen by the filter.
 *
 * All four callbacks must be deterministic, reentrant functions of their
 * arguments; the noise providers may depend on the current state and input
 * (the generator model derives both covariances from the operating point).
 */
struct ModelInterface {
  int state_dim = 0;
  int measurement_dim = 0;
  /// One-step transition x_{k+1} = f(x_k, u_k).
  std::function<Vec(const Vec& x, const Vec& u)> transition;
  /// Measurement map z = h(x, u).
  std::function<Vec(const Vec& x, const Vec& u)> measurement;
  /// Process-noise covariance Q(x, u), state_dim square.
  std::function<SymMatrix(const Vec& x, const Vec& u)> process_noise;
  /// Measurement-noise covariance R(x, u), measurement_dim square.
  std::function<SymMatrix(const Vec& x, const Vec& u)> measurement_noise;
};

// ---------------------------------------------------------------------------
// Belief and frame types
// ---------------------------------------------------------------------------

/** Per-update record kept for traces: residual, its covariance, gain, weights. */
struct FilterDiagnostics {
  Vec innovation;            ///< z − ẑ
  SymMatrix innovation_cov;  ///< covariance actually used by the gain
  Mat gain;                  ///< state_dim × measurement_dim
  Vec weights;               ///< per-channel robust weights; all 1.0 when plain
};

/** Gaussian belief over the state at one step, plus optional diagnostics. */
struct FilterBelief {
  Vec mean;
  SymMatrix cov;
  int step_index = 0;
  std::optional<FilterDiagnostics> diagnostics;
};

/**
 * @brief One filtering interval: the input held over the prediction step,
 *        the input at the measurement instant, and the measurement itself.
 *
 * `u` feeds the transition (zero-order hold across the interval); `u_meas`
 * feeds the measurement map and measurement-noise model at the end of the
 * interval, where the measurement vector `z` was taken.
 */
struct FilterFrame {
  Vec u;
  Vec u_meas;
  Vec z;
};

/** Frame whose input is constant across the interval (u_meas = u). */
inline FilterFrame make_frame(const Vec& u, const Vec& z) { return FilterFrame{u, u, z}; }

// ---------------------------------------------------------------------------
// Cubature rule
// ---------------------------------------------------------------------------

/** Third-degree spherical-radial node set: 2n points, one shared weight. */
struct CubatureSet {
  std::vector<Vec> points;  ///< ±√n·e_i, the n positive axes first
  double weight;            ///< 1/(2n), identical for every point
};

/** @brief Canonical cubature nodes for dimension n (unit-Gaussian frame). */
inline CubatureSet cubature_points(int n) {
  check_dim(n);
  const double radius = std::sqrt(static_cast<double>(n));
  CubatureSet set{{}, 1.0 / (2.0 * static_cast<double>(n))};
  set.points.reserve(static_cast<std::size_t>(2 * n));
  for (int i = 0; i < n; ++i) {
    Vec p(n);
    p[i] = radius;
    set.points.push_back(p);
  }
  for (int i = 0; i < n; ++i) {
    Vec p(n);
    p[i] = -radius;
    set.points.push_back(p);
  }
  return set;
}

// ---------------------------------------------------------------------------
// Cubature Kalman filter steps
// ---------------------------------------------------------------------------

/**
 * @brief Time update: propagate the belief one step through the transition.
 *
 * Nodes are drawn from the Cholesky factor of the posterior covariance,
 * pushed through f, and re-moment-matched; the process noise is added and
 * the result symmetrized. Summation is fixed ascending by node index, so
 * outputs are bit-reproducible.
 */
inline FilterBelief predict(const FilterBelief& belief, const Vec& u, const ModelInterface& model) {
  const int n = model.state_dim;
  const Mat s = cholesky(belief.cov);
  const CubatureSet rule = cubature_points(n);

  std::vector<Vec> propagated;
  propagated.reserve(rule.points.size());
  for (const Vec& xi : rule.points) propagated.push_back(model.transition(belief.mean + s * xi, u));

  Vec mean(n);
  for (const Vec& xp : propagated) mean = mean + xp;
  mean = mean.scaled(rule.weight);

  Mat second(n, n);
  for (const Vec& xp : propagated) second = second + Mat::outer(xp, xp);
  const SymMatrix q = model.process_noise(belief.mean, u);
  const Mat cov = second.scaled(rule.weight) - Mat::outer(mean, mean) + q.as_mat();

  return FilterBelief{mean, symmetrize(cov), belief.step_index + 1, std::nullopt};
}

/**
 * @brief Measurement update on a predicted belief.
 *
 * Nodes are re-drawn from the predicted covariance, pushed through h, and
 * the innovation covariance assembled with the model's R — or with
 * @p R_override when given, which is the single substitution point the
 * robustified update uses. The gain solves P_zz·Wᵀ = P_xzᵀ against the
 * Cholesky factor of P_zz; no matrix is ever inverted explicitly.
 */
inline FilterBelief update(const FilterBelief& predicted, const Vec& u, const Vec& z,
                           const ModelInterface& model, const SymMatrix* R_override = nullptr) {
  const int n = model.state_dim;
  const int m = model.measurement_dim;
  const Mat s = cholesky(predicted.cov);
  const CubatureSet rule = cubature_points(n);

  std::vector<Vec> xs;
  std::vector<Vec> zs;
  xs.reserve(rule.points.size());
  zs.reserve(rule.points.size());
  for (const Vec& xi : rule.points) {
    Vec x = predicted.mean + s * xi;
    zs.push_back(model.measurement(x, u));
    xs.push_back(std::move(x));
  }

  Vec z_hat(m);
  for (const Vec& zp : zs) z_hat = z_hat + zp;
  z_hat = z_hat.scaled(rule.weight);

  Mat zz(m, m);
  for (const Vec& zp : zs) zz = zz + Mat::outer(zp, zp);
  const SymMatrix r = R_override ? *R_override : model.measurement_noise(predicted.mean, u);
  const SymMatrix p_zz = symmetrize(zz.scaled(rule.weight) - Mat::outer(z_hat, z_hat) + r.as_mat());

  Mat p_xz(n, m);
  for (std::size_t i = 0; i < xs.size(); ++i) p_xz = p_xz + Mat::outer(xs[i], zs[i]);
  p_xz = p_xz.scaled(rule.weight) - Mat::outer(predicted.mean, z_hat);

  // Gain W = P_xz·P_zz⁻¹ via two triangular solves per state row.
  const Mat lz = cholesky(p_zz);
  Mat gain(n, m);
  for (int i = 0; i < n; ++i) {
    const Vec w = solve_lower_transposed(lz, solve_lower(lz, p_xz.row(i)));
    for (int j = 0; j < m; ++j) gain(i, j) = w[j];
  }

  const Vec innovation = z - z_hat;
  const Vec mean = predicted.mean + gain * innovation;
  const Mat cov = predicted.cov.as_mat() - gain * p_zz.as_mat() * gain.transposed();

  FilterDiagnostics diag{innovation, p_zz, gain, Vec(m, 1.0)};
  return FilterBelief{mean, symmetrize(cov), predicted.step_index, std::move(diag)};
}

// ---------------------------------------------------------------------------
// Huber equivalent-weight robustification
// ---------------------------------------------------------------------------

/** Tuning of the robustified update. */
struct HuberConfig {
  /// Threshold on standardized residuals; sensible range [1.3, 2.0].
  double c = 1.5;
};

/**
 * @brief Standardize the innovation channel-wise: r′_i = r_i / √((P_zz)_ii).
 *
 * The diagonal of P_zz is a variance, so division is by its square root,
 * making r′ dimensionless with unit nominal variance — the scale on which
 * the threshold c is meaningful.
 */
inline Vec standardized_residuals(const Vec& innovation, const SymMatrix& p_zz) {
  Vec out(innovation.size());
  for (int i = 0; i < innovation.size(); ++i) {
    const double var = p_zz(i, i);
    if (!(var > 0.0))
      throw DegenerateVariance("innovation variance on channel " + std::to_string(i) +
                               " is not positive (" + std::to_string(var) + ")");
    out[i] = innovation[i] / std::sqrt(var);
  }
  return out;
}

/**
 * @brief Equivalent-weight matrix P̄ built from standardized residuals.
 *
 * Diagonal: P̄_ii = 1/R_ii within the threshold, else (c/|r′_i|)/R_ii.
 * Off-diagonal entries follow the same damping driven by the worse of the
 * two channels, max(|r′_i|, |r′_j|); entries where R_ij = 0 stay 0. In this
 * toolkit R is always diagonal, so the off-diagonal branch is exercised
 * only by direct unit tests.
 */
inline SymMatrix huber_weights(const Vec& r_prime, const HuberConfig& cfg, const SymMatrix& r) {
  SymMatrix pbar(r.dim());
  for (int i = 0; i < r.dim(); ++i) {
    for (int j = i; j < r.dim(); ++j) {
      const double sigma = r(i, j);
      if (i != j && sigma == 0.0) continue;
      const double worst = std::max(std::fabs(r_prime[i]), std::fabs(r_prime[j]));
      const double damp = worst <= cfg.c ? 1.0 : cfg.c / worst;
      pbar.set(i, j, damp / sigma);
    }
  }
  return pbar;
}

/**
 * @brief Corrected measurement covariance R̄ = P̄⁻¹ for diagonal R.
 *
 * Evaluated directly as R̄_ii = R_ii·max(1, |r′_i|/c) so the untouched
 * branch copies R_ii bit-for-bit (inverting 1/R_ii would re-round).
 * @p p_zz_pre is the innovation covariance computed with the unmodified R.
 */
inline SymMatrix robust_R(const Vec& innovation, const SymMatrix& p_zz_pre, const SymMatrix& r,
                          const HuberConfig& cfg) {
  const Vec r_prime = standardized_residuals(innovation, p_zz_pre);
  SymMatrix rbar(r.dim());
  for (int i = 0; i < r.dim(); ++i) {
    const double mag = std::fabs(r_prime[i]);
    rbar.set(i, i, mag <= cfg.c ? r(i, i) : r(i, i) * (mag / cfg.c));
  }
  return rbar;
}

/**
 * @brief Measurement update with Huber-corrected noise covariance.
 *
 * Runs the plain update first; if every standardized residual is within the
 * threshold, R̄ equals R and that result is returned unchanged (bit-for-bit
 * equal to the plain filter on clean data). Otherwise the update is redone
 * with R̄ substituted, and the diagnostics carry the per-channel weights
 * w_i = min(1, c/|r′_i|) from the flagging pass.
 */
inline FilterBelief robust_update(const FilterBelief& predicted, const Vec& u, const Vec& z,
                                  const ModelInterface& model, const HuberConfig& cfg = {}) {
  FilterBelief plain = update(predicted, u, z, model);
  const FilterDiagnostics& d = *plain.diagnostics;
  const Vec r_prime = standardized_residuals(d.innovation, d.innovation_cov);

  Vec weights(model.measurement_dim, 1.0);
  bool flagged = false;
  for (int i = 0; i < r_prime.size(); ++i) {
    const double mag = std::fabs(r_prime[i]);
    if (mag > cfg.c) {
      weights[i] = cfg.c / mag;
      flagged = true;
    }
  }
  if (!flagged) return plain;

  const SymMatrix r = model.measurement_noise(predicted.mean, u);
  const SymMatrix rbar = robust_R(d.innovation, d.innovation_cov, r, cfg);
  FilterBelief out = update(predicted, u, z, model, &rbar);
  out.diagnostics->weights = weights;
  return out;
}

// ---------------------------------------------------------------------------
// Sequential driver
// ---------------------------------------------------------------------------

/**
 * @brief Alternate predict/update across a frame sequence.
 *
 * Returns one posterior per frame (output length == frames length). Errors
 * raised inside a step are rethrown wrapped with that frame's index.
 */
inline std::vector<FilterBelief> run_filter(const ModelInterface& model,
                                            const FilterBelief& initial,
                                            const std::vector<FilterFrame>& frames, bool robustify,
                                            const HuberConfig& cfg = {}) {
  if (frames.empty()) throw ConfigError("run_filter requires at least one frame");
  std::vector<FilterBelief> out;
  out.reserve(frames.size());
  FilterBelief belief = initial;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const FilterFrame& frame = frames[k];
    try {
      const FilterBelief predicted = predict(belief, frame.u, model);
      belief = robustify ? robust_update(predicted, frame.u_meas, frame.z, model, cfg)
                         : update(predicted, frame.u_meas, frame.z, model);
    } catch (const Error& err) {
      throw FilterStepError(static_cast<int>(k), err);
    }
    out.push_back(belief);
  }
  return out;
}

}  // namespace dsekit
