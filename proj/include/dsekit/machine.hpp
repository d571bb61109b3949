#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "dsekit/errors.hpp"
#include "dsekit/filter.hpp"
#include "dsekit/matrix.hpp"

namespace dsekit {

/// Electrical base angular frequency of a 50 Hz system (rad/s).
inline constexpr double kOmegaBase = 2.0 * std::numbers::pi * 50.0;

/// Default integration/sampling step (s).
inline constexpr double kDefaultStepSeconds = 0.02;

inline constexpr double kDegToRad = std::numbers::pi / 180.0;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/**
 * @brief Two-axis transient-model constants of one synchronous generator.
 *
 * Time constants in seconds, reactances in per-unit on the machine base.
 */
struct MachineParams {
  double T_J = 0.0;    ///< inertia constant (s)
  double D = 0.0;      ///< damping coefficient (pu)
  double T_d0p = 0.0;  ///< d-axis transient open-circuit time constant (s)
  double T_q0p = 0.0;  ///< q-axis transient open-circuit time constant (s)
  double X_d = 0.0;    ///< d-axis synchronous reactance (pu)
  double X_q = 0.0;    ///< q-axis synchronous reactance (pu)
  double X_dp = 0.0;   ///< d-axis transient reactance (pu)
  double X_qp = 0.0;   ///< q-axis transient reactance (pu)
};

/** @brief Throw ConfigError unless the parameter set is physically valid. */
inline void validate(const MachineParams& p) {
  auto fail = [](const std::string& what) { throw ConfigError("machine params: " + what); };
  if (!(p.T_J > 0.0)) fail("T_J must be > 0");
  if (!(p.D >= 0.0)) fail("D must be >= 0");
  if (!(p.T_d0p > 0.0)) fail("T_d0p must be > 0");
  if (!(p.T_q0p > 0.0)) fail("T_q0p must be > 0");
  if (!(p.X_dp > 0.0)) fail("X_dp must be > 0");
  if (!(p.X_qp > 0.0)) fail("X_qp must be > 0");
  if (!(p.X_d >= p.X_dp)) fail("X_d must be >= X_dp");
  if (!(p.X_q >= p.X_qp)) fail("X_q must be >= X_qp");
}

/** Dynamic state: rotor angle (rad), speed (pu), transient EMFs (pu). */
struct GeneratorState {
  double delta = 0.0;
  double omega = 1.0;
  double E_dp = 0.0;
  double E_qp = 0.0;
};

/** Exogenous drive: mechanical torque, field EMF, terminal voltage phasor. */
struct ExogenousInput {
  double T_m = 0.0;  ///< mechanical torque (pu)
  double E_f = 0.0;  ///< field EMF (pu)
  double U_t = 1.0;  ///< terminal voltage magnitude (pu)
  double phi = 0.0;  ///< terminal voltage phase (rad)
};

/** Sensor-side vector: rotor angle (rad), speed (pu), electrical power (pu). */
struct MeasurementVector {
  double delta_z = 0.0;
  double omega_z = 0.0;
  double P_e_z = 0.0;
};

inline Vec to_vec(const GeneratorState& x) { return Vec::of({x.delta, x.omega, x.E_dp, x.E_qp}); }
inline Vec to_vec(const ExogenousInput& u) { return Vec::of({u.T_m, u.E_f, u.U_t, u.phi}); }
inline Vec to_vec(const MeasurementVector& z) { return Vec::of({z.delta_z, z.omega_z, z.P_e_z}); }

inline GeneratorState state_from_vec(const Vec& v) { return {v[0], v[1], v[2], v[3]}; }
inline ExogenousInput input_from_vec(const Vec& v) { return {v[0], v[1], v[2], v[3]}; }

// ---------------------------------------------------------------------------
// Algebraic relations
// ---------------------------------------------------------------------------

struct StatorCurrents {
  double I_d = 0.0;
  double I_q = 0.0;
};

/** @brief dq stator currents from the transient-reactance voltage equations. */
inline StatorCurrents stator_currents(const GeneratorState& x, const ExogenousInput& u,
                                      const MachineParams& p) {
  const double theta = x.delta - u.phi;
  return {(x.E_qp - u.U_t * std::cos(theta)) / p.X_dp,
          (u.U_t * std::sin(theta) - x.E_dp) / p.X_qp};
}

/**
 * @brief Electrical (air-gap) power in closed form.
 *
 * Algebraically identical to E_dp·I_d + E_qp·I_q + (X_qp − X_dp)·I_d·I_q with
 * the currents above; the equality is enforced by unit test.
 */
inline double electrical_power(const GeneratorState& x, const ExogenousInput& u,
                               const MachineParams& p) {
  const double theta = x.delta - u.phi;
  return (u.U_t * u.U_t / 2.0) * std::sin(2.0 * theta) * (1.0 / p.X_qp - 1.0 / p.X_dp) +
         u.U_t * std::sin(theta) * x.E_qp / p.X_dp - u.U_t * std::cos(theta) * x.E_dp / p.X_qp;
}

/** @brief Reactive power at the terminal: Q = U_q·I_d − U_d·I_q. */
inline double reactive_power(const GeneratorState& x, const ExogenousInput& u,
                             const MachineParams& p) {
  const StatorCurrents c = stator_currents(x, u, p);
  const double theta = x.delta - u.phi;
  const double u_d = u.U_t * std::sin(theta);
  const double u_q = u.U_t * std::cos(theta);
  return u_q * c.I_d - u_d * c.I_q;
}

// ---------------------------------------------------------------------------
// Dynamics
// ---------------------------------------------------------------------------

/**
 * @brief Continuous-time derivative [δ̇, ω̇, Ė_dp, Ė_qp] (per second).
 *
 * Swing equation plus the two transient-EMF decay equations; speed is in pu,
 * so the angle equation carries the base frequency to yield rad/s.
 */
inline Vec state_derivative(const GeneratorState& x, const ExogenousInput& u,
                            const MachineParams& p) {
  const StatorCurrents c = stator_currents(x, u, p);
  const double p_e = electrical_power(x, u, p);
  Vec d(4);
  d[0] = (x.omega - 1.0) * kOmegaBase;
  d[1] = (u.T_m - p_e - p.D * (x.omega - 1.0)) / p.T_J;
  d[2] = (-x.E_dp + (p.X_q - p.X_qp) * c.I_q) / p.T_q0p;
  d[3] = (u.E_f - x.E_qp - (p.X_d - p.X_dp) * c.I_d) / p.T_d0p;
  return d;
}

/** @brief One classical 4th-order Runge-Kutta step of ẋ = f(x). */
template <typename Deriv>
Vec rk4_step(const Deriv& f, const Vec& x, double h) {
  const Vec k1 = f(x);
  const Vec k2 = f(x + k1.scaled(h / 2.0));
  const Vec k3 = f(x + k2.scaled(h / 2.0));
  const Vec k4 = f(x + k3.scaled(h));
  return x + (k1 + k2.scaled(2.0) + k3.scaled(2.0) + k4).scaled(h / 6.0);
}

/**
 * @brief Discrete one-step transition: RK4 with the input held constant.
 *
 * @throws NonFiniteState if the step produces NaN/inf (integration blow-up).
 */
inline GeneratorState transition(const GeneratorState& x, const ExogenousInput& u,
                                 const MachineParams& p, double h) {
  auto f = [&](const Vec& v) { return state_derivative(state_from_vec(v), u, p); };
  const Vec next = rk4_step(f, to_vec(x), h);
  if (!next.all_finite())
    throw NonFiniteState("generator transition produced a non-finite state");
  return state_from_vec(next);
}

/** @brief Noise-free sensor map: angle and speed pass through, power derived. */
inline MeasurementVector measurement(const GeneratorState& x, const ExogenousInput& u,
                                     const MachineParams& p) {
  return {x.delta, x.omega, electrical_power(x, u, p)};
}

// ---------------------------------------------------------------------------
// Noise covariance construction
// ---------------------------------------------------------------------------

struct PowerPartials {
  double dPe_dUt = 0.0;
  double dPe_dphi = 0.0;
};

/** @brief Analytic sensitivities of electrical power to U_t and φ. */
inline PowerPartials power_partials(const GeneratorState& x, const ExogenousInput& u,
                                    const MachineParams& p) {
  const double theta = x.delta - u.phi;
  const double saliency = 1.0 / p.X_qp - 1.0 / p.X_dp;
  const double d_ut = u.U_t * std::sin(2.0 * theta) * saliency +
                      std::sin(theta) * x.E_qp / p.X_dp - std::cos(theta) * x.E_dp / p.X_qp;
  // ∂/∂φ = −∂/∂θ since power depends on the angles only through θ = δ − φ.
  const double d_theta = u.U_t * u.U_t * std::cos(2.0 * theta) * saliency +
                         u.U_t * std::cos(theta) * x.E_qp / p.X_dp +
                         u.U_t * std::sin(theta) * x.E_dp / p.X_qp;
  return {d_ut, -d_theta};
}

/**
 * @brief PMU measurement-noise covariance, 3×3 diagonal.
 *
 * Angle and speed channels carry fixed variances ((2°)² rad² and 1e-6);
 * the power channel propagates voltage-magnitude and phase uncertainty
 * through the analytic power sensitivities at the given operating point.
 *
 * @param sigma_Ut relative magnitude error (fraction of U_t)
 * @param sigma_phi phase error (rad)
 */
inline SymMatrix measurement_noise_R(const GeneratorState& x, const ExogenousInput& u,
                                     const MachineParams& p, double sigma_Ut, double sigma_phi) {
  const PowerPartials g = power_partials(x, u, p);
  const double s_mag = sigma_Ut * u.U_t;
  const double var_pe = g.dPe_dUt * g.dPe_dUt * s_mag * s_mag +
                        g.dPe_dphi * g.dPe_dphi * sigma_phi * sigma_phi;
  SymMatrix r(3);
  r.set(0, 0, (2.0 * kDegToRad) * (2.0 * kDegToRad));
  r.set(1, 1, 1e-6);
  r.set(2, 2, var_pe);
  return r;
}

/**
 * @brief Process-noise covariance, 4×4 diagonal, from input uncertainty.
 *
 * Each diagonal entry propagates the U_t and φ errors through the one-step
 * transition by central finite differences (the step has no closed form).
 *
 * @param stencil_rel finite-difference half-width, relative for U_t and in
 *        radians for φ; exposed so an independent stencil can cross-check.
 */
inline SymMatrix process_noise_Q(const GeneratorState& x, const ExogenousInput& u,
                                 const MachineParams& p, double h, double sigma_Ut,
                                 double sigma_phi, double stencil_rel = 1e-6) {
  const double du = stencil_rel * u.U_t;
  const double dphi = stencil_rel;

  ExogenousInput up = u, um = u;
  up.U_t += du;
  um.U_t -= du;
  const Vec f_up = to_vec(transition(x, up, p, h));
  const Vec f_um = to_vec(transition(x, um, p, h));

  up = u;
  um = u;
  up.phi += dphi;
  um.phi -= dphi;
  const Vec f_pp = to_vec(transition(x, up, p, h));
  const Vec f_pm = to_vec(transition(x, um, p, h));

  const double s_mag = sigma_Ut * u.U_t;
  SymMatrix q(4);
  for (int i = 0; i < 4; ++i) {
    const double d_ut = (f_up[i] - f_um[i]) / (2.0 * du);
    const double d_phi = (f_pp[i] - f_pm[i]) / (2.0 * dphi);
    q.set(i, i, d_ut * d_ut * s_mag * s_mag + d_phi * d_phi * sigma_phi * sigma_phi);
  }
  return q;
}

// ---------------------------------------------------------------------------
// Equilibrium
// ---------------------------------------------------------------------------

struct EquilibriumOptions {
  double Q_target = 0.0;    ///< terminal reactive power at the operating point (pu)
  double tol = 1e-13;       ///< infinity-norm residual tolerance
  int max_iter = 100;       ///< Newton iteration budget
  bool cold_start = false;  ///< skip the phasor-diagram initial guess
};

struct Equilibrium {
  GeneratorState state;
  double T_m = 0.0;
  double E_f = 0.0;
};

/**
 * @brief Steady operating point delivering (P_target, Q_target) at U_t∠φ.
 *
 * Solves the reduced system in (δ, E_dp, E_qp) — d-axis EMF equation at
 * rest, active-power match, reactive-power match — by damped Newton from a
 * phasor-diagram construction that is already exact up to rounding; T_m and
 * E_f are then chosen so all four state derivatives vanish identically.
 *
 * @throws NoConvergence if the residual stays above tolerance after the
 *         iteration budget (infeasible operating point or crippled start).
 */
inline Equilibrium solve_equilibrium(const ExogenousInput& u, const MachineParams& p,
                                     double P_target, const EquilibriumOptions& opt = {}) {
  auto residual = [&](const Vec& y) {
    const GeneratorState x{y[0], 1.0, y[1], y[2]};
    const StatorCurrents c = stator_currents(x, u, p);
    Vec g(3);
    g[0] = -y[1] + (p.X_q - p.X_qp) * c.I_q;
    g[1] = electrical_power(x, u, p) - P_target;
    g[2] = reactive_power(x, u, p) - opt.Q_target;
    return g;
  };

  Vec y(3);
  if (opt.cold_start) {
    y[0] = u.phi;
    y[1] = 0.0;
    y[2] = u.U_t;
  } else {
    // Locate the q axis from the voltage phasor and X_q, then project the
    // terminal current onto dq and back out the transient EMFs.
    const std::complex<double> v = std::polar(u.U_t, u.phi);
    const std::complex<double> i = std::conj(std::complex<double>(P_target, opt.Q_target) / v);
    const double delta = std::arg(v + std::complex<double>(0.0, p.X_q) * i);
    const double theta = delta - u.phi;
    const double i_d = std::abs(i) * std::sin(delta - std::arg(i));
    const double i_q = std::abs(i) * std::cos(delta - std::arg(i));
    y[0] = delta;
    y[1] = u.U_t * std::sin(theta) - p.X_qp * i_q;
    y[2] = u.U_t * std::cos(theta) + p.X_dp * i_d;
  }

  Vec g = residual(y);
  for (int it = 0; it < opt.max_iter && g.inf_norm() > opt.tol; ++it) {
    Mat jac(3, 3);
    for (int j = 0; j < 3; ++j) {
      const double step = 1e-7 * std::max(1.0, std::fabs(y[j]));
      Vec yp = y, ym = y;
      yp[j] += step;
      ym[j] -= step;
      const Vec gp = residual(yp);
      const Vec gm = residual(ym);
      for (int i = 0; i < 3; ++i) jac(i, j) = (gp[i] - gm[i]) / (2.0 * step);
    }
    const Vec dy = solve_linear(jac, g.scaled(-1.0));
    // Backtrack until the residual improves (or the step bottoms out).
    double t = 1.0;
    Vec y_next = y + dy;
    Vec g_next = residual(y_next);
    for (int bt = 0; bt < 60 && g_next.inf_norm() >= g.inf_norm() && g_next.inf_norm() > opt.tol;
         ++bt) {
      t /= 2.0;
      y_next = y + dy.scaled(t);
      g_next = residual(y_next);
    }
    y = y_next;
    g = g_next;
  }
  if (g.inf_norm() > opt.tol)
    throw NoConvergence("equilibrium solve stalled at residual " +
                        std::to_string(g.inf_norm()));

  const GeneratorState x{y[0], 1.0, y[1], y[2]};
  const StatorCurrents c = stator_currents(x, u, p);
  return {x, electrical_power(x, u, p), y[2] + (p.X_d - p.X_dp) * c.I_d};
}

// ---------------------------------------------------------------------------
// Filter-facing adapter
// ---------------------------------------------------------------------------

/** Input-uncertainty levels used to build both noise covariances. */
struct PmuNoiseConfig {
  double sigma_Ut = 0.002;              ///< relative voltage-magnitude error
  double sigma_phi = 0.2 * kDegToRad;   ///< voltage-phase error (rad)
  double q_stencil_rel = 1e-6;          ///< finite-difference half-width for Q
};

/**
 * @brief Wrap the generator as a filter model.
 *
 * State vector [δ, ω, E_dp, E_qp]; input vector [T_m, E_f, U_t, φ];
 * measurement vector [δ, ω, P_e]. Both noise providers are evaluated at the
 * filter's current estimate, so covariances track the operating point.
 */
inline ModelInterface make_generator_model(const MachineParams& p, const PmuNoiseConfig& noise = {},
                                           double h = kDefaultStepSeconds) {
  validate(p);
  if (!(h > 0.0)) throw ConfigError("integration step must be > 0");
  ModelInterface m;
  m.state_dim = 4;
  m.measurement_dim = 3;
  m.transition = [p, h](const Vec& x, const Vec& u) {
    return to_vec(transition(state_from_vec(x), input_from_vec(u), p, h));
  };
  m.measurement = [p](const Vec& x, const Vec& u) {
    return to_vec(measurement(state_from_vec(x), input_from_vec(u), p));
  };
  m.process_noise = [p, h, noise](const Vec& x, const Vec& u) {
    return process_noise_Q(state_from_vec(x), input_from_vec(u), p, h, noise.sigma_Ut,
                           noise.sigma_phi, noise.q_stencil_rel);
  };
  m.measurement_noise = [p, noise](const Vec& x, const Vec& u) {
    return measurement_noise_R(state_from_vec(x), input_from_vec(u), p, noise.sigma_Ut,
                               noise.sigma_phi);
  };
  return m;
}

}  // namespace dsekit
