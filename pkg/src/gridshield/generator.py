"""Gas-turbine generator: prime-mover and stator dynamics, PI speed control,
and an adaptive terminal-voltage controller that learns the electrical
parameters online.

Conventions
-----------
* The PI loop acts on (omega_ref - omega) with positive gains; negative
  feedback written the stabilizing way round.
* The adaptive loop internally estimates unit-scaled parameters
  phi = diag(nominal)^-1 theta so a single scalar adaptation gain covers
  parameter components that differ by orders of magnitude; theta_hat is
  always exposed in physical units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dq import DqVector, apply_j, dot
from .errors import SpeedNearZero, ValidationError
from ._linstep import affine_step_c2

#: Electrical speed below which the torque model is considered invalid.
OMEGA_FLOOR = 1.0


@dataclass
class GeneratorParams:
    """Physical parameters and controller gains for one generator unit.

    tau: rotor inertia [kg m^2]; damping: mechanical damping
    r, l, c: stator resistance [ohm], inductance [H], terminal capacitance [F]
    poles: pole count (even, >= 2)
    k_p, k_i: PI speed-loop gains (positive; act on omega_ref - omega)
    k: voltage-loop gain; alpha: error-filter coefficient
    gamma: adaptation gain; k1: derivative-filter gain
    t_max: mechanical torque ceiling [N m] (actuator limit)
    """

    tau: float
    damping: float
    r: float
    l: float
    c: float
    poles: int
    k_p: float
    k_i: float
    k: float
    alpha: float
    gamma: float
    k1: float
    t_max: float = math.inf

    def __post_init__(self):
        for name in ("tau", "l", "c", "gamma", "k", "alpha", "k1"):
            if getattr(self, name) <= 0.0:
                raise ValidationError(f"generator parameter {name} must be > 0")
        if self.r < 0.0 or self.damping < 0.0:
            raise ValidationError("r and damping must be >= 0")
        if self.poles < 2 or self.poles % 2 != 0:
            raise ValidationError("poles must be an even integer >= 2")

    def theta_true(self) -> np.ndarray:
        """Physical parameter vector [r, l, l*c] entering the regressor."""
        return np.array([self.r, self.l, self.l * self.c])

    def theta_scale(self) -> np.ndarray:
        """Per-component scaling used by the adaptation (nominal magnitudes)."""
        return np.array([s if s > 0.0 else 1.0 for s in self.theta_true()])


@dataclass
class GeneratorState:
    omega_m: float
    i: DqVector
    v_c: DqVector
    pi_integral: float = 0.0
    theta_hat: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v_f: DqVector = field(default_factory=lambda: DqVector(0.0, 0.0))


@dataclass
class GeneratorReferences:
    omega_ref: float
    v_c_ref: DqVector
    i_ref: DqVector = field(default_factory=lambda: DqVector(0.0, 0.0))

    def __post_init__(self):
        if self.omega_ref <= 0.0:
            raise ValidationError("omega_ref must be > 0")


def speed_reference(frequency_hz: float, poles: int) -> float:
    """Mechanical speed reference for a target grid frequency: 4*pi*f/poles."""
    return 4.0 * math.pi * frequency_hz / poles


def electrical_speed(state: GeneratorState, params: GeneratorParams) -> float:
    """omega_e = poles * omega_m / 2."""
    return params.poles * state.omega_m / 2.0


def electrical_torque(v_c: DqVector, i: DqVector, omega_e: float) -> float:
    """T_e = (v_c . i) / omega_e; invalid near standstill."""
    if abs(omega_e) <= OMEGA_FLOOR:
        raise SpeedNearZero(f"|omega_e|={abs(omega_e):.3f} <= {OMEGA_FLOOR}")
    return dot(v_c, i) / omega_e


def pi_speed_control(state: GeneratorState, refs: GeneratorReferences,
                     params: GeneratorParams, t_e: float, dt: float) -> tuple[float, float]:
    """One PI update: returns (commanded torque, advanced integral).

    The electrical torque is fed forward; the output is clamped to
    [0, t_max] with conditional integration so the integral does not wind up
    against the actuator limit.
    """
    err = refs.omega_ref - state.omega_m
    integral_next = state.pi_integral + err * dt
    t_raw = t_e + params.k_p * err + params.k_i * integral_next
    t_m = min(max(t_raw, 0.0), params.t_max)
    if t_m != t_raw:
        integral_next = state.pi_integral
        t_m = min(max(t_e + params.k_p * err + params.k_i * integral_next, 0.0), params.t_max)
    return t_m, integral_next


def mechanical_derivative(state: GeneratorState, params: GeneratorParams,
                          t_m: float, t_e: float) -> float:
    """Prime-mover acceleration: (-damping*omega + T_m - T_e) / tau."""
    return (-params.damping * state.omega_m + t_m - t_e) / params.tau


def electrical_derivatives(state: GeneratorState, params: GeneratorParams,
                           v: DqVector, i_r: DqVector) -> tuple[DqVector, DqVector]:
    """Stator and capacitor dynamics for control input v and outflow i_r."""
    omega_e = electrical_speed(state, params)
    i, v_c = state.i, state.v_c
    ji = apply_j(i)
    jv = apply_j(v_c)
    di = DqVector(
        (-params.r * i.d + params.l * omega_e * ji.d + v.d - v_c.d) / params.l,
        (-params.r * i.q + params.l * omega_e * ji.q + v.q - v_c.q) / params.l,
    )
    dv = DqVector(
        (i.d - i_r.d) / params.c + omega_e * jv.d,
        (i.q - i_r.q) / params.c + omega_e * jv.q,
    )
    return di, dv


def filtered_error(v_c_err: DqVector, v_c_err_dot: DqVector, alpha: float) -> DqVector:
    """eta = d(verr)/dt + alpha * verr."""
    if alpha <= 0.0:
        raise ValidationError("alpha must be > 0")
    return DqVector(v_c_err_dot.d + alpha * v_c_err.d,
                    v_c_err_dot.q + alpha * v_c_err.q)


def derivative_filter_step(v_f: DqVector, v_c_err: DqVector, k1: float,
                           dt: float) -> tuple[DqVector, DqVector]:
    """High-gain derivative filter, advanced one step.

    State dynamics v_f' = -k1 v_f - k1^2 verr are integrated with the exact
    exponential update (the pole -k1 is typically at or beyond the sampling
    rate); the derivative estimate is v_f + k1 verr.
    """
    if k1 <= 0.0 or dt <= 0.0:
        raise ValidationError("k1 and dt must be > 0")
    decay = math.exp(-k1 * dt)
    new_f = DqVector(decay * v_f.d + (1.0 - decay) * (-k1 * v_c_err.d),
                     decay * v_f.q + (1.0 - decay) * (-k1 * v_c_err.q))
    estimate = DqVector(new_f.d + k1 * v_c_err.d, new_f.q + k1 * v_c_err.q)
    return new_f, estimate


def regressor(i: DqVector, i_r: DqVector, v_c: DqVector, omega_e: float,
              alpha: float) -> np.ndarray:
    """2x3 measurement matrix Y such that Y @ [r, l, l*c] equals the drift of
    the filtered voltage-error dynamics."""
    ji = apply_j(i)
    jir = apply_j(i_r)
    jv = apply_j(v_c)
    col1 = (-i.d, -i.q)
    col2 = (2.0 * omega_e * ji.d - omega_e * jir.d + alpha * (i.d - i_r.d),
            2.0 * omega_e * ji.q - omega_e * jir.q + alpha * (i.q - i_r.q))
    col3 = (-omega_e ** 2 * v_c.d + alpha * omega_e * jv.d,
            -omega_e ** 2 * v_c.q + alpha * omega_e * jv.q)
    return np.array([[col1[0], col2[0], col3[0]],
                     [col1[1], col2[1], col3[1]]])


def adaptive_voltage_control(eta: DqVector, y: np.ndarray, theta_hat: np.ndarray,
                             v_c_ref: DqVector, k: float) -> DqVector:
    """Control voltage v = -Y theta_hat - k eta + v_ref."""
    if k <= 0.0:
        raise ValidationError("k must be > 0")
    ff = y @ np.asarray(theta_hat)
    return DqVector(-ff[0] - k * eta.d + v_c_ref.d,
                    -ff[1] - k * eta.q + v_c_ref.q)


def parameter_update_derivative(y: np.ndarray, eta: DqVector, gamma: float) -> np.ndarray:
    """Gradient estimator dynamics: theta_hat' = gamma * Y^T eta."""
    if gamma <= 0.0:
        raise ValidationError("gamma must be > 0")
    return gamma * (y.T @ np.array([eta.d, eta.q]))


def closed_loop_complex(th1: float, th2: float, th3: float, k: float, alpha: float,
                        omega_e: float, r: float, l: float, c: float,
                        z_ir: complex, z_ref: complex):
    """Complex-plane closed loop of the electrical states under the adaptive law.

    With z = x_d - j x_q the rotation operator becomes multiplication by j and
    the four real electrical states collapse to (z_i, z_vc) obeying
    z' = M z + w with M, w constant while omega_e, theta_hat and the
    references are held. Returns (m11, m12, m21, m22, w1, w2).
    """
    a_i = th1 - th2 * (alpha + 2j * omega_e) - k / c
    a_c = th3 * (omega_e * omega_e - 1j * alpha * omega_e) - k * (1j * omega_e + alpha)
    b = th2 * z_ir * (alpha + 1j * omega_e) + (k / c) * z_ir + (k * alpha + 1.0) * z_ref
    m11 = (-r + a_i) / l + 1j * omega_e
    m12 = (a_c - 1.0) / l
    m21 = 1.0 / c
    m22 = 1j * omega_e
    return m11, m12, m21, m22, b / l, -z_ir / c


def simulate_voltage_loop(params: GeneratorParams, refs: GeneratorReferences,
                          i0: DqVector, v_c0: DqVector, theta_hat0: np.ndarray,
                          omega_e: float, dt: float, n_steps: int,
                          adapt_with_filter: bool = False) -> dict:
    """Standalone electrical-loop simulation at pinned electrical speed.

    Integrates the closed loop exactly per step and the parameter estimate
    with explicit Euler; used to check the Lyapunov certificate of the
    adaptive design numerically. Returns sampled series including
    V = (cl/2)||eta||^2 + (1/2 gamma)||phi_err||^2 + (1/2)||verr||^2, the
    energy in the scaled parameter coordinates the controller adapts in.
    """
    scale = params.theta_scale()
    phi_true = params.theta_true() / scale
    phi_hat = np.asarray(theta_hat0, dtype=float) / scale
    k, alpha, gamma, cl = params.k, params.alpha, params.gamma, params.c * params.l
    z_i = complex(i0.d, -i0.q)
    z_c = complex(v_c0.d, -v_c0.q)
    z_r = complex(refs.i_ref.d, -refs.i_ref.q)
    z_ref = complex(refs.v_c_ref.d, -refs.v_c_ref.q)
    vf_d = vf_q = 0.0

    out = {"t": [], "V": [], "eta_norm": [], "verr_norm": [], "theta_hat": []}
    for n in range(n_steps + 1):
        i = DqVector(z_i.real, -z_i.imag)
        v_c = DqVector(z_c.real, -z_c.imag)
        verr = v_c - refs.v_c_ref
        dv = DqVector((i.d - refs.i_ref.d) / params.c + omega_e * v_c.q,
                      (i.q - refs.i_ref.q) / params.c - omega_e * v_c.d)
        eta = filtered_error(verr, dv, alpha)
        phi_err = phi_true - phi_hat
        v_lyap = (0.5 * cl * (eta.d ** 2 + eta.q ** 2)
                  + 0.5 / gamma * float(phi_err @ phi_err)
                  + 0.5 * (verr.d ** 2 + verr.q ** 2))
        out["t"].append(n * dt)
        out["V"].append(v_lyap)
        out["eta_norm"].append(eta.norm())
        out["verr_norm"].append(verr.norm())
        out["theta_hat"].append(phi_hat * scale)
        if n == n_steps:
            break

        y_scaled = regressor(i, refs.i_ref, v_c, omega_e, alpha) * scale
        if adapt_with_filter:
            new_f, est = derivative_filter_step(DqVector(vf_d, vf_q), verr, params.k1, dt)
            vf_d, vf_q = new_f.d, new_f.q
            eta_adapt = DqVector(est.d + alpha * verr.d, est.q + alpha * verr.q)
        else:
            eta_adapt = eta
        dphi = parameter_update_derivative(y_scaled, eta_adapt, gamma)

        th = phi_hat * scale
        m11, m12, m21, m22, w1, w2 = closed_loop_complex(
            th[0], th[1], th[2], k, alpha, omega_e, params.r, params.l, params.c, z_r, z_ref)
        z_i, z_c = affine_step_c2(m11, m12, m21, m22, w1, w2, z_i, z_c, dt)
        phi_hat = phi_hat + dt * dphi

    for key in ("t", "V", "eta_norm", "verr_norm"):
        out[key] = np.array(out[key])
    out["theta_hat"] = np.array(out["theta_hat"])
    return out
