"""Controllable AC power load: rotating-frame RL dynamics, the sliding-mode
current controller, and its finite reaching-time certificate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .dq import DqVector, apply_j
from .errors import GainTooSmall, ValidationError


@dataclass
class LoadParams:
    """r_l, l_l: load resistance [ohm] and inductance [H].
    rho: switching gain [V]; must exceed disturbance_bound.
    k: linear gain; boundary_layer: half-width of the saturation band [A]
    (0 selects the pure sign law)."""

    r_l: float
    l_l: float
    rho: float
    k: float
    disturbance_bound: float = 0.0
    boundary_layer: float = 0.0

    def __post_init__(self):
        if self.l_l <= 0.0:
            raise ValidationError("load inductance l_l must be > 0")
        if self.k <= 0.0:
            raise ValidationError("load linear gain k must be > 0")
        if self.disturbance_bound < 0.0 or self.boundary_layer < 0.0:
            raise ValidationError("disturbance_bound and boundary_layer must be >= 0")
        if self.rho <= self.disturbance_bound:
            raise ValidationError("switching gain rho must exceed the disturbance bound")


@dataclass
class LoadState:
    i_l: DqVector
    i_ref: DqVector = field(default_factory=lambda: DqVector(0.0, 0.0))


def load_derivative(state: LoadState, params: LoadParams, v_l: DqVector, v_g: DqVector,
                    omega_e: float) -> DqVector:
    """Current dynamics: l_l di/dt = -(r_l I - l_l w J) i + v_l - v_g."""
    i = state.i_l
    ji = apply_j(i)
    dd = (-params.r_l * i.d + params.l_l * omega_e * ji.d + v_l.d - v_g.d) / params.l_l
    dq = (-params.r_l * i.q + params.l_l * omega_e * ji.q + v_l.q - v_g.q) / params.l_l
    return DqVector(dd, dq)


def _sgn(x: float) -> float:
    # sign convention: sgn(0) = 0 keeps the origin an equilibrium
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


def sliding_mode_control(state: LoadState, params: LoadParams) -> DqVector:
    """Component-wise switching law v = -rho * sgn(sigma) - k * sigma.

    With boundary_layer eps > 0 the sign is replaced by the clipped-linear
    sat(sigma/eps) inside |sigma| <= eps, which removes fixed-step chattering.
    """
    sigma = state.i_l - state.i_ref
    eps = params.boundary_layer
    out = []
    for s in (sigma.d, sigma.q):
        if eps > 0.0:
            sw = min(max(s / eps, -1.0), 1.0)
        else:
            sw = _sgn(s)
        out.append(-params.rho * sw - params.k * s)
    return DqVector(out[0], out[1])


def reaching_time(params: LoadParams, sigma0_norm: float) -> float:
    """Certified time to reach the manifold from ||sigma(0)|| = sigma0_norm.

    t_r = -(l_l / k) * ln( ((rho - L) / k) / (sigma0 + (rho - L) / k) )
    where L is the disturbance bound. Returns 0 for sigma0 = 0.
    """
    if params.rho <= params.disturbance_bound:
        raise GainTooSmall("rho <= disturbance bound: reaching not certified")
    if sigma0_norm < 0.0:
        raise ValidationError("sigma0_norm must be >= 0")
    if sigma0_norm == 0.0:
        return 0.0
    margin = (params.rho - params.disturbance_bound) / params.k
    return -(params.l_l / params.k) * math.log(margin / (sigma0_norm + margin))


def disturbance_bound(r_l: float, l_l: float, omega_e: float, i_max: float, v_g_max: float) -> float:
    """Worst-case lumped-disturbance magnitude for gain selection.

    Bounds ||(r_l I - l_l w J) i|| + ||v_g|| over currents up to i_max at the
    rated grid voltage.
    """
    return math.hypot(r_l, l_l * omega_e) * i_max + v_g_max
