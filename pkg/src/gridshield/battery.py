"""Thevenin-equivalent Li-ion battery: open-circuit voltage, polarization
branch, state of charge, and inversion from a power setpoint to the
controllable battery voltage."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DcVoltageCollapse, SocOutOfRange, ValidationError


@dataclass
class BatteryParams:
    """Electrical parameters of the equivalent circuit.

    r_b: series internal resistance [ohm]
    r_p / c_p: polarization branch resistance [ohm] and capacitance [F]
    q_b: capacity [A h]
    beta1 / beta2: OCV line, v_oc = beta1 * soc + beta2 [V]
    p_max: bidirectional power limit of the converter [W]
    v_dc_nom: nominal DC-link voltage [V], sets the collapse threshold
    """

    r_b: float
    r_p: float
    c_p: float
    q_b: float
    beta1: float
    beta2: float
    p_max: float
    v_dc_nom: float = 12000.0

    def __post_init__(self):
        for name in ("r_b", "r_p", "c_p", "q_b"):
            if getattr(self, name) <= 0.0:
                raise ValidationError(f"battery parameter {name} must be > 0")
        if self.p_max < 0.0:
            raise ValidationError("battery p_max must be >= 0")


@dataclass
class BatteryState:
    """soc in [0, 1]; v_p polarization voltage [V]; i_b current [A],
    positive when discharging."""

    soc: float
    v_p: float = 0.0
    i_b: float = 0.0


def ocv(soc: float, params: BatteryParams) -> float:
    """Open-circuit voltage at a given state of charge."""
    if not 0.0 <= soc <= 1.0:
        raise SocOutOfRange(f"soc={soc} outside [0, 1]")
    return params.beta1 * soc + params.beta2


def battery_current(v_t: float, v_b: float, v_oc: float, v_p: float, r_b: float) -> float:
    """Current drawn through the series resistance for a commanded v_b."""
    return (v_t - v_b - v_oc - v_p) / r_b


def polarization_derivative(i_b: float, v_p: float, params: BatteryParams) -> float:
    """RC-branch voltage dynamics, dv_p/dt."""
    return (i_b - v_p / params.r_p) / params.c_p


def polarization_step(v_p: float, i_b: float, params: BatteryParams, dt: float) -> float:
    """Advance v_p by dt with the exact solution of the linear RC branch.

    The branch time constant r_p * c_p is far below any practical simulation
    step, so explicit integration would be unstable; the exponential update is
    exact for current held constant over the step.
    """
    import math

    decay = math.exp(-dt / (params.r_p * params.c_p))
    return decay * v_p + (1.0 - decay) * params.r_p * i_b


def soc_derivative(i_b: float, params: BatteryParams) -> float:
    """Coulomb-counting SoC dynamics, ds/dt = -i_b / (3600 q_b)."""
    return -i_b / (3600.0 * params.q_b)


def voltage_for_power(p_set: float, v_dc: float, state: BatteryState, params: BatteryParams) -> float:
    """Controllable voltage v_b that realizes the power setpoint p_set.

    The converter current target is p_set / v_dc, clamped so |p| <= p_max.
    Raises DcVoltageCollapse when the DC link is below 10% of nominal.
    """
    if v_dc < 0.1 * params.v_dc_nom:
        raise DcVoltageCollapse(f"v_dc={v_dc:.1f} V below 10% of nominal {params.v_dc_nom:.0f} V")
    p = min(max(p_set, -params.p_max), params.p_max)
    i_target = p / v_dc
    return v_dc - ocv(state.soc, params) - state.v_p - params.r_b * i_target
