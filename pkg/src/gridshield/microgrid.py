"""Single-bus microgrid coupling: unit containers, bus power measurements,
the load-measurement tampering channel, and dispatch-to-current allocation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .battery import BatteryParams
from .dq import DqVector, dot
from .errors import BusVoltageCollapse, ValidationError
from .generator import GeneratorParams, GeneratorReferences
from .load import LoadParams


@dataclass
class GeneratorUnit:
    name: str
    params: GeneratorParams
    refs: GeneratorReferences
    rated_w: float
    theta0_scale: float = 0.5


@dataclass
class LoadUnit:
    name: str
    params: LoadParams
    i_ref: DqVector


@dataclass
class BatteryUnit:
    name: str
    params: BatteryParams
    soc0: float = 0.8


@dataclass
class MicrogridTopology:
    """All sources and loads share one ideal bus regulated to bus_voltage_ref."""

    generators: list[GeneratorUnit]
    loads: list[LoadUnit]
    battery: BatteryUnit
    bus_voltage_ref: DqVector

    def __post_init__(self):
        if len(self.generators) < 1 or len(self.loads) < 1:
            raise ValidationError("topology needs at least one generator and one load")


class AttackKind(Enum):
    NONE = "none"
    STEP = "step"
    PULSE = "pulse"
    RAMP = "ramp"
    SINUSOID = "sinusoid"


@dataclass
class AttackSpec:
    """Additive false data w_L injected into the measured load power.

    magnitude_fraction scales the current true load; start/duration bound the
    active window; ramp_rate [W/s] and frequency [Hz] apply to the ramp and
    sinusoid kinds.
    """

    kind: AttackKind = AttackKind.NONE
    magnitude_fraction: float = 0.0
    start: float = 0.0
    duration: float = 0.0
    ramp_rate: float = 0.0
    frequency: float = 0.0

    def __post_init__(self):
        if isinstance(self.kind, str):
            self.kind = AttackKind(self.kind)
        if self.duration < 0.0 or self.magnitude_fraction < 0.0:
            raise ValidationError("attack duration and magnitude_fraction must be >= 0")


@dataclass
class PowerMeasurements:
    """Bus-level active powers [W] at one sampling instant.

    p_l_measured = p_l_true + w_L(timestamp) by construction; the tampering
    never touches the physical load channel.
    """

    p_g: list[float]
    p_l_true: float
    p_l_measured: float
    p_b: float
    timestamp: float


def attack_signal(spec: AttackSpec, t: float, p_l_true: float) -> float:
    """False-load injection w_L(t) for the given attack description."""
    if t < 0.0:
        raise ValidationError("attack_signal requires t >= 0")
    kind = spec.kind
    if kind == AttackKind.NONE:
        return 0.0
    mag = spec.magnitude_fraction * p_l_true
    if kind == AttackKind.STEP:
        return mag if t >= spec.start else 0.0
    in_window = spec.start <= t < spec.start + spec.duration
    if not in_window:
        return 0.0
    if kind == AttackKind.PULSE:
        return mag
    if kind == AttackKind.RAMP:
        return min(spec.ramp_rate * (t - spec.start), mag)
    # sinusoid
    return mag * math.sin(2.0 * math.pi * spec.frequency * (t - spec.start))


def measure_powers(topology: MicrogridTopology, gen_states: list, load_states: list,
                   battery_i_b: float, t: float,
                   attack: AttackSpec | None = None) -> PowerMeasurements:
    """Smart-meter view of the bus.

    p_g = 0.5 v_c . i per generator; the load total uses the bus voltage
    (mean of generator terminals); p_b = ||v_bus|| * i_b. The attack, when
    given, is added to the measured load channel only.
    """
    p_g = [0.5 * dot(gs.v_c, gs.i) for gs in gen_states]
    n = len(gen_states)
    v_bus = DqVector(sum(gs.v_c.d for gs in gen_states) / n,
                     sum(gs.v_c.q for gs in gen_states) / n)
    p_l_true = sum(0.5 * dot(v_bus, ls.i_l) for ls in load_states)
    v_dc = v_bus.norm()
    p_b = v_dc * battery_i_b
    w = attack_signal(attack, t, p_l_true) if attack is not None else 0.0
    return PowerMeasurements(p_g=p_g, p_l_true=p_l_true, p_l_measured=p_l_true + w,
                             p_b=p_b, timestamp=t)


def power_balance_residual(m: PowerMeasurements) -> float:
    """Generation plus battery minus true demand; zero when balanced.

    Uses the physical (untampered) load channel: the residual quantifies real
    imbalance, not what the tampered meters claim.
    """
    return sum(m.p_g) + m.p_b - m.p_l_true


def allocate_generator_current_refs(dispatch_w: list[float], v_c: DqVector,
                                    v_nominal: float = 12000.0) -> list[DqVector]:
    """Convert per-generator power setpoints [W] into d-axis current outflows.

    Inverts p = 0.5 * v_d * i_d at the d-axis-regulated bus.
    """
    norm = v_c.norm()
    if norm < 0.1 * v_nominal or abs(v_c.d) <= 0.0:
        raise BusVoltageCollapse(f"bus voltage {norm:.1f} V too low for allocation")
    return [DqVector(2.0 * p / v_c.d, 0.0) for p in dispatch_w]
