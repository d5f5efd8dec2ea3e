"""Receding-horizon energy management.

Every dispatch period the manager reads the (possibly tampered) bus
measurements and the battery state of charge, builds a convex quadratic
program over the prediction horizon, solves it, and emits the first-step
power setpoints. Decision variables are per-source powers in MW; the state of
charge is eliminated by forward substitution of its recursion, leaving pure
linear constraints on the battery powers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import qp as qpmod
from .errors import ConfigInvalid, InfeasibleDemand, ValidationError
from .microgrid import PowerMeasurements

#: Quadratic penalty weight applied to the power-balance rows when the hard
#: program is infeasible (soft-constraint fallback).
FALLBACK_PENALTY = 1e6


class SourceKind(Enum):
    GENERATOR = "generator"
    BATTERY = "battery"


class DispatchStatus(Enum):
    OPTIMAL = "optimal"
    FALLBACK = "fallback"
    MAX_ITERATIONS = "max_iterations"
    HOLD = "hold"


@dataclass
class SourceSpec:
    """Cost polynomial a p^2 + b p + c [$ / h, p in MW], box and per-period
    ramp limits for one dispatchable source."""

    name: str
    kind: SourceKind
    cost_a: float
    cost_b: float
    cost_c: float
    p_min: float
    p_max: float
    ramp: float

    def __post_init__(self):
        if isinstance(self.kind, str):
            self.kind = SourceKind(self.kind)
        if self.p_min > self.p_max:
            raise ValidationError(f"source {self.name}: p_min > p_max")
        if self.ramp <= 0.0:
            raise ValidationError(f"source {self.name}: ramp must be > 0")
        if self.cost_a < 0.0:
            raise ValidationError(f"source {self.name}: cost_a must be >= 0 (convexity)")

    def marginal(self, p: float) -> float:
        return 2.0 * self.cost_a * p + self.cost_b


@dataclass
class MpcConfig:
    """Horizon length [steps], dispatch period [s], SoC corridor, sources and
    the energy basis (capacity [A h], nominal DC voltage [V]) of the SoC
    recursion."""

    horizon: int
    step_seconds: float
    soc_min: float
    soc_max: float
    sources: list[SourceSpec]
    battery_capacity_ah: float
    v_dc_nominal: float

    def __post_init__(self):
        if self.horizon < 1:
            raise ValidationError("horizon must be >= 1")
        if not 0.0 <= self.soc_min < self.soc_max <= 1.0:
            raise ValidationError("require 0 <= soc_min < soc_max <= 1")
        if self.step_seconds <= 0.0:
            raise ValidationError("step_seconds must be > 0")
        if self.battery_capacity_ah <= 0.0 or self.v_dc_nominal <= 0.0:
            raise ValidationError("battery capacity and nominal voltage must be > 0")

    @property
    def battery_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.sources) if s.kind == SourceKind.BATTERY]

    def soc_coeff_per_mw(self) -> float:
        """SoC drop per dispatch step per MW of battery discharge."""
        return self.step_seconds * 1e6 / (3600.0 * self.battery_capacity_ah * self.v_dc_nominal)


@dataclass
class DispatchResult:
    setpoints: list[float]
    planned_trajectories: np.ndarray  # (n_sources, horizon) MW
    planned_soc: np.ndarray  # (horizon,) after each step
    solver_status: DispatchStatus
    solve_time: float = 0.0
    qp_status: qpmod.QpStatus | None = None


def build_mpc_qp(config: MpcConfig, measured: PowerMeasurements, soc_now: float,
                 use_battery: bool = True) -> qpmod.QuadraticProgram:
    """Assemble the horizon program in canonical QP form.

    Variable layout: x[i*h + k] is source i at step k (MW). Per step: one
    power-balance equality at the latest measured demand, per-source boxes,
    two-sided ramp rows pinned to the measured outputs at k = 0, and
    cumulative-sum SoC corridor rows for battery sources.
    """
    if not 0.0 <= soc_now <= 1.0:
        raise ConfigInvalid(f"soc_now={soc_now} outside [0, 1]")
    ns = len(config.sources)
    if ns == 0:
        raise ConfigInvalid("no sources configured")
    n_gen = sum(1 for s in config.sources if s.kind == SourceKind.GENERATOR)
    if len(measured.p_g) != n_gen:
        raise ConfigInvalid("measured generator count does not match sources")
    h = config.horizon
    n = ns * h
    demand_mw = measured.p_l_measured / 1e6

    hmat = np.zeros((n, n))
    f = np.zeros(n)
    lower = np.empty(n)
    upper = np.empty(n)
    battery_set = set(config.battery_indices)
    p_prev = []
    for i, s in enumerate(config.sources):
        if s.kind == SourceKind.BATTERY:
            p_prev.append(measured.p_b / 1e6)
        else:
            gen_pos = len([j for j in range(i) if config.sources[j].kind == SourceKind.GENERATOR])
            p_prev.append(measured.p_g[gen_pos] / 1e6)
        for k in range(h):
            idx = i * h + k
            hmat[idx, idx] = 2.0 * s.cost_a
            f[idx] = s.cost_b
            if i in battery_set and not use_battery:
                lower[idx] = 0.0
                upper[idx] = 0.0
            else:
                lower[idx] = s.p_min
                upper[idx] = s.p_max

    a_eq = np.zeros((h, n))
    for k in range(h):
        for i in range(ns):
            a_eq[k, i * h + k] = 1.0
    b_eq = np.full(h, demand_mw)

    rows = []
    rhs = []
    for i, s in enumerate(config.sources):
        for k in range(h):
            idx = i * h + k
            row = np.zeros(n)
            row[idx] = 1.0
            base = p_prev[i] if k == 0 else None
            if k == 0:
                rows.append(row.copy()); rhs.append(base + s.ramp)
                rows.append(-row.copy()); rhs.append(-(base - s.ramp))
            else:
                row[i * h + k - 1] = -1.0
                rows.append(row.copy()); rhs.append(s.ramp)
                rows.append(-row.copy()); rhs.append(s.ramp)
    kappa = config.soc_coeff_per_mw()
    for i in battery_set:
        for k in range(h):
            row = np.zeros(n)
            row[i * h: i * h + k + 1] = -kappa
            # soc_min <= soc_now + sum <= soc_max
            rows.append(-row.copy()); rhs.append(soc_now - config.soc_min)
            rows.append(row.copy()); rhs.append(config.soc_max - soc_now)

    return qpmod.QuadraticProgram(hmat, f, a_eq=a_eq, b_eq=b_eq,
                                  a_in=np.array(rows), b_in=np.array(rhs),
                                  lower=lower, upper=upper)


def _soften_balance(program: qpmod.QuadraticProgram) -> qpmod.QuadraticProgram:
    """Move the power-balance equalities into a quadratic penalty."""
    a, b = program.a_eq, program.b_eq
    h2 = program.h_matrix + 2.0 * FALLBACK_PENALTY * (a.T @ a)
    f2 = program.f_vector - 2.0 * FALLBACK_PENALTY * (a.T @ b)
    return qpmod.QuadraticProgram(h2, f2, a_in=program.a_in, b_in=program.b_in,
                                  lower=program.lower, upper=program.upper)


def dispatch_step(config: MpcConfig, measured: PowerMeasurements, soc_now: float,
                  previous_solution: DispatchResult | None = None,
                  use_battery: bool = True) -> DispatchResult:
    """Solve one dispatch period and return first-step setpoints.

    Infeasible programs (a demand spike can exceed total ramp or box
    capability) are re-solved with the balance constraint softened; the result
    is flagged rather than raised so the simulation continues through the
    failure mode being measured.
    """
    t0 = time.perf_counter()
    program = build_mpc_qp(config, measured, soc_now, use_battery)
    x0 = None
    if previous_solution is not None:
        prev = previous_solution.planned_trajectories
        if prev.shape == (len(config.sources), config.horizon):
            shifted = np.concatenate([prev[:, 1:], prev[:, -1:]], axis=1)
            x0 = shifted.ravel()
    sol = qpmod.solve(program, x0=x0)
    status = DispatchStatus.OPTIMAL
    if sol.status == qpmod.QpStatus.INFEASIBLE:
        soft = _soften_balance(program)
        sol = qpmod.solve(soft)
        status = DispatchStatus.FALLBACK
    elif sol.status == qpmod.QpStatus.MAX_ITERATIONS:
        status = DispatchStatus.MAX_ITERATIONS

    ns = len(config.sources)
    h = config.horizon
    traj = sol.x.reshape(ns, h)
    kappa = config.soc_coeff_per_mw()
    soc_path = np.full(h, soc_now)
    for i in config.battery_indices:
        soc_path = soc_now - kappa * np.cumsum(traj[i])
    return DispatchResult(
        setpoints=[float(traj[i, 0]) for i in range(ns)],
        planned_trajectories=traj,
        planned_soc=soc_path,
        solver_status=status,
        solve_time=time.perf_counter() - t0,
        qp_status=sol.status,
    )


def incremental_cost_oracle(demand: float, sources: list[SourceSpec]) -> list[float]:
    """Static dispatch by equal marginal cost, independent of the QP path.

    Bisects the shared marginal price lambda; each source contributes
    clip((lambda - b) / (2a), p_min, p_max). Ramp and SoC are ignored.
    """
    p_min = sum(s.p_min for s in sources)
    p_max = sum(s.p_max for s in sources)
    if not p_min - 1e-9 <= demand <= p_max + 1e-9:
        raise InfeasibleDemand(f"demand {demand} outside [{p_min}, {p_max}]")

    def alloc(lam: float) -> list[float]:
        out = []
        for s in sources:
            if s.cost_a > 0.0:
                p = (lam - s.cost_b) / (2.0 * s.cost_a)
            else:
                p = s.p_max if lam > s.cost_b else s.p_min
            out.append(min(max(p, s.p_min), s.p_max))
        return out

    lo = min(s.marginal(s.p_min) for s in sources) - 1.0
    hi = max(s.marginal(s.p_max) for s in sources) + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if sum(alloc(mid)) < demand:
            lo = mid
        else:
            hi = mid
    return alloc(0.5 * (lo + hi))
