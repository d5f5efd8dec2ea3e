"""Deterministic two-rate simulation engine.

Runs the coupled plant at a fixed millisecond-scale step while the energy
manager re-dispatches once per period. Electrical subsystems advance with
exact per-step linear updates (their resonances sit beyond the stability
region of explicit schemes at the plant step); mechanical, adaptation,
derivative-filter and charge states use explicit Euler or exact scalar
exponentials. Identical configurations produce bit-identical logs.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import ems
from ._backend import BACKEND_NAME, get_backend
from .dq import DqVector
from .errors import (EmptyWindow, NumericalDivergence, SocOutOfRange, ValidationError)
from .generator import OMEGA_FLOOR
from .microgrid import (AttackKind, AttackSpec, MicrogridTopology, PowerMeasurements,
                        allocate_generator_current_refs, attack_signal)

DIVERGENCE_LIMIT = 1e9

_ATTACK_CODES = {AttackKind.NONE: 0.0, AttackKind.STEP: 1.0, AttackKind.PULSE: 2.0,
                 AttackKind.RAMP: 3.0, AttackKind.SINUSOID: 4.0}

#: solver-status codes stored in the log
STATUS_HOLD = -1.0
STATUS_OPTIMAL = 0.0
STATUS_FALLBACK = 1.0
STATUS_MAX_ITER = 2.0


@dataclass
class SimConfig:
    """Timing of the two-rate loop.

    dt: plant step [s]; ems_period: dispatch period [s] (integer multiple of
    dt); t_end: horizon [s]; seed: used only by randomized test initializers;
    log_decimation: keep every n-th plant step in the log; startup: primary
    controllers run alone (dispatch holds measured outputs) before the
    optimizer activates; metrics_start: left edge of the metrics window.
    """

    dt: float = 1e-3
    ems_period: float = 1.0
    t_end: float = 10.0
    seed: int = 0
    log_decimation: int = 1
    startup: float = 2.0
    metrics_start: float | None = None

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValidationError("dt must be > 0")
        ratio = self.ems_period / self.dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValidationError("ems_period must be a positive integer multiple of dt")
        if self.t_end < 0.0:
            raise ValidationError("t_end must be >= 0")
        if self.log_decimation < 1:
            raise ValidationError("log_decimation must be >= 1")
        if self.metrics_start is None:
            self.metrics_start = self.startup + 4.0 * self.ems_period


@dataclass
class TimeSeriesLog:
    """Uniform-grid simulation log: one named column per signal."""

    columns: list[str]
    data: np.ndarray
    dt_log: float

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    @property
    def t(self) -> np.ndarray:
        return self.data[:, 0]

    def window_mask(self, t0: float, t1: float) -> np.ndarray:
        return (self.t >= t0 - 1e-12) & (self.t <= t1 + 1e-12)

    def write_csv(self, path) -> None:
        # full round-trip precision keeps byte-level determinism checkable
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(self.columns) + "\n")
            for row in self.data:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


@dataclass
class ScenarioOutcome:
    rmse_tracking: float
    max_frequency_deviation: float
    max_voltage_deviation: float
    soc_range: tuple[float, float]
    infeasible_periods: int
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "rmse_tracking_mw": self.rmse_tracking,
            "max_frequency_deviation_rad_s": self.max_frequency_deviation,
            "max_voltage_deviation_v": self.max_voltage_deviation,
            "soc_range": list(self.soc_range),
            "infeasible_periods": self.infeasible_periods,
        }
        out.update(self.extras)
        return out


@dataclass
class WorldState:
    """Packed plant state plus the zero-order-held dispatch commands."""

    state: np.ndarray
    gp: np.ndarray
    lp: np.ndarray
    bp: np.ndarray
    ir: np.ndarray
    iref: np.ndarray
    sp_w: np.ndarray
    status_code: float
    gen_names: list[str]
    use_battery: bool
    t: float = 0.0
    gstep: int = 0

    @property
    def n_gens(self) -> int:
        return self.gp.shape[0]

    @property
    def n_loads(self) -> int:
        return self.lp.shape[0]

    def gen_slice(self, g: int) -> np.ndarray:
        return self.state[g * 11:(g + 1) * 11]

    def load_current(self, j: int) -> DqVector:
        o = self.n_gens * 11 + 2 * j
        return DqVector(self.state[o], self.state[o + 1])

    def soc(self) -> float:
        return float(self.state[self.n_gens * 11 + self.n_loads * 2])

    def bus_voltage(self) -> DqVector:
        d = float(np.mean([self.state[g * 11 + 3] for g in range(self.n_gens)]))
        q = float(np.mean([self.state[g * 11 + 4] for g in range(self.n_gens)]))
        return DqVector(d, q)


def log_columns(gen_names: list[str]) -> list[str]:
    cols = ["t"]
    cols += [f"omega_{n}" for n in gen_names]
    cols += ["v_bus_norm"]
    cols += [f"p_{n}" for n in gen_names]
    cols += ["p_b", "p_l_true", "p_l_measured", "w_l", "soc", "i_b"]
    cols += [f"set_{n}_w" for n in gen_names]
    cols += ["set_b_w", "solver_status", "tracking_error"]
    return cols


def build_world(topology: MicrogridTopology, use_battery: bool = True) -> WorldState:
    """Pack a topology into flat kernel arrays with cold-start initial state."""
    ng = len(topology.generators)
    nl = len(topology.loads)
    gp = np.zeros((ng, 19))
    for g, unit in enumerate(topology.generators):
        p = unit.params
        scale = p.theta_scale()
        gp[g] = [p.tau, p.damping, p.r, p.l, p.c, float(p.poles), p.k_p, p.k_i,
                 p.k, p.alpha, p.gamma, p.k1, p.t_max, scale[0], scale[1], scale[2],
                 unit.refs.v_c_ref.d, unit.refs.v_c_ref.q, unit.refs.omega_ref]
    lp = np.zeros((nl, 5))
    iref = np.zeros((nl, 2))
    for j, unit in enumerate(topology.loads):
        q = unit.params
        lp[j] = [q.r_l, q.l_l, q.rho, q.k, q.boundary_layer]
        iref[j] = [unit.i_ref.d, unit.i_ref.q]
    b = topology.battery.params
    bp = np.array([b.r_b, b.r_p, b.c_p, b.q_b, b.beta1, b.beta2, b.p_max,
                   0.1 * b.v_dc_nom])

    state = np.zeros(ng * 11 + nl * 2 + 2)
    for g, unit in enumerate(topology.generators):
        state[g * 11 + 6: g * 11 + 9] = unit.theta0_scale  # scaled estimate
    state[ng * 11 + nl * 2] = topology.battery.soc0

    return WorldState(state=state, gp=gp, lp=lp, bp=bp,
                      ir=np.zeros((ng, 2)), iref=iref,
                      sp_w=np.zeros(ng + 1), status_code=STATUS_HOLD,
                      gen_names=[u.name for u in topology.generators],
                      use_battery=use_battery)


def equilibrium_state(topology: MicrogridTopology, use_battery: bool = True) -> WorldState:
    """Analytic operating point: every continuous subsystem is at rest, so the
    discrete map (exact linear steps, zero Euler derivatives) holds it to
    roundoff. Dispatch commands are set consistently with the drawn load."""
    world = build_world(topology, use_battery)
    ng = world.n_gens
    v_ref = topology.generators[0].refs.v_c_ref
    omega_e = topology.generators[0].params.poles * topology.generators[0].refs.omega_ref / 2.0

    # loads: boundary-layer linear equilibrium, complex form z = x_d - j x_q
    total_ild = 0.0
    for j, unit in enumerate(topology.loads):
        q = unit.params
        if q.boundary_layer <= 0.0:
            raise ValidationError("equilibrium_state requires boundary-layer load control")
        g = q.rho / q.boundary_layer + q.k
        z_ref = complex(unit.i_ref.d, -unit.i_ref.q)
        z_vg = complex(v_ref.d, -v_ref.q)
        z_i = (g * z_ref - z_vg) / (g + q.r_l - 1j * q.l_l * omega_e)
        o = ng * 11 + 2 * j
        world.state[o] = z_i.real
        world.state[o + 1] = -z_i.imag
        total_ild += z_i.real

    p_total = 0.5 * v_ref.d * total_ild
    share = p_total / ng
    for g, unit in enumerate(topology.generators):
        p = unit.params
        o = g * 11
        ird = 2.0 * share / v_ref.d
        world.ir[g] = [ird, 0.0]
        world.sp_w[g] = share
        omega = unit.refs.omega_ref
        world.state[o] = omega
        world.state[o + 1] = ird                      # i_d
        world.state[o + 2] = omega_e * p.c * v_ref.d  # i_q = w c v_d (J-term)
        world.state[o + 3] = v_ref.d
        world.state[o + 4] = v_ref.q
        world.state[o + 5] = p.damping * omega / p.k_i
        world.state[o + 6: o + 9] = 1.0               # scaled estimate = truth
        world.state[o + 9: o + 11] = 0.0
    world.sp_w[ng] = 0.0
    world.status_code = STATUS_OPTIMAL
    return world


def _measure_world(world: WorldState, t: float, attack: AttackSpec | None) -> PowerMeasurements:
    """Bus measurement identical to the kernel's start-of-step evaluation."""
    ng = world.n_gens
    st = world.state
    p_g = []
    sum_vd = sum_vq = 0.0
    for g in range(ng):
        o = g * 11
        p_g.append(0.5 * (st[o + 3] * st[o + 1] + st[o + 4] * st[o + 2]))
        sum_vd += st[o + 3]
        sum_vq += st[o + 4]
    vbd, vbq = sum_vd / ng, sum_vq / ng
    vdc = math.hypot(vbd, vbq)
    p_load = 0.0
    for j in range(world.n_loads):
        o = ng * 11 + 2 * j
        p_load += 0.5 * (vbd * st[o] + vbq * st[o + 1])
    if world.use_battery and vdc >= world.bp[7]:
        p_b = min(max(p_load - sum(p_g), -world.bp[6]), world.bp[6])
    else:
        p_b = 0.0
    w = attack_signal(attack, t, p_load) if attack is not None else 0.0
    return PowerMeasurements(p_g=p_g, p_l_true=p_load, p_l_measured=p_load + w,
                             p_b=p_b, timestamp=t)


def _initial_log_row(world: WorldState, ncols: int) -> np.ndarray:
    ng = world.n_gens
    m = _measure_world(world, 0.0, None)
    v = world.bus_voltage()
    row = np.zeros(ncols)
    col = 1
    for g in range(ng):
        row[col] = world.state[g * 11]
        col += 1
    row[col] = v.norm()
    col += 1
    for g in range(ng):
        row[col] = m.p_g[g]
        col += 1
    row[col] = 0.0  # battery current not yet commanded
    col += 1
    row[col] = m.p_l_true
    col += 1
    row[col] = m.p_l_measured
    col += 1
    row[col] = 0.0
    col += 1
    row[col] = world.soc()
    col += 1
    row[col] = 0.0
    col += 1
    for g in range(ng + 1):
        row[col] = world.sp_w[g]
        col += 1
    row[col] = world.status_code
    col += 1
    row[col] = sum(m.p_g) - m.p_l_true
    return row


def _attack_array(attack: AttackSpec | None) -> np.ndarray:
    if attack is None:
        return np.zeros(6)
    return np.array([_ATTACK_CODES[attack.kind], attack.magnitude_fraction,
                     attack.start, attack.duration, attack.ramp_rate, attack.frequency])


def step(world: WorldState, config: SimConfig, t: float | None = None,
         backend=None) -> WorldState:
    """Advance the plant one dt under the currently held commands."""
    impl = backend or get_backend()
    t0 = world.t if t is None else t
    rows, err, err_step = impl.run_block(
        world.state, world.gp, world.lp, world.bp, world.ir, world.iref,
        world.sp_w, world.status_code, np.zeros(6),
        config.dt, OMEGA_FLOOR, 1.0 if world.use_battery else 0.0, DIVERGENCE_LIMIT,
        t0, world.gstep, 1, 2 ** 62, np.zeros((1, 1)), 0)
    _raise_for_code(err, t0, err_step, config.dt)
    world.t = t0 + config.dt
    world.gstep += 1
    return world


def _raise_for_code(err: int, t0: float, err_step: int, dt: float) -> None:
    if err == 1:
        raise NumericalDivergence(f"state exceeded {DIVERGENCE_LIMIT:g} at t={t0 + (err_step + 1) * dt:.6f}s")
    if err == 2:
        raise SocOutOfRange(f"state of charge left [0, 1] at t={t0 + (err_step + 1) * dt:.6f}s")


def run_scenario(scenario, backend=None) -> tuple[TimeSeriesLog, ScenarioOutcome]:
    """Execute one scenario: dispatch every period, plant steps in between.

    Returns the full decimated log plus summary metrics. Dispatch
    infeasibility is recorded, never raised; numerical divergence and SoC
    violations abort with an exception.
    """
    impl = backend or get_backend()
    sim: SimConfig = scenario.sim
    topo: MicrogridTopology = scenario.topology
    attack: AttackSpec = scenario.attack
    use_battery: bool = scenario.use_battery

    world = build_world(topo, use_battery)
    ng = world.n_gens
    cols = log_columns(world.gen_names)
    n_total = int(round(sim.t_end / sim.dt))
    if abs(n_total * sim.dt - sim.t_end) > 1e-9:
        raise ValidationError("t_end must be an integer multiple of dt")
    n_rows = 0 if n_total == 0 else n_total // sim.log_decimation + 1
    log = np.zeros((max(n_rows, 1), len(cols)))
    if n_total > 0:
        log[0] = _initial_log_row(world, len(cols))
    row_cursor = 1

    per = int(round(sim.ems_period / sim.dt))
    n_dispatch = int(math.floor(sim.t_end / sim.ems_period + 1e-9))
    attack_arr = _attack_array(attack)
    v_nom = topo.bus_voltage_ref.norm()

    prev_solution = None
    infeasible = 0
    dispatch_count = 0
    fallback_any = False

    s0 = 0
    while s0 < n_total:
        t_k = s0 * sim.dt
        new_boundary = s0 % per == 0 and (s0 // per) < n_dispatch
        if new_boundary:
            dispatch_count += 1
            meas = _measure_world(world, t_k, attack)
            if t_k < sim.startup - 1e-9:
                # black start: hold measured outputs, optimizer not yet active
                world.sp_w = np.array(list(meas.p_g) + [meas.p_b])
                world.status_code = STATUS_HOLD
            else:
                result = ems.dispatch_step(scenario.mpc, meas, world.soc(),
                                           prev_solution, use_battery)
                prev_solution = result
                sp_mw = result.setpoints
                gens_mw = sp_mw[:ng]
                batt_mw = sp_mw[ng] if len(sp_mw) > ng else 0.0
                world.sp_w = np.array([p * 1e6 for p in gens_mw] + [batt_mw * 1e6])
                v_bus = world.bus_voltage()
                refs = allocate_generator_current_refs([p * 1e6 for p in gens_mw],
                                                       v_bus, v_nom)
                world.ir = np.array([[r.d, r.q] for r in refs])
                if result.solver_status == ems.DispatchStatus.FALLBACK:
                    world.status_code = STATUS_FALLBACK
                    fallback_any = True
                    if t_k >= sim.metrics_start - 1e-9:
                        infeasible += 1
                elif result.solver_status == ems.DispatchStatus.MAX_ITERATIONS:
                    world.status_code = STATUS_MAX_ITER
                else:
                    world.status_code = STATUS_OPTIMAL
        block = min(per - (s0 % per), n_total - s0)
        rows, err, err_step = impl.run_block(
            world.state, world.gp, world.lp, world.bp, world.ir, world.iref,
            world.sp_w, world.status_code, attack_arr,
            sim.dt, OMEGA_FLOOR, 1.0 if use_battery else 0.0, DIVERGENCE_LIMIT,
            t_k, world.gstep, block, sim.log_decimation, log, row_cursor)
        _raise_for_code(err, t_k, err_step, sim.dt)
        row_cursor += rows
        world.gstep += block
        world.t = world.gstep * sim.dt
        s0 += block

    ts = TimeSeriesLog(columns=cols, data=log[:n_rows] if n_total else log[:0],
                       dt_log=sim.dt * sim.log_decimation)
    outcome = _metrics(ts, scenario, infeasible, dispatch_count, fallback_any, v_nom)
    return ts, outcome


def _metrics(ts: TimeSeriesLog, scenario, infeasible: int, dispatch_count: int,
             fallback_any: bool, v_nom: float) -> ScenarioOutcome:
    sim: SimConfig = scenario.sim
    if ts.data.shape[0] == 0:
        return ScenarioOutcome(0.0, 0.0, 0.0, (0.0, 0.0), 0,
                               {"dispatch_count": dispatch_count, "backend": BACKEND_NAME,
                                "fallback_any": fallback_any})
    try:
        rmse = rmse_tracking(ts, (sim.metrics_start, sim.t_end))
    except EmptyWindow:
        rmse = 0.0
    mask = ts.window_mask(sim.metrics_start, sim.t_end)
    max_fdev = 0.0
    for g, unit in enumerate(scenario.topology.generators):
        om = ts.column(f"omega_{unit.name}")
        if np.any(mask):
            max_fdev = max(max_fdev, float(np.max(np.abs(om[mask] - unit.refs.omega_ref))))
    vdev = 0.0
    if np.any(mask):
        vdev = float(np.max(np.abs(ts.column("v_bus_norm")[mask] - v_nom)))
    soc = ts.column("soc")
    return ScenarioOutcome(
        rmse_tracking=rmse,
        max_frequency_deviation=max_fdev,
        max_voltage_deviation=vdev,
        soc_range=(float(np.min(soc)), float(np.max(soc))),
        infeasible_periods=infeasible,
        extras={"dispatch_count": dispatch_count, "backend": BACKEND_NAME,
                "fallback_any": fallback_any},
    )


def rmse_tracking(ts: TimeSeriesLog, window: tuple[float, float]) -> float:
    """Root-mean-square tracking error [MW] over a time window."""
    mask = ts.window_mask(window[0], window[1])
    if not np.any(mask):
        raise EmptyWindow(f"no samples in window {window}")
    err = ts.column("tracking_error")[mask]
    return float(np.sqrt(np.mean(err ** 2))) / 1e6


def sweep_attack_levels(base_scenario, levels, with_and_without_battery: bool = True):
    """Run the RMSE sweep over attack magnitudes, with and without battery.

    Scenarios share nothing mutable and may run in parallel; the thread count
    is capped by GRIDSHIELD_THREADS. Per-scenario failures are recorded in the
    row rather than aborting the sweep. RMSE is evaluated on the window
    [attack start - 1 s, attack end + 3 s].
    """
    if not levels:
        raise ValidationError("levels must be non-empty")
    flags = [True, False] if with_and_without_battery else [base_scenario.use_battery]
    jobs = [(float(level), flag) for level in levels for flag in flags]

    def one(job):
        level, flag = job
        sc = clone_scenario(base_scenario,
                            attack=replace(base_scenario.attack, magnitude_fraction=level),
                            use_battery=flag)
        t0 = sc.attack.start - 1.0
        t1 = sc.attack.start + sc.attack.duration + 3.0
        try:
            ts, outcome = run_scenario(sc)
            rmse = rmse_tracking(ts, (max(t0, 0.0), min(t1, sc.sim.t_end)))
            return {"level": level, "battery": flag, "rmse_mw": rmse,
                    "infeasible_periods": outcome.infeasible_periods,
                    "fallback_any": outcome.extras["fallback_any"], "error": ""}
        except Exception as exc:  # pragma: no cover - per-cell failure path
            return {"level": level, "battery": flag, "rmse_mw": float("nan"),
                    "infeasible_periods": -1, "fallback_any": False, "error": str(exc)}

    max_workers = int(os.environ.get("GRIDSHIELD_THREADS", "0")) or min(4, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        rows = list(pool.map(one, jobs))
    rows.sort(key=lambda r: (r["level"], not r["battery"]))
    return rows


def clone_scenario(scenario, **overrides):
    """Copy a scenario with selected fields replaced."""
    return replace(scenario, **overrides)
