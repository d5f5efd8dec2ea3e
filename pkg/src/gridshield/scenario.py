"""Scenario files: strict parsing, validation, and assembly of the simulation
objects. Unknown keys are errors; defaults apply only to fields documented as
optional."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .battery import BatteryParams
from .dq import DqVector
from .ems import MpcConfig, SourceSpec
from .engine import SimConfig
from .errors import ParseError, ValidationError
from .generator import GeneratorParams, GeneratorReferences, speed_reference
from .load import LoadParams, disturbance_bound
from .microgrid import (AttackSpec, BatteryUnit, GeneratorUnit, LoadUnit,
                        MicrogridTopology)

_REQUIRED = object()


@dataclass
class ScenarioConfig:
    label: str
    sim: SimConfig
    topology: MicrogridTopology
    mpc: MpcConfig
    attack: AttackSpec
    use_battery: bool = True
    output_dir: str = "."
    raw: dict = field(default_factory=dict, repr=False)


def _take(mapping: dict, key: str, kind, path: str, default=_REQUIRED):
    if key not in mapping:
        if default is _REQUIRED:
            raise ParseError(f"missing required key '{path}.{key}'")
        return default
    value = mapping.pop(key)
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if kind is bool and isinstance(value, bool):
        return value
    if kind is str and isinstance(value, str):
        return value
    if kind is dict and isinstance(value, dict):
        return value
    if kind is list and isinstance(value, list):
        return value
    raise ParseError(f"key '{path}.{key}' must be of type {kind.__name__}")


def _reject_unknown(mapping: dict, path: str) -> None:
    if mapping:
        raise ParseError(f"unknown key '{path}.{sorted(mapping)[0]}'")


def parse_scenario(path) -> ScenarioConfig:
    """Load and validate a scenario file (strict YAML)."""
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        raise ParseError(f"scenario file {path} is empty")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"scenario file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"scenario file {path} must contain a mapping")
    return scenario_from_dict(doc)


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    doc = {k: v for k, v in doc.items()}
    raw = json.loads(json.dumps(doc))
    label = _take(doc, "label", str, "scenario")
    use_battery = _take(doc, "use_battery", bool, "scenario", True)

    sim_d = _take(doc, "sim", dict, "scenario")
    sim = SimConfig(
        dt=_take(sim_d, "dt", float, "sim", 1e-3),
        ems_period=_take(sim_d, "ems_period", float, "sim", 1.0),
        t_end=_take(sim_d, "t_end", float, "sim"),
        seed=_take(sim_d, "seed", int, "sim", 0),
        log_decimation=_take(sim_d, "log_decimation", int, "sim", 1),
        startup=_take(sim_d, "startup", float, "sim", 2.0),
        metrics_start=_take(sim_d, "metrics_start", float, "sim", None),
    )
    _reject_unknown(sim_d, "sim")

    bus_d = _take(doc, "bus", dict, "scenario")
    v_bus_d = _take(bus_d, "voltage_d", float, "bus")
    freq = _take(bus_d, "frequency_hz", float, "bus", 60.0)
    _reject_unknown(bus_d, "bus")
    v_ref = DqVector(v_bus_d, 0.0)
    omega_e_nom = 2.0 * math.pi * freq

    gens = []
    for idx, g in enumerate(_take(doc, "generators", list, "scenario")):
        p = f"generators[{idx}]"
        if not isinstance(g, dict):
            raise ParseError(f"{p} must be a mapping")
        name = _take(g, "name", str, p)
        poles = _take(g, "poles", int, p, 8)
        rated_mw = _take(g, "rated_mw", float, p)
        omega_ref = speed_reference(freq, poles)
        params = GeneratorParams(
            tau=_take(g, "tau", float, p),
            damping=_take(g, "damping", float, p),
            r=_take(g, "r", float, p),
            l=_take(g, "l", float, p),
            c=_take(g, "c", float, p),
            poles=poles,
            k_p=_take(g, "k_p", float, p, 500.0),
            k_i=_take(g, "k_i", float, p, 200.0),
            k=_take(g, "k", float, p, 10.0),
            alpha=_take(g, "alpha", float, p, 10.0),
            gamma=_take(g, "gamma", float, p, 1e-8),
            k1=_take(g, "k1", float, p, 1000.0),
            t_max=3.0 * rated_mw * 1e6 / omega_ref,
        )
        refs = GeneratorReferences(omega_ref=omega_ref, v_c_ref=v_ref)
        gens.append(GeneratorUnit(name=name, params=params, refs=refs,
                                  rated_w=rated_mw * 1e6,
                                  theta0_scale=_take(g, "theta0_scale", float, p, 0.5)))
        _reject_unknown(g, p)

    loads = []
    for idx, l in enumerate(_take(doc, "loads", list, "scenario")):
        p = f"loads[{idx}]"
        if not isinstance(l, dict):
            raise ParseError(f"{p} must be a mapping")
        name = _take(l, "name", str, p)
        r_l = _take(l, "r_l", float, p)
        l_l = _take(l, "l_l", float, p)
        i_ref = DqVector(_take(l, "i_ref_d", float, p), _take(l, "i_ref_q", float, p, 0.0))
        bound = disturbance_bound(r_l, l_l, omega_e_nom, i_ref.norm(), v_ref.norm())
        rho = _take(l, "rho", float, p, 1.2 * bound)
        params = LoadParams(
            r_l=r_l, l_l=l_l, rho=rho,
            k=_take(l, "k", float, p, 50.0),
            disturbance_bound=bound,
            boundary_layer=_take(l, "boundary_layer", float, p, 0.5),
        )
        loads.append(LoadUnit(name=name, params=params, i_ref=i_ref))
        _reject_unknown(l, p)

    b = _take(doc, "battery", dict, "scenario")
    bat_params = BatteryParams(
        r_b=_take(b, "r_b", float, "battery"),
        r_p=_take(b, "r_p", float, "battery"),
        c_p=_take(b, "c_p", float, "battery"),
        q_b=_take(b, "q_b", float, "battery"),
        beta1=_take(b, "beta1", float, "battery"),
        beta2=_take(b, "beta2", float, "battery"),
        p_max=_take(b, "p_max_mw", float, "battery") * 1e6,
        v_dc_nom=v_ref.norm(),
    )
    battery = BatteryUnit(name=_take(b, "name", str, "battery", "bess"),
                          params=bat_params, soc0=_take(b, "soc0", float, "battery", 0.8))
    _reject_unknown(b, "battery")
    if not 0.0 <= battery.soc0 <= 1.0:
        raise ValidationError("battery soc0 must lie in [0, 1]")

    topology = MicrogridTopology(generators=gens, loads=loads, battery=battery,
                                 bus_voltage_ref=v_ref)

    m = _take(doc, "mpc", dict, "scenario")
    sources = []
    for idx, s in enumerate(_take(m, "sources", list, "mpc")):
        p = f"mpc.sources[{idx}]"
        if not isinstance(s, dict):
            raise ParseError(f"{p} must be a mapping")
        sources.append(SourceSpec(
            name=_take(s, "name", str, p),
            kind=_take(s, "kind", str, p),
            cost_a=_take(s, "cost_a", float, p),
            cost_b=_take(s, "cost_b", float, p),
            cost_c=_take(s, "cost_c", float, p),
            p_min=_take(s, "p_min_mw", float, p),
            p_max=_take(s, "p_max_mw", float, p),
            ramp=_take(s, "ramp_mw", float, p),
        ))
        _reject_unknown(s, p)
    mpc = MpcConfig(
        horizon=_take(m, "horizon", int, "mpc", 5),
        step_seconds=sim.ems_period,
        soc_min=_take(m, "soc_min", float, "mpc", 0.1),
        soc_max=_take(m, "soc_max", float, "mpc", 0.9),
        sources=sources,
        battery_capacity_ah=bat_params.q_b,
        v_dc_nominal=v_ref.norm(),
    )
    _reject_unknown(m, "mpc")

    expected = [g.name for g in gens] + [battery.name]
    got = [s.name for s in sources]
    if got != expected:
        raise ValidationError(
            f"mpc.sources must list the generators then the battery, in order: "
            f"expected {expected}, got {got}")

    a = _take(doc, "attack", dict, "scenario", None)
    if a is None:
        attack = AttackSpec()
    else:
        attack = AttackSpec(
            kind=_take(a, "kind", str, "attack", "none"),
            magnitude_fraction=_take(a, "magnitude_fraction", float, "attack", 0.0),
            start=_take(a, "start", float, "attack", 0.0),
            duration=_take(a, "duration", float, "attack", 0.0),
            ramp_rate=_take(a, "ramp_rate", float, "attack", 0.0),
            frequency=_take(a, "frequency", float, "attack", 0.0),
        )
        _reject_unknown(a, "attack")

    output_dir = _take(doc, "output_dir", str, "scenario", ".")
    _reject_unknown(doc, "scenario")

    return ScenarioConfig(label=label, sim=sim, topology=topology, mpc=mpc,
                          attack=attack, use_battery=use_battery,
                          output_dir=output_dir, raw=raw)


def scenario_hash(sc: ScenarioConfig) -> str:
    """Content hash over the parsed configuration plus runtime flags."""
    doc = dict(sc.raw)
    doc["use_battery"] = sc.use_battery
    doc["attack_effective"] = {
        "kind": sc.attack.kind.value,
        "magnitude_fraction": sc.attack.magnitude_fraction,
        "start": sc.attack.start,
        "duration": sc.attack.duration,
        "ramp_rate": sc.attack.ramp_rate,
        "frequency": sc.attack.frequency,
    }
    blob = json.dumps(doc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def packaged_scenario_path(name: str) -> Path:
    """Resolve a scenario shipped inside the package by bare name."""
    if not name.endswith(".scenario"):
        name = name + ".scenario"
    ref = resources.files("gridshield").joinpath("scenarios").joinpath(name)
    with resources.as_file(ref) as concrete:
        return Path(concrete)


def resolve_scenario_path(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    try:
        packaged = packaged_scenario_path(arg)
        if packaged.exists():
            return packaged
    except (FileNotFoundError, ModuleNotFoundError):
        pass
    raise ParseError(f"scenario file not found: {arg}")
