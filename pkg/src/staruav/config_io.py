"""Scenario files: INI sections [geometry], [grid], [constants], [users.<id>].

Powers accept an explicit dBm suffix ("25" means watts, "44 dBm" converts);
the reference gain beta0 likewise accepts dB. Users are static (position =
x, y) or mobile (waypoints = x1,y1; x2,y2; ... plus speed in m/s). Optional
[interferers.<id>] sections add fixed-power co-channel transmitters, and an
[experiment] section drives the sweep harness.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

from .scenario import (
    Interferer,
    PhysicalConstants,
    Position2D,
    Scenario,
    ScenarioError,
    TimeGrid,
    UserSpec,
    build_time_grid,
    waypoint_path,
)


class ConfigError(ValueError):
    """A scenario or experiment file cannot be parsed into a valid setup."""


def parse_power(text: str) -> float:
    """Watts from '0.2', '25', '-174 dBm', or '23dBm'."""
    s = text.strip().lower()
    if s.endswith("dbm"):
        return 10.0 ** ((float(s[:-3]) - 30.0) / 10.0)
    if s.endswith("db"):
        raise ConfigError(f"power {text!r}: use dBm for powers (dB is for gains)")
    return float(s)


def parse_gain(text: str) -> float:
    """Linear gain from '0.001' or '-30 dB'."""
    s = text.strip().lower()
    if s.endswith("db"):
        return 10.0 ** (float(s[:-2]) / 10.0)
    return float(s)


def parse_point(text: str) -> Position2D:
    parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
    if len(parts) != 2:
        raise ConfigError(f"expected 'x, y', got {text!r}")
    return Position2D(float(parts[0]), float(parts[1]))


def parse_waypoints(text: str) -> Tuple[Position2D, ...]:
    pts = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if chunk:
            pts.append(parse_point(chunk))
    if not pts:
        raise ConfigError(f"no waypoints in {text!r}")
    return tuple(pts)


@dataclass(frozen=True)
class UserDef:
    """A user before time discretization: a route and a speed."""

    role: str
    waypoints: Tuple[Position2D, ...]
    speed: float = 0.0


@dataclass(frozen=True)
class InterfererDef:
    waypoints: Tuple[Position2D, ...]
    power: float
    speed: float = 0.0


def read_ini(path) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    found = cfg.read(str(path))
    if not found:
        raise ConfigError(f"cannot read config file {path}")
    return cfg


def _route(section: Mapping[str, str], where: str) -> Tuple[Tuple[Position2D, ...], float]:
    if "position" in section:
        return (parse_point(section["position"]),), 0.0
    if "waypoints" in section:
        speed = float(section.get("speed", "0"))
        if speed < 0:
            raise ConfigError(f"{where}: speed must be nonnegative")
        return parse_waypoints(section["waypoints"]), speed
    raise ConfigError(f"{where}: needs either position or waypoints")


def parse_users(cfg: configparser.ConfigParser) -> Dict[str, UserDef]:
    users: Dict[str, UserDef] = {}
    for name in cfg.sections():
        if not name.startswith("users."):
            continue
        uid = name.split(".", 1)[1]
        sec = cfg[name]
        role = sec.get("role", "").strip()
        if role not in ("PU", "SU_source", "SU_dest"):
            raise ConfigError(f"[{name}]: role must be PU, SU_source, or SU_dest")
        waypoints, speed = _route(sec, f"[{name}]")
        users[uid] = UserDef(role=role, waypoints=waypoints, speed=speed)
    if not users:
        raise ConfigError("config defines no [users.<id>] sections")
    return users


def parse_interferers(cfg: configparser.ConfigParser) -> Dict[str, InterfererDef]:
    out: Dict[str, InterfererDef] = {}
    for name in cfg.sections():
        if not name.startswith("interferers."):
            continue
        iid = name.split(".", 1)[1]
        sec = cfg[name]
        waypoints, speed = _route(sec, f"[{name}]")
        power = parse_power(sec.get("power", "0.2"))
        out[iid] = InterfererDef(waypoints=waypoints, power=power, speed=speed)
    return out


def parse_constants(
    cfg: configparser.ConfigParser,
    elements: Optional[int] = None,
    p_max: Optional[float] = None,
) -> PhysicalConstants:
    sec = cfg["constants"] if cfg.has_section("constants") else {}
    kw = {}
    plain = {
        "altitude": "altitude",
        "v_max": "v_max",
        "path_loss_exp": "path_loss_exp",
        "wavelength": "wavelength",
        "element_sep": "element_sep",
        "r_rsv": "r_rsv",
    }
    for key, attr in plain.items():
        if key in sec:
            kw[attr] = float(sec[key])
    if "beta0" in sec:
        kw["beta0"] = parse_gain(sec["beta0"])
    if "noise" in sec:
        kw["noise_power"] = parse_power(sec["noise"])
    if "p_max" in sec:
        kw["p_max"] = parse_power(sec["p_max"])
    if "p_su" in sec:
        kw["p_su"] = parse_power(sec["p_su"])
    if "elements" in sec:
        kw["element_count"] = int(sec["elements"])
    if elements is not None:
        kw["element_count"] = int(elements)
    if p_max is not None:
        kw["p_max"] = float(p_max)
    try:
        return PhysicalConstants(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[constants]: {exc}") from exc


def build_scenario(
    bs: Position2D,
    q_start: Position2D,
    q_end: Position2D,
    grid: TimeGrid,
    consts: PhysicalConstants,
    users: Mapping[str, UserDef],
    interferers: Mapping[str, InterfererDef] = {},
) -> Scenario:
    """Discretize every route onto the grid and assemble a validated scenario."""
    specs = []
    for uid, u in users.items():
        path = waypoint_path(u.waypoints[0], u.waypoints[1:], u.speed, grid)
        specs.append(UserSpec(id=uid, role=u.role, path=path))
    extras = []
    for iid, e in interferers.items():
        path = waypoint_path(e.waypoints[0], e.waypoints[1:], e.speed, grid)
        extras.append(Interferer(id=iid, path=path, power=e.power))
    try:
        return Scenario(
            bs=bs,
            users=tuple(specs),
            grid=grid,
            consts=consts,
            q_start=q_start,
            q_end=q_end,
            extra_interferers=tuple(extras),
        )
    except ScenarioError as exc:
        raise ConfigError(str(exc)) from exc


def scenario_from_config(
    cfg: configparser.ConfigParser,
    total_time: Optional[float] = None,
    slots: Optional[int] = None,
    elements: Optional[int] = None,
    p_max: Optional[float] = None,
    users: Optional[Mapping[str, UserDef]] = None,
    interferers: Optional[Mapping[str, InterfererDef]] = None,
) -> Scenario:
    """Scenario from a parsed INI, with optional overrides for sweeps."""
    if not cfg.has_section("geometry"):
        raise ConfigError("config needs a [geometry] section")
    if not cfg.has_section("grid"):
        raise ConfigError("config needs a [grid] section")
    geo = cfg["geometry"]
    try:
        bs = parse_point(geo["bs"])
        q_start = parse_point(geo["q_start"])
        q_end = parse_point(geo["q_end"])
    except KeyError as exc:
        raise ConfigError(f"[geometry]: missing {exc}") from exc
    g = cfg["grid"]
    t_total = float(total_time if total_time is not None else g.get("total_time", "75"))
    n_slots = int(slots if slots is not None else g.get("slots", "10"))
    try:
        grid = build_time_grid(t_total, n_slots)
    except (ScenarioError, ValueError) as exc:
        raise ConfigError(f"[grid]: {exc}") from exc
    consts = parse_constants(cfg, elements=elements, p_max=p_max)
    user_defs = users if users is not None else parse_users(cfg)
    intf_defs = interferers if interferers is not None else parse_interferers(cfg)
    return build_scenario(bs, q_start, q_end, grid, consts, user_defs, intf_defs)


def load_scenario(path, **overrides) -> Scenario:
    return scenario_from_config(read_ini(path), **overrides)


# ---------------------------------------------------------------------------
# experiment section
# ---------------------------------------------------------------------------

EXPERIMENT_KINDS = (
    "single",
    "sweep_T",
    "sweep_K",
    "sweep_su_pairs",
    "sweep_M",
    "sweep_Pmax",
    "sweep_N_slots",
    "protocol_compare",
    "surface_mode_compare",
    "noma_vs_oma",
    "mobility_demo",
)

_NUMERIC_VALUE_KINDS = {
    "sweep_T",
    "sweep_K",
    "sweep_su_pairs",
    "sweep_M",
    "sweep_Pmax",
    "sweep_N_slots",
    "noma_vs_oma",
}


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    values: tuple
    seeds: Tuple[int, ...]
    protocol: str = "ES"
    surface_mode: str = "star"
    random_users: Optional[int] = None  # place this many PUs per seed when set
    paper_scale: bool = False
    max_outer: Optional[int] = None  # cap on outer iterations per run

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if not self.values:
            raise ConfigError("experiment needs at least one sweep value")
        if not self.seeds:
            raise ConfigError("experiment needs at least one seed")
        if self.max_outer is not None and self.max_outer < 1:
            raise ConfigError("max_outer must be at least 1")


def _default_values(kind: str) -> tuple:
    return {
        "single": ("run",),
        "sweep_T": (30.0, 45.0, 60.0),
        "sweep_K": (1, 2, 3),
        "sweep_su_pairs": (0, 1, 2),
        "sweep_M": (4, 8, 16),
        "sweep_Pmax": (5.0, 15.0, 25.0),
        "sweep_N_slots": (4, 8, 12),
        "protocol_compare": ("ES", "MS", "TS"),
        "surface_mode_compare": ("star", "ris", "its"),
        "noma_vs_oma": (4, 8, 12),
        "mobility_demo": ("run",),
    }[kind]


def experiment_from_config(cfg: configparser.ConfigParser) -> ExperimentSpec:
    if not cfg.has_section("experiment"):
        raise ConfigError("config needs an [experiment] section for sweeps")
    sec = cfg["experiment"]
    kind = sec.get("kind", "single").strip()
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    if "values" in sec:
        raw = [v.strip() for v in sec["values"].split(",") if v.strip()]
        if kind in _NUMERIC_VALUE_KINDS:
            values = tuple(int(v) if float(v).is_integer() else float(v) for v in raw)
        else:
            values = tuple(raw)
    else:
        values = _default_values(kind)
    if "seeds" in sec:
        raw = [v.strip() for v in sec["seeds"].split(",") if v.strip()]
        seeds = tuple(int(v) for v in raw) if len(raw) > 1 else tuple(range(int(raw[0])))
    else:
        seeds = (0,)
    random_users = int(sec["random_users"]) if "random_users" in sec else None
    max_outer = int(sec["max_outer"]) if "max_outer" in sec else None
    return ExperimentSpec(
        kind=kind,
        values=values,
        seeds=seeds,
        protocol=sec.get("protocol", "ES").strip(),
        surface_mode=sec.get("surface_mode", "star").strip(),
        random_users=random_users,
        max_outer=max_outer,
    )
