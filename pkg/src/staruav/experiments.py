"""Sweep harness: seeded runs, plot-ready CSV curves, and solution bundles.

Each run dumps its full solution (path, coefficients, powers, rates) so any
emitted sum rate can be recomputed from files. Curve CSVs carry one row per
(sweep value, seed) plus a mean row per value; reruns with the same inputs
produce byte-identical data rows (manifests carry wall-clock keys, which are
the only nondeterministic output).

Extra secondary pairs beyond the modeled one enter as fixed-power underlay
transmitters; their leakage shows up in the interference column.
"""

from __future__ import annotations

import concurrent.futures
import configparser
import csv
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .ao import AoOptions, AoSolution, ScenarioInfeasibleError, run_ao
from .config_io import (
    ConfigError,
    ExperimentSpec,
    InterfererDef,
    UserDef,
    parse_constants,
    scenario_from_config,
)
from .rate import oma_sum_rate
from .scenario import Position2D, Scenario
from .star_ris import BeamformingState, ElementCoeffs

AREA = (0.0, 1000.0, 0.0, 1000.0)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


# ---------------------------------------------------------------------------
# solution bundles
# ---------------------------------------------------------------------------


def write_trajectory_csv(path: Path, traj: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "x", "y"])
        for n, (x, y) in enumerate(np.asarray(traj, dtype=float)):
            w.writerow([n, _fmt(x), _fmt(y)])


def write_beamforming_csv(path: Path, state: BeamformingState) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "m", "alpha_t", "theta_t", "alpha_r", "theta_r"])
        for i, c in enumerate(state.per_slot):
            for m in range(c.m_elements):
                w.writerow(
                    [
                        i + 1,
                        m + 1,
                        _fmt(c.alpha_t[m]),
                        _fmt(c.theta_t[m]),
                        _fmt(c.alpha_r[m]),
                        _fmt(c.theta_r[m]),
                    ]
                )


def write_power_csv(path: Path, powers: np.ndarray, pu_ids: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "user_id", "p_watts"])
        for i, row in enumerate(np.asarray(powers, dtype=float)):
            for uid, p in zip(pu_ids, row):
                w.writerow([i + 1, uid, _fmt(p)])


def write_rates_csv(path: Path, scn: Scenario, sol: AoSolution) -> None:
    rep = sol.report
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "user_id", "rate", "mode", "interference_w"])
        for i in range(scn.grid.slot_count):
            modes = rep.modes[i]
            for k, u in enumerate(scn.pus):
                w.writerow([i + 1, u.id, _fmt(rep.pu_rates[i, k]), modes[u.id], _fmt(rep.interference[i])])
            s2 = scn.su_dest.id
            w.writerow([i + 1, s2, _fmt(rep.su_rates[i]), modes[s2], _fmt(rep.interference[i])])


def write_manifest(path: Path, entries: Mapping[str, object]) -> None:
    cfg = configparser.ConfigParser()
    cfg["manifest"] = {k: str(v) for k, v in entries.items()}
    with open(path, "w") as fh:
        cfg.write(fh)


def read_manifest(path: Path) -> Dict[str, str]:
    cfg = configparser.ConfigParser()
    if not cfg.read(str(path)):
        raise ConfigError(f"cannot read manifest {path}")
    return dict(cfg["manifest"])


def write_bundle(out_dir: Path, scn: Scenario, sol: AoSolution, manifest: Mapping[str, object]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out_dir / "trajectory.csv", sol.traj)
    write_beamforming_csv(out_dir / "beamforming.csv", sol.state)
    write_power_csv(out_dir / "power.csv", sol.powers, [u.id for u in scn.pus])
    write_rates_csv(out_dir / "rates.csv", scn, sol)
    write_manifest(out_dir / "manifest.ini", manifest)


def read_bundle(out_dir: Path, scn: Scenario) -> Tuple[np.ndarray, BeamformingState, np.ndarray]:
    """Reload (path, coefficients, powers) from a dumped bundle."""
    out_dir = Path(out_dir)
    with open(out_dir / "trajectory.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    traj = np.array([[float(r["x"]), float(r["y"])] for r in rows])

    n_slots = scn.grid.slot_count
    m = scn.consts.element_count
    a_t = np.zeros((n_slots, m))
    a_r = np.zeros((n_slots, m))
    t_t = np.zeros((n_slots, m))
    t_r = np.zeros((n_slots, m))
    with open(out_dir / "beamforming.csv", newline="") as fh:
        for r in csv.DictReader(fh):
            i, j = int(r["n"]) - 1, int(r["m"]) - 1
            a_t[i, j] = float(r["alpha_t"])
            t_t[i, j] = float(r["theta_t"])
            a_r[i, j] = float(r["alpha_r"])
            t_r[i, j] = float(r["theta_r"])
    slots = tuple(
        ElementCoeffs(alpha_t=a_t[i], alpha_r=a_r[i], theta_t=t_t[i], theta_r=t_r[i])
        for i in range(n_slots)
    )
    state = BeamformingState(per_slot=slots, protocol="ES")

    idx = {u.id: k for k, u in enumerate(scn.pus)}
    powers = np.zeros((n_slots, len(idx)))
    with open(out_dir / "power.csv", newline="") as fh:
        for r in csv.DictReader(fh):
            powers[int(r["n"]) - 1, idx[r["user_id"]]] = float(r["p_watts"])
    return traj, state, powers


# ---------------------------------------------------------------------------
# seeded placement
# ---------------------------------------------------------------------------


def seeded_users(
    seed: int, k_pus: int, mobile: bool = False, speed: float = 1.5
) -> Dict[str, UserDef]:
    """Uniformly placed PUs and one secondary pair inside the working area."""
    rng = np.random.default_rng(seed)
    x0, x1, y0, y1 = AREA

    def draw() -> Position2D:
        return Position2D(float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1)))

    def route() -> Tuple[Tuple[Position2D, ...], float]:
        if mobile:
            return (draw(), draw()), speed
        return (draw(),), 0.0

    users: Dict[str, UserDef] = {}
    for k in range(k_pus):
        wp, sp = route()
        users[f"p{k + 1}"] = UserDef(role="PU", waypoints=wp, speed=sp)
    wp, sp = route()
    users["s1"] = UserDef(role="SU_source", waypoints=wp, speed=sp)
    wp, sp = route()
    users["s2"] = UserDef(role="SU_dest", waypoints=wp, speed=sp)
    return users


def seeded_interferers(seed: int, count: int, power: float) -> Dict[str, InterfererDef]:
    """Sources of the extra underlay pairs, placed like the users but offset in seed."""
    rng = np.random.default_rng(seed + 10_000)
    x0, x1, y0, y1 = AREA
    out: Dict[str, InterfererDef] = {}
    for j in range(count):
        pos = Position2D(float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1)))
        out[f"e{j + 1}"] = InterfererDef(waypoints=(pos,), power=power)
    return out


# ---------------------------------------------------------------------------
# task construction and execution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Task:
    curve: str
    value: object
    seed: int
    scenario: Scenario
    opts: AoOptions
    with_interference: bool
    also_oma: bool
    label: str


@dataclass
class _Outcome:
    task: _Task
    status: str
    sum_rate_value: Optional[float]
    interference: Optional[float]
    oma_rate: Optional[float]
    wall_clock: float
    sol: Optional[AoSolution]


def _paper_overrides(paper_scale: bool) -> dict:
    if not paper_scale:
        return {}
    return {"elements": 20, "slots": 20, "total_time": 60.0}


def _scenario_for(
    cfg: configparser.ConfigParser,
    spec: ExperimentSpec,
    value,
    seed: int,
) -> Scenario:
    kind = spec.kind
    over = _paper_overrides(spec.paper_scale)
    if kind == "sweep_T":
        over["total_time"] = float(value)
    elif kind == "sweep_M":
        over["elements"] = int(value)
    elif kind == "sweep_Pmax":
        over["p_max"] = float(value)
    elif kind in ("sweep_N_slots", "noma_vs_oma"):
        over["slots"] = int(value)

    users = None
    if kind == "sweep_K":
        users = seeded_users(seed, int(value))
    elif spec.random_users is not None:
        k = 4 if spec.paper_scale else spec.random_users
        users = seeded_users(seed, k, mobile=(kind == "mobility_demo"))

    interferers = None
    if kind == "sweep_su_pairs":
        p_su = parse_constants(cfg).p_su
        interferers = seeded_interferers(seed, int(value), p_su)

    return scenario_from_config(cfg, users=users, interferers=interferers, **over)


def _opts_for(spec: ExperimentSpec, value, seed: int) -> AoOptions:
    protocol = spec.protocol
    surface = spec.surface_mode
    if spec.kind == "protocol_compare":
        protocol = str(value)
    elif spec.kind == "surface_mode_compare":
        surface = str(value)
    kw = {}
    if spec.max_outer is not None:
        kw["max_iter"] = spec.max_outer
    return AoOptions(seed=seed, protocol=protocol, surface_mode=surface, **kw)


# Sweeps whose feasible sets nest as the value grows: a longer leash or a
# larger budget admits every solution of the smaller one. Chaining each run
# off the previous value's solution makes the curve nondecreasing per seed
# instead of hostage to which local optimum a cold start lands in.
CHAINED_KINDS = ("sweep_T", "sweep_Pmax")


def build_tasks(cfg: configparser.ConfigParser, spec: ExperimentSpec) -> List[_Task]:
    tasks: List[_Task] = []
    for value in spec.values:
        if spec.kind in ("protocol_compare", "surface_mode_compare"):
            curve = f"{spec.kind}_{value}"
        elif spec.kind == "noma_vs_oma":
            curve = "noma"
        else:
            curve = spec.kind
        for seed in spec.seeds:
            scn = _scenario_for(cfg, spec, value, seed)
            tasks.append(
                _Task(
                    curve=curve,
                    value=value,
                    seed=seed,
                    scenario=scn,
                    opts=_opts_for(spec, value, seed),
                    with_interference=spec.kind in ("sweep_su_pairs", "mobility_demo"),
                    also_oma=spec.kind == "noma_vs_oma",
                    label=f"v{value}_s{seed}",
                )
            )
    return tasks


def _execute(task: _Task, warm: Optional[AoSolution] = None) -> _Outcome:
    start = time.monotonic()
    try:
        sol = run_ao(task.scenario, task.opts, warm=warm)
    except ScenarioInfeasibleError:
        return _Outcome(
            task=task,
            status="infeasible",
            sum_rate_value=None,
            interference=None,
            oma_rate=None,
            wall_clock=time.monotonic() - start,
            sol=None,
        )
    oma = None
    if task.also_oma:
        oma = oma_sum_rate(task.scenario, sol.traj, sol.state, sol.powers).sum_rate
    return _Outcome(
        task=task,
        status="ok",
        sum_rate_value=sol.report.sum_rate,
        interference=float(np.sum(sol.report.interference)),
        oma_rate=oma,
        wall_clock=time.monotonic() - start,
        sol=sol,
    )


def _execute_chain(tasks: Sequence[_Task]) -> List[_Outcome]:
    """Run one seed's sweep points in value order, seeding each from the last."""
    outcomes: List[_Outcome] = []
    warm: Optional[AoSolution] = None
    for task in sorted(tasks, key=lambda t: float(t.value)):
        oc = _execute(task, warm=warm)
        outcomes.append(oc)
        if oc.sol is not None:
            warm = oc.sol
    return outcomes


def _write_curves(out_dir: Path, spec: ExperimentSpec, outcomes: List[_Outcome]) -> List[Path]:
    curves: Dict[str, List[_Outcome]] = {}
    for oc in outcomes:
        curves.setdefault(oc.task.curve, []).append(oc)
    if spec.kind == "noma_vs_oma":
        curves["oma"] = curves.get("noma", [])

    written = []
    for curve, ocs in curves.items():
        path = out_dir / f"{curve}.csv"
        with_intf = any(o.task.with_interference for o in ocs)
        header = ["sweep_value", "seed", "sum_rate"]
        if with_intf:
            header.append("interference")
        header.append("status")
        groups: Dict[object, List[float]] = {}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for oc in ocs:
                rate = oc.oma_rate if curve == "oma" else oc.sum_rate_value
                row = [oc.task.value, oc.task.seed]
                row.append(_fmt(rate) if rate is not None else "")
                if with_intf:
                    row.append(_fmt(oc.interference) if oc.interference is not None else "")
                row.append(oc.status)
                w.writerow(row)
                if rate is not None:
                    groups.setdefault(oc.task.value, []).append(rate)
            for value in dict.fromkeys(o.task.value for o in ocs):
                vals = groups.get(value, [])
                row = [value, "mean"]
                row.append(_fmt(sum(vals) / len(vals)) if vals else "")
                if with_intf:
                    row.append("")
                row.append("ok" if vals else "infeasible")
                w.writerow(row)
        written.append(path)
    return written


def run_experiment(
    cfg: configparser.ConfigParser,
    spec: ExperimentSpec,
    out_dir,
    jobs: int = 1,
) -> List[Path]:
    """Run every (value, seed) point, dump bundles and curve CSVs.

    Returns the list of written curve files. Infeasible runs become status
    rows, never exceptions.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = build_tasks(cfg, spec)
    if spec.kind in CHAINED_KINDS:
        by_seed: Dict[int, List[_Task]] = {}
        for t in tasks:
            by_seed.setdefault(t.seed, []).append(t)
        units = list(by_seed.values())
    else:
        units = [[t] for t in tasks]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_execute_chain, units))
    else:
        chunks = [_execute_chain(u) for u in units]
    order = {(t.curve, t.value, t.seed): i for i, t in enumerate(tasks)}
    outcomes = sorted(
        (oc for chunk in chunks for oc in chunk),
        key=lambda oc: order[(oc.task.curve, oc.task.value, oc.task.seed)],
    )

    sub_runs = []
    for oc in outcomes:
        t = oc.task
        run_dir = out / t.curve / t.label
        sub_runs.append(f"{t.curve}/{t.label}")
        manifest = {
            "kind": spec.kind,
            "curve": t.curve,
            "sweep_value": t.value,
            "seed": t.seed,
            "protocol": t.opts.protocol,
            "surface_mode": t.opts.surface_mode,
            "elements": t.scenario.consts.element_count,
            "slots": t.scenario.grid.slot_count,
            "total_time": t.scenario.grid.total_time,
            "p_max": t.scenario.consts.p_max,
            "num_pus": t.scenario.num_pus,
            "status": oc.status,
            "termination": oc.sol.status if oc.sol else "infeasible",
            "iterations": oc.sol.iterations if oc.sol else 0,
            "sum_rate": _fmt(oc.sum_rate_value) if oc.sum_rate_value is not None else "",
            "package_version": __version__,
            "numpy_version": np.__version__,
            "wall_clock_s": f"{oc.wall_clock:.3f}",
        }
        if oc.sol is not None:
            write_bundle(run_dir, t.scenario, oc.sol, manifest)
        else:
            run_dir.mkdir(parents=True, exist_ok=True)
            write_manifest(run_dir / "manifest.ini", manifest)

    files = _write_curves(out, spec, outcomes)
    write_manifest(
        out / "manifest.ini",
        {
            "kind": spec.kind,
            "values": ", ".join(str(v) for v in spec.values),
            "seeds": ", ".join(str(s) for s in spec.seeds),
            "protocol": spec.protocol,
            "surface_mode": spec.surface_mode,
            "paper_scale": spec.paper_scale,
            "sub_runs": "; ".join(sub_runs),
            "package_version": __version__,
        },
    )
    return files


def run_single(
    cfg: configparser.ConfigParser,
    out_dir,
    seed: int = 0,
    protocol: str = "ES",
    surface_mode: str = "star",
    paper_scale: bool = False,
) -> AoSolution:
    """One optimization of the configured scenario, dumped as a bundle."""
    over = _paper_overrides(paper_scale)
    scn = scenario_from_config(cfg, **over)
    opts = AoOptions(seed=seed, protocol=protocol, surface_mode=surface_mode)
    start = time.monotonic()
    sol = run_ao(scn, opts)
    manifest = {
        "kind": "single",
        "seed": seed,
        "protocol": protocol,
        "surface_mode": surface_mode,
        "elements": scn.consts.element_count,
        "slots": scn.grid.slot_count,
        "total_time": scn.grid.total_time,
        "p_max": scn.consts.p_max,
        "num_pus": scn.num_pus,
        "status": "ok",
        "termination": sol.status,
        "iterations": sol.iterations,
        "sum_rate": _fmt(sol.report.sum_rate),
        "package_version": __version__,
        "numpy_version": np.__version__,
        "wall_clock_s": f"{time.monotonic() - start:.3f}",
    }
    write_bundle(Path(out_dir), scn, sol, manifest)
    return sol
