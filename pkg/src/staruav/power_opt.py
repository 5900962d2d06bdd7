"""Superposition power allocation by difference-of-convex rounds, per slot.

Every user rate is a difference of two concave logs in the power vector.
The subtrahend (interference-plus-noise log) is replaced by its tangent at
the incumbent powers, which upper-bounds it, so the resulting objective is
a global lower bound on the true slot utility and the program is concave.
Channel gains and noise enter in noise units; the bound itself is scale
invariant, so evaluators below accept raw watts.

The budget couples powers only within a slot, so the mission problem
separates and slots are solved independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .conic import ConcaveExpr, ConvexLogProgram, LogTerm, solve_clp
from .rate import SlotGains, pu_rate, slot_gains, su_rate
from .scenario import Position2D, Scenario
from .star_ris import BeamformingState, ModeAssignment, assign_modes_trajectory

_LOG2E = 1.0 / math.log(2.0)


@dataclass(frozen=True)
class PowerOptions:
    max_iter: int = 20
    tol: float = 1e-5
    qos_tol: float = 1e-6
    restore_iter: int = 5


def dc_pu_bound(
    k: int,
    p: np.ndarray,
    p_exp: np.ndarray,
    gains: SlotGains,
    p_su: float,
    noise: float,
) -> float:
    """Concave lower bound on PU k's slot rate, expanded at powers `p_exp`.

    log2(sum over the decode closure + underlay + noise) minus the tangent
    of log2(stronger-set interference + underlay + noise) at p_exp.
    """
    g_k = gains.pu_bs[k]
    c_k = p_su * gains.pu_su[k] + gains.pu_extra[k] + noise
    xi = gains.order.interferers[k]
    closure = gains.order.closure[k]
    full = sum(p[w] for w in closure) * g_k + c_k
    base = sum(p_exp[w] for w in xi) * g_k + c_k
    drift = sum(p[w] - p_exp[w] for w in xi) * g_k
    return math.log2(full) - math.log2(base) - _LOG2E * drift / base


def dc_su_bound(
    p: np.ndarray,
    p_exp: np.ndarray,
    gains: SlotGains,
    p_su: float,
    noise: float,
) -> float:
    """Concave lower bound on the secondary rate, expanded at powers `p_exp`."""
    c_s = gains.su_extra + noise
    full = p_su * gains.su_link + float(np.sum(p)) * gains.su_bs + c_s
    base = float(np.sum(p_exp)) * gains.su_bs + c_s
    drift = float(np.sum(p) - np.sum(p_exp)) * gains.su_bs
    return math.log2(full) - math.log2(base) - _LOG2E * drift / base


def _pu_bound_expr(
    k: int, p_exp: np.ndarray, gains: SlotGains, p_su: float, noise: float
) -> ConcaveExpr:
    """The dc_pu_bound formula as a ConcaveExpr over p0..p{K-1}, noise units."""
    g_k = gains.pu_bs[k] / noise
    c_k = (p_su * gains.pu_su[k] + gains.pu_extra[k]) / noise + 1.0
    xi = gains.order.interferers[k]
    base = sum(p_exp[w] for w in xi) * g_k + c_k
    expr = ConcaveExpr(
        logs=[LogTerm(coeff=1.0, const=c_k, lin={f"p{w}": g_k for w in gains.order.closure[k]})]
    )
    expr.const = -math.log2(base) + _LOG2E * sum(p_exp[w] for w in xi) * g_k / base
    for w in xi:
        expr.lin[f"p{w}"] = expr.lin.get(f"p{w}", 0.0) - _LOG2E * g_k / base
    return expr


def _su_bound_expr(
    p_exp: np.ndarray, gains: SlotGains, p_su: float, noise: float, k_users: int
) -> ConcaveExpr:
    hs = gains.su_link / noise
    hb = gains.su_bs / noise
    c_s = gains.su_extra / noise + 1.0
    base = float(np.sum(p_exp)) * hb + c_s
    expr = ConcaveExpr(
        logs=[
            LogTerm(
                coeff=1.0,
                const=p_su * hs + c_s,
                lin={f"p{k}": hb for k in range(k_users)},
            )
        ]
    )
    expr.const = -math.log2(base) + _LOG2E * float(np.sum(p_exp)) * hb / base
    for k in range(k_users):
        expr.lin[f"p{k}"] = expr.lin.get(f"p{k}", 0.0) - _LOG2E * hb / base
    return expr


def _slot_rates(scn: Scenario, gains: SlotGains, p_row: np.ndarray) -> Tuple[float, float]:
    c = scn.consts
    rates = [pu_rate(k, p_row, gains, c.p_su, c.noise_power) for k in range(len(scn.pus))]
    return sum(rates) + su_rate(p_row, gains, c.p_su, c.noise_power), min(rates)


def _solve_slot(
    scn: Scenario, gains: SlotGains, p_init: np.ndarray, opts: PowerOptions
) -> Tuple[np.ndarray, List[str]]:
    c = scn.consts
    k_users = len(scn.pus)
    names = [f"p{k}" for k in range(k_users)]
    flags: List[str] = []
    p_exp = np.asarray(p_init, dtype=float).copy()
    best = p_exp.copy()
    best_total, best_min = _slot_rates(scn, gains, best)
    prev_obj = None

    for _ in range(opts.max_iter):
        objective = _su_bound_expr(p_exp, gains, c.p_su, c.noise_power, k_users)
        bounds = []
        for k in range(k_users):
            expr = _pu_bound_expr(k, p_exp, gains, c.p_su, c.noise_power)
            objective.logs.extend(expr.logs)
            objective.const += expr.const
            for v, coef in expr.lin.items():
                objective.lin[v] = objective.lin.get(v, 0.0) + coef
            bounds.append((expr, c.r_rsv))
        prog = ConvexLogProgram(
            var_names=names,
            objective=objective,
            lower_bounds=bounds,
            linear_upper=[({name: 1.0 for name in names}, c.p_max)],
        )
        res = solve_clp(prog)
        if not res.ok:
            flags.append("qos-infeasible")
            restored, rflags = _restore_slot(scn, gains, p_exp, opts)
            flags.extend(rflags)
            return restored, flags
        p_new = np.array([max(res.values[name], 0.0) for name in names])
        total, mn = _slot_rates(scn, gains, p_new)
        if total > best_total and mn >= c.r_rsv - opts.qos_tol:
            best, best_total, best_min = p_new.copy(), total, mn
        if prev_obj is not None and abs(res.objective - prev_obj) <= opts.tol * max(
            1.0, abs(prev_obj)
        ):
            p_exp = p_new
            break
        prev_obj = res.objective
        p_exp = p_new

    final_total, final_min = _slot_rates(scn, gains, p_exp)
    if final_total > best_total and final_min >= c.r_rsv - opts.qos_tol:
        best, best_total = p_exp, final_total
    return best, flags


def _restore_slot(
    scn: Scenario, gains: SlotGains, p_init: np.ndarray, opts: PowerOptions
) -> Tuple[np.ndarray, List[str]]:
    """Maximize the worst PU bound when the floors cannot all be met."""
    c = scn.consts
    k_users = len(scn.pus)
    names = [f"p{k}" for k in range(k_users)]
    p_exp = np.full(k_users, c.p_max / k_users)
    flags = ["restored"]
    for _ in range(opts.restore_iter):
        bounds = []
        for k in range(k_users):
            expr = _pu_bound_expr(k, p_exp, gains, c.p_su, c.noise_power)
            expr.lin["t"] = expr.lin.get("t", 0.0) - 1.0
            bounds.append((expr, 0.0))
        prog = ConvexLogProgram(
            var_names=names + ["t"],
            objective=ConcaveExpr(lin={"t": 1.0}),
            lower_bounds=bounds,
            linear_upper=[({name: 1.0 for name in names}, c.p_max)],
        )
        res = solve_clp(prog)
        if not res.ok:
            flags.append("restore-failed")
            return p_init, flags
        p_exp = np.array([max(res.values[name], 0.0) for name in names])
    _, mn = _slot_rates(scn, gains, p_exp)
    if mn < c.r_rsv - opts.qos_tol:
        flags.append("qos-unmet")
    return p_exp, flags


@dataclass
class PowerResult:
    powers: np.ndarray
    flags: Tuple[str, ...]
    iterations: int


def solve_power(
    scn: Scenario,
    traj: np.ndarray,
    state: BeamformingState,
    p_init: np.ndarray,
    opts: PowerOptions = PowerOptions(),
    modes: Optional[ModeAssignment] = None,
) -> PowerResult:
    """Improve the superposition powers at a fixed path and coefficients.

    Returns per-slot powers whose true slot utility never falls below the
    incumbent's (each slot keeps the better of incumbent and candidate).
    """
    if modes is None:
        modes = assign_modes_trajectory(scn, traj)
    n_slots = scn.grid.slot_count
    p_init = np.asarray(p_init, dtype=float)
    out = p_init.copy()
    flags: List[str] = []
    for n in range(1, n_slots + 1):
        q = Position2D(float(traj[n, 0]), float(traj[n, 1]))
        gains = slot_gains(scn, q, state.coeffs(n), modes.by_slot[n - 1], n)
        inc_total, inc_min = _slot_rates(scn, gains, p_init[n - 1])
        cand, slot_flags = _solve_slot(scn, gains, p_init[n - 1], opts)
        cand_total, cand_min = _slot_rates(scn, gains, cand)
        c = scn.consts
        qos_ok = cand_min >= c.r_rsv - opts.qos_tol or inc_min < c.r_rsv - opts.qos_tol
        if cand_total >= inc_total - 1e-12 and qos_ok:
            out[n - 1] = cand
        elif inc_min < c.r_rsv - opts.qos_tol and cand_min > inc_min:
            out[n - 1] = cand  # trading utility for a better worst rate
            slot_flags.append("floor-recovered")
        else:
            slot_flags.append("kept-incumbent")
        flags.extend(f"slot{n}:{f}" for f in slot_flags)
    return PowerResult(powers=out, flags=tuple(flags), iterations=n_slots)
