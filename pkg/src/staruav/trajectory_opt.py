"""UAV path optimization by successive geometric programming.

The exact per-slot rates are intractable in the UAV position, so each slot
gets auxiliary variables: dcheck (an upper bound on squared 3-D link
distance) and chi (an upper bound on the interference-plus-noise power seen
through the closed-form cascaded-gain cap rho / (d_a^alpha * d_b^alpha)).
With those, 1/(1+SINR) for each served user becomes a ratio of posynomials
Upsilon = D/(D+S) whose denominator is condensed into a monomial by the
weighted AM-GM inequality at the incumbent (trust) point. Minimizing the
product of the condensed ratios is then a geometric program; re-condensing
at each new iterate gives a monotone inner-approximation loop.

Coordinates are translated by a positive offset before entering the program
so every variable stays strictly positive; distances are unaffected.

Variable glossary
-----------------
x_{n}, y_{n}       shifted UAV coordinates in slot n (1..N-1; 0 and N pinned)
dbs_{n}            squared BS-UAV link distance bound, slot n
d_{uid}_{n}        squared UAV-user link distance bound for user uid, slot n
chi_{uid}_{n}      interference-plus-noise bound at receiver uid, slot n
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .channel import amplitude_sum_power
from .conic import GeometricProgram, Monomial, Posynomial, SolveResult, solve_gp
from .rate import SicOrder, slot_gains
from .scenario import Position2D, Scenario
from .star_ris import BeamformingState, ModeAssignment, assign_modes_trajectory

BS_KEY = "__bs__"


@dataclass(frozen=True)
class TrajectoryOptions:
    max_iter: int = 4
    tol: float = 3e-4
    coord_shift: float = 2000.0
    qos_slack: float = 1e-9
    step_feas_tol: float = 1e-6


@dataclass(frozen=True)
class Coord:
    """One GP coordinate: a variable (name set) or a pinned constant."""

    value: float
    name: Optional[str] = None

    def monomial(self, power: float, coeff: float = 1.0) -> Monomial:
        if self.name is None:
            return Monomial.from_coeff(coeff * self.value**power)
        return Monomial.from_coeff(coeff, {self.name: power})


# ---------------------------------------------------------------------------
# weighted AM-GM condensation helpers
# ---------------------------------------------------------------------------


def condense(terms: Sequence[Monomial], trust: Dict[str, float]) -> Monomial:
    """Monomial lower bound on sum(terms), tight at the trust point.

    sum_i t_i >= prod_i (t_i / w_i)^{w_i} with w_i the trust-point shares.
    Zero-share terms drop out of the product.
    """
    logs = [t.log_evaluate(trust) for t in terms]
    peak = max(logs)
    shares = np.exp(np.asarray(logs) - peak)
    shares /= shares.sum()
    out = Monomial(0.0)
    for t, w in zip(terms, shares):
        if w <= 0.0:
            continue
        out = out * (t ** float(w)) * Monomial(-float(w) * math.log(w))
    return out


def agma_step_posynomial(
    cx: Coord, cy: Coord, px: Coord, py: Coord, vmax_delta: float, trust: Dict[str, float]
) -> Posynomial:
    """Inner approximation of the slot step bound |q_n - q_{n-1}| <= v*delta.

    The exact bound is (x^2 + x'^2 + y^2 + y'^2) / (2xx' + 2yy' + (v*delta)^2) <= 1;
    the denominator is condensed at the trust point.
    """
    num = [cx.monomial(2), px.monomial(2), cy.monomial(2), py.monomial(2)]
    den = [
        cx.monomial(1) * px.monomial(1, 2.0),
        cy.monomial(1) * py.monomial(1, 2.0),
        Monomial.from_coeff(vmax_delta**2),
    ]
    inv = condense(den, trust) ** -1.0
    return Posynomial(tuple(t * inv for t in num))


def agma_distance_posynomial(
    d_name: str,
    cx: Coord,
    cy: Coord,
    anchor_x: float,
    anchor_y: float,
    altitude: float,
    trust: Dict[str, float],
) -> Posynomial:
    """Inner approximation of dcheck >= |q - anchor|^2 + altitude^2.

    Written as (x^2 + y^2 + ax^2 + ay^2 + H^2) / (dcheck + 2*ax*x + 2*ay*y) <= 1
    with the denominator condensed at the trust point. Anchor coordinates are
    already shifted positive.
    """
    num = [
        cx.monomial(2),
        cy.monomial(2),
        Monomial.from_coeff(anchor_x**2 + anchor_y**2 + altitude**2),
    ]
    den = [
        Monomial.from_coeff(1.0, {d_name: 1.0}),
        cx.monomial(1, 2.0 * anchor_x),
        cy.monomial(1, 2.0 * anchor_y),
    ]
    inv = condense(den, trust) ** -1.0
    return Posynomial(tuple(t * inv for t in num))


def agma_upsilon(d_monomial: Monomial, s_const: float, trust: Dict[str, float]) -> Monomial:
    """Monomial upper bound on D/(D+S) at fixed S > 0, tight at the trust point.

    With k1 = D/(D+S) and k2 = S/(D+S) at the trust point,
    D/(D+S) <= k1^k1 * k2^k2 * S^{-k2} * D^{k2}.
    """
    if s_const <= 0.0:
        return Monomial(0.0)  # SINR is zero; the ratio is identically 1
    log_d = d_monomial.log_evaluate(trust)
    log_s = math.log(s_const)
    peak = max(log_d, log_s)
    k1 = math.exp(log_d - peak)
    k2 = math.exp(log_s - peak)
    tot = k1 + k2
    k1, k2 = k1 / tot, k2 / tot
    log_coeff = 0.0
    for k in (k1, k2):
        if k > 0.0:
            log_coeff += k * math.log(k)
    log_coeff -= k2 * log_s
    return (d_monomial ** k2) * Monomial(log_coeff)


def chi_cap_posynomial(chi_name: str, terms: Sequence[Monomial], noise: float) -> Posynomial:
    """chi >= sum(interference caps) + noise, as posynomial <= 1."""
    inv = Monomial.from_coeff(1.0, {chi_name: -1.0})
    rows = [t * inv for t in terms]
    rows.append(Monomial.from_coeff(noise) * inv)
    return Posynomial(tuple(rows))


# ---------------------------------------------------------------------------
# trust point
# ---------------------------------------------------------------------------


@dataclass
class TrustPoint:
    """Everything the condensation needs about the incumbent trajectory."""

    traj: np.ndarray                       # (N+1, 2)
    modes: ModeAssignment
    orders: tuple                          # slot n -> SicOrder, index n-1
    rho: np.ndarray                        # (N, 2): per-slot rho for modes (t, r)
    dcheck_bs: np.ndarray                  # (N,) squared 3-D BS link distance
    dcheck: Dict[str, np.ndarray]          # node id -> (N,) squared link distance
    chi: Dict[str, np.ndarray]             # receiver id -> (N,) interference + noise


def _sq_dist(traj: np.ndarray, anchor_xy: Tuple[float, float], n: int, altitude: float) -> float:
    dx = traj[n, 0] - anchor_xy[0]
    dy = traj[n, 1] - anchor_xy[1]
    return dx * dx + dy * dy + altitude * altitude


def _rho_of(trust: TrustPoint, mode: str, n: int) -> float:
    return trust.rho[n - 1, 0] if mode == "t" else trust.rho[n - 1, 1]


def build_trust(
    scn: Scenario, traj: np.ndarray, state: BeamformingState, powers: np.ndarray
) -> TrustPoint:
    """Tight auxiliaries, modes, orders, and rho at an incumbent trajectory."""
    c = scn.consts
    n_slots = scn.grid.slot_count
    traj = np.asarray(traj, dtype=float)
    modes = assign_modes_trajectory(scn, traj)
    rho = np.empty((n_slots, 2))
    orders = []
    for n in range(1, n_slots + 1):
        coeffs = state.coeffs(n)
        rho[n - 1, 0] = amplitude_sum_power(c.beta0, coeffs.alpha_t)
        rho[n - 1, 1] = amplitude_sum_power(c.beta0, coeffs.alpha_r)
        q = Position2D(float(traj[n, 0]), float(traj[n, 1]))
        orders.append(slot_gains(scn, q, coeffs, modes.by_slot[n - 1], n).order)

    nodes = {u.id: u.path for u in scn.users}
    nodes.update({e.id: e.path for e in scn.extra_interferers})
    dcheck = {
        uid: np.array(
            [_sq_dist(traj, path[n].as_tuple(), n, c.altitude) for n in range(1, n_slots + 1)]
        )
        for uid, path in nodes.items()
    }
    dcheck_bs = np.array(
        [_sq_dist(traj, scn.bs.as_tuple(), n, c.altitude) for n in range(1, n_slots + 1)]
    )

    trust = TrustPoint(
        traj=traj,
        modes=modes,
        orders=tuple(orders),
        rho=rho,
        dcheck_bs=dcheck_bs,
        dcheck=dcheck,
        chi={},
    )
    trust.chi = _tight_chi(scn, trust, powers)
    return trust


def _cap(rho: float, da_sq: float, db_sq: float, alpha: float) -> float:
    return rho / (da_sq ** (alpha / 2.0) * db_sq ** (alpha / 2.0))


def _tight_chi(scn: Scenario, trust: TrustPoint, powers: np.ndarray) -> Dict[str, np.ndarray]:
    """Interference-plus-noise caps evaluated at the trust auxiliaries."""
    c = scn.consts
    n_slots = scn.grid.slot_count
    s1, s2 = scn.su_source.id, scn.su_dest.id
    out = {u.id: np.zeros(n_slots) for u in scn.receivers}
    for n in range(1, n_slots + 1):
        i = n - 1
        modes = trust.modes.by_slot[i]
        order = trust.orders[i]
        for k, u in enumerate(scn.pus):
            rho = _rho_of(trust, modes[u.id], n)
            acc = c.noise_power
            p_stronger = sum(powers[i, w] for w in order.interferers[k])
            acc += p_stronger * _cap(rho, trust.dcheck[u.id][i], trust.dcheck_bs[i], c.path_loss_exp)
            acc += c.p_su * _cap(rho, trust.dcheck[u.id][i], trust.dcheck[s1][i], c.path_loss_exp)
            for e in scn.extra_interferers:
                acc += e.power * _cap(
                    rho, trust.dcheck[u.id][i], trust.dcheck[e.id][i], c.path_loss_exp
                )
            out[u.id][i] = acc
        rho = _rho_of(trust, modes[s2], n)
        acc = c.noise_power
        acc += float(np.sum(powers[i])) * _cap(
            rho, trust.dcheck[s2][i], trust.dcheck_bs[i], c.path_loss_exp
        )
        for e in scn.extra_interferers:
            acc += e.power * _cap(rho, trust.dcheck[s2][i], trust.dcheck[e.id][i], c.path_loss_exp)
        out[s2][i] = acc
    return out


@dataclass(frozen=True)
class SurrogateRates:
    """Slot-wise surrogate rates over the free slots 1..N-1."""

    pu: np.ndarray  # (N-1, K)
    su: np.ndarray  # (N-1,)

    @property
    def total(self) -> float:
        return float(np.sum(self.pu) + np.sum(self.su))


def surrogate_rates(scn: Scenario, trust: TrustPoint, powers: np.ndarray) -> SurrogateRates:
    """Rates implied by the auxiliaries: log2(1 + p*rho / (da^a/2 db^a/2 chi))."""
    c = scn.consts
    n_free = scn.grid.slot_count - 1
    s1, s2 = scn.su_source.id, scn.su_dest.id
    a2 = c.path_loss_exp / 2.0
    pu = np.zeros((n_free, len(scn.pus)))
    su = np.zeros(n_free)
    for n in range(1, n_free + 1):
        i = n - 1
        modes = trust.modes.by_slot[i]
        for k, u in enumerate(scn.pus):
            rho = _rho_of(trust, modes[u.id], n)
            d_prod = trust.dcheck[u.id][i] ** a2 * trust.dcheck_bs[i] ** a2
            pu[i, k] = math.log2(1.0 + powers[i, k] * rho / (d_prod * trust.chi[u.id][i]))
        rho = _rho_of(trust, modes[s2], n)
        d_prod = trust.dcheck[s2][i] ** a2 * trust.dcheck[s1][i] ** a2
        su[i] = math.log2(1.0 + c.p_su * rho / (d_prod * trust.chi[s2][i]))
    return SurrogateRates(pu=pu, su=su)


# ---------------------------------------------------------------------------
# program assembly
# ---------------------------------------------------------------------------


def _coord(n: int, axis: str, traj_shifted: np.ndarray, n_slots: int) -> Coord:
    col = 0 if axis == "x" else 1
    val = float(traj_shifted[n, col])
    if n == 0 or n == n_slots:
        return Coord(value=val)
    return Coord(value=val, name=f"{axis}_{n}")


def _gp_trust_values(scn: Scenario, trust: TrustPoint, shift: float) -> Dict[str, float]:
    vals: Dict[str, float] = {}
    n_slots = scn.grid.slot_count
    for n in range(1, n_slots):
        vals[f"x_{n}"] = trust.traj[n, 0] + shift
        vals[f"y_{n}"] = trust.traj[n, 1] + shift
        vals[f"dbs_{n}"] = trust.dcheck_bs[n - 1]
        for uid in trust.dcheck:
            vals[f"d_{uid}_{n}"] = trust.dcheck[uid][n - 1]
        for uid in trust.chi:
            vals[f"chi_{uid}_{n}"] = trust.chi[uid][n - 1]
    return vals


def _signal_d_monomial(uid: str, n: int, alpha: float, against_bs: bool, other: str = "") -> Monomial:
    a2 = alpha / 2.0
    exps = {f"d_{uid}_{n}": a2, f"chi_{uid}_{n}": 1.0}
    if against_bs:
        exps[f"dbs_{n}"] = a2
    else:
        exps[f"d_{other}_{n}"] = a2
    return Monomial.from_coeff(1.0, exps)


def build_gp(
    scn: Scenario,
    trust: TrustPoint,
    powers: np.ndarray,
    shift: float,
    thresholds: Optional[np.ndarray] = None,
) -> GeometricProgram:
    """One condensation of the path problem around `trust`.

    `thresholds` is an (N-1, K) array of per-slot floor rates for the primary
    users (defaults to the reserved rate everywhere).
    """
    c = scn.consts
    n_slots = scn.grid.slot_count
    a2 = c.path_loss_exp / 2.0
    s1, s2 = scn.su_source.id, scn.su_dest.id
    if thresholds is None:
        thresholds = np.full((n_slots - 1, len(scn.pus)), c.r_rsv)

    traj_shifted = trust.traj + shift
    tvals = _gp_trust_values(scn, trust, shift)
    vmax_delta = c.v_max * scn.grid.slot_len

    cons: List[Posynomial] = []

    for n in range(1, n_slots + 1):
        cons.append(
            agma_step_posynomial(
                _coord(n, "x", traj_shifted, n_slots),
                _coord(n, "y", traj_shifted, n_slots),
                _coord(n - 1, "x", traj_shifted, n_slots),
                _coord(n - 1, "y", traj_shifted, n_slots),
                vmax_delta,
                tvals,
            )
        )

    nodes = {u.id: u.path for u in scn.users}
    nodes.update({e.id: e.path for e in scn.extra_interferers})
    for n in range(1, n_slots):
        cx = _coord(n, "x", traj_shifted, n_slots)
        cy = _coord(n, "y", traj_shifted, n_slots)
        cons.append(
            agma_distance_posynomial(
                f"dbs_{n}", cx, cy, scn.bs.x + shift, scn.bs.y + shift, c.altitude, tvals
            )
        )
        for uid, path in nodes.items():
            cons.append(
                agma_distance_posynomial(
                    f"d_{uid}_{n}", cx, cy, path[n].x + shift, path[n].y + shift, c.altitude, tvals
                )
            )

    objective = Monomial(0.0)
    for n in range(1, n_slots):
        i = n - 1
        modes = trust.modes.by_slot[i]
        order = trust.orders[i]
        for k, u in enumerate(scn.pus):
            rho = _rho_of(trust, modes[u.id], n)
            cap_terms = []
            p_stronger = sum(powers[i, w] for w in order.interferers[k])
            if p_stronger > 0.0 and rho > 0.0:
                cap_terms.append(
                    Monomial.from_coeff(
                        p_stronger * rho, {f"d_{u.id}_{n}": -a2, f"dbs_{n}": -a2}
                    )
                )
            if rho > 0.0:
                cap_terms.append(
                    Monomial.from_coeff(
                        c.p_su * rho, {f"d_{u.id}_{n}": -a2, f"d_{s1}_{n}": -a2}
                    )
                )
                for e in scn.extra_interferers:
                    cap_terms.append(
                        Monomial.from_coeff(
                            e.power * rho, {f"d_{u.id}_{n}": -a2, f"d_{e.id}_{n}": -a2}
                        )
                    )
            cons.append(chi_cap_posynomial(f"chi_{u.id}_{n}", cap_terms, c.noise_power))
            d_mono = _signal_d_monomial(u.id, n, c.path_loss_exp, against_bs=True)
            ups = agma_upsilon(d_mono, powers[i, k] * rho, tvals)
            objective = objective * ups
            if thresholds[i, k] > 0.0:
                cons.append(Posynomial((ups * Monomial(thresholds[i, k] * math.log(2.0)),)))

        rho = _rho_of(trust, modes[s2], n)
        cap_terms = []
        p_total = float(np.sum(powers[i]))
        if p_total > 0.0 and rho > 0.0:
            cap_terms.append(
                Monomial.from_coeff(p_total * rho, {f"d_{s2}_{n}": -a2, f"dbs_{n}": -a2})
            )
        if rho > 0.0:
            for e in scn.extra_interferers:
                cap_terms.append(
                    Monomial.from_coeff(
                        e.power * rho, {f"d_{s2}_{n}": -a2, f"d_{e.id}_{n}": -a2}
                    )
                )
        cons.append(chi_cap_posynomial(f"chi_{s2}_{n}", cap_terms, c.noise_power))
        d_mono = _signal_d_monomial(s2, n, c.path_loss_exp, against_bs=False, other=s1)
        objective = objective * agma_upsilon(d_mono, c.p_su * rho, tvals)

    return GeometricProgram(objective=Posynomial((objective,)), constraints=cons)


# ---------------------------------------------------------------------------
# feasibility repair
# ---------------------------------------------------------------------------


def step_lengths(traj: np.ndarray) -> np.ndarray:
    d = np.diff(np.asarray(traj, dtype=float), axis=0)
    return np.sqrt(np.sum(d * d, axis=1))


def _chord_blend(traj: np.ndarray, vmax_delta: float) -> Optional[np.ndarray]:
    """Pull the path toward the straight chord until steps fit the bound."""
    n_slots = traj.shape[0] - 1
    line = np.linspace(traj[0], traj[-1], n_slots + 1)
    excess = float(np.max(step_lengths(traj))) - vmax_delta
    line_step = float(np.max(step_lengths(line)))
    room = vmax_delta - line_step
    if excess <= 0:
        return traj
    if room <= 1e-12:
        return line
    s = min(1.0, excess / (room + excess) * (1.0 + 1e-9))
    return (1.0 - s) * traj + s * line


def repair_steps(traj: np.ndarray, vmax_delta: float, tol: float) -> Optional[np.ndarray]:
    """Return a nearby trajectory satisfying the step bound, or None.

    Solver output can overshoot the bound by more than the accepted
    tolerance; when that happens the interior points are projected onto the
    feasible set (endpoints stay pinned), with a chord blend as fallback.
    """
    import warnings

    import cvxpy as cp

    traj = np.asarray(traj, dtype=float)
    worst = float(np.max(step_lengths(traj))) - vmax_delta
    if worst <= tol * 0.5:
        return traj
    n_slots = traj.shape[0] - 1
    chord = float(np.hypot(*(traj[-1] - traj[0])))
    slack = max(0.0, (n_slots * vmax_delta - chord) / n_slots)
    margin = min(1e-5, slack / 2.0)
    inner = cp.Variable((n_slots - 1, 2))
    pts = [traj[0]] + [inner[i] for i in range(n_slots - 1)] + [traj[-1]]
    cons = [cp.norm(pts[i + 1] - pts[i]) <= vmax_delta - margin for i in range(n_slots)]
    prob = cp.Problem(cp.Minimize(cp.sum_squares(inner - traj[1:-1])), cons)
    fixed = None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            prob.solve(solver="CLARABEL")
        if inner.value is not None and prob.status in ("optimal", "optimal_inaccurate"):
            fixed = np.vstack([traj[0], inner.value, traj[-1]])
    except Exception:
        fixed = None
    if fixed is None or float(np.max(step_lengths(fixed))) > vmax_delta + tol:
        fixed = _chord_blend(traj, vmax_delta)
    if fixed is None or float(np.max(step_lengths(fixed))) > vmax_delta + tol:
        return None
    return fixed


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


@dataclass
class TrajectoryResult:
    traj: np.ndarray
    surrogate_history: Tuple[float, ...]
    flags: Tuple[str, ...]
    iterations: int


def _relaxed_thresholds(
    scn: Scenario, rates: SurrogateRates, qos_slack: float
) -> np.ndarray:
    base = np.full_like(rates.pu, scn.consts.r_rsv)
    return np.minimum(base, np.maximum(0.0, rates.pu - qos_slack))


def solve_trajectory(
    scn: Scenario,
    state: BeamformingState,
    powers: np.ndarray,
    traj_init: np.ndarray,
    opts: TrajectoryOptions = TrajectoryOptions(),
) -> TrajectoryResult:
    """Improve the path at fixed coefficients and powers.

    Runs condense-solve rounds until the surrogate sum rate stalls; returns
    the best iterate. The result always satisfies the step bound to within
    opts.step_feas_tol and keeps both endpoints exact.
    """
    c = scn.consts
    vmax_delta = c.v_max * scn.grid.slot_len
    flags: List[str] = []

    low = min(
        0.0,
        scn.bs.x,
        scn.bs.y,
        float(np.min(traj_init)),
        *(min(p.x, p.y) for u in scn.users for p in u.path),
        *(min(p.x, p.y) for e in scn.extra_interferers for p in e.path),
    )
    shift = max(opts.coord_shift, 1.0 - low)

    traj = repair_steps(np.asarray(traj_init, dtype=float), vmax_delta, opts.step_feas_tol)
    if traj is None:
        return TrajectoryResult(
            traj=np.asarray(traj_init, dtype=float),
            surrogate_history=(),
            flags=("degraded", "init-step-infeasible"),
            iterations=0,
        )

    trust = build_trust(scn, traj, state, powers)
    f_cur = surrogate_rates(scn, trust, powers).total
    best_traj, best_f = traj, f_cur
    history = [f_cur]
    relaxed = False
    it = 0
    while it < opts.max_iter:
        it += 1
        if relaxed:
            thresholds = _relaxed_thresholds(scn, surrogate_rates(scn, trust, powers), opts.qos_slack)
        else:
            thresholds = None
        gp = build_gp(scn, trust, powers, shift, thresholds)
        res: SolveResult = solve_gp(gp)
        if not res.ok:
            if not relaxed:
                relaxed = True
                flags.append("qos-relaxed")
                continue
            flags.append("degraded")
            break
        n_slots = scn.grid.slot_count
        new = trust.traj.copy()
        for n in range(1, n_slots):
            new[n, 0] = res.values[f"x_{n}"] - shift
            new[n, 1] = res.values[f"y_{n}"] - shift
        # degenerate solves can leave a coordinate at its log-domain cap;
        # nothing reachable lies outside the endpoint box plus the leash
        reach = n_slots * vmax_delta
        lo = min(traj[0].min(), traj[-1].min()) - reach
        hi = max(traj[0].max(), traj[-1].max()) + reach
        np.clip(new, lo, hi, out=new)
        new = repair_steps(new, vmax_delta, opts.step_feas_tol)
        if new is None:
            flags.append("degraded")
            break
        trust = build_trust(scn, new, state, powers)
        f_new = surrogate_rates(scn, trust, powers).total
        history.append(f_new)
        if f_new > best_f:
            best_traj, best_f = new, f_new
        if abs(f_new - f_cur) <= opts.tol * max(1.0, abs(f_cur)):
            break
        f_cur = f_new
    return TrajectoryResult(
        traj=best_traj,
        surrogate_history=tuple(history),
        flags=tuple(flags),
        iterations=it,
    )


def straight_line_trajectory(scn: Scenario) -> np.ndarray:
    """Constant-speed path from the start point to the end point."""
    return np.linspace(
        np.asarray(scn.q_start.as_tuple()),
        np.asarray(scn.q_end.as_tuple()),
        scn.grid.slot_count + 1,
    )
