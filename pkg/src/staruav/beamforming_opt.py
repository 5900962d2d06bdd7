"""Element coefficient optimization by semidefinite relaxation, slot by slot.

The per-mode coefficient vector phi (entries sqrt(alpha_m) e^{j theta_m}) is
lifted to Phi = phi phi^H, making every cascaded signal power a trace:
|v^H Theta g|^2 = Tr(H Phi) with H = h h^H, h = conj(v) * g elementwise.
Each receiver gets two slacks, e >= 1/signal and f >= interference + noise,
and the slot utility sum log2(1 + 1/(e_u f_u)) is replaced by its tangent
plane at the incumbent, which is a global lower bound since the function is
jointly convex in (e, f). Rank-one solutions are encouraged by a linear cut
Tr(vv^H Phi) >= zeta Tr(Phi) whose level zeta ratchets up each round.

All channel powers inside the program are expressed in noise units and the
slacks are normalized by their incumbent values, keeping every coefficient
near unity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .channel import link_geometry
from .conic import SdpProblem, TraceExpr, solve_sdp
from .rate import SlotGains, pu_rate, slot_gains, slot_vectors, su_rate
from .scenario import Position2D, Scenario
from .star_ris import (
    MODE_R,
    MODE_T,
    BeamformingState,
    ElementCoeffs,
    ModeAssignment,
    assign_modes_trajectory,
    phase_align,
    ts_alternating,
)

_LOG2E = 1.0 / math.log(2.0)
_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class BeamformingOptions:
    max_iter: int = 8
    tol: float = 3e-4
    rank_tol: float = 0.999
    zeta_init: float = 0.0
    zeta_step: float = 0.1
    qos_tol: float = 1e-6
    # level actually placed in the cut; exactly 1 leaves the SDP no interior
    zeta_cap: float = 0.9995


def taylor_rate_bound(e: float, f: float, e0: float, f0: float) -> float:
    """Tangent plane of log2(1 + 1/(e f)) at (e0, f0); a global lower bound."""
    a = math.log2(1.0 + 1.0 / (e0 * f0))
    denom = 1.0 + e0 * f0
    return a - _LOG2E * (e - e0) / (e0 * denom) - _LOG2E * (f - f0) / (f0 * denom)


def update_zeta(ratio: float, step: float) -> float:
    """Next rank-forcing level from the current dominant-eigenvalue share."""
    return min(1.0, ratio + step)


def rank_ratio(phi: np.ndarray) -> float:
    """Dominant eigenvalue share lambda_max / Tr of a Hermitian PSD matrix."""
    tr = float(np.real(np.trace(phi)))
    if tr < 1e-12:
        return 1.0
    w = np.linalg.eigvalsh(phi)
    return float(w[-1]) / tr


def lift_vector(coeffs: ElementCoeffs, mode: str) -> np.ndarray:
    """phi with entries sqrt(alpha_m) e^{j theta_m} for one mode."""
    return np.sqrt(coeffs.amplitudes(mode)) * np.exp(1j * coeffs.phases(mode))


def cascade_outer(v_receiver: np.ndarray, src: np.ndarray) -> np.ndarray:
    """H = h h^H with h = conj(v_receiver) * src, so |phi^H h|^2 = Tr(H Phi)."""
    h = np.conj(v_receiver) * src
    return np.outer(h, np.conj(h))


def extract_coeffs(
    phi_t: np.ndarray, phi_r: np.ndarray
) -> ElementCoeffs:
    """Amplitudes from the diagonals, phases from the dominant eigenvectors.

    The ES split is renormalized exactly so alpha_t + alpha_r = 1 per element.
    """
    a_t = np.clip(np.real(np.diag(phi_t)), 0.0, 1.0)
    a_r = np.clip(np.real(np.diag(phi_r)), 0.0, 1.0)
    total = a_t + a_r
    safe = np.where(total > 1e-12, total, 1.0)
    a_t = np.where(total > 1e-12, a_t / safe, 0.5)
    a_r = 1.0 - a_t

    def phases(phi: np.ndarray) -> np.ndarray:
        _, vecs = np.linalg.eigh(phi)
        u = vecs[:, -1]
        return np.mod(np.angle(u), _TWO_PI)

    return ElementCoeffs(alpha_t=a_t, alpha_r=a_r, theta_t=phases(phi_t), theta_r=phases(phi_r))


# ---------------------------------------------------------------------------
# aligned-phase state builders
# ---------------------------------------------------------------------------


def _omega(scn: Scenario, q: Position2D, anchor: Position2D) -> float:
    return link_geometry(q, anchor, scn.consts.altitude).cos_angle


def _link_weight(scn: Scenario, q: Position2D, user_pos: Position2D) -> float:
    """d_user^alpha * d_bs^alpha; larger means a weaker cascaded link."""
    c = scn.consts
    d_u = link_geometry(q, user_pos, c.altitude).distance
    d_b = link_geometry(q, scn.bs, c.altitude).distance
    return d_u**c.path_loss_exp * d_b**c.path_loss_exp


def aligned_phases(
    scn: Scenario, q: Position2D, modes: dict, n: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-mode phase rows for slot n under the conflict rule.

    Reflection serves the weakest reflection-side PU on the BS cascade;
    transmission serves the secondary destination on its source cascade.
    When a side holds no such user the rule falls back to whatever user that
    side does hold, and to the overall weakest PU if it holds none.
    """
    c = scn.consts
    s1, s2 = scn.su_source, scn.su_dest
    om_bs = _omega(scn, q, scn.bs)
    om_s1 = _omega(scn, q, s1.path[n])

    def weakest(pus) -> Position2D:
        return max(pus, key=lambda u: _link_weight(scn, q, u.path[n])).path[n]

    def side_phases(side: str) -> np.ndarray:
        side_pus = [u for u in scn.pus if modes[u.id] == side]
        su_here = modes[s2.id] == side
        if side == MODE_R:
            if side_pus:
                src, dst = om_bs, _omega(scn, q, weakest(side_pus))
            elif su_here:
                src, dst = om_s1, _omega(scn, q, s2.path[n])
            else:
                src, dst = om_bs, _omega(scn, q, weakest(scn.pus))
        else:
            if su_here:
                src, dst = om_s1, _omega(scn, q, s2.path[n])
            elif side_pus:
                src, dst = om_bs, _omega(scn, q, weakest(side_pus))
            else:
                src, dst = om_s1, _omega(scn, q, s2.path[n])
        return phase_align(src, dst, c.element_count, c.element_sep, c.wavelength)

    return side_phases(MODE_T), side_phases(MODE_R)


def aligned_state(
    scn: Scenario,
    traj: np.ndarray,
    split_t: float = 0.5,
    modes: Optional[ModeAssignment] = None,
) -> BeamformingState:
    """ES state with a flat amplitude split and conflict-rule phases per slot."""
    if modes is None:
        modes = assign_modes_trajectory(scn, traj)
    m = scn.consts.element_count
    slots = []
    for n in range(1, scn.grid.slot_count + 1):
        q = Position2D(float(traj[n, 0]), float(traj[n, 1]))
        th_t, th_r = aligned_phases(scn, q, modes.by_slot[n - 1], n)
        slots.append(
            ElementCoeffs(
                alpha_t=np.full(m, split_t),
                alpha_r=np.full(m, 1.0 - split_t),
                theta_t=th_t,
                theta_r=th_r,
            )
        )
    return BeamformingState(per_slot=tuple(slots), protocol="ES")


def initial_state(scn: Scenario, traj: np.ndarray, surface_mode: str = "star") -> BeamformingState:
    """Starting coefficients: even split for a STAR surface, one-sided otherwise."""
    if surface_mode == "star":
        return aligned_state(scn, traj, split_t=0.5)
    if surface_mode == "ris":
        return aligned_state(scn, traj, split_t=0.0)
    if surface_mode == "its":
        return aligned_state(scn, traj, split_t=1.0)
    raise ValueError(f"unknown surface mode {surface_mode!r}")


def ts_state(scn: Scenario, traj: np.ndarray) -> BeamformingState:
    """Time-switching baseline: slots alternate r, t with conflict-rule phases."""
    return ts_alternating(aligned_state(scn, traj, split_t=0.5))


# ---------------------------------------------------------------------------
# per-slot SDP
# ---------------------------------------------------------------------------


@dataclass
class _SlotData:
    h_bs: Dict[str, np.ndarray]     # receiver id -> H for the BS cascade
    h_su: Dict[str, np.ndarray]     # receiver id -> H for the SU-source cascade
    h_extra: Dict[str, Dict[str, np.ndarray]]  # receiver id -> interferer id -> H
    modes: dict


def _slot_data(scn: Scenario, q: Position2D, modes: dict, n: int) -> _SlotData:
    g, v, v_src, v_extra = slot_vectors(scn, q, n)
    scale = 1.0 / scn.consts.noise_power
    h_bs, h_su, h_extra = {}, {}, {}
    for u in scn.receivers:
        h_bs[u.id] = cascade_outer(v[u.id], g) * scale
        h_su[u.id] = cascade_outer(v[u.id], v_src) * scale
        h_extra[u.id] = {
            e.id: cascade_outer(v[u.id], v_extra[e.id]) * scale for e in scn.extra_interferers
        }
    return _SlotData(h_bs=h_bs, h_su=h_su, h_extra=h_extra, modes=modes)


def _slot_utility(
    scn: Scenario, q: Position2D, coeffs: ElementCoeffs, modes: dict, n: int, p_row: np.ndarray
) -> Tuple[float, float, SlotGains]:
    gains = slot_gains(scn, q, coeffs, modes, n)
    c = scn.consts
    rates = [pu_rate(k, p_row, gains, c.p_su, c.noise_power) for k in range(len(scn.pus))]
    total = sum(rates) + su_rate(p_row, gains, c.p_su, c.noise_power)
    return total, (min(rates) if rates else math.inf), gains


def _expansion(
    scn: Scenario, gains: SlotGains, p_row: np.ndarray
) -> Optional[Dict[str, Tuple[float, float]]]:
    """Incumbent (e0, f0) per served receiver, in noise units; None if degenerate."""
    c = scn.consts
    noise = c.noise_power
    out = {}
    for k, u in enumerate(scn.pus):
        if p_row[k] <= 0.0:
            continue
        sig = p_row[k] * gains.pu_bs[k] / noise
        if sig <= 1e-30:
            return None
        stronger = sum(p_row[w] for w in gains.order.interferers[k])
        f0 = (stronger * gains.pu_bs[k] + c.p_su * gains.pu_su[k] + gains.pu_extra[k]) / noise + 1.0
        out[u.id] = (1.0 / sig, f0)
    sig = c.p_su * gains.su_link / noise
    if sig <= 1e-30:
        return None
    f0 = (float(np.sum(p_row)) * gains.su_bs + gains.su_extra) / noise + 1.0
    out[scn.su_dest.id] = (1.0 / sig, f0)
    return out


def _build_slot_sdp(
    scn: Scenario,
    data: _SlotData,
    p_row: np.ndarray,
    order,
    expansion: Dict[str, Tuple[float, float]],
    zeta: Dict[str, float],
    rank_vec: Dict[str, np.ndarray],
) -> SdpProblem:
    """One tangent-plane round: variables Phi_t, Phi_r and normalized slacks.

    The slack for receiver u is stored as e_u / e0_u (same for f), so the
    lifted signal constraint becomes 1/e_tilde <= e0 * signal.
    """
    c = scn.consts
    m = c.element_count
    scalars: List[str] = []
    cons: List[tuple] = [("diag_sum_eq", "phi_t", "phi_r", 1.0)]
    objective = TraceExpr()

    def served_pus():
        for k, u in enumerate(scn.pus):
            if u.id in expansion:
                yield k, u

    for k, u in served_pus():
        e0, f0 = expansion[u.id]
        z = "phi_t" if data.modes[u.id] == MODE_T else "phi_r"
        en, fn = f"e_{u.id}", f"f_{u.id}"
        scalars += [en, fn]
        sig = TraceExpr().add_trace(z, data.h_bs[u.id], p_row[k] * e0)
        cons.append(("invpos", en, sig))
        intf = TraceExpr(const=-1.0 / f0, lin={fn: 1.0})
        stronger = sum(p_row[w] for w in order.interferers[k])
        if stronger > 0.0:
            intf.add_trace(z, data.h_bs[u.id], -stronger / f0)
        intf.add_trace(z, data.h_su[u.id], -c.p_su / f0)
        for e in scn.extra_interferers:
            intf.add_trace(z, data.h_extra[u.id][e.id], -e.power / f0)
        cons.append(("ge0", intf))

    s2 = scn.su_dest.id
    e0, f0 = expansion[s2]
    z2 = "phi_t" if data.modes[s2] == MODE_T else "phi_r"
    en, fn = f"e_{s2}", f"f_{s2}"
    scalars += [en, fn]
    cons.append(("invpos", en, TraceExpr().add_trace(z2, data.h_su[s2], c.p_su * e0)))
    intf = TraceExpr(const=-1.0 / f0, lin={fn: 1.0})
    p_total = float(np.sum(p_row))
    if p_total > 0.0:
        intf.add_trace(z2, data.h_bs[s2], -p_total / f0)
    for e in scn.extra_interferers:
        intf.add_trace(z2, data.h_extra[s2][e.id], -e.power / f0)
    cons.append(("ge0", intf))

    # tangent objective: constants dropped into `const`, slopes on e~ = e/e0, f~ = f/f0
    users = [(u.id, expansion[u.id]) for _, u in served_pus()] + [(s2, expansion[s2])]
    qos_ids = {u.id for _, u in served_pus()}
    for uid, (e0, f0) in users:
        denom = 1.0 + e0 * f0
        a = math.log2(1.0 + 1.0 / (e0 * f0))
        slope = _LOG2E / denom  # slope on the normalized slack, both axes
        objective.const += a + 2.0 * slope
        objective.lin[f"e_{uid}"] = objective.lin.get(f"e_{uid}", 0.0) - slope
        objective.lin[f"f_{uid}"] = objective.lin.get(f"f_{uid}", 0.0) - slope
        if uid in qos_ids and c.r_rsv > 0.0:
            qos = TraceExpr(
                const=a + 2.0 * slope - c.r_rsv,
                lin={f"e_{uid}": -slope, f"f_{uid}": -slope},
            )
            cons.append(("ge0", qos))

    for z in ("phi_t", "phi_r"):
        v = rank_vec[z]
        cut = TraceExpr().add_trace(z, np.outer(v, np.conj(v)), 1.0)
        cut.add_trace(z, np.eye(m, dtype=complex), -zeta[z])
        cons.append(("ge0", cut))

    return SdpProblem(
        matrix_dims={"phi_t": m, "phi_r": m},
        scalar_names=scalars,
        objective=objective,
        constraints=cons,
    )


@dataclass
class BeamformingResult:
    state: BeamformingState
    rank_ratios: np.ndarray      # (N, 2) final lambda_max/Tr per slot, modes (t, r)
    flags: Tuple[str, ...]
    iterations: int


def solve_beamforming(
    scn: Scenario,
    traj: np.ndarray,
    state: BeamformingState,
    powers: np.ndarray,
    opts: BeamformingOptions = BeamformingOptions(),
    modes: Optional[ModeAssignment] = None,
) -> BeamformingResult:
    """Improve the ES coefficients at a fixed path and fixed powers.

    Slots are independent; each runs tangent-plane rounds with the rank cut
    ratcheting until the relaxation is numerically rank one. A slot keeps its
    incumbent coefficients whenever the extracted candidate loses utility or
    newly breaks the reserved-rate floor.
    """
    if modes is None:
        modes = assign_modes_trajectory(scn, traj)
    n_slots = scn.grid.slot_count
    flags: List[str] = []
    out_slots: List[ElementCoeffs] = []
    ratios = np.ones((n_slots, 2))
    total_rounds = 0
    c = scn.consts

    for n in range(1, n_slots + 1):
        q = Position2D(float(traj[n, 0]), float(traj[n, 1]))
        mode_map = modes.by_slot[n - 1]
        p_row = powers[n - 1]
        incumbent = state.coeffs(n)
        inc_total, inc_min, inc_gains = _slot_utility(scn, q, incumbent, mode_map, n, p_row)
        data = _slot_data(scn, q, mode_map, n)
        expansion = _expansion(scn, inc_gains, p_row)
        if expansion is None:
            out_slots.append(incumbent)
            flags.append(f"slot{n}:degenerate-signal")
            continue

        zeta = {"phi_t": opts.zeta_init, "phi_r": opts.zeta_init}
        rank_vec = {
            "phi_t": lift_vector(incumbent, MODE_T),
            "phi_r": lift_vector(incumbent, MODE_R),
        }
        for z in ("phi_t", "phi_r"):
            nv = np.linalg.norm(rank_vec[z])
            rank_vec[z] = rank_vec[z] / nv if nv > 1e-12 else np.ones(c.element_count) / math.sqrt(c.element_count)

        phi_best = None
        bound_prev = None
        order = inc_gains.order
        solved_any = False
        for _ in range(opts.max_iter):
            total_rounds += 1
            capped = {z: min(zeta[z], opts.zeta_cap) for z in zeta}
            prob = _build_slot_sdp(scn, data, p_row, order, expansion, capped, rank_vec)
            res = solve_sdp(prob)
            if not res.ok:
                break
            solved_any = True
            phi = {z: res.values[z] for z in ("phi_t", "phi_r")}
            phi_best = phi
            # retighten the expansion from the solved matrices
            new_exp = {}
            bound_now = 0.0
            degenerate = False
            for uid, (e0_old, f0_old) in expansion.items():
                z = "phi_t" if data.modes[uid] == MODE_T else "phi_r"
                if uid == scn.su_dest.id:
                    sig = c.p_su * float(np.real(np.trace(data.h_su[uid] @ phi[z])))
                    intf = float(np.sum(p_row)) * float(np.real(np.trace(data.h_bs[uid] @ phi[z])))
                else:
                    k = next(i for i, u in enumerate(scn.pus) if u.id == uid)
                    sig = p_row[k] * float(np.real(np.trace(data.h_bs[uid] @ phi[z])))
                    stronger = sum(p_row[w] for w in order.interferers[k])
                    intf = stronger * float(np.real(np.trace(data.h_bs[uid] @ phi[z])))
                    intf += c.p_su * float(np.real(np.trace(data.h_su[uid] @ phi[z])))
                for e in scn.extra_interferers:
                    intf += e.power * float(np.real(np.trace(data.h_extra[uid][e.id] @ phi[z])))
                intf = max(intf, 0.0)  # traces of inaccurate iterates can dip negative
                if sig <= 1e-30:
                    degenerate = True
                    break
                new_exp[uid] = (1.0 / sig, intf + 1.0)
                bound_now += math.log2(1.0 + sig / (intf + 1.0))
            if degenerate:
                break
            expansion = new_exp
            r_t, r_r = rank_ratio(phi["phi_t"]), rank_ratio(phi["phi_r"])
            for z, r in (("phi_t", r_t), ("phi_r", r_r)):
                zeta[z] = update_zeta(max(r, zeta[z]), opts.zeta_step)
                tr = float(np.real(np.trace(phi[z])))
                if tr > 1e-12:
                    _, vecs = np.linalg.eigh(phi[z])
                    rank_vec[z] = vecs[:, -1]
            rank_ok = min(r_t, r_r) >= opts.rank_tol
            stalled = bound_prev is not None and abs(bound_now - bound_prev) <= opts.tol * max(
                1.0, abs(bound_prev)
            )
            if stalled and rank_ok:
                break
            bound_prev = bound_now

        if phi_best is None:
            out_slots.append(incumbent)
            if not solved_any:
                flags.append(f"slot{n}:sdp-infeasible")
            continue

        r_t = rank_ratio(phi_best["phi_t"])
        r_r = rank_ratio(phi_best["phi_r"])
        if min(r_t, r_r) < opts.rank_tol:
            # never extract from a matrix that is not numerically rank one;
            # the incumbent vector state lifts to an exact rank-one pair
            out_slots.append(incumbent)
            flags.append(f"slot{n}:rank-deficient")
            continue

        ext = extract_coeffs(phi_best["phi_t"], phi_best["phi_r"])
        th_t, th_r = aligned_phases(scn, q, mode_map, n)
        realigned = ElementCoeffs(
            alpha_t=ext.alpha_t, alpha_r=ext.alpha_r, theta_t=th_t, theta_r=th_r
        )
        cand, cand_total, cand_min = ext, *_slot_utility(scn, q, ext, mode_map, n, p_row)[:2]
        re_total, re_min, _ = _slot_utility(scn, q, realigned, mode_map, n, p_row)
        if re_total > cand_total:
            cand, cand_total, cand_min = realigned, re_total, re_min
        qos_ok = cand_min >= c.r_rsv - opts.qos_tol or inc_min < c.r_rsv - opts.qos_tol
        if cand_total >= inc_total - 1e-12 and qos_ok:
            out_slots.append(cand)
            ratios[n - 1] = (r_t, r_r)
        else:
            out_slots.append(incumbent)
            flags.append(f"slot{n}:kept-incumbent")

    new_state = BeamformingState(per_slot=tuple(out_slots), protocol="ES")
    return BeamformingResult(
        state=new_state,
        rank_ratios=ratios,
        flags=tuple(flags),
        iterations=total_rounds,
    )
