"""Achievable rates of the primary users and the underlaid secondary pair.

Per slot the BS serves the K primary users by superposition coding; each
receiver decodes stronger users first (SIC) and is left with interference
from the stronger set only, plus the secondary underlay and noise. Ordering
ties break toward the lower user index.

Variable glossary
-----------------
G_k : |cascaded BS -> surface -> PU_k|^2 with PU_k's own serving mode
S_k : |cascaded SU_src -> surface -> PU_k|^2, the underlay leak into PU_k
Hs  : |cascaded SU_src -> surface -> SU_dst|^2
Hb  : |cascaded BS -> surface -> SU_dst|^2, the BS leak into the SU link
E_* : extra co-channel pair power leaking into a receiver, in watts
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .channel import channel_bs_to_uav, channel_uav_to_user, effective_channel
from .scenario import Position2D, Scenario
from .star_ris import BeamformingState, ElementCoeffs, ModeAssignment, assign_modes_trajectory

_LN2 = math.log(2.0)


def _log2_1p(x: float) -> float:
    return math.log1p(x) / _LN2


@dataclass(frozen=True)
class SicOrder:
    """Decoding structure of one slot.

    interferers[k] is the set of PU indices decoded after k at receiver k
    (the stronger users, whose signals k cannot cancel); closure[k] adds k
    itself.
    """

    interferers: tuple
    closure: tuple

    @property
    def num_users(self) -> int:
        return len(self.interferers)


def sic_order(gains: Sequence[float]) -> SicOrder:
    """Decoding order from the per-PU cascaded gains of one slot.

    User w interferes with user k when w is strictly stronger, or equally
    strong with a lower index.
    """
    k_users = len(gains)
    inter = []
    for k in range(k_users):
        xi = frozenset(
            w
            for w in range(k_users)
            if w != k and (gains[w] > gains[k] or (gains[w] == gains[k] and w < k))
        )
        inter.append(xi)
    closure = tuple(xi | {k} for k, xi in enumerate(inter))
    return SicOrder(interferers=tuple(inter), closure=closure)


@dataclass(frozen=True)
class SlotGains:
    """Squared-magnitude cascaded gains of one slot, fixed coefficients."""

    pu_bs: np.ndarray      # (K,) G_k
    pu_su: np.ndarray      # (K,) S_k
    su_link: float         # Hs
    su_bs: float           # Hb
    pu_extra: np.ndarray   # (K,) watts, already power-weighted
    su_extra: float        # watts, already power-weighted
    order: SicOrder


def slot_vectors(scn: Scenario, q: Position2D, n: int):
    """Raw channel vectors of slot n: (g, {receiver: v}, v_src, {extra: v})."""
    g = channel_bs_to_uav(scn, q)
    v = {u.id: channel_uav_to_user(scn, q, u.path[n]) for u in scn.receivers}
    v_src = channel_uav_to_user(scn, q, scn.su_source.path[n])
    v_extra = {e.id: channel_uav_to_user(scn, q, e.path[n]) for e in scn.extra_interferers}
    return g, v, v_src, v_extra


def slot_gains(
    scn: Scenario,
    q: Position2D,
    coeffs: ElementCoeffs,
    modes: dict,
    n: int,
) -> SlotGains:
    """Assemble every squared gain entering the slot-n rate expressions."""
    g, v, v_src, v_extra = slot_vectors(scn, q, n)
    pus = scn.pus
    k_users = len(pus)
    pu_bs = np.empty(k_users)
    pu_su = np.empty(k_users)
    pu_extra = np.zeros(k_users)
    for k, u in enumerate(pus):
        z = modes[u.id]
        a, t = coeffs.amplitudes(z), coeffs.phases(z)
        pu_bs[k] = abs(effective_channel(v[u.id], a, t, g)) ** 2
        pu_su[k] = abs(effective_channel(v[u.id], a, t, v_src)) ** 2
        for e in scn.extra_interferers:
            pu_extra[k] += e.power * abs(effective_channel(v[u.id], a, t, v_extra[e.id])) ** 2
    dst = scn.su_dest
    z = modes[dst.id]
    a, t = coeffs.amplitudes(z), coeffs.phases(z)
    su_link = abs(effective_channel(v[dst.id], a, t, v_src)) ** 2
    su_bs = abs(effective_channel(v[dst.id], a, t, g)) ** 2
    su_extra = 0.0
    for e in scn.extra_interferers:
        su_extra += e.power * abs(effective_channel(v[dst.id], a, t, v_extra[e.id])) ** 2
    return SlotGains(
        pu_bs=pu_bs,
        pu_su=pu_su,
        su_link=su_link,
        su_bs=su_bs,
        pu_extra=pu_extra,
        su_extra=su_extra,
        order=sic_order(pu_bs),
    )


def pu_rate(
    k: int,
    powers: np.ndarray,
    gains: SlotGains,
    p_su: float,
    noise: float,
) -> float:
    """Rate of PU k in one slot, bits/s/Hz.

    The residual interference after SIC is the stronger users' signals, all
    seen through receiver k's own cascaded gain, plus the secondary underlay
    and any extra co-channel pairs.
    """
    g_k = gains.pu_bs[k]
    inter = sum(powers[w] for w in gains.order.interferers[k]) * g_k
    denom = inter + p_su * gains.pu_su[k] + gains.pu_extra[k] + noise
    return _log2_1p(powers[k] * g_k / denom)


def su_rate(powers: np.ndarray, gains: SlotGains, p_su: float, noise: float) -> float:
    """Rate of the secondary pair in one slot; the whole BS superposition interferes."""
    denom = float(np.sum(powers)) * gains.su_bs + gains.su_extra + noise
    return _log2_1p(p_su * gains.su_link / denom)


@dataclass(frozen=True)
class RateReport:
    """Per-slot rates, their sum, QoS margin, and secondary-side interference."""

    pu_rates: np.ndarray       # (N, K)
    su_rates: np.ndarray       # (N,)
    interference: np.ndarray   # (N,) watts leaked by the secondary system
    sum_rate: float
    qos_margin: float          # min over slots/PUs of rate - r_rsv
    modes: tuple               # per-slot user -> mode maps actually used


def _traj_positions(traj: np.ndarray) -> list:
    return [Position2D(float(x), float(y)) for x, y in np.asarray(traj, dtype=float)]


def sum_rate(
    scn: Scenario,
    traj: np.ndarray,
    state: BeamformingState,
    powers: np.ndarray,
    modes: Optional[ModeAssignment] = None,
) -> RateReport:
    """Evaluate the exact objective for a trajectory, coefficient state, and powers.

    `traj` is (N+1, 2); `powers` is (N, K) in watts, ordered like scn.pus.
    Mode assignment defaults to the dividing-plane rule along `traj`.
    """
    c = scn.consts
    n_slots = scn.grid.slot_count
    k_users = scn.num_pus
    powers = np.asarray(powers, dtype=float)
    if powers.shape != (n_slots, k_users):
        raise ValueError(f"powers must have shape ({n_slots}, {k_users}), got {powers.shape}")
    if state.n_slots != n_slots:
        raise ValueError("beamforming state and time grid disagree on slot count")
    if modes is None:
        modes = assign_modes_trajectory(scn, traj)
    pts = _traj_positions(traj)
    pu_rates = np.zeros((n_slots, k_users))
    su_rates = np.zeros(n_slots)
    interference = np.zeros(n_slots)
    for n in range(1, n_slots + 1):
        gains = slot_gains(scn, pts[n], state.coeffs(n), modes.by_slot[n - 1], n)
        for k in range(k_users):
            pu_rates[n - 1, k] = pu_rate(k, powers[n - 1], gains, c.p_su, c.noise_power)
        su_rates[n - 1] = su_rate(powers[n - 1], gains, c.p_su, c.noise_power)
        interference[n - 1] = float(
            np.sum(c.p_su * gains.pu_su + gains.pu_extra) + gains.su_extra
        )
    total = float(np.sum(pu_rates) + np.sum(su_rates))
    margin = float(np.min(pu_rates) - c.r_rsv)
    return RateReport(
        pu_rates=pu_rates,
        su_rates=su_rates,
        interference=interference,
        sum_rate=total,
        qos_margin=margin,
        modes=modes.by_slot,
    )


def oma_sum_rate(
    scn: Scenario,
    traj: np.ndarray,
    state: BeamformingState,
    powers: np.ndarray,
    modes: Optional[ModeAssignment] = None,
) -> RateReport:
    """Orthogonal baseline: each slot splits into K equal TDMA slices.

    PU k transmits alone in its slice with the same power it gets under
    superposition, so primary rates are interference-free but carry a 1/K
    time factor. The secondary pair underlays every slice.
    """
    c = scn.consts
    n_slots = scn.grid.slot_count
    k_users = scn.num_pus
    powers = np.asarray(powers, dtype=float)
    if modes is None:
        modes = assign_modes_trajectory(scn, traj)
    pts = _traj_positions(traj)
    pu_rates = np.zeros((n_slots, k_users))
    su_rates = np.zeros(n_slots)
    interference = np.zeros(n_slots)
    for n in range(1, n_slots + 1):
        gains = slot_gains(scn, pts[n], state.coeffs(n), modes.by_slot[n - 1], n)
        su_total = 0.0
        for k in range(k_users):
            denom = c.p_su * gains.pu_su[k] + gains.pu_extra[k] + c.noise_power
            pu_rates[n - 1, k] = _log2_1p(powers[n - 1, k] * gains.pu_bs[k] / denom) / k_users
            su_denom = powers[n - 1, k] * gains.su_bs + gains.su_extra + c.noise_power
            su_total += _log2_1p(c.p_su * gains.su_link / su_denom) / k_users
        su_rates[n - 1] = su_total
        interference[n - 1] = float(
            np.sum(c.p_su * gains.pu_su + gains.pu_extra) + gains.su_extra
        )
    total = float(np.sum(pu_rates) + np.sum(su_rates))
    margin = float(np.min(pu_rates) - c.r_rsv)
    return RateReport(
        pu_rates=pu_rates,
        su_rates=su_rates,
        interference=interference,
        sum_rate=total,
        qos_margin=margin,
        modes=modes.by_slot,
    )
