"""Surface element coefficients, operating protocols, and mode assignment.

Each element splits the incident signal into a transmitted part (mode t,
users behind the surface) and a reflected part (mode r, users on the BS
side). Under energy splitting (ES) the per-element amplitudes satisfy
alpha_t + alpha_r = 1; mode switching (MS) restricts amplitudes to {0,1};
time switching (TS) activates a single mode per slot at full amplitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .scenario import Position2D, Scenario

MODE_T = "t"
MODE_R = "r"
PROTOCOLS = ("ES", "MS", "TS")

_TWO_PI = 2.0 * math.pi


class ProtocolViolation(ValueError):
    """A coefficient set breaks the declared operating protocol."""


def _frozen(a) -> np.ndarray:
    out = np.asarray(a, dtype=float).copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ElementCoeffs:
    """Amplitudes and phases of all M elements for one slot, both modes."""

    alpha_t: np.ndarray
    alpha_r: np.ndarray
    theta_t: np.ndarray
    theta_r: np.ndarray

    def __post_init__(self):
        for name in ("alpha_t", "alpha_r", "theta_t", "theta_r"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        m = len(self.alpha_t)
        if not (len(self.alpha_r) == len(self.theta_t) == len(self.theta_r) == m):
            raise ValueError("coefficient arrays must share one element count")

    @property
    def m_elements(self) -> int:
        return len(self.alpha_t)

    def amplitudes(self, mode: str) -> np.ndarray:
        return self.alpha_t if mode == MODE_T else self.alpha_r

    def phases(self, mode: str) -> np.ndarray:
        return self.theta_t if mode == MODE_T else self.theta_r


@dataclass(frozen=True)
class BeamformingState:
    """Per-slot element coefficients for the whole mission.

    `per_slot[n-1]` holds slot n. For TS, `ts_active[n-1]` names the single
    mode active in slot n; it is None under ES and MS.
    """

    per_slot: tuple
    protocol: str = "ES"
    ts_active: Optional[tuple] = None

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.protocol == "TS":
            if self.ts_active is None or len(self.ts_active) != len(self.per_slot):
                raise ValueError("TS state needs one active mode per slot")
        object.__setattr__(self, "per_slot", tuple(self.per_slot))

    @property
    def n_slots(self) -> int:
        return len(self.per_slot)

    def coeffs(self, n: int) -> ElementCoeffs:
        """Coefficients of slot n (1-based)."""
        return self.per_slot[n - 1]


@dataclass(frozen=True)
class ModeAssignment:
    """Which mode serves each user, per slot: by_slot[n-1][user_id] in {t, r}."""

    by_slot: tuple

    def mode_of(self, user_id: str, n: int) -> str:
        return self.by_slot[n - 1][user_id]


def assign_modes(
    q: Position2D,
    bs: Position2D,
    positions: Mapping[str, Position2D],
    fallback_normal: Optional[tuple] = None,
) -> dict:
    """Split users into modes by the vertical plane through q normal to BS->UAV.

    Users in the closed half-space containing the BS reflect (mode r), the
    rest transmit (mode t). When the UAV sits directly above the BS the
    plane is taken normal to `fallback_normal` instead.
    """
    nx, ny = bs.x - q.x, bs.y - q.y
    norm = math.hypot(nx, ny)
    if norm < 1e-9:
        if fallback_normal is None:
            raise ValueError("UAV above BS and no fallback plane direction given")
        nx, ny = fallback_normal
        norm = math.hypot(nx, ny)
        if norm < 1e-9:
            raise ValueError("fallback plane direction is degenerate")
    nx, ny = nx / norm, ny / norm
    out = {}
    for uid, r in positions.items():
        side = (r.x - q.x) * nx + (r.y - q.y) * ny
        out[uid] = MODE_R if side >= 0.0 else MODE_T
    return out


def assign_modes_trajectory(scn: Scenario, traj: np.ndarray) -> ModeAssignment:
    """Per-slot mode maps along a trajectory, reusing the previous plane when degenerate.

    `traj` has shape (N+1, 2); slot n uses position traj[n]. At n=1 the
    degenerate fallback is the mission chord start->end.
    """
    n_slots = scn.grid.slot_count
    chord = (scn.q_end.x - scn.q_start.x, scn.q_end.y - scn.q_start.y)
    if math.hypot(*chord) < 1e-9:
        chord = (1.0, 0.0)
    prev_normal = chord
    slots = []
    for n in range(1, n_slots + 1):
        q = Position2D(float(traj[n, 0]), float(traj[n, 1]))
        positions = {u.id: u.path[n] for u in scn.receivers}
        slots.append(assign_modes(q, scn.bs, positions, fallback_normal=prev_normal))
        dx, dy = scn.bs.x - q.x, scn.bs.y - q.y
        if math.hypot(dx, dy) >= 1e-9:
            prev_normal = (dx, dy)
    return ModeAssignment(by_slot=tuple(slots))


def phase_align(
    omega_source: float,
    omega_target: float,
    m_elements: int,
    sep: float,
    wavelength: float,
    common_offset: float = 0.0,
) -> np.ndarray:
    """Element phases that make every cascaded term land on one common phase.

    theta_m = 2*pi*sep*(m-1)*(omega_target - omega_source)/lam - offset,
    wrapped into [0, 2*pi). With these phases the cascaded channel magnitude
    attains its closed-form cap.
    """
    idx = np.arange(m_elements)
    raw = _TWO_PI * sep * idx * (omega_target - omega_source) / wavelength - common_offset
    return np.mod(raw, _TWO_PI)


def _check_phases(theta: np.ndarray, n: int, mode: str):
    if np.any(theta < 0.0) or np.any(theta >= _TWO_PI):
        m = int(np.argmax((theta < 0.0) | (theta >= _TWO_PI)))
        raise ProtocolViolation(f"slot {n} element {m} mode {mode}: phase outside [0, 2*pi)")


def enforce_protocol(state: BeamformingState, atol: float = 1e-8) -> None:
    """Raise ProtocolViolation naming the first offending slot/element."""
    for i, c in enumerate(state.per_slot):
        n = i + 1
        for mode in (MODE_T, MODE_R):
            a = c.amplitudes(mode)
            if np.any(a < -atol) or np.any(a > 1 + atol):
                m = int(np.argmax((a < -atol) | (a > 1 + atol)))
                raise ProtocolViolation(f"slot {n} element {m} mode {mode}: amplitude outside [0,1]")
            _check_phases(c.phases(mode), n, mode)
        total = c.alpha_t + c.alpha_r
        if state.protocol == "ES":
            if np.any(np.abs(total - 1.0) > atol):
                m = int(np.argmax(np.abs(total - 1.0)))
                raise ProtocolViolation(f"slot {n} element {m}: ES split sums to {total[m]}, not 1")
        elif state.protocol == "MS":
            binary = (np.abs(c.alpha_t) <= atol) | (np.abs(c.alpha_t - 1.0) <= atol)
            binary &= (np.abs(c.alpha_r) <= atol) | (np.abs(c.alpha_r - 1.0) <= atol)
            if not np.all(binary & (np.abs(total - 1.0) <= atol)):
                m = int(np.argmin(binary & (np.abs(total - 1.0) <= atol)))
                raise ProtocolViolation(f"slot {n} element {m}: MS amplitudes must be a 0/1 split")
        else:
            active = state.ts_active[i]
            if active not in (MODE_T, MODE_R):
                raise ProtocolViolation(f"slot {n}: TS active mode {active!r} unknown")
            on = c.amplitudes(active)
            off = c.amplitudes(MODE_R if active == MODE_T else MODE_T)
            if np.any(np.abs(on - 1.0) > atol) or np.any(np.abs(off) > atol):
                raise ProtocolViolation(f"slot {n}: TS needs unit amplitude on mode {active} only")


def round_to_ms(state: BeamformingState) -> BeamformingState:
    """Project an ES state onto MS: per element the larger split wins, ties reflect."""
    slots = []
    for c in state.per_slot:
        r_wins = c.alpha_r >= c.alpha_t
        slots.append(
            ElementCoeffs(
                alpha_t=np.where(r_wins, 0.0, 1.0),
                alpha_r=np.where(r_wins, 1.0, 0.0),
                theta_t=c.theta_t,
                theta_r=c.theta_r,
            )
        )
    return BeamformingState(per_slot=tuple(slots), protocol="MS")


def ts_alternating(state: BeamformingState) -> BeamformingState:
    """TS baseline on an existing state's phases: slots alternate r, t, r, t, ...

    The active mode runs at unit amplitude on every element; the other mode
    is fully off.
    """
    slots = []
    active = []
    for i, c in enumerate(state.per_slot):
        mode = MODE_R if i % 2 == 0 else MODE_T
        on = np.ones(c.m_elements)
        off = np.zeros(c.m_elements)
        slots.append(
            ElementCoeffs(
                alpha_t=on if mode == MODE_T else off,
                alpha_r=on if mode == MODE_R else off,
                theta_t=c.theta_t,
                theta_r=c.theta_r,
            )
        )
        active.append(mode)
    return BeamformingState(per_slot=tuple(slots), protocol="TS", ts_active=tuple(active))


def uniform_split_state(
    m_elements: int,
    n_slots: int,
    split_t: float = 0.5,
    theta_t: Optional[Sequence[np.ndarray]] = None,
    theta_r: Optional[Sequence[np.ndarray]] = None,
) -> BeamformingState:
    """ES state with a flat amplitude split and given (or zero) per-slot phases."""
    if not 0.0 <= split_t <= 1.0:
        raise ValueError(f"split must lie in [0,1], got {split_t}")
    slots = []
    for i in range(n_slots):
        tt = np.zeros(m_elements) if theta_t is None else np.asarray(theta_t[i], dtype=float)
        tr = np.zeros(m_elements) if theta_r is None else np.asarray(theta_r[i], dtype=float)
        slots.append(
            ElementCoeffs(
                alpha_t=np.full(m_elements, split_t),
                alpha_r=np.full(m_elements, 1.0 - split_t),
                theta_t=tt,
                theta_r=tr,
            )
        )
    return BeamformingState(per_slot=tuple(slots), protocol="ES")
