"""Problem instance definition: geometry, users, time grid, physical constants.

Everything in this module is an immutable value object. A `Scenario` fully
determines the optimization problem; the solvers never mutate it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

PU = "PU"
SU_SOURCE = "SU_source"
SU_DEST = "SU_dest"
ROLES = (PU, SU_SOURCE, SU_DEST)


class ScenarioError(ValueError):
    """Raised when a scenario or one of its components violates an invariant."""


@dataclass(frozen=True)
class Position2D:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ScenarioError(f"position must be finite, got ({self.x}, {self.y})")

    def distance_to(self, other: "Position2D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class TimeGrid:
    """Mission time T split into N equal slots of length delta = T / N."""

    total_time: float
    slot_count: int
    slot_len: float

    def __post_init__(self):
        if self.total_time <= 0:
            raise ScenarioError(f"total_time must be positive, got {self.total_time}")
        if self.slot_count < 2:
            raise ScenarioError(f"slot_count must be >= 2, got {self.slot_count}")
        if not math.isclose(self.slot_len * self.slot_count, self.total_time, rel_tol=1e-12):
            raise ScenarioError("slot_len * slot_count must equal total_time")


def build_time_grid(total_time: float, slot_count: int) -> TimeGrid:
    """Discretize a mission of duration `total_time` into `slot_count` equal slots."""
    if total_time <= 0:
        raise ScenarioError(f"total_time must be positive, got {total_time}")
    if int(slot_count) != slot_count or slot_count < 2:
        raise ScenarioError(f"slot_count must be an integer >= 2, got {slot_count}")
    n = int(slot_count)
    return TimeGrid(total_time=float(total_time), slot_count=n, slot_len=float(total_time) / n)


@dataclass(frozen=True)
class UserSpec:
    """A ground user with a per-slot position path of length N+1.

    Fixed users carry a constant path. `role` is one of PU / SU_source / SU_dest.
    """

    id: str
    role: str
    path: tuple[Position2D, ...]

    def __post_init__(self):
        if self.role not in ROLES:
            raise ScenarioError(f"user {self.id}: unknown role {self.role!r}")
        if len(self.path) < 2:
            raise ScenarioError(f"user {self.id}: path must cover every slot edge")

    def position(self, n: int) -> Position2D:
        return self.path[n]


@dataclass(frozen=True)
class PhysicalConstants:
    """Radio and platform constants. All SI units; powers in watts, gains linear."""

    altitude: float = 80.0
    v_max: float = 20.0
    beta0: float = 1e-3
    path_loss_exp: float = 2.2
    noise_power: float = 10 ** ((-174.0 - 30.0) / 10.0)
    wavelength: float = 0.1
    element_sep: float = 0.05
    element_count: int = 20
    p_max: float = 25.0
    p_su: float = 0.2
    r_rsv: float = 0.3

    def __post_init__(self):
        positive = {
            "altitude": self.altitude,
            "v_max": self.v_max,
            "beta0": self.beta0,
            "path_loss_exp": self.path_loss_exp,
            "noise_power": self.noise_power,
            "wavelength": self.wavelength,
            "element_sep": self.element_sep,
            "p_max": self.p_max,
            "p_su": self.p_su,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ScenarioError(f"{name} must be strictly positive, got {value}")
        if self.path_loss_exp < 2:
            raise ScenarioError(f"path_loss_exp must be >= 2, got {self.path_loss_exp}")
        if self.element_count < 1:
            raise ScenarioError(f"element_count must be >= 1, got {self.element_count}")
        if self.r_rsv < 0:
            raise ScenarioError(f"r_rsv must be nonnegative, got {self.r_rsv}")


@dataclass(frozen=True)
class Interferer:
    """Fixed-power underlay transmitter used by multi-pair experiments.

    Not part of the optimized user set: it only injects interference at the
    receivers. `path` has length N+1 like a user path.
    """

    id: str
    path: tuple[Position2D, ...]
    power: float


@dataclass(frozen=True)
class Scenario:
    bs: Position2D
    users: tuple[UserSpec, ...]
    grid: TimeGrid
    consts: PhysicalConstants
    q_start: Position2D
    q_end: Position2D
    extra_interferers: tuple[Interferer, ...] = field(default=())

    def __post_init__(self):
        validate_scenario(self)

    # -- convenience views -------------------------------------------------

    @property
    def pus(self) -> tuple[UserSpec, ...]:
        return tuple(u for u in self.users if u.role == PU)

    @property
    def su_source(self) -> UserSpec:
        return next(u for u in self.users if u.role == SU_SOURCE)

    @property
    def su_dest(self) -> UserSpec:
        return next(u for u in self.users if u.role == SU_DEST)

    @property
    def receivers(self) -> tuple[UserSpec, ...]:
        """Users that decode a signal: all PUs plus the SU destination."""
        return self.pus + (self.su_dest,)

    @property
    def num_pus(self) -> int:
        return len(self.pus)


def waypoint_path(
    start: Position2D,
    waypoints: Sequence[Position2D],
    speed: float,
    grid: TimeGrid,
) -> tuple[Position2D, ...]:
    """Piecewise-linear motion through `waypoints` at constant `speed`.

    Returns N+1 positions sampled at slot edges; the walker clamps at the final
    waypoint once the polyline is exhausted. No waypoints or speed = 0 yields a
    constant path.
    """
    if speed < 0:
        raise ScenarioError(f"speed must be nonnegative, got {speed}")
    if not waypoints:
        return tuple(start for _ in range(grid.slot_count + 1))

    legs = [start, *waypoints]
    positions = []
    for n in range(grid.slot_count + 1):
        travelled = speed * grid.slot_len * n
        positions.append(_point_along(legs, travelled))
    return tuple(positions)


def _point_along(legs: Sequence[Position2D], travelled: float) -> Position2D:
    remaining = travelled
    for a, b in zip(legs, legs[1:]):
        leg_len = a.distance_to(b)
        if remaining <= leg_len:
            if leg_len == 0.0:
                return a
            f = remaining / leg_len
            return Position2D(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y))
        remaining -= leg_len
    return legs[-1]


def validate_scenario(s: Scenario) -> None:
    """Check every scenario invariant; raises ScenarioError naming the offender."""
    n_slots = s.grid.slot_count
    expected_len = n_slots + 1

    sources = [u for u in s.users if u.role == SU_SOURCE]
    dests = [u for u in s.users if u.role == SU_DEST]
    if len(sources) != 1 or len(dests) != 1:
        raise ScenarioError(
            "users: exactly one SU_source and one SU_dest required, "
            f"got {len(sources)} source(s) and {len(dests)} dest(s)"
        )
    if not any(u.role == PU for u in s.users):
        raise ScenarioError("users: at least one PU required")

    seen = set()
    for u in s.users:
        if u.id in seen:
            raise ScenarioError(f"users.{u.id}: duplicate user id")
        seen.add(u.id)
        if len(u.path) != expected_len:
            raise ScenarioError(
                f"users.{u.id}.path: length {len(u.path)} != N+1 = {expected_len}"
            )
    for itf in s.extra_interferers:
        if len(itf.path) != expected_len:
            raise ScenarioError(
                f"extra_interferers.{itf.id}.path: length {len(itf.path)} != {expected_len}"
            )
        if itf.power < 0:
            raise ScenarioError(f"extra_interferers.{itf.id}.power: must be nonnegative")

    mission_range = n_slots * s.consts.v_max * s.grid.slot_len
    needed = s.q_start.distance_to(s.q_end)
    if needed > mission_range * (1 + 1e-12):
        raise ScenarioError(
            "q_end: mission infeasible, endpoint distance "
            f"{needed:.3f} m exceeds reachable range {mission_range:.3f} m"
        )
