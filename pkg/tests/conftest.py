"""Shared scenario builders for the test suite.

Every helper builds small static instances directly from value objects so a
test failure points at the module under test, not at config parsing.
"""

from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from staruav.scenario import (
    Interferer,
    PhysicalConstants,
    Position2D,
    Scenario,
    UserSpec,
    build_time_grid,
)

# a layout known to meet the reserved primary rate on the default constants
LAYOUT = {
    "p1": (85.6, 236.8),
    "p2": (801.3, 582.2),
    "s1": (94.1, 433.1),
    "s2": (479.1, 159.7),
}


def static_user(uid: str, role: str, xy: Tuple[float, float], n_slots: int) -> UserSpec:
    pos = Position2D(*xy)
    return UserSpec(id=uid, role=role, path=tuple([pos] * (n_slots + 1)))


def make_scenario(
    n_slots: int = 4,
    elements: int = 4,
    total_time: float = 40.0,
    p_max: float = 10.0,
    r_rsv: float = 0.3,
    bs: Tuple[float, float] = (0.0, 500.0),
    q_start: Tuple[float, float] = (0.0, 0.0),
    q_end: Tuple[float, float] = (400.0, 400.0),
    pu_xy: Optional[Dict[str, Tuple[float, float]]] = None,
    su_xy: Optional[Tuple[Tuple[float, float], Tuple[float, float]]] = None,
    interferer_xy: Sequence[Tuple[float, float]] = (),
    interferer_power: float = 0.2,
    **const_kw,
) -> Scenario:
    if pu_xy is None:
        pu_xy = {"p1": LAYOUT["p1"], "p2": LAYOUT["p2"]}
    if su_xy is None:
        su_xy = (LAYOUT["s1"], LAYOUT["s2"])
    grid = build_time_grid(total_time, n_slots)
    consts = PhysicalConstants(
        element_count=elements, p_max=p_max, r_rsv=r_rsv, **const_kw
    )
    users = [static_user(uid, "PU", xy, n_slots) for uid, xy in pu_xy.items()]
    users.append(static_user("s1", "SU_source", su_xy[0], n_slots))
    users.append(static_user("s2", "SU_dest", su_xy[1], n_slots))
    extras = tuple(
        Interferer(
            id=f"e{j + 1}",
            path=tuple([Position2D(*xy)] * (n_slots + 1)),
            power=interferer_power,
        )
        for j, xy in enumerate(interferer_xy)
    )
    return Scenario(
        bs=Position2D(*bs),
        users=tuple(users),
        grid=grid,
        consts=consts,
        q_start=Position2D(*q_start),
        q_end=Position2D(*q_end),
        extra_interferers=extras,
    )


def uniform_powers(scn: Scenario) -> np.ndarray:
    k = scn.num_pus
    return np.full((scn.grid.slot_count, k), scn.consts.p_max / k)
