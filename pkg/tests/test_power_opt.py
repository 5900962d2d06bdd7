"""Power allocator: concave minorants and the per-slot improvement loop."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from staruav.power_opt import PowerOptions, dc_pu_bound, dc_su_bound, solve_power
from staruav.rate import SlotGains, pu_rate, sic_order, su_rate, sum_rate
from staruav.star_ris import uniform_split_state
from staruav.trajectory_opt import straight_line_trajectory
from conftest import make_scenario, uniform_powers

NOISE = 4e-15
P_SU = 0.2


def two_user_gains():
    return SlotGains(
        pu_bs=np.array([1.2e-9, 4.5e-9]),
        pu_su=np.array([2.0e-10, 8.0e-11]),
        su_link=3.0e-9,
        su_bs=1.5e-10,
        pu_extra=np.array([5.0e-15, 2.0e-15]),
        su_extra=3.0e-15,
        order=sic_order([1.2e-9, 4.5e-9]),
    )


def test_pu_bound_tight_at_expansion_point():
    g = two_user_gains()
    p = np.array([6.0, 3.0])
    for k in range(2):
        assert dc_pu_bound(k, p, p, g, P_SU, NOISE) == pytest.approx(
            pu_rate(k, p, g, P_SU, NOISE), rel=1e-12
        )


def test_su_bound_tight_at_expansion_point():
    g = two_user_gains()
    p = np.array([6.0, 3.0])
    assert dc_su_bound(p, p, g, P_SU, NOISE) == pytest.approx(
        su_rate(p, g, P_SU, NOISE), rel=1e-12
    )


@given(
    p0=st.floats(1e-3, 25.0),
    p1=st.floats(1e-3, 25.0),
    e0=st.floats(0.1, 20.0),
    e1=st.floats(0.1, 20.0),
)
@settings(deadline=None, max_examples=300)
def test_pu_bound_never_exceeds_true_rate(p0, p1, e0, e1):
    g = two_user_gains()
    p = np.array([p0, p1])
    p_exp = np.array([e0, e1])
    for k in range(2):
        assert dc_pu_bound(k, p, p_exp, g, P_SU, NOISE) <= pu_rate(k, p, g, P_SU, NOISE) + 1e-9


@given(
    p0=st.floats(1e-3, 25.0),
    p1=st.floats(1e-3, 25.0),
    e0=st.floats(0.1, 20.0),
    e1=st.floats(0.1, 20.0),
)
@settings(deadline=None, max_examples=300)
def test_su_bound_never_exceeds_true_rate(p0, p1, e0, e1):
    g = two_user_gains()
    assert dc_su_bound(np.array([p0, p1]), np.array([e0, e1]), g, P_SU, NOISE) <= su_rate(
        np.array([p0, p1]), g, P_SU, NOISE
    ) + 1e-9


def test_pu_bound_gradient_matches_finite_differences():
    g = two_user_gains()
    p_exp = np.array([5.0, 4.0])
    h = 1e-6
    for k in range(2):
        for j in range(2):
            lo, hi = p_exp.copy(), p_exp.copy()
            lo[j] -= h
            hi[j] += h
            want = (pu_rate(k, hi, g, P_SU, NOISE) - pu_rate(k, lo, g, P_SU, NOISE)) / (2 * h)
            got = (dc_pu_bound(k, hi, p_exp, g, P_SU, NOISE) - dc_pu_bound(k, lo, p_exp, g, P_SU, NOISE)) / (2 * h)
            assert got == pytest.approx(want, rel=1e-5, abs=1e-9)


def test_su_bound_gradient_matches_finite_differences():
    g = two_user_gains()
    p_exp = np.array([5.0, 4.0])
    h = 1e-6
    for j in range(2):
        lo, hi = p_exp.copy(), p_exp.copy()
        lo[j] -= h
        hi[j] += h
        want = (su_rate(hi, g, P_SU, NOISE) - su_rate(lo, g, P_SU, NOISE)) / (2 * h)
        got = (dc_su_bound(hi, p_exp, g, P_SU, NOISE) - dc_su_bound(lo, p_exp, g, P_SU, NOISE)) / (2 * h)
        assert got == pytest.approx(want, rel=1e-5, abs=1e-9)


def test_solve_power_respects_budget_and_never_degrades():
    scn = make_scenario(n_slots=4, elements=3)
    traj = straight_line_trajectory(scn)
    state = uniform_split_state(3, 4)
    p0 = uniform_powers(scn)
    base = sum_rate(scn, traj, state, p0).sum_rate
    res = solve_power(scn, traj, state, p0, PowerOptions(max_iter=4))
    assert res.powers.shape == p0.shape
    assert np.all(res.powers >= -1e-12)
    assert np.all(res.powers.sum(axis=1) <= scn.consts.p_max + 1e-9)
    after = sum_rate(scn, traj, state, res.powers).sum_rate
    assert after >= base - 1e-9
    assert res.iterations >= 1
