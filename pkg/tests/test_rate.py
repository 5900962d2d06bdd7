import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from staruav.channel import effective_channel
from staruav.rate import (
    SlotGains,
    oma_sum_rate,
    pu_rate,
    sic_order,
    slot_gains,
    slot_vectors,
    su_rate,
    sum_rate,
)
from staruav.scenario import Position2D
from staruav.star_ris import assign_modes_trajectory, uniform_split_state
from staruav.trajectory_opt import straight_line_trajectory
from conftest import make_scenario, uniform_powers


def gains_for(pu_bs, pu_su=None, su_link=1e-9, su_bs=1e-11, pu_extra=None, su_extra=0.0):
    pu_bs = np.asarray(pu_bs, dtype=float)
    k = len(pu_bs)
    return SlotGains(
        pu_bs=pu_bs,
        pu_su=np.zeros(k) if pu_su is None else np.asarray(pu_su, dtype=float),
        su_link=su_link,
        su_bs=su_bs,
        pu_extra=np.zeros(k) if pu_extra is None else np.asarray(pu_extra, dtype=float),
        su_extra=su_extra,
        order=sic_order(pu_bs),
    )


def test_sic_order_by_gain():
    order = sic_order([5.0, 9.0, 1.0])
    assert order.interferers == (frozenset({1}), frozenset(), frozenset({0, 1}))
    assert order.closure[2] == frozenset({0, 1, 2})


def test_sic_order_breaks_ties_by_index():
    order = sic_order([3.0, 3.0])
    assert order.interferers == (frozenset(), frozenset({0}))


@given(gains=st.lists(st.floats(1e-12, 1e-6), min_size=2, max_size=5))
@settings(deadline=None, max_examples=200)
def test_sic_order_is_a_strict_total_order(gains):
    order = sic_order(gains)
    k = len(gains)
    for a in range(k):
        assert a not in order.interferers[a]
        for b in range(k):
            if a == b:
                continue
            # exactly one of the two users interferes with the other
            assert (a in order.interferers[b]) != (b in order.interferers[a])


def test_pu_rate_single_user_closed_form():
    g = gains_for([2e-9], pu_su=[1e-10])
    rate = pu_rate(0, np.array([10.0]), g, p_su=0.2, noise=4e-15)
    assert rate == pytest.approx(9.966938036928598, rel=1e-12)


def test_pu_rate_weaker_user_suffers_stronger_power():
    g = gains_for([1e-9, 4e-9])
    p = np.array([6.0, 4.0])
    noise = 4e-15
    # user 0 is weaker: user 1's power interferes through user 0's own gain
    expected0 = math.log2(1.0 + 6.0 * 1e-9 / (4.0 * 1e-9 + noise))
    expected1 = math.log2(1.0 + 4.0 * 4e-9 / noise)
    assert pu_rate(0, p, g, 0.0, noise) == pytest.approx(expected0, rel=1e-12)
    assert pu_rate(1, p, g, 0.0, noise) == pytest.approx(expected1, rel=1e-12)


def test_su_rate_closed_form():
    g = gains_for([1e-9], su_link=5e-9, su_bs=1e-10)
    rate = su_rate(np.array([10.0]), g, p_su=0.2, noise=4e-15)
    assert rate == pytest.approx(0.9999971146185744, rel=1e-12)


def test_slot_gains_match_direct_channel_products():
    scn = make_scenario(elements=3)
    q = Position2D(150.0, 200.0)
    state = uniform_split_state(3, scn.grid.slot_count, split_t=0.4)
    traj = straight_line_trajectory(scn)
    modes = assign_modes_trajectory(scn, traj).by_slot[0]
    coeffs = state.coeffs(1)
    gains = slot_gains(scn, q, coeffs, modes, 1)

    g, v, v_src, _ = slot_vectors(scn, q, 1)
    for k, u in enumerate(scn.pus):
        z = modes[u.id]
        a, th = coeffs.amplitudes(z), coeffs.phases(z)
        assert gains.pu_bs[k] == pytest.approx(
            abs(effective_channel(v[u.id], a, th, g)) ** 2, rel=1e-12
        )
        assert gains.pu_su[k] == pytest.approx(
            abs(effective_channel(v[u.id], a, th, v_src)) ** 2, rel=1e-12
        )
    z = modes["s2"]
    a, th = coeffs.amplitudes(z), coeffs.phases(z)
    assert gains.su_link == pytest.approx(
        abs(effective_channel(v["s2"], a, th, v_src)) ** 2, rel=1e-12
    )


def test_sum_rate_report_shapes_and_margin():
    scn = make_scenario(elements=2, n_slots=4)
    traj = straight_line_trajectory(scn)
    state = uniform_split_state(2, 4)
    powers = uniform_powers(scn)
    rep = sum_rate(scn, traj, state, powers)
    assert rep.pu_rates.shape == (4, 2)
    assert rep.su_rates.shape == (4,)
    assert rep.sum_rate == pytest.approx(
        float(np.sum(rep.pu_rates) + np.sum(rep.su_rates)), rel=1e-12
    )
    assert rep.qos_margin == pytest.approx(
        float(np.min(rep.pu_rates)) - scn.consts.r_rsv, abs=1e-12
    )


def test_sum_rate_rejects_wrong_power_shape():
    scn = make_scenario(elements=2, n_slots=4)
    traj = straight_line_trajectory(scn)
    state = uniform_split_state(2, 4)
    with pytest.raises(ValueError, match="powers"):
        sum_rate(scn, traj, state, np.ones((3, 2)))


def test_oma_applies_time_sharing_factor():
    scn = make_scenario(elements=2, n_slots=4)
    traj = straight_line_trajectory(scn)
    state = uniform_split_state(2, 4)
    powers = uniform_powers(scn)
    rep = oma_sum_rate(scn, traj, state, powers)
    modes = assign_modes_trajectory(scn, traj)
    gains = slot_gains(scn, Position2D(*traj[1]), state.coeffs(1), modes.by_slot[0], 1)
    c = scn.consts
    denom = c.p_su * gains.pu_su[0] + gains.pu_extra[0] + c.noise_power
    expected = math.log2(1.0 + powers[0, 0] * gains.pu_bs[0] / denom) / 2.0
    assert rep.pu_rates[0, 0] == pytest.approx(expected, rel=1e-12)


def test_interference_column_tracks_extra_pairs():
    quiet = make_scenario(elements=2)
    noisy = make_scenario(elements=2, interferer_xy=[(300.0, 300.0)], interferer_power=0.5)
    traj = straight_line_trajectory(quiet)
    state = uniform_split_state(2, quiet.grid.slot_count)
    rep_q = sum_rate(quiet, traj, state, uniform_powers(quiet))
    rep_n = sum_rate(noisy, traj, state, uniform_powers(noisy))
    assert np.all(rep_n.interference > rep_q.interference)
