"""Surface coefficient optimizer: bounds, lifting, extraction, full solve."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from staruav.beamforming_opt import (
    BeamformingOptions,
    aligned_state,
    cascade_outer,
    extract_coeffs,
    initial_state,
    lift_vector,
    rank_ratio,
    solve_beamforming,
    taylor_rate_bound,
    ts_state,
    update_zeta,
)
from staruav.channel import effective_channel
from staruav.rate import sum_rate
from staruav.star_ris import enforce_protocol, uniform_split_state
from staruav.trajectory_opt import straight_line_trajectory
from conftest import make_scenario, uniform_powers


def true_rate(e, f):
    return math.log2(1.0 + 1.0 / (e * f))


def test_taylor_bound_tight_at_expansion_point():
    assert taylor_rate_bound(2.0, 3.0, 2.0, 3.0) == pytest.approx(
        0.22239242133644802, rel=1e-12
    )


@given(
    e=st.floats(1e-3, 1e3),
    f=st.floats(1e-3, 1e3),
    e0=st.floats(1e-2, 1e2),
    f0=st.floats(1e-2, 1e2),
)
@settings(deadline=None, max_examples=400)
def test_taylor_bound_never_exceeds_true_rate(e, f, e0, f0):
    assert taylor_rate_bound(e, f, e0, f0) <= true_rate(e, f) + 1e-9


def test_taylor_bound_gradient_matches_finite_differences():
    e0, f0, h = 1.7, 0.45, 1e-6
    de_true = (true_rate(e0 + h, f0) - true_rate(e0 - h, f0)) / (2 * h)
    df_true = (true_rate(e0, f0 + h) - true_rate(e0, f0 - h)) / (2 * h)
    de_lin = (taylor_rate_bound(e0 + h, f0, e0, f0) - taylor_rate_bound(e0 - h, f0, e0, f0)) / (2 * h)
    df_lin = (taylor_rate_bound(e0, f0 + h, e0, f0) - taylor_rate_bound(e0, f0 - h, e0, f0)) / (2 * h)
    assert de_lin == pytest.approx(de_true, rel=1e-6)
    assert df_lin == pytest.approx(df_true, rel=1e-6)


def test_update_zeta_steps_and_saturates():
    assert update_zeta(0.85, 0.1) == pytest.approx(0.95, rel=1e-15)
    assert update_zeta(0.95, 0.1) == 1.0


def test_rank_ratio_extremes():
    u = np.array([1.0, 1.0j, -1.0]) / math.sqrt(3.0)
    assert rank_ratio(3.0 * np.outer(u, u.conj())) == pytest.approx(1.0, rel=1e-12)
    assert rank_ratio(np.eye(4)) == pytest.approx(0.25, rel=1e-12)
    assert rank_ratio(np.zeros((3, 3))) == 1.0


@given(seed=st.integers(0, 2**31 - 1))
@settings(deadline=None, max_examples=60)
def test_lift_extract_round_trip_preserves_channels(seed):
    rng = np.random.default_rng(seed)
    m = 5
    a_t = rng.uniform(0.05, 0.95, m)
    state = uniform_split_state(m, 1)
    coeffs = state.coeffs(1)
    coeffs = type(coeffs)(
        alpha_t=a_t,
        alpha_r=1.0 - a_t,
        theta_t=rng.uniform(0, 2 * np.pi, m),
        theta_r=rng.uniform(0, 2 * np.pi, m),
    )
    phi_t = np.outer(lift_vector(coeffs, "t"), lift_vector(coeffs, "t").conj())
    phi_r = np.outer(lift_vector(coeffs, "r"), lift_vector(coeffs, "r").conj())
    back = extract_coeffs(phi_t, phi_r)
    np.testing.assert_allclose(back.alpha_t, coeffs.alpha_t, atol=1e-9)
    np.testing.assert_allclose(back.alpha_r, coeffs.alpha_r, atol=1e-9)
    # eigenvectors carry a free global phase; cascaded magnitudes must survive
    v = rng.normal(size=m) + 1j * rng.normal(size=m)
    g = rng.normal(size=m) + 1j * rng.normal(size=m)
    for z in ("t", "r"):
        before = abs(effective_channel(v, coeffs.amplitudes(z), coeffs.phases(z), g))
        after = abs(effective_channel(v, back.amplitudes(z), back.phases(z), g))
        assert after == pytest.approx(before, rel=1e-9)


def test_cascade_outer_reproduces_squared_channel():
    rng = np.random.default_rng(7)
    m = 4
    v = rng.normal(size=m) + 1j * rng.normal(size=m)
    g = rng.normal(size=m) + 1j * rng.normal(size=m)
    a = rng.uniform(0.1, 0.9, m)
    th = rng.uniform(0, 2 * np.pi, m)
    state = uniform_split_state(m, 1)
    coeffs = type(state.coeffs(1))(alpha_t=a, alpha_r=1 - a, theta_t=th, theta_r=th)
    u = lift_vector(coeffs, "t")
    h_mat = cascade_outer(v, g)
    lhs = float(np.real(np.trace(h_mat @ np.outer(u, u.conj()))))
    rhs = abs(effective_channel(v, a, th, g)) ** 2
    assert lhs == pytest.approx(rhs, rel=1e-9)


def test_extract_coeffs_renormalizes_leaky_split():
    # diagonals that sum past 1 (solver slack) must come back as exact splits
    u = np.array([0.8, 0.5]) * np.exp(1j * np.array([0.3, 1.1]))
    w = np.array([0.7, 0.9]) * np.exp(1j * np.array([2.0, 0.2]))
    back = extract_coeffs(np.outer(u, u.conj()), np.outer(w, w.conj()))
    np.testing.assert_allclose(back.alpha_t + back.alpha_r, 1.0, atol=1e-12)


def test_aligned_state_is_protocol_clean():
    scn = make_scenario(n_slots=4, elements=3)
    traj = straight_line_trajectory(scn)
    es = aligned_state(scn, traj)
    assert es.protocol == "ES"
    enforce_protocol(es)
    ts = ts_state(scn, traj)
    assert ts.protocol == "TS"
    enforce_protocol(ts)


def test_initial_state_modes():
    scn = make_scenario(n_slots=4, elements=3)
    traj = straight_line_trajectory(scn)
    ris = initial_state(scn, traj, "ris")
    its = initial_state(scn, traj, "its")
    for n in range(1, 5):
        np.testing.assert_allclose(ris.coeffs(n).alpha_r, 1.0, atol=1e-12)
        np.testing.assert_allclose(its.coeffs(n).alpha_t, 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        initial_state(scn, traj, "mirror")


def test_solve_beamforming_improves_and_stays_clean():
    scn = make_scenario(n_slots=2, elements=3)
    traj = straight_line_trajectory(scn)
    state0 = aligned_state(scn, traj)
    powers = uniform_powers(scn)
    base = sum_rate(scn, traj, state0, powers).sum_rate
    res = solve_beamforming(scn, traj, state0, powers, BeamformingOptions(max_iter=3))
    enforce_protocol(res.state)
    assert res.rank_ratios.shape == (2, 2)
    assert res.iterations >= 1
    after = sum_rate(scn, traj, res.state, powers).sum_rate
    assert after >= base - 1e-9
