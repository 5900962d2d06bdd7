import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from staruav.channel import effective_channel, path_gain, steering_vector
from staruav.scenario import Position2D
from staruav.star_ris import (
    BeamformingState,
    ElementCoeffs,
    ProtocolViolation,
    assign_modes,
    enforce_protocol,
    phase_align,
    round_to_ms,
    ts_alternating,
    uniform_split_state,
)


def coeffs(alpha_t, alpha_r, theta_t=None, theta_r=None):
    m = len(alpha_t)
    return ElementCoeffs(
        alpha_t=np.asarray(alpha_t, dtype=float),
        alpha_r=np.asarray(alpha_r, dtype=float),
        theta_t=np.zeros(m) if theta_t is None else np.asarray(theta_t, dtype=float),
        theta_r=np.zeros(m) if theta_r is None else np.asarray(theta_r, dtype=float),
    )


def test_element_coeffs_are_frozen():
    c = coeffs([0.5, 0.5], [0.5, 0.5])
    with pytest.raises(ValueError):
        c.alpha_t[0] = 0.9


def test_element_coeffs_reject_ragged_arrays():
    with pytest.raises(ValueError):
        ElementCoeffs(
            alpha_t=np.ones(3), alpha_r=np.ones(2), theta_t=np.zeros(3), theta_r=np.zeros(3)
        )


def test_mode_views():
    c = coeffs([0.2, 0.3], [0.8, 0.7], theta_t=[0.1, 0.2], theta_r=[0.3, 0.4])
    np.testing.assert_array_equal(c.amplitudes("t"), [0.2, 0.3])
    np.testing.assert_array_equal(c.amplitudes("r"), [0.8, 0.7])
    np.testing.assert_array_equal(c.phases("t"), [0.1, 0.2])
    np.testing.assert_array_equal(c.phases("r"), [0.3, 0.4])


def test_enforce_es_accepts_valid_split():
    state = BeamformingState(per_slot=(coeffs([0.3, 0.6], [0.7, 0.4]),), protocol="ES")
    enforce_protocol(state)


def test_enforce_es_rejects_broken_conservation():
    state = BeamformingState(per_slot=(coeffs([0.3, 0.6], [0.6, 0.4]),), protocol="ES")
    with pytest.raises(ProtocolViolation, match="slot 1 element 0"):
        enforce_protocol(state)


def test_enforce_rejects_amplitude_outside_unit():
    state = BeamformingState(per_slot=(coeffs([1.2, 0.0], [-0.2, 1.0]),), protocol="ES")
    with pytest.raises(ProtocolViolation, match="amplitude"):
        enforce_protocol(state)


def test_enforce_rejects_unwrapped_phase():
    state = BeamformingState(
        per_slot=(coeffs([0.5, 0.5], [0.5, 0.5], theta_t=[0.0, 7.0]),), protocol="ES"
    )
    with pytest.raises(ProtocolViolation, match="phase"):
        enforce_protocol(state)


def test_enforce_ms_rejects_fractional_split():
    state = BeamformingState(per_slot=(coeffs([0.5, 1.0], [0.5, 0.0]),), protocol="MS")
    with pytest.raises(ProtocolViolation, match="MS"):
        enforce_protocol(state)


def test_ts_state_needs_active_modes():
    with pytest.raises(ValueError, match="active"):
        BeamformingState(per_slot=(coeffs([1.0], [0.0]),), protocol="TS")


def test_enforce_ts_checks_single_active_mode():
    good = BeamformingState(
        per_slot=(coeffs([0.0, 0.0], [1.0, 1.0]),), protocol="TS", ts_active=("r",)
    )
    enforce_protocol(good)
    bad = BeamformingState(
        per_slot=(coeffs([0.5, 0.0], [1.0, 1.0]),), protocol="TS", ts_active=("r",)
    )
    with pytest.raises(ProtocolViolation, match="TS"):
        enforce_protocol(bad)


@given(
    splits=st.lists(
        st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3), min_size=1, max_size=4
    )
)
@settings(deadline=None, max_examples=100)
def test_round_to_ms_always_satisfies_ms(splits):
    slots = tuple(coeffs(row, [1.0 - a for a in row]) for row in splits)
    ms = round_to_ms(BeamformingState(per_slot=slots, protocol="ES"))
    enforce_protocol(ms)
    for c in ms.per_slot:
        assert set(np.unique(c.alpha_t)) <= {0.0, 1.0}


def test_round_to_ms_ties_reflect():
    ms = round_to_ms(BeamformingState(per_slot=(coeffs([0.5], [0.5]),), protocol="ES"))
    assert ms.per_slot[0].alpha_r[0] == 1.0
    assert ms.per_slot[0].alpha_t[0] == 0.0


def test_ts_alternating_pattern():
    base = uniform_split_state(2, 4)
    ts = ts_alternating(base)
    enforce_protocol(ts)
    assert ts.ts_active == ("r", "t", "r", "t")


def test_uniform_split_state_rejects_bad_split():
    with pytest.raises(ValueError):
        uniform_split_state(2, 3, split_t=1.5)


def test_assign_modes_splits_by_bs_halfplane():
    # UAV at origin, BS due north: the dividing plane is the x axis
    modes = assign_modes(
        Position2D(0.0, 0.0),
        Position2D(0.0, 100.0),
        {"near_bs": Position2D(5.0, 50.0), "behind": Position2D(3.0, -20.0)},
    )
    assert modes == {"near_bs": "r", "behind": "t"}


def test_assign_modes_uses_fallback_above_bs():
    with pytest.raises(ValueError, match="fallback"):
        assign_modes(Position2D(0.0, 0.0), Position2D(0.0, 0.0), {"u": Position2D(1.0, 0.0)})
    modes = assign_modes(
        Position2D(0.0, 0.0),
        Position2D(0.0, 0.0),
        {"u": Position2D(1.0, 0.0)},
        fallback_normal=(1.0, 0.0),
    )
    assert modes == {"u": "r"}


@given(
    omega_s=st.floats(-1.0, 1.0),
    omega_t=st.floats(-1.0, 1.0),
    m=st.integers(1, 12),
    offset=st.floats(0.0, 6.0),
)
@settings(deadline=None, max_examples=100)
def test_phase_align_wraps_into_principal_range(omega_s, omega_t, m, offset):
    th = phase_align(omega_s, omega_t, m, 0.05, 0.1, common_offset=offset)
    assert np.all(th >= 0.0)
    # float rounding can land exactly on the 2*pi boundary
    assert np.all(th <= 2 * np.pi)


def test_phase_align_attains_amplitude_sum():
    # aligned phases collapse the cascade to (sum sqrt(alpha)) * gain product
    m, sep, lam = 6, 0.05, 0.1
    omega_s, omega_t = 0.31, -0.54
    d_a, d_b, beta0, alpha_exp = 220.0, 140.0, 1e-3, 2.2
    amps = np.array([0.9, 0.4, 0.7, 1.0, 0.2, 0.6])
    g = path_gain(beta0, d_b, alpha_exp) * steering_vector(omega_s, m, sep, lam)
    v = path_gain(beta0, d_a, alpha_exp) * steering_vector(omega_t, m, sep, lam)
    th = phase_align(omega_s, omega_t, m, sep, lam)
    achieved = abs(effective_channel(v, amps, th, g))
    expected = (
        path_gain(beta0, d_a, alpha_exp)
        * path_gain(beta0, d_b, alpha_exp)
        * float(np.sum(np.sqrt(amps)))
    )
    assert achieved == pytest.approx(expected, rel=1e-12)
