import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurosplit.power import (
    PowerConstraintViolation,
    PowerPolicy,
    block_gain,
    check_power,
    dynamic_schedule,
    enforce,
)


def test_uniform_limit():
    np.testing.assert_array_equal(dynamic_schedule(1.5, 6, 1.0), np.full(6, 1.5))


def test_two_slot_example():
    np.testing.assert_allclose(dynamic_schedule(1.0, 2, 2.0), [4 / 3, 2 / 3], rtol=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(1, 64), st.floats(1.0, 3.0))
def test_budget_met_with_equality(p_max, T, b):
    P = dynamic_schedule(p_max, T, b)
    assert abs(P.mean() - p_max) <= 1e-12 * p_max
    assert np.all(np.diff(P) <= 0)


def test_schedule_domain():
    with pytest.raises(ValueError):
        dynamic_schedule(1.0, 0, 1.2)
    with pytest.raises(ValueError):
        dynamic_schedule(1.0, 3, 0.9)


def test_policy():
    pol = PowerPolicy("per_block_average", 2.0, decay_b=1.4)
    assert pol.mode == "block"
    assert pol.slot_powers(4).mean() == pytest.approx(2.0, rel=1e-12)
    np.testing.assert_array_equal(PowerPolicy("peak").slot_powers(3), [1, 1, 1])
    with pytest.raises(ValueError):
        PowerPolicy("rms")
    with pytest.raises(ValueError):
        PowerPolicy(decay_b=0.5)


@pytest.mark.parametrize("mode", ["block", "peak"])
def test_all_zero_unchanged(mode):
    x = np.zeros(8, complex)
    np.testing.assert_array_equal(enforce(x, mode, 1.0), x)
    check_power(x, mode, 1.0)


def test_peak_scaling_example():
    x = np.zeros(8, complex)
    x[3] = 2.0  # power 4 P_t
    y = enforce(x, "peak", 1.0)
    assert y[3] == pytest.approx(1.0)
    assert block_gain(x, "peak", 1.0) == pytest.approx(0.5)


def test_peak_leaves_compliant_frames():
    x = np.array([0.5, -0.2j, 0.0])
    np.testing.assert_array_equal(enforce(x, "peak", 1.0), x)


def test_block_full_qpsk_unchanged():
    x = np.sqrt(0.5) * np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j] * 4)
    np.testing.assert_allclose(enforce(x, "block", 1.0), x)


def test_block_sparse_boost_counts_idle_slots():
    x = np.zeros(10)
    x[0] = 0.1
    y = enforce(x, "block", 2.0)
    assert np.sum(np.abs(y) ** 2) / 10 == pytest.approx(2.0)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.complex_numbers(max_magnitude=100, allow_nan=False, allow_infinity=False), min_size=1, max_size=40),
    st.floats(1e-3, 10),
    st.sampled_from(["block", "peak"]),
)
def test_enforce_always_satisfies_constraint(x, p, mode):
    y = enforce(np.array(x), mode, p)
    check_power(y, mode, p)


def test_violation_raised():
    with pytest.raises(PowerConstraintViolation):
        check_power(np.array([2.0, 0.0]), "peak", 1.0)
    with pytest.raises(PowerConstraintViolation):
        check_power(np.array([2.0, 2.0]), "block", 1.0)
    with pytest.raises(ValueError):
        enforce(np.ones(2), "block", 0.0)
