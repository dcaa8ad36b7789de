import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from radarcal.errors import InvalidArgumentError
from radarcal.geometry import (
    angle_between,
    axis_unit,
    circular_median,
    lever_unit,
    rot2,
    wedge,
    wrap_axis,
    wrap_to_pi,
)

finite_angles = st.floats(min_value=-50.0, max_value=50.0, allow_nan=False)


def test_rot2_basics():
    np.testing.assert_allclose(rot2(0.0), np.eye(2), atol=1e-15)
    # quarter turn sends +x to +y
    np.testing.assert_allclose(rot2(math.pi / 2) @ [1.0, 0.0], [0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(rot2(math.pi / 2), [[0.0, -1.0], [1.0, 0.0]], atol=1e-15)


@given(finite_angles, finite_angles)
def test_rot2_composes(a, b):
    np.testing.assert_allclose(rot2(a) @ rot2(b), rot2(a + b), atol=1e-12)


@given(finite_angles)
def test_rot2_orthonormal(theta):
    R = rot2(theta)
    np.testing.assert_allclose(R.T @ R, np.eye(2), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)


def test_wedge_values():
    np.testing.assert_allclose(wedge(2.0) @ [3.0, 4.0], [-8.0, 6.0])
    np.testing.assert_allclose(wedge(1.0), [[0.0, -1.0], [1.0, 0.0]])
    np.testing.assert_allclose(wedge(-0.5) @ [1.0, 0.0], [0.0, -0.5])


@given(finite_angles, st.floats(min_value=-10, max_value=10, allow_nan=False))
def test_wedge_is_ninety_degree_rotation(theta, r):
    v = axis_unit(theta)
    np.testing.assert_allclose(wedge(r) @ v, r * (rot2(math.pi / 2) @ v), atol=1e-12)


def test_wrap_axis_examples():
    assert wrap_axis(7 * math.pi / 3) == pytest.approx(math.pi / 3, abs=1e-12)
    assert wrap_axis(-math.pi / 4) == pytest.approx(3 * math.pi / 4, abs=1e-12)
    assert wrap_axis(math.pi) == 0.0
    assert wrap_axis(0.0) == 0.0


@given(finite_angles)
def test_wrap_axis_range_and_idempotence(theta):
    w = wrap_axis(theta)
    assert 0.0 <= w < math.pi
    assert wrap_axis(w) == w
    # same line: difference from the input is a multiple of pi
    k = (theta - w) / math.pi
    assert k == pytest.approx(round(k), abs=1e-9)


@given(finite_angles)
def test_wrap_to_pi_range(theta):
    w = wrap_to_pi(theta)
    assert -math.pi < w <= math.pi
    assert math.remainder(theta - w, math.tau) == pytest.approx(0.0, abs=1e-9)


def test_wrap_to_pi_boundary():
    assert wrap_to_pi(math.pi) == math.pi
    assert wrap_to_pi(-math.pi) == math.pi
    assert wrap_to_pi(3 * math.pi) == pytest.approx(math.pi)


def test_axis_and_lever_are_perpendicular():
    for theta in (0.0, 0.3, 1.2, 2.9):
        assert axis_unit(theta) @ lever_unit(theta) == pytest.approx(0.0, abs=1e-15)
        np.testing.assert_allclose(lever_unit(theta), wedge(1.0) @ axis_unit(theta), atol=1e-15)


def test_angle_between_examples():
    assert angle_between([1, 0], [0, 1]) == pytest.approx(math.pi / 2)
    assert angle_between([0, 1], [1, 0]) == pytest.approx(-math.pi / 2)
    assert angle_between([1, 0], [-1, 0]) == pytest.approx(math.pi)
    assert angle_between([2, 0], [5, 0]) == 0.0


@given(finite_angles, finite_angles, st.floats(min_value=0.1, max_value=10))
def test_angle_between_rotation_recovery(base, delta, scale):
    a = axis_unit(base)
    b = scale * (rot2(delta) @ a)
    got = angle_between(a, b)
    assert wrap_to_pi(got - delta) == pytest.approx(0.0, abs=1e-9)


def test_angle_between_rejects_zero():
    with pytest.raises(InvalidArgumentError):
        angle_between([0.0, 0.0], [1.0, 0.0])


def test_circular_median_plain_case():
    assert circular_median(np.array([0.1, 0.2, 0.3])) == pytest.approx(0.2)


def test_circular_median_wraparound():
    # samples straddling the 0/2pi seam; a plain median would land near pi
    angles = np.array([0.05, 6.25, 0.1, 6.2, 0.0])
    med = circular_median(angles)
    dist = min(med, math.tau - med)
    assert dist < 0.2


def test_circular_median_mod_pi():
    angles = np.array([0.05, math.pi - 0.05, 0.1, math.pi - 0.1, 0.0])
    med = circular_median(angles, modulus=math.pi)
    dist = min(med, math.pi - med)
    assert dist < 0.2


def test_circular_median_empty():
    with pytest.raises(InvalidArgumentError):
        circular_median(np.array([]))


@given(
    st.lists(st.floats(min_value=-20, max_value=20, allow_nan=False), min_size=1, max_size=30)
)
def test_circular_median_minimizes_summed_deviation(angles):
    arr = np.array(angles)
    med = circular_median(arr)

    def devsum(center):
        d = np.abs(np.mod(arr, math.tau) - center)
        return np.minimum(d, math.tau - d).sum()

    best_sample = min(devsum(a % math.tau) for a in angles)
    assert devsum(med) <= best_sample + 1e-9
    # the median is one of the samples (canonicalized)
    dists = np.abs(np.mod(arr, math.tau) - med)
    assert np.minimum(dists, math.tau - dists).min() < 1e-9


def test_non_finite_rejected():
    for fn in (wrap_axis, wrap_to_pi, rot2, wedge):
        with pytest.raises(InvalidArgumentError):
            fn(math.nan)
    with pytest.raises(InvalidArgumentError):
        circular_median(np.array([0.1, math.inf]))
