import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heisflow.hgroup import (GroupContext, GroupPoint, annulus_constant, annulus_integral, dilate, dilate_arr, inv,
                             kdist, kdist_arr, knorm, knorm_arr, mul, mul_arr)

coord = st.floats(-50, 50, allow_nan=False)


@st.composite
def points(draw, n=1):
    return GroupPoint(tuple(draw(coord) for _ in range(n)), tuple(draw(coord) for _ in range(n)), draw(coord))


def close(a: GroupPoint, b: GroupPoint, tol=1e-9):
    return np.allclose(a.as_array(), b.as_array(), rtol=tol, atol=tol)


def test_multiplication_example():
    p = mul(GroupPoint((1,), (0,), 0), GroupPoint((0,), (1,), 0))
    assert p == GroupPoint((1,), (1,), -2)


def test_inverse_example():
    assert inv(GroupPoint((1,), (2,), 3)) == GroupPoint((-1,), (-2,), -3)
    assert inv(GroupPoint.neutral(1)) == GroupPoint.neutral(1)


def test_dilation_examples():
    assert dilate(2, GroupPoint((1,), (0,), 1)) == GroupPoint((2,), (0,), 4)
    with pytest.raises(ValueError):
        dilate(0.0, GroupPoint.neutral(1))
    with pytest.raises(ValueError):
        dilate(-1.0, GroupPoint.neutral(1))


def test_norm_examples():
    assert knorm(GroupPoint.neutral(2)) == 0.0
    assert knorm(GroupPoint((1,), (0,), 0)) == 1.0
    assert knorm(GroupPoint((0,), (0,), 1)) == 1.0
    assert kdist(GroupPoint.neutral(1), GroupPoint((1,), (0,), 0)) == 1.0


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        mul(GroupPoint.neutral(1), GroupPoint.neutral(2))
    with pytest.raises(ValueError):
        kdist(GroupPoint.neutral(1), GroupPoint.neutral(2))
    with pytest.raises(ValueError):
        GroupPoint((1.0, 2.0), (1.0,), 0.0)


def test_context():
    ctx = GroupContext(2)
    assert ctx.Q == 6 and ctx.dim == 5
    with pytest.raises(ValueError):
        GroupContext(0)


@given(points(), points(), points())
def test_group_axioms(a, b, c):
    e = GroupPoint.neutral(1)
    assert mul(a, e) == a and mul(e, a) == a
    assert close(mul(a, inv(a)), e)
    assert inv(inv(a)) == a
    lhs = mul(mul(a, b), c).as_array()
    rhs = mul(a, mul(b, c)).as_array()
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-9)


@given(points(), st.floats(0.1, 10), st.floats(0.1, 10))
def test_dilations(p, lam, mu):
    assert close(dilate(lam, dilate(mu, p)), dilate(lam * mu, p))
    assert dilate(1.0, p) == p
    assert math.isclose(knorm(dilate(lam, p)), lam * knorm(p), rel_tol=1e-12, abs_tol=1e-12)


@given(points(), points(), points())
@settings(max_examples=200)
def test_metric_left_invariance_and_symmetry(g, a, b):
    d = kdist(a, b)
    assert math.isclose(kdist(mul(g, a), mul(g, b)), d, rel_tol=1e-9, abs_tol=1e-6)
    assert kdist(a, b) == kdist(b, a)
    assert math.isclose(knorm(inv(a)), knorm(a))


def test_kdist_symmetric_random_pairs(rng):
    a = rng.normal(scale=3, size=(1000, 3))
    b = rng.normal(scale=3, size=(1000, 3))
    assert np.array_equal(kdist_arr(a, b), kdist_arr(b, a))
    # agrees with the definition |a^{-1} b|
    assert np.allclose(kdist_arr(a, b), knorm_arr(mul_arr(-a, b)), rtol=1e-12)


@pytest.mark.parametrize("n", [1, 2])
def test_left_translation_jacobian_is_one(n, rng):
    g = rng.normal(size=2 * n + 1)
    x = rng.normal(size=2 * n + 1)
    h = 1e-6
    J = np.empty((2 * n + 1, 2 * n + 1))
    for k in range(2 * n + 1):
        e = np.zeros(2 * n + 1)
        e[k] = h
        J[:, k] = (mul_arr(g, x + e) - mul_arr(g, x - e)) / (2 * h)
    assert abs(np.linalg.det(J) - 1.0) < 1e-8


def test_ball_volume_homogeneity_monte_carlo():
    # independent draws in a common box; vol(B_2) / vol(B_1) = 2^Q
    rng = np.random.default_rng(7)
    half = np.array([2.0, 2.0, 4.0])
    box = np.prod(2 * half)
    x = rng.uniform(-1, 1, size=(10 ** 6, 3)) * half
    v2 = box * np.mean(knorm_arr(x) <= 2.0)
    y = rng.uniform(-1, 1, size=(10 ** 6, 3)) * half / np.array([2.0, 2.0, 4.0])
    v1 = box / 16 * np.mean(knorm_arr(y) <= 1.0)
    assert abs(v2 / v1 / 16 - 1) < 0.01
    # and against the polar-coordinate value |B_1| = C0 / Q
    assert abs(v1 / (annulus_constant(1) / 4) - 1) < 0.01


def test_annulus_constant_matches_closed_form():
    # for n = 1, |S^1| * int_{-pi/2}^{pi/2} d phi = 2 pi^2 ; n = 2: |S^3| * 2 = 4 pi^2
    assert math.isclose(annulus_constant(1), 2 * math.pi ** 2, rel_tol=1e-9)
    assert math.isclose(annulus_constant(2), 4 * math.pi ** 2, rel_tol=1e-9)
    assert GroupContext(1).C0 > 0


def test_annulus_integral_power_law():
    C0 = annulus_constant(1)
    val = annulus_integral(1, -1.0, 2.0, 2.0e4)
    assert math.isclose(val, C0 * (2.0 ** -1 - 2.0e4 ** -1), rel_tol=1e-6)
    with pytest.raises(ValueError):
        annulus_integral(1, 0.0, 2.0, 1.0)


def test_vectorised_matches_scalar(rng):
    a, b = rng.normal(size=(2, 5))
    pa, pb = GroupPoint.from_array(a), GroupPoint.from_array(b)
    assert np.allclose(mul(pa, pb).as_array(), mul_arr(a, b))
    assert np.allclose(dilate(3.0, pa).as_array(), dilate_arr(3.0, a))
    assert math.isclose(kdist(pa, pb), float(kdist_arr(a, b)))
