import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from heisflow.hgroup import GroupContext, GroupPoint, dilate_arr, mul_arr
from heisflow.kernels import (KernelSingularityError, KernelSpec, eval_kernel, kernel_values, load_profile_csv,
                              validate_kernel)

CTX = GroupContext(1)
O = GroupPoint.neutral(1)


def test_pure_power_values():
    k = KernelSpec.pure_power(1.0)
    assert eval_kernel(k, O, GroupPoint((1,), (0,), 0)) == 1.0
    assert eval_kernel(k, O, GroupPoint((2,), (0,), 0)) == 0.03125
    assert eval_kernel(KernelSpec.pure_power(0.3), O, GroupPoint((0,), (0,), 1)) == 1.0


def test_log_rough_value():
    k = KernelSpec.log_rough(1.0, 0.5)
    d = 3.0
    expected = d ** -5 * (1 + 0.5 * math.sin(math.log(d)))
    assert math.isclose(eval_kernel(k, O, GroupPoint((3,), (0,), 0)), expected, rel_tol=1e-14)
    assert k.Lambda == 2.0


def test_tabulated_interpolation_and_clip():
    k = KernelSpec.tabulated(1.0, 2.0, [(1.0, 1.0), (2.0, 3.0)])
    assert math.isclose(float(k.multiplier(1.5)), 2.0)
    assert float(k.multiplier(5.0)) == 2.0  # clipped to Lambda
    assert float(k.multiplier(0.1)) == 1.0  # constant extrapolation


def test_diagonal_is_singular():
    with pytest.raises(KernelSingularityError):
        eval_kernel(KernelSpec.pure_power(1.0), O, O)


@pytest.mark.parametrize("kw", [dict(alpha=0.0), dict(alpha=2.0), dict(alpha=1.0, Lambda=0.5),
                                dict(alpha=1.0, family="gaussian"),
                                dict(alpha=1.0, family="log_rough", amplitude=1.0),
                                dict(alpha=1.0, family="tabulated_radial"),
                                dict(alpha=1.0, family="tabulated_radial", profile=((2, 1), (1, 1)))])
def test_invalid_specs(kw):
    with pytest.raises(ValueError):
        KernelSpec(**kw)


def test_validate_pure_power():
    rep = validate_kernel(KernelSpec.pure_power(1.0), CTX, 2000, seed=1)
    assert rep.passed
    assert math.isclose(rep.worst_upper_ratio, 1.0, rel_tol=1e-12)
    assert math.isclose(rep.worst_lower_ratio, 1.0, rel_tol=1e-12)
    assert rep.worst_symmetry_residual == 0.0


def test_validate_log_rough():
    rep = validate_kernel(KernelSpec.log_rough(1.0, 0.5), CTX, 5000, seed=2)
    assert rep.passed
    assert rep.worst_upper_ratio <= 1.5 + 1e-12
    assert rep.worst_bound_ratio <= 2.0
    assert rep.worst_symmetry_residual == 0.0


def test_validate_reports_violation():
    k = KernelSpec.tabulated(1.0, 2.0, [(1e-6, 3.0), (1e6, 3.0)])
    rep = validate_kernel(k, CTX, 100, seed=0)
    assert not rep.passed
    assert math.isclose(rep.worst_upper_ratio, 3.0)
    assert any("upper" in msg for msg in rep.messages)


def test_hook_kernel_validation():
    def hook(x, y):
        d = np.sqrt(np.sqrt(np.sum((y - x)[..., :-1] ** 2, -1) ** 2 + (y - x)[..., -1] ** 2))
        return d ** -5.0
    # Euclidean-style quartic distance is not the Koranyi distance: bounds fail somewhere
    rep = validate_kernel(KernelSpec(alpha=1.0, Lambda=1.5, hook=hook), CTX, 3000, seed=4)
    assert rep.worst_bound_ratio > 1.0


def test_symmetries_on_many_samples(rng):
    for k in (KernelSpec.pure_power(1.3), KernelSpec.log_rough(0.7, 0.8)):
        x = rng.normal(scale=3, size=(10 ** 4, 3))
        y = rng.normal(scale=3, size=(10 ** 4, 3))
        a = kernel_values(k, x, y, 4)
        b = kernel_values(k, y, x, 4)
        assert np.max(np.abs(a - b) / a) <= 1e-12
        r1 = kernel_values(k, x, mul_arr(x, y), 4)
        r2 = kernel_values(k, x, mul_arr(x, -y), 4)
        assert np.max(np.abs(r1 - r2) / r1) <= 1e-12


@given(st.floats(0.1, 10.0))
def test_pure_power_homogeneity(lam):
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(2, 50, 3))
    k = KernelSpec.pure_power(0.8)
    lhs = kernel_values(k, dilate_arr(lam, x), dilate_arr(lam, y), 4)
    rhs = lam ** -(4 + 0.8) * kernel_values(k, x, y, 4)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=0)


def test_profile_csv(tmp_path):
    p = tmp_path / "prof.csv"
    p.write_text("distance,multiplier\n0.5,1.0\n1.0,1.5\n4.0,0.8\n")
    prof = load_profile_csv(p)
    assert prof == ((0.5, 1.0), (1.0, 1.5), (4.0, 0.8))
    bad = tmp_path / "bad.csv"
    bad.write_text("1,1\n0.5,1\n")
    with pytest.raises(ValueError, match="increasing"):
        load_profile_csv(bad)
