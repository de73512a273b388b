import json
import math
from fractions import Fraction

import numpy as np
import pytest

from heisflow.discrete import DiscreteField, GridSpec
from heisflow.evolution import EvolutionConfig, Trajectory, koranyi_bump, run, uniform_schedule
from heisflow.kernels import KernelSpec
from heisflow.verify import (CheckReport, check_extinction, check_no_extinction, critical_exponent_exact,
                             critical_integrability_exact, fit_exponent, holder_diagnostic, loglog_fit,
                             mass_leak_exponent, operator_oracle, resolvent_contract, smoothing_exponents,
                             stroock_varopoulos, unit_ball_samples, write_reports)

PURE = KernelSpec.pure_power(1.0)


def test_exact_critical_values():
    assert critical_exponent_exact(4, 1) == Fraction(3, 4)
    assert critical_exponent_exact(6, 1.5) == Fraction(3, 4)
    assert critical_exponent_exact(4, 0.5) == Fraction(7, 8)
    assert critical_integrability_exact(0.5, 4, 1) == 2
    assert critical_integrability_exact(Fraction(1, 4), 6, Fraction(3, 2)) == 3


def test_smoothing_and_leak_exponents():
    assert smoothing_exponents(1.0, 1.0, 4) == pytest.approx((4.0, 1.0))
    assert smoothing_exponents(2.0, 1.0, 4) == pytest.approx((0.8, 0.2))
    g, d = smoothing_exponents(0.5, 1.0, 4, 3.0)
    assert g == pytest.approx(4.0) and d == pytest.approx(3.0)
    with pytest.raises(ValueError):
        smoothing_exponents(0.5, 1.0, 4, 2.0)
    assert mass_leak_exponent(2.0, 1.0, 4) == -1.0
    assert mass_leak_exponent(0.5, 1.0, 4) == pytest.approx(1.0)


def test_fit_exponent_synthetic():
    t = np.logspace(-2, 1, 30)
    rep = fit_exponent(t, 3.0 * t ** -0.8, -0.8, 0.05)
    assert rep.status == "pass" and rep.fitted_exponent == pytest.approx(-0.8, abs=1e-12)
    assert rep.r_squared == pytest.approx(1.0)
    bad = fit_exponent(t, t ** -0.5, -0.8, 0.05)
    assert bad.status == "fail"
    short = fit_exponent(t[:5], t[:5] ** -1.0, -1.0, 0.05)
    assert short.status == "inconclusive"
    noisy = fit_exponent(t, np.random.default_rng(0).uniform(0.1, 10, t.size), -1.0, 0.05)
    assert noisy.status == "inconclusive"
    win = fit_exponent(t, t ** -2.0, -2.0, 0.01, window=(0.01, 1.0))
    assert win.fit_window[0] == pytest.approx(0.01) and win.fit_window[1] <= 1.0 + 1e-12
    s, c, r2 = loglog_fit([1, 10, 100], [2, 20, 200])
    assert s == pytest.approx(1.0) and c == pytest.approx(math.log(2)) and r2 == pytest.approx(1.0)


def test_reports_json_deterministic(tmp_path):
    reps = [CheckReport("a", "pass", {"x": 1}, {"v": np.array([1.0, np.inf])}),
            fit_exponent(np.logspace(0, 2, 10), np.logspace(0, 2, 10) ** -1, -1.0, 0.1)]
    write_reports(reps, tmp_path / "a.json")
    write_reports(reps, tmp_path / "b.json")
    a = (tmp_path / "a.json").read_text()
    assert a == (tmp_path / "b.json").read_text()
    data = json.loads(a)
    assert data[0]["measured"]["v"] == [1.0, "inf"]
    assert {"fitted_exponent", "fit_window", "r_squared"} <= set(data[1]["measured"])
    assert data[1]["predicted"]["exponent"] == -1.0


def _run(grid, m, T=0.5, dt=0.05):
    return run(EvolutionConfig(m, PURE, grid, uniform_schedule(dt, T)), koranyi_bump(grid, 2.0))


def test_extinction_skipped_above_critical(small_dirichlet):
    traj = _run(small_dirichlet.grid, 2.0)
    rep = check_extinction(traj)
    assert rep.status == "skipped"
    assert check_no_extinction(traj).passed


def test_extinction_requires_supercritical_p():
    g = GridSpec(1, 1.0, 1.0, 3, 3, "dirichlet_zero")
    traj = _run(g, 0.5, 0.1)
    with pytest.raises(ValueError, match="p\\*"):
        check_extinction(traj, p=1.5)


def _static_traj(values_fn, grid):
    cfg = EvolutionConfig(2.0, PURE, grid, [1.0, 1.0])
    tr = Trajectory(cfg)
    f = DiscreteField(grid, values_fn(grid.nodes()))
    tr.times = [0.0, 1.0, 2.0]
    tr.fields = [f, f, f]
    return tr


def test_holder_linear_field_has_unit_exponent():
    # u = xi is reproduced exactly by multilinear interpolation; omega_k = r_k
    g = GridSpec(1, 2.0, 4.0, 9, 9)
    tr = _static_traj(lambda x: x[:, 0], g)
    rep = holder_diagnostic(tr, (np.zeros(3), 2.0), R=2.0, depth=4)
    assert rep.status == "pass"
    assert np.allclose(rep.measured["omegas"], 0.5 ** np.arange(5))
    assert rep.measured["beta_hat"] == pytest.approx(1.0, abs=1e-12)
    assert rep.measured["theta_hat"] == pytest.approx(0.5)


def test_holder_flat_and_vertical():
    g = GridSpec(1, 2.0, 4.0, 9, 9)
    flat = holder_diagnostic(_static_traj(lambda x: np.ones(len(x)), g), (np.zeros(3), 2.0))
    assert flat.status == "inconclusive"
    # u = s is homogeneous of degree 2 under the dilations
    vert = holder_diagnostic(_static_traj(lambda x: x[:, 2], g), (np.zeros(3), 2.0), scale=1.0, depth=3)
    assert vert.measured["beta_hat"] == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ValueError):
        holder_diagnostic(_static_traj(lambda x: x[:, 2], g), (np.zeros(3), 2.0), R=1.0)


def test_unit_ball_samples():
    pts = unit_ball_samples(1, 9)
    assert np.any(np.all(pts == 0, axis=1))
    assert np.all((pts[:, 0] ** 2 + pts[:, 1] ** 2) ** 2 + pts[:, 2] ** 2 <= 1 + 1e-12)
    assert pts.shape[1] == 3 and unit_ball_samples(2, 5).shape[1] == 5


def test_small_oracle_suites():
    g = GridSpec(1, 2.0, 4.0, 5, 5, "dirichlet_zero")
    assert operator_oracle(g).passed
    from heisflow.discrete import assemble
    assert stroock_varopoulos(assemble(g, PURE), samples=100).passed
    rep = resolvent_contract(count=10, grid=g)
    assert rep.passed, rep.message
