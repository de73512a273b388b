"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The collected lines are repeated in the terminal summary (see conftest.py).
"""
import math
import time

import numpy as np
import pytest

from heisflow.discrete import GridSpec, QuadratureConfig, annulus_integral, assemble
from heisflow.evolution import (EvolutionConfig, geometric_schedule, koranyi_bump, run, run_renormalized,
                                signed_two_bump, uniform_schedule)
from heisflow.hgroup import GroupContext
from heisflow.kernels import KernelSpec
from heisflow.verify import (check_decay, check_energy, check_extinction, check_mass_conservation,
                             check_no_extinction, check_scaling, fit_smoothing, holder_diagnostic,
                             mass_leak_sweep, operator_oracle, resolvent_contract, stroock_varopoulos)

PURE = KernelSpec.pure_power(1.0)
RESULTS: list[str] = []
pytestmark = pytest.mark.filterwarnings(r"ignore:m = .* <= m\*")


def record(number, name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# -- shared reference runs --------------------------------------------------------------------------

REF_GRID = GridSpec(1, 2.0, 4.0, 9, 9, "dirichlet_zero")


@pytest.fixture(scope="module")
def ref_op():
    return assemble(REF_GRID, PURE)


@pytest.fixture(scope="module")
def decay_runs(ref_op):
    ps = (1.0, 2.0, 4.0, math.inf)
    out = {}
    for m in (0.5, 1.0, 2.0):
        cfg = EvolutionConfig(m, PURE, REF_GRID, uniform_schedule(0.02, 1.0), diagnostics_p_list=ps,
                              resolvent_tol=1e-12)
        out[m] = run(cfg, koranyi_bump(REF_GRID, 2.0), ref_op)
    return out


EXT_GRID = GridSpec(1, 2.0, 4.0, 9, 17, "dirichlet_zero")


@pytest.fixture(scope="module")
def extinction_runs():
    op = assemble(EXT_GRID, PURE)
    out = {}
    for m in (0.5, 2.0):
        cfg = EvolutionConfig(m, PURE, EXT_GRID, uniform_schedule(0.005, 0.5), resolvent_tol=1e-12)
        out[m] = run(cfg, koranyi_bump(EXT_GRID, 1.0), op)
    return out


@pytest.fixture(scope="module")
def mass_run():
    g = GridSpec(1, 2.0, 4.0, 13, 13, "censored")
    cfg = EvolutionConfig(2.0, PURE, g, uniform_schedule(0.02, 1.0), resolvent_tol=1e-12, store="diagnostics")
    return run(cfg, koranyi_bump(g, 2.0))


# -- criteria -------------------------------------------------------------------------------------------

def test_c01_operator_oracle():
    t0 = time.perf_counter()
    g = GridSpec(1, 2.0, 4.0, 9, 9, "dirichlet_zero")
    rep = operator_oracle(g, [PURE, KernelSpec.log_rough(1.0, 0.5)], rtol=1e-12)
    dt = time.perf_counter() - t0
    devs = rep.measured["max_rel_deviation"]
    ok = rep.passed and set(devs) == {"pure_power", "log_rough"} and max(devs.values()) <= 1e-12 and dt < 10
    record(1, "operator oracle", ok,
           ", ".join(f"{k} {v:.2e}" for k, v in devs.items()) + f" (<= 1e-12), {dt:.1f} s (< 10 s)")


def test_c02_annulus_identity():
    ctx = GroupContext(1)
    v12 = annulus_integral(ctx, 0.0, 1.0, 2.0)
    v14 = annulus_integral(ctx, 0.0, 1.0, 4.0)
    rel = abs(v12 - ctx.C0 * math.log(2)) / (ctx.C0 * math.log(2))
    ratio = v14 / v12
    record(2, "annulus identity", rel <= 1e-4 and abs(ratio - 2) <= 0.02,
           f"rel error vs C0 log 2 {rel:.2e} (<= 1e-4), ratio {ratio:.6f} (2 within 1%)")


def test_c03_stroock_varopoulos():
    t0 = time.perf_counter()
    op = assemble(GridSpec(1, 2.0, 4.0, 7, 7, "dirichlet_zero"), KernelSpec.log_rough(1.0, 0.5))
    rep = stroock_varopoulos(op, (0.5, 1.0, 2.0, 3.0), samples=1000, rtol=1e-12)
    dt = time.perf_counter() - t0
    record(3, "Stroock-Varopoulos", rep.passed and dt < 30,
           f"worst violation {max(rep.measured['max_rel_violation'].values()):.2e} (<= 1e-12), {dt:.1f} s (< 30 s)")


def test_c04_resolvent_contract():
    rep = resolvent_contract(count=100, ms=(0.5, 2.0), tol=1e-10)
    m = rep.measured
    record(4, "resolvent contract", rep.passed,
           f"residual {m['max_residual']:.1e}, max-principle excess {m['max_principle_excess']:.1e}, "
           f"contraction margin {m['min_contraction_margin']:.1e}, two-node error {m['two_node_max_error']:.1e}")


def test_c05_mass_conservation(mass_run):
    rep = check_mass_conservation(mass_run, 1e-10)
    record(5, "censored mass conservation", rep.passed and rep.inputs["steps"] == 50,
           f"max rel drift per step {rep.measured['max_rel_step_drift']:.2e} (<= 1e-10) over 50 steps")


@pytest.mark.slow
def test_c06_mass_leak_rate():
    rep, drifts = mass_leak_sweep((4.0, 8.0, 16.0), 2.0, PURE, lambda g: koranyi_bump(g, 3.0), 0.5, steps=5,
                                  tol=0.2)
    record(6, "dirichlet mass-leak rate", rep.passed and abs(rep.fitted_exponent + 1) <= 0.2,
           f"slope {rep.fitted_exponent:.3f} (-1 +- 0.2), r2 {rep.r_squared:.4f}, drifts "
           + ", ".join(f"{d:.3e}" for d in drifts))


def test_c07_lp_decay(decay_runs):
    worst = {}
    ok = True
    for m, tr in decay_runs.items():
        rep = check_decay(tr, (1.0, 2.0, 4.0, math.inf), 1e-10)
        ok &= rep.passed and tr.status == "ok"
        worst[m] = max(rep.measured["max_rel_increase"].values())
    record(7, "Lp monotone decay", ok,
           "max rel increase " + ", ".join(f"m={m}: {w:.1e}" for m, w in worst.items()) + " (<= 1e-10)")


def _smoothing(m, ratio):
    g = GridSpec(1, 3.0, 9.0, 13, 25, "censored")
    cfg = EvolutionConfig(m, PURE, g, geometric_schedule(0.01, ratio, 60), resolvent_tol=1e-12,
                          store="diagnostics")
    return fit_smoothing(run_renormalized(cfg, koranyi_bump(g, 1.0)), 1.0, 0.15)


@pytest.mark.slow
def test_c08_smoothing_exponent():
    quad = _smoothing(2.0, 1.25)
    lin = _smoothing(1.0, 1.2)

    def ok(r):
        span = math.log10(r.fit_window[1] / r.fit_window[0])
        return r.passed and r.r_squared >= 0.98 and span >= 1.0 and abs(r.fitted_exponent - r.predicted_exponent) \
            <= 0.15 * abs(r.predicted_exponent)
    record(8, "smoothing exponent", ok(quad) and ok(lin),
           f"m=2 slope {quad.fitted_exponent:.3f} vs -0.8 (r2 {quad.r_squared:.4f}, "
           f"{math.log10(quad.fit_window[1] / quad.fit_window[0]):.2f} decades); "
           f"m=1 slope {lin.fitted_exponent:.3f} vs -4 (r2 {lin.r_squared:.4f}, "
           f"{math.log10(lin.fit_window[1] / lin.fit_window[0]):.2f} decades)")


def test_c09_extinction(extinction_runs):
    ext = check_extinction(extinction_runs[0.5], p=3.0)
    none = check_no_extinction(extinction_runs[2.0])
    m = ext.measured
    record(9, "extinction", ext.passed and none.passed,
           f"m=0.5: C_hat {m['C_hat']:.3g} > 0, extinct at {m['observed_extinction_time']:.3g} "
           f"< 2 x {ext.predicted['ode_extinction_time']:.3g}; m=2 final sup {none.measured['final_linf']:.3g}")


def test_c10_scaling(ref_op):
    cfg = EvolutionConfig(2.0, PURE, REF_GRID, uniform_schedule(0.02, 1.0), resolvent_tol=1e-12)
    rep = check_scaling(cfg, koranyi_bump(REF_GRID, 2.0), 2.0, ref_op, atol=1e-8)
    record(10, "scaling covariance", rep.passed,
           f"max |u_scaled - 2 u| {rep.measured['max_pointwise_deviation']:.2e} (<= 1e-8)")


def test_c11_energy_inequality(decay_runs, extinction_runs):
    margins = {}
    ok = True
    for label, tr in [*((f"decay m={m}", t) for m, t in decay_runs.items()),
                      *((f"extinction m={m}", t) for m, t in extinction_runs.items())]:
        rep = check_energy(tr, 1e-8)
        ok &= rep.passed
        margins[label] = rep.measured["margin"]
    record(11, "energy inequality", ok,
           "margins " + ", ".join(f"{k}: {v:.2e}" for k, v in margins.items()) + " (>= -1e-8)")


def _holder_run(N, initial):
    g = GridSpec(1, 2.0, 4.0, N, N, "censored")
    cfg = EvolutionConfig(2.0, PURE, g, uniform_schedule(0.02, 1.0), resolvent_tol=1e-12)
    return run(cfg, initial(g))


@pytest.mark.slow
def test_c12_holder():
    out = {}
    for label, initial, degenerate in (("bump", lambda g: koranyi_bump(g, 1.0), False),
                                       ("signed", lambda g: signed_two_bump(g, 1.0), True)):
        for N in (13, 17):
            rep = holder_diagnostic(_holder_run(N, initial), (np.zeros(3), 1.0), R=2.0, depth=4,
                                    use_degenerate_cylinders=degenerate, scale=0.5)
            out[label, N] = rep
    ok = True
    parts = []
    for label in ("bump", "signed"):
        a, b = out[label, 13], out[label, 17]
        ok &= a.passed and b.passed
        ok &= all(max(r.measured["ratios"]) <= 1 - r.measured["theta_hat"] + 1e-15 for r in (a, b))
        if label == "signed":
            ok &= a.inputs["sigma"] == 0.5 and b.inputs["sigma"] == 0.5
        ba, bb = a.measured.get("beta_hat", math.nan), b.measured.get("beta_hat", math.nan)
        rel = abs(ba - bb) / abs(bb)
        ok &= rel <= 0.3
        parts.append(f"{label}: beta 13^3 {ba:.3f}, 17^3 {bb:.3f} (rel diff {rel:.2f} <= 0.3), "
                     f"theta {a.measured['theta_hat']:.3f}/{b.measured['theta_hat']:.3f} > 0")
    record(12, "Holder diagnostic", bool(ok), "; ".join(parts))
