"""Measurements that turn the qualitative statements about the flow into checks.

Every check returns a :class:`CheckReport` (or an :class:`ExponentReport` for
power-law fits) with status ``pass``, ``fail``, ``inconclusive`` or
``skipped``. Constants that the theory leaves unspecified are fitted, never
asserted; only exponents and inequality directions decide pass/fail.
"""

from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy import optimize
from scipy.interpolate import RegularGridInterpolator

from .discrete import (DiscreteField, GridSpec, NonlocalOperator, QuadratureConfig, assemble, lp_norm,
                       signed_power)
from .evolution import (EvolutionConfig, Trajectory, critical_exponent, run, uniform_schedule)
from .hgroup import GroupPoint, dilate_arr, knorm_arr, mul_arr
from .kernels import KernelSpec
from .resolvent import ResolventProblem, solve, t_contraction_check

EXTINCTION_THRESHOLD = 1e-6
MIN_R2 = 0.98


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@dataclass
class CheckReport:
    name: str
    status: str
    inputs: dict = field(default_factory=dict)
    measured: dict = field(default_factory=dict)
    predicted: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    message: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class ExponentReport:
    fitted_exponent: float
    predicted_exponent: float
    fit_window: tuple[float, float]
    r_squared: float
    tolerance: float
    n_points: int
    status: str
    name: str = "exponent_fit"
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    @property
    def relative_error(self) -> float:
        return abs(self.fitted_exponent - self.predicted_exponent) / abs(self.predicted_exponent)

    def to_report(self) -> CheckReport:
        return CheckReport(self.name, self.status,
                           measured={"fitted_exponent": self.fitted_exponent, "r_squared": self.r_squared,
                                     "fit_window": list(self.fit_window), "n_points": self.n_points,
                                     **self.extra},
                           predicted={"exponent": self.predicted_exponent},
                           tolerances={"relative": self.tolerance, "min_r_squared": MIN_R2})


def write_reports(reports, path):
    with open(path, "w") as fh:
        json.dump([r.to_dict() if isinstance(r, CheckReport) else r.to_report().to_dict() for r in reports],
                  fh, indent=2, sort_keys=True)


# -- exact exponent arithmetic --------------------------------------------------------

def _frac(x) -> Fraction:
    return Fraction(x).limit_denominator(10 ** 9) if isinstance(x, float) else Fraction(x)


def critical_exponent_exact(Q, alpha) -> Fraction:
    """m* = (Q - alpha) / Q as an exact fraction."""
    Q, alpha = _frac(Q), _frac(alpha)
    return (Q - alpha) / Q


def critical_integrability_exact(m, Q, alpha) -> Fraction:
    """p*(m) = (1 - m) Q / alpha as an exact fraction."""
    return (1 - _frac(m)) * _frac(Q) / _frac(alpha)


def smoothing_exponents(m: float, alpha: float, Q: int, p: float = 1.0) -> tuple[float, float]:
    """(gamma_p, delta_p) with gamma_p = (m - 1 + alpha p / Q)^{-1}, delta_p = alpha p gamma_p / Q."""
    denom = m - 1.0 + alpha * p / Q
    if not denom > 0:
        raise ValueError(f"m - 1 + alpha p / Q must be positive, got {denom}")
    gamma = 1.0 / denom
    return gamma, alpha * p * gamma / Q


def mass_leak_exponent(m: float, alpha: float, Q: int) -> float:
    """Predicted slope of log|drift| against log R: -alpha + Q (p - 1) / p, p = max(1, 1/m)."""
    p = max(1.0, 1.0 / m)
    return -alpha + Q * (p - 1.0) / p


# -- fitting ------------------------------------------------------------------------------

def loglog_fit(x, y) -> tuple[float, float, float]:
    """Least-squares line through (log x, log y); returns (slope, intercept, r^2)."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * lx + icpt)
    ss = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    return float(slope), float(icpt), r2


def _auto_window(t, y, min_decades=1.0):
    """Window [i, j] spanning >= min_decades in t with the best r^2 (ties: widest)."""
    best = None
    n = len(t)
    for i in range(n):
        for j in range(n - 1, i, -1):
            if math.log10(t[j] / t[i]) < min_decades:
                break
            r2 = loglog_fit(t[i:j + 1], y[i:j + 1])[2]
            key = (round(r2, 3), math.log(t[j] / t[i]))
            if best is None or key > best[0]:
                best = (key, i, j)
    return None if best is None else (best[1], best[2])


def fit_exponent(t, y, predicted: float, tolerance: float, window=None, name="exponent_fit",
                 min_decades: float = 1.0) -> ExponentReport:
    """Fit the slope of log y against log t inside ``window`` (or an automatic window)."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    ok = (t > 0) & (y > 0) & np.isfinite(y)
    t, y = t[ok], y[ok]
    if window is not None:
        sel = (t >= window[0] * (1 - 1e-12)) & (t <= window[1] * (1 + 1e-12))
        t, y = t[sel], y[sel]
        idx = (0, len(t) - 1) if len(t) >= 3 else None
    else:
        idx = _auto_window(t, y, min_decades) if len(t) >= 3 else None
    if idx is None or len(t) < 3 or math.log10(t[idx[1]] / t[idx[0]]) < min_decades - 1e-12:
        span = (float(t[0]), float(t[-1])) if len(t) else (math.nan, math.nan)
        return ExponentReport(math.nan, predicted, span, 0.0, tolerance, len(t), "inconclusive", name,
                              {"reason": f"need >= {min_decades} decade(s) of t"})
    i, j = idx
    slope, _, r2 = loglog_fit(t[i:j + 1], y[i:j + 1])
    if r2 < MIN_R2:
        status = "inconclusive"
    else:
        status = "pass" if abs(slope - predicted) <= tolerance * abs(predicted) else "fail"
    return ExponentReport(slope, predicted, (float(t[i]), float(t[j])), r2, tolerance, j - i + 1, status, name)


# -- conservation and monotonicity -----------------------------------------------------------

def check_mass_conservation(traj: Trajectory, rtol: float = 1e-10) -> CheckReport:
    """Per-step relative mass drift (censored closure)."""
    M = traj.series("mass")
    scale = abs(M[0])
    if scale == 0:
        drift = float(np.max(np.abs(np.diff(M)))) if len(M) > 1 else 0.0
        return CheckReport("mass_conservation", "pass" if drift <= rtol else "fail",
                           measured={"max_abs_step_drift": drift}, tolerances={"abs": rtol},
                           message="zero initial mass: absolute drift checked")
    step_drift = np.abs(np.diff(M)) / scale if len(M) > 1 else np.zeros(1)
    worst = float(step_drift.max())
    return CheckReport("mass_conservation", "pass" if worst <= rtol else "fail",
                       inputs={"m": traj.m, "closure": traj.grid.closure, "steps": len(M) - 1},
                       measured={"max_rel_step_drift": worst, "total_rel_drift": float(abs(M[-1] - M[0]) / scale)},
                       predicted={"drift": 0.0}, tolerances={"rel_per_step": rtol})


def leak_grid(R: float, h_z: float, h_s: float, s_ratio: float, n: int = 1) -> GridSpec:
    """Dirichlet grid of z half-extent R and s half-extent s_ratio R^2 with fixed spacings."""
    Hs = s_ratio * R * R
    return GridSpec(n, R, Hs, int(round(2 * R / h_z)) + 1, int(round(2 * Hs / h_s)) + 1, "dirichlet_zero")


def mass_leak_sweep(radii, m: float, kernel: KernelSpec, initial, horizon: float, steps: int = 5,
                    h_z: float = 2.0, h_s: float = 4.0, s_ratio: float = 0.25,
                    quad: QuadratureConfig | None = None, tol: float = 0.2, resolvent_tol: float = 1e-12):
    """Drift of the mass after ``horizon`` on dirichlet boxes of growing radius.

    ``initial(grid)`` builds the data on each box. Returns (ExponentReport, drifts).
    """
    quad = quad or QuadratureConfig(inner_cutoff_factor=1.0)
    drifts, masses = [], []
    for R in radii:
        g = leak_grid(R, h_z, h_s, s_ratio)
        op = assemble(g, kernel, quad)
        cfg = EvolutionConfig(m, kernel, g, uniform_schedule(horizon / steps, horizon),
                              resolvent_tol=resolvent_tol, store="diagnostics", quad=quad)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tr = run(cfg, initial(g), op)
        if tr.status != "ok":
            raise RuntimeError(f"run at R={R} failed: {tr.error}")
        M = tr.series("mass")
        masses.append(float(M[0]))
        drifts.append(float(abs(M[-1] - M[0])))
    predicted = mass_leak_exponent(m, kernel.alpha, 2 * 1 + 2)
    if min(masses) == 0:
        rep = ExponentReport(math.nan, predicted, (min(radii), max(radii)), 0.0, tol, len(radii),
                             "inconclusive", "mass_leak_rate", {"reason": "zero initial mass"})
        return rep, drifts
    slope, _, r2 = loglog_fit(radii, drifts)
    if r2 < MIN_R2:
        status = "inconclusive"
    elif predicted == 0:
        status = "pass" if abs(slope) <= tol else "fail"
    else:
        status = "pass" if abs(slope - predicted) <= tol * abs(predicted) else "fail"
    rep = ExponentReport(slope, predicted, (float(min(radii)), float(max(radii))), r2, tol, len(radii), status,
                         "mass_leak_rate", {"drifts": drifts, "initial_mass": masses, "radii": list(radii)})
    return rep, drifts


def check_mass(traj: Trajectory, domain_radii=None, initial=None, **sweep) -> CheckReport:
    """Censored closure: per-step conservation. Dirichlet closure with m > m*: leak-rate fit
    over ``domain_radii`` (``initial(grid)`` supplies the data on every box)."""
    if traj.grid.closure == "censored":
        return check_mass_conservation(traj)
    Q = traj.grid.Q
    if traj.m <= critical_exponent(Q, traj.config.alpha):
        return CheckReport("mass_leak_rate", "skipped", message="m <= m*: no conservation statement")
    if not domain_radii or initial is None:
        return CheckReport("mass_leak_rate", "skipped", message="no radii sweep requested")
    horizon = sweep.pop("horizon", traj.config.horizon)
    rep, _ = mass_leak_sweep(domain_radii, traj.m, traj.config.kernel, initial, horizon, **sweep)
    return rep.to_report()


def check_decay(traj: Trajectory, ps=None, rtol: float = 1e-10) -> CheckReport:
    """||u(t_k)||_p non-increasing in k for each p."""
    ps = tuple(ps or traj.config.diagnostics_p_list)
    worst = {}
    for p in ps:
        v = traj.series("norm", p)
        inc = (v[1:] - v[:-1]) / np.maximum(v[:-1], 1e-300)
        worst[p] = float(max(inc.max(), 0.0)) if len(inc) else 0.0
    ok = all(w <= rtol for w in worst.values())
    return CheckReport("lp_decay", "pass" if ok else "fail",
                       inputs={"m": traj.m, "p": list(ps)},
                       measured={"max_rel_increase": {_pkey(p): w for p, w in worst.items()}},
                       tolerances={"rel_per_step": rtol})


def _pkey(p):
    return "inf" if math.isinf(p) else repr(float(p))


def check_energy(traj: Trajectory, atol: float = 1e-8) -> CheckReport:
    """sum dt E(u_k^m, u_k^m) + ||u_N||_{m+1}^{m+1}/(m+1) <= ||u_0||_{m+1}^{m+1}/(m+1) + atol."""
    m = traj.m
    fields = traj.stored()
    if fields[0][0] != 0.0 or len(fields) < 2:
        return CheckReport("energy_inequality", "inconclusive", message="needs the initial and final fields")
    u0, uN = fields[0][1], fields[-1][1]
    dts = traj.series("dt")[1:]
    E = traj.series("energy_mm")[1:]
    dissipated = float(np.sum(dts * E))
    lhs = dissipated + lp_norm(uN, m + 1) ** (m + 1) / (m + 1)
    rhs = lp_norm(u0, m + 1) ** (m + 1) / (m + 1)
    return CheckReport("energy_inequality", "pass" if lhs <= rhs + atol else "fail",
                       inputs={"m": m, "steps": len(dts)},
                       measured={"lhs": lhs, "rhs": rhs, "dissipated": dissipated, "margin": rhs - lhs},
                       tolerances={"abs": atol})


def check_time_derivative(traj: Trajectory, t_min: float | None = None, slack: float = 0.2) -> CheckReport:
    """||u_{k+1} - u_k||_1 / dt <= 2 ||u_0||_1 / (|m - 1| t_k) (1 + slack) for t_k >= t_min."""
    m = traj.m
    if m == 1:
        return CheckReport("time_derivative", "skipped", message="bound is for m != 1")
    fields = traj.stored()
    if len(fields) < 3:
        return CheckReport("time_derivative", "inconclusive", message="needs stored fields")
    u0 = fields[0][1]
    bound0 = 2.0 * lp_norm(u0, 1) / abs(m - 1)
    t_min = t_min if t_min is not None else fields[1][0]
    worst = 0.0
    for (ta, ua), (tb, ub) in zip(fields[:-1], fields[1:]):
        if ta < t_min or ta <= 0:
            continue
        rate = lp_norm(ub.values - ua.values, 1, ua.grid.cellvol) / (tb - ta)
        worst = max(worst, rate / (bound0 / ta))
    return CheckReport("time_derivative", "pass" if worst <= 1 + slack else "fail",
                       inputs={"m": m, "t_min": t_min}, measured={"max_ratio_to_bound": worst},
                       tolerances={"slack": slack})


# -- extinction --------------------------------------------------------------------------------

def check_extinction(traj: Trajectory, p: float = 3.0, threshold: float = EXTINCTION_THRESHOLD) -> CheckReport:
    """Fit C in (J_{k+1} - J_k)/dt <= -C J_k^{(Q - alpha)/Q}, J = ||u||_p^p, over the active window
    (steps that start with ||u||_inf >= threshold) and compare the observed extinction time with
    the ODE prediction T = J(0)^{alpha/Q} Q / (alpha C)."""
    Q, alpha, m = traj.grid.Q, traj.config.alpha, traj.m
    mstar = critical_exponent(Q, alpha)
    inputs = {"m": m, "p": p, "alpha": alpha, "Q": Q}
    if m >= mstar:
        return CheckReport("extinction", "skipped", inputs, message=f"skipped: m >= m* = {mstar:.6g}")
    pstar = (1 - m) * Q / alpha
    if not p > pstar:
        raise ValueError(f"need p > p*(m) = {pstar:.6g}, got {p}")
    fields = traj.stored()
    linf = traj.series("linf")
    t = np.array(traj.times)
    if len(fields) == len(traj.times):
        J = np.array([lp_norm(f, p) ** p for _, f in fields])
    elif p in traj.config.diagnostics_p_list:
        J = traj.series("norm", p) ** p
    else:
        raise ValueError(f"p = {p} is neither in the diagnostics list nor computable from stored fields")
    expo = (Q - alpha) / Q
    active = [k for k in range(len(t) - 1) if linf[k] >= threshold and J[k] > 0]
    if len(active) < 2:
        return CheckReport("extinction", "inconclusive", inputs, message="no decay window")
    rates = np.array([-(J[k + 1] - J[k]) / (t[k + 1] - t[k]) / J[k] ** expo for k in active])
    C_hat = float(rates.min())
    below = np.nonzero(linf < threshold)[0]
    t_ext = float(t[below[0]]) if below.size else math.inf
    T_hat = J[0] ** (alpha / Q) * Q / (alpha * C_hat) if C_hat > 0 else math.inf
    ok = C_hat > 0 and t_ext < 2 * T_hat
    return CheckReport("extinction", "pass" if ok else "fail", inputs,
                       measured={"C_hat": C_hat, "observed_extinction_time": t_ext, "window_steps": len(active),
                                 "J0": float(J[0])},
                       predicted={"ode_extinction_time": T_hat, "exponent": expo},
                       tolerances={"threshold_linf": threshold, "time_factor": 2.0})


def check_no_extinction(traj: Trajectory, threshold: float = EXTINCTION_THRESHOLD) -> CheckReport:
    linf = traj.series("linf")
    final = float(linf[-1])
    return CheckReport("no_extinction", "pass" if final >= threshold else "fail",
                       inputs={"m": traj.m, "horizon": traj.config.horizon},
                       measured={"final_linf": final}, tolerances={"threshold_linf": threshold})


# -- smoothing -----------------------------------------------------------------------------------

def default_smoothing_window(traj: Trajectory):
    """For renormalised runs: from the first lattice dilation to the end; else None (automatic)."""
    levels = getattr(traj, "levels", None)
    if not levels or max(levels) == 0:
        return None
    k = next(i for i, lv in enumerate(levels) if lv > 0)
    return (traj.times[k], traj.times[-1])


def fit_smoothing(traj: Trajectory, p: float = 1.0, tolerance: float = 0.15, window=None) -> ExponentReport:
    """Slope of log||u||_inf against log t versus -gamma_p."""
    gamma, delta = smoothing_exponents(traj.m, traj.config.alpha, traj.grid.Q, p)
    window = window if window is not None else default_smoothing_window(traj)
    rep = fit_exponent(traj.times, traj.series("linf"), -gamma, tolerance, window, name="smoothing")
    rep.extra.update({"gamma_p": gamma, "delta_p": delta, "p": p, "m": traj.m})
    return rep


def fit_data_exponent(traj_a: Trajectory, traj_b: Trajectory, p: float = 1.0, tolerance: float = 0.15,
                      t_min: float | None = None) -> ExponentReport:
    """Late-time ||u||_inf ratio of two runs against the ratio of ||u_0||_p: exponent delta_p."""
    gamma, delta = smoothing_exponents(traj_a.m, traj_a.config.alpha, traj_a.grid.Q, p)
    na = lp_norm(traj_a.stored()[0][1], p)
    nb = lp_norm(traj_b.stored()[0][1], p)
    ta, tb = np.array(traj_a.times), np.array(traj_b.times)
    la, lb = traj_a.series("linf"), traj_b.series("linf")
    t_min = t_min if t_min is not None else 0.5 * ta[-1]
    common = [(i, j) for i, t in enumerate(ta) if t >= t_min
              for j in np.nonzero(np.isclose(tb, t, rtol=1e-12))[0]]
    if not common or na == nb:
        return ExponentReport(math.nan, delta, (t_min, float(ta[-1])), 0.0, tolerance, 0, "inconclusive",
                              "data_exponent")
    est = np.array([math.log(la[i] / lb[j]) / math.log(na / nb) for i, j in common])
    fitted = float(est.mean())
    status = "pass" if abs(fitted - delta) <= tolerance * delta else "fail"
    return ExponentReport(fitted, delta, (t_min, float(ta[-1])), 1.0, tolerance, len(est), status,
                          "data_exponent", {"spread": float(est.max() - est.min())})


# -- contraction and scaling -------------------------------------------------------------------

def check_contraction(traj_a: Trajectory, traj_b: Trajectory, tol: float = 1e-10) -> CheckReport:
    """t -> sum (u_A - u_B)_+ vol and the L^1 distance are non-increasing."""
    if traj_a.grid != traj_b.grid or not np.allclose(traj_a.times, traj_b.times, rtol=1e-14, atol=0):
        raise ValueError("trajectories must share grid and time schedule")
    fa, fb = traj_a.stored(), traj_b.stored()
    if len(fa) != len(traj_a.times) or len(fb) != len(traj_b.times):
        raise ValueError("contraction check needs full field storage")
    vol = traj_a.grid.cellvol
    pos = np.array([np.sum(np.maximum(a.values - b.values, 0.0)) * vol for (_, a), (_, b) in zip(fa, fb)])
    l1 = np.array([np.sum(np.abs(a.values - b.values)) * vol for (_, a), (_, b) in zip(fa, fb)])
    inc_pos = float(np.max(np.diff(pos), initial=0.0))
    inc_l1 = float(np.max(np.diff(l1), initial=0.0))
    ok = inc_pos <= tol and inc_l1 <= tol
    return CheckReport("contraction", "pass" if ok else "fail",
                       measured={"max_increase_positive_part": inc_pos, "max_increase_l1": inc_l1,
                                 "final_positive_part": float(pos[-1]), "final_l1": float(l1[-1])},
                       tolerances={"abs_per_step": tol})


def check_scaling(cfg: EvolutionConfig, u0: DiscreteField, lam: float = 2.0, op: NonlocalOperator | None = None,
                  atol: float | None = None) -> CheckReport:
    """Runs (u0, dt) and (lam u0, dt lam^{1-m}); the second must equal lam times the first."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    from dataclasses import replace
    op = op or assemble(cfg.grid, cfg.kernel, cfg.quad)
    base_cfg = replace(cfg, store="full")
    scaled_cfg = replace(cfg, store="full", dt_schedule=[dt * lam ** (1 - cfg.m) for dt in cfg.dt_schedule])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = run(base_cfg, u0, op)
        b = run(scaled_cfg, u0.like(lam * u0.values), op)
    if a.status != "ok" or b.status != "ok":
        raise RuntimeError(f"scaling runs failed: {a.error or b.error}")
    dev = max(float(np.max(np.abs(fb.values - lam * fa.values))) for (_, fa), (_, fb) in zip(a.stored(), b.stored()))
    atol = atol if atol is not None else 10 * cfg.resolvent_tol * max(1.0, lam)
    return CheckReport("scaling", "pass" if dev <= atol else "fail",
                       inputs={"m": cfg.m, "lambda": lam, "steps": len(cfg.dt_schedule)},
                       measured={"max_pointwise_deviation": dev}, tolerances={"abs": atol})


# -- Hölder diagnostic -------------------------------------------------------------------------------

@dataclass(frozen=True)
class CylinderSpec:
    """Gamma_{R,a} = {kdist(x, center) <= R} x [t - a, t]; the degenerate variant has a = R^alpha omega^{-sigma}."""
    center: GroupPoint
    time: float
    R: float
    a: float
    omega: float | None = None
    sigma: float = 0.0

    @classmethod
    def degenerate(cls, center, time, R, alpha, omega, m):
        sigma = 1.0 - 1.0 / m
        return cls(center, time, R, R ** alpha * omega ** (-sigma), omega, sigma)


def unit_ball_samples(n: int, per_axis: int = 9) -> np.ndarray:
    """Lattice points of [-1, 1]^{2n+1} inside the unit Koranyi ball (the origin included)."""
    ax = np.linspace(-1.0, 1.0, per_axis)
    mesh = np.meshgrid(*([ax] * (2 * n + 1)), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    return pts[knorm_arr(pts) <= 1.0 + 1e-12]


class _FieldSampler:
    """Multilinear interpolation in space, linear in time, over the stored fields."""

    def __init__(self, traj: Trajectory):
        st = traj.stored()
        if len(st) < 2:
            raise ValueError("the diagnostic needs stored fields")
        grids = {f.grid for _, f in st}
        if len(grids) != 1:
            raise ValueError("stored fields live on different lattices")
        self.grid = st[0][1].grid
        self.times = np.array([t for t, _ in st])
        self.fields = [f.as_grid_array() for _, f in st]
        self.axes = self.grid.axes()

    def inside(self, pts) -> bool:
        return bool(np.all(np.abs(pts[:, :-1]) <= self.grid.half_extent_z + 1e-12)
                    and np.all(np.abs(pts[:, -1]) <= self.grid.half_extent_s + 1e-12))

    def values(self, pts, t0, t1):
        """Field values at pts for every stored time in [t0, t1] plus both end points."""
        ts = self.times
        inner = ts[(ts > t0) & (ts < t1)]
        out = []
        for t in np.concatenate([[t0], inner, [t1]]):
            k = int(np.clip(np.searchsorted(ts, t) - 1, 0, len(ts) - 2))
            w = (t - ts[k]) / (ts[k + 1] - ts[k])
            w = min(max(w, 0.0), 1.0)
            fa = RegularGridInterpolator(self.axes, self.fields[k])(pts)
            fb = RegularGridInterpolator(self.axes, self.fields[k + 1])(pts)
            out.append((1 - w) * fa + w * fb)
        return np.concatenate(out)


def holder_diagnostic(traj: Trajectory, center, R: float = 2.0, depth: int = 4,
                      use_degenerate_cylinders: bool = False, scale: float = 1.0, c0: float = 1.0,
                      per_axis: int = 9, resolution_floor: float | None = None) -> CheckReport:
    """Half-oscillations omega_k over nested cylinders around (x0, t0).

    Plain cylinders: radius r_k = scale R^{-k}, time depth c0 r_k^alpha. Degenerate cylinders
    (m > 1): the depth of Q_{k+1} is c0 r_{k+1}^alpha omega_k^{-sigma}, sigma = 1 - 1/m.
    beta_hat is the geometric-mean decay exponent; theta_hat = 1 - max ratio.
    """
    if not R > 1:
        raise ValueError(f"R must exceed 1, got {R}")
    x0, t0 = center
    x0 = x0.as_array() if isinstance(x0, GroupPoint) else np.asarray(x0, float)
    alpha, m = traj.config.alpha, traj.m
    sampler = _FieldSampler(traj)
    floor = resolution_floor if resolution_floor is not None else 10 * traj.config.resolvent_tol
    unit = unit_ball_samples(traj.grid.n, per_axis)
    degenerate = use_degenerate_cylinders and m > 1
    sigma = 1.0 - 1.0 / m
    omegas, radii, depths = [], [], []
    notes = []
    prev = None
    for k in range(depth + 1):
        r = scale * R ** (-k)
        a = c0 * r ** alpha
        if degenerate and prev is not None and prev > 0:
            a *= prev ** (-sigma)
        if a > t0:
            notes.append(f"level {k}: time depth {a:.4g} exceeds t0, truncated")
            a = t0
        pts = mul_arr(x0, dilate_arr(r, unit))
        if not sampler.inside(pts):
            notes.append(f"level {k}: cylinder leaves the computed box, depth truncated")
            break
        vals = sampler.values(pts, t0 - a, t0)
        om = 0.5 * float(vals.max() - vals.min())
        if om < floor:
            if k == 0:
                omegas.append(om)
                radii.append(r)
                depths.append(a)
            notes.append(f"level {k}: oscillation below resolution floor {floor:.3g}")
            break
        omegas.append(om)
        radii.append(r)
        depths.append(a)
        prev = om
    inputs = {"center": list(x0), "t0": t0, "R": R, "depth": depth, "degenerate": degenerate,
              "sigma": sigma if degenerate else 0.0, "scale": scale, "c0": c0}
    if not omegas or omegas[0] < floor:
        return CheckReport("holder", "inconclusive", inputs, {"omegas": omegas},
                           message="flat: oscillation vanishes, exponent undefined")
    if len(omegas) < 2:
        return CheckReport("holder", "inconclusive", inputs, {"omegas": omegas}, message="; ".join(notes))
    om = np.array(omegas)
    ratios = om[1:] / om[:-1]
    beta = float(-np.mean(np.log(ratios)) / math.log(R))
    theta = float(1.0 - ratios.max())
    return CheckReport("holder", "pass" if theta > 0 else "fail", inputs,
                       measured={"omegas": om, "ratios": ratios, "radii": radii, "time_depths": depths,
                                 "beta_hat": beta, "theta_hat": theta},
                       message="; ".join(notes))


# -- operator oracle and Stroock-Varopoulos -----------------------------------------------------------

def brute_force_apply(grid: GridSpec, kernel: KernelSpec, rho0: float, tail, f) -> np.ndarray:
    """(L f)_i = sum_j cellvol J_sym(x_i, x_j) (f_i - f_j) + tail_i f_i by a plain double loop.

    Written independently of the vectorised assembly: scalar arithmetic only, Koranyi
    distance from the group law spelled out for n = 1 or general n.
    """
    pts = [tuple(map(float, p)) for p in grid.nodes()]
    n = grid.n
    Q = grid.Q
    vol = grid.cellvol
    a_mult = kernel.amplitude
    fam = kernel.family
    f = [float(v) for v in f]
    out = []
    for i, x in enumerate(pts):
        acc = 0.0
        for j, y in enumerate(pts):
            if i == j:
                continue
            dz2 = 0.0
            sym = 0.0
            for c in range(n):
                dz2 += (y[c] - x[c]) ** 2 + (y[n + c] - x[n + c]) ** 2
                sym += x[n + c] * y[c] - x[c] * y[n + c]
            ds = y[-1] - x[-1] - 2.0 * sym
            d = (dz2 * dz2 + ds * ds) ** 0.25
            if d < rho0:
                continue
            if fam == "pure_power":
                g = 1.0
            elif fam == "log_rough":
                g = 1.0 + a_mult * math.sin(math.log(d))
            else:
                g = float(kernel.multiplier(d))
            acc += d ** (-(Q + kernel.alpha)) * g * vol * (f[i] - f[j])
        out.append(acc + float(tail[i]) * f[i])
    return np.array(out)


def operator_oracle(grid: GridSpec | None = None, kernels=None, seed: int = 0, rtol: float = 1e-12) -> CheckReport:
    grid = grid or GridSpec(1, 2.0, 4.0, 9, 9, "dirichlet_zero")
    kernels = kernels or [KernelSpec.pure_power(1.0), KernelSpec.log_rough(1.0, 0.5)]
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst = {}
    for ker in kernels:
        op = assemble(grid, ker)
        f = rng.normal(size=grid.size)
        ref = brute_force_apply(grid, ker, op.rho0, op.tail, f)
        got = op.matvec(f)
        worst[ker.family] = float(np.max(np.abs(got - ref)) / np.max(np.abs(ref)))
    elapsed = time.perf_counter() - t0
    ok = all(w <= rtol for w in worst.values())
    return CheckReport("operator_oracle", "pass" if ok else "fail",
                       inputs={"shape": list(grid.shape), "closure": grid.closure, "seed": seed},
                       measured={"max_rel_deviation": worst, "seconds": elapsed}, tolerances={"rel": rtol})


def stroock_varopoulos(op: NonlocalOperator, ms=(0.5, 1.0, 2.0, 3.0), samples: int = 1000, seed: int = 0,
                       rtol: float = 1e-12) -> CheckReport:
    """E(f^m, f) >= 4m/(m+1)^2 E(f^{(m+1)/2}, f^{(m+1)/2}) on random nonnegative fields."""
    rng = np.random.default_rng(seed)
    worst = {}
    for m in ms:
        c = 4 * m / (m + 1) ** 2
        w = -math.inf
        for _ in range(samples):
            f = rng.random(op.grid.size) ** rng.uniform(0.5, 4.0)
            lhs = op.pair_form(f ** m, f)
            h = f ** ((m + 1) / 2)
            rhs = c * op.pair_form(h, h)
            w = max(w, (rhs - lhs) / max(abs(lhs), 1e-300))
        worst[m] = w
    ok = all(v <= rtol for v in worst.values())
    return CheckReport("stroock_varopoulos", "pass" if ok else "fail",
                       inputs={"m": list(ms), "samples": samples, "seed": seed},
                       measured={"max_rel_violation": {repr(k): v for k, v in worst.items()}},
                       tolerances={"rel": rtol})


# -- resolvent contract -------------------------------------------------------------------------------

def two_node_oracle(w: float, eps: float, m: float, g, tol: float = 1e-14) -> np.ndarray:
    """Solve v_A^{1/m} + eps w (v_A - v_B) = g_A, v_B^{1/m} + eps w (v_B - v_A) = g_B by nested bisection.

    For fixed v_A the second equation is monotone in v_B; the reduced first equation is
    then monotone in v_A.
    """
    def pw(v):
        return math.copysign(abs(v) ** (1.0 / m), v)

    gmax = max(abs(g[0]), abs(g[1]))
    lo_v, hi_v = -(gmax ** m) - 1.0, gmax ** m + 1.0

    def vB_of(vA):
        return optimize.brentq(lambda vB: pw(vB) + eps * w * (vB - vA) - g[1], lo_v - abs(vA), hi_v + abs(vA),
                               xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)

    vA = optimize.brentq(lambda vA: pw(vA) + eps * w * (vA - vB_of(vA)) - g[0], lo_v, hi_v,
                         xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)
    return np.array([vA, vB_of(vA)])


def resolvent_contract(count: int = 100, ms=(0.5, 2.0), seed: int = 0, grid: GridSpec | None = None,
                       kernel: KernelSpec | None = None, tol: float = 1e-10) -> CheckReport:
    """Random resolvent problems: residual, max principle, T-contraction; plus two-node oracle cases."""
    rng = np.random.default_rng(seed)
    grid = grid or GridSpec(1, 2.0, 4.0, 7, 7, "dirichlet_zero")
    kernel = kernel or KernelSpec.pure_power(1.0)
    op = assemble(grid, kernel)
    worst_res = worst_max = 0.0
    worst_margin = math.inf
    for i in range(count):
        m = ms[i % len(ms)]
        eps = 10 ** rng.uniform(-2, 1)
        g1 = DiscreteField(grid, rng.normal(size=grid.size) * rng.uniform(0.1, 3))
        g2 = DiscreteField(grid, rng.normal(size=grid.size) * rng.uniform(0.1, 3))
        cr = t_contraction_check(op, g1, g2, m, eps, tol)
        worst_res = max(worst_res, *(r.final_residual_inf for r in cr.reports))
        worst_margin = min(worst_margin, cr.margin)
        v, _ = solve(ResolventProblem(op, g1, m, eps, tol))
        worst_max = max(worst_max, float(np.max(np.abs(signed_power(v.values, 1 / m)))) - float(np.max(np.abs(g1.values))))
    # two-node problems against the bisection oracle
    g2n = GridSpec(1, 1.0, 1.0, 1, 1, "censored").replace(points_per_axis_s=3)
    worst_oracle = 0.0
    cases = [(1.0, 1.0, 2.0, (1.0, 0.0))] + [
        (float(rng.uniform(0.2, 3)), float(10 ** rng.uniform(-1, 1)), float(m), tuple(rng.normal(size=2)))
        for m in ms for _ in range(5)]
    for w, eps, m, g in cases:
        W = np.zeros((3, 3))
        W[0, 2] = W[2, 0] = w
        # middle node isolated with zero data: the 3-node censored lattice hosts the pair (0, 2)
        op2 = NonlocalOperator.from_weights(g2n, W)
        gv = np.array([g[0], 0.0, g[1]])
        v, rep = solve(ResolventProblem(op2, DiscreteField(g2n, gv), m, eps, 1e-13, 400))
        ref = two_node_oracle(w, eps, m, g)
        worst_oracle = max(worst_oracle, float(np.max(np.abs(v.values[[0, 2]] - ref))))
    ok = worst_res <= tol and worst_max <= tol and worst_margin >= -1e-8 and worst_oracle <= 1e-10
    return CheckReport("resolvent", "pass" if ok else "fail",
                       inputs={"count": count, "m": list(ms), "seed": seed},
                       measured={"max_residual": worst_res, "max_principle_excess": worst_max,
                                 "min_contraction_margin": worst_margin, "two_node_max_error": worst_oracle},
                       tolerances={"residual": tol, "max_principle": tol, "margin": -1e-8, "oracle": 1e-10})

