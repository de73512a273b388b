"""Implicit time stepping  (u_k - u_{k-1}) / dt + L(u_k^m) = 0.

Each step solves the resolvent problem w^{1/m} + dt L w = u_{k-1} for
w = u_k^m and recovers u_k = |w|^{1/m-1} w.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .discrete import (DiscreteField, GridSpec, NonlocalOperator, QuadratureConfig, assemble,
                       lp_norm, mass, signed_power)
from .hgroup import knorm_arr, mul_arr
from .kernels import KernelSpec
from .resolvent import ResolventProblem, SolverReport, solve


class StepFailure(RuntimeError):
    def __init__(self, message, report: SolverReport | None = None):
        super().__init__(message)
        self.report = report


def critical_exponent(Q: int, alpha: float) -> float:
    """m* = (Q - alpha) / Q."""
    return (Q - alpha) / Q


def critical_integrability(m: float, Q: int, alpha: float) -> float:
    """p*(m) = (1 - m) Q / alpha."""
    return (1.0 - m) * Q / alpha


def uniform_schedule(dt: float, horizon: float) -> list[float]:
    if not dt > 0 or not horizon > 0:
        raise ValueError("dt and horizon must be positive")
    steps = max(1, int(round(horizon / dt)))
    return [horizon / steps] * steps


def geometric_schedule(dt0: float, ratio: float, steps: int) -> list[float]:
    if not dt0 > 0 or not ratio > 0 or steps < 1:
        raise ValueError("need dt0 > 0, ratio > 0 and steps >= 1")
    return [dt0 * ratio ** j for j in range(steps)]


@dataclass
class EvolutionConfig:
    m: float
    kernel: KernelSpec
    grid: GridSpec
    dt_schedule: list[float]
    resolvent_tol: float = 1e-10
    diagnostics_p_list: tuple[float, ...] = (1.0, 2.0, math.inf)
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)
    store: str = "full"  # or "diagnostics"
    checkpoints: tuple[float, ...] = ()
    max_iters: int = 200

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"m must be positive, got {self.m}")
        self.dt_schedule = [float(d) for d in self.dt_schedule]
        if not self.dt_schedule or any(not d > 0 for d in self.dt_schedule):
            raise ValueError("dt_schedule must be a non-empty list of positive steps")
        if self.store not in ("full", "diagnostics"):
            raise ValueError(f"store must be 'full' or 'diagnostics', got {self.store!r}")
        if any(p < 1 for p in self.diagnostics_p_list):
            raise ValueError("diagnostic norms need p >= 1")

    @property
    def alpha(self) -> float:
        return self.kernel.alpha

    @property
    def horizon(self) -> float:
        return float(sum(self.dt_schedule))


@dataclass
class StepDiagnostics:
    step: int
    t: float
    dt: float
    mass: float
    norms: dict
    energy_mm: float
    report: SolverReport | None

    @property
    def linf(self) -> float:
        return self.norms[math.inf]


@dataclass
class Trajectory:
    config: EvolutionConfig
    times: list[float] = field(default_factory=list)
    fields: list[DiscreteField | None] = field(default_factory=list)
    diagnostics: list[StepDiagnostics] = field(default_factory=list)
    status: str = "ok"
    error: str | None = None

    @property
    def m(self) -> float:
        return self.config.m

    @property
    def grid(self) -> GridSpec:
        return self.config.grid

    def series(self, name: str, p: float | None = None) -> np.ndarray:
        if name == "norm":
            return np.array([d.norms[p] for d in self.diagnostics])
        return np.array([getattr(d, name) for d in self.diagnostics])

    def stored(self):
        """(time, field) pairs for which the field was kept."""
        return [(t, f) for t, f in zip(self.times, self.fields) if f is not None]

    def write_csv(self, path):
        ps = [p for p in self.config.diagnostics_p_list if p not in (1.0, 2.0, math.inf)]
        header = ["step", "t", "dt", "mass", "l1", "l2", "linf"]
        header += [f"lp_{_pname(p)}" for p in ps] + ["energy_mm", "resolvent_iters", "residual"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for d in self.diagnostics:
                norms = d.norms
                row = [d.step, repr(d.t), repr(d.dt), repr(d.mass), repr(norms[1.0]), repr(norms[2.0]),
                       repr(norms[math.inf])]
                row += [repr(norms[p]) for p in ps]
                row += [repr(d.energy_mm), d.report.iterations if d.report else 0,
                        repr(d.report.final_residual_inf if d.report else 0.0)]
                w.writerow(row)


def _pname(p: float) -> str:
    return "inf" if math.isinf(p) else (str(int(p)) if float(p).is_integer() else str(p))


def step(op: NonlocalOperator, u_prev: DiscreteField, m: float, dt: float, tol: float = 1e-10,
         max_iters: int = 200, return_report: bool = False):
    """One implicit step; returns u_k (and the SolverReport when requested)."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    prob = ResolventProblem(op, u_prev, m, dt, tol, max_iters)
    w, report = solve(prob)
    if not report.converged:
        raise StepFailure(f"resolvent did not converge: residual {report.final_residual_inf:.3g} "
                          f"after {report.iterations} iterations", report)
    u = u_prev.like(signed_power(w.values, 1.0 / m))
    if return_report:
        return u, report, w
    return u


def _diagnostics(k, t, dt, u: DiscreteField, w: np.ndarray, op, ps, report):
    norms = {p: lp_norm(u, p) for p in set(ps) | {1.0, 2.0, math.inf}}
    energy = float(np.dot(op.matvec(w), w)) * u.grid.cellvol
    return StepDiagnostics(k, t, dt, mass(u), norms, energy, report)


def run(cfg: EvolutionConfig, u0: DiscreteField, op: NonlocalOperator | None = None) -> Trajectory:
    if u0.grid != cfg.grid:
        raise ValueError("initial data must live on the configured grid")
    Q = cfg.grid.Q
    mstar = critical_exponent(Q, cfg.alpha)
    if cfg.m <= mstar:
        pstar = critical_integrability(cfg.m, Q, cfg.alpha)
        warnings.warn(f"m = {cfg.m} <= m* = {mstar:.4g}: theory needs u0 in L^p with p > p* = {pstar:.4g}",
                      stacklevel=2)
    if op is None:
        op = assemble(cfg.grid, cfg.kernel, cfg.quad)
    ps = tuple(cfg.diagnostics_p_list)
    traj = Trajectory(cfg)
    keep_all = cfg.store == "full"
    checkpoints = sorted(cfg.checkpoints)

    def want(t, k, last):
        if keep_all or k == 0 or last:
            return True
        return any(abs(t - c) <= 1e-12 * max(1.0, c) for c in checkpoints)

    u = u0
    t = 0.0
    w0 = signed_power(u.values, cfg.m)
    traj.times.append(t)
    traj.fields.append(u if want(t, 0, False) else None)
    traj.diagnostics.append(_diagnostics(0, t, 0.0, u, w0, op, ps, None))
    n_steps = len(cfg.dt_schedule)
    for k, dt in enumerate(cfg.dt_schedule, start=1):
        try:
            u, report, w = step(op, u, cfg.m, dt, cfg.resolvent_tol, cfg.max_iters, return_report=True)
        except StepFailure as exc:
            traj.status = "failed"
            traj.error = f"step {k}: {exc}"
            break
        t += dt
        traj.times.append(t)
        traj.fields.append(u if want(t, k, k == n_steps) else None)
        traj.diagnostics.append(_diagnostics(k, t, dt, u, w.values, op, ps, report))
    return traj


# -- initial data -----------------------------------------------------------------

def _shifted_norm(nodes, center):
    center = np.asarray(center, dtype=float)
    return knorm_arr(mul_arr(-center, nodes))


def koranyi_bump(grid: GridSpec, r0: float = 1.0, amplitude: float = 1.0, center=None) -> DiscreteField:
    """amplitude * (1 - (|c^{-1} x| / r0)^4)_+^3, a C^2 bump of Koranyi radius r0."""
    center = np.zeros(2 * grid.n + 1) if center is None else center
    rho = _shifted_norm(grid.nodes(), center) / r0
    return DiscreteField(grid, amplitude * np.clip(1.0 - rho ** 4, 0.0, None) ** 3)


def koranyi_indicator(grid: GridSpec, r0: float = 1.0, amplitude: float = 1.0, center=None) -> DiscreteField:
    center = np.zeros(2 * grid.n + 1) if center is None else center
    rho = _shifted_norm(grid.nodes(), center)
    return DiscreteField(grid, amplitude * (rho <= r0).astype(float))


def _offset(grid: GridSpec, d: float) -> np.ndarray:
    c = np.zeros(2 * grid.n + 1)
    c[0] = d
    return c


def two_bump(grid: GridSpec, r0: float = 1.0, amplitude: float = 1.0, separation: float = 2.0) -> DiscreteField:
    a = koranyi_bump(grid, r0, amplitude, _offset(grid, separation / 2)).values
    b = koranyi_bump(grid, r0, amplitude, _offset(grid, -separation / 2)).values
    return DiscreteField(grid, a + b)


def signed_two_bump(grid: GridSpec, r0: float = 1.0, amplitude: float = 1.0,
                    separation: float = 2.0) -> DiscreteField:
    """+bump at xi_1 = +d/2, -bump at xi_1 = -d/2; odd under (xi, eta, s) -> (-xi, eta, -s),
    an automorphism of the group, so the solution vanishes at the origin for all t."""
    a = koranyi_bump(grid, r0, amplitude, _offset(grid, separation / 2)).values
    b = koranyi_bump(grid, r0, amplitude, _offset(grid, -separation / 2)).values
    return DiscreteField(grid, a - b)


PRESETS = {
    "koranyi_bump": koranyi_bump,
    "koranyi_indicator": koranyi_indicator,
    "two_bump": two_bump,
    "signed_two_bump": signed_two_bump,
}


# -- dilation renormalisation --------------------------------------------------------

def _restriction_1d(points: int, factor: int) -> np.ndarray:
    """Mass-conserving full-weighting map from a centred lattice onto the lattice
    with ``factor`` times the spacing and the same number of points."""
    half = points // 2
    R = np.zeros((points, points))
    for i in range(-half, half + 1):
        q, rem = divmod(i, factor)
        if rem == 0:
            targets = [(q, 1.0)]
        elif factor % 2 == 0 and rem == factor // 2:
            targets = [(q, 0.5), (q + 1, 0.5)]
        else:
            targets = [(q if rem < factor / 2 else q + 1, 1.0)]
        for I, w in targets:
            R[I + half, i + half] += w
    return R


def dilate_grid(grid: GridSpec, factor: float = 2.0) -> GridSpec:
    """Image of the lattice under delta_factor: z spacing x factor, s spacing x factor^2."""
    return grid.replace(half_extent_z=grid.half_extent_z * factor,
                        half_extent_s=grid.half_extent_s * factor ** 2)


def restrict_to_dilated(u: DiscreteField) -> DiscreteField:
    """Transfer u onto ``dilate_grid(u.grid, 2)`` conserving mass (fine cells are
    distributed onto the coarse cells that contain them)."""
    g = u.grid
    arr = u.as_grid_array()
    Rz = _restriction_1d(g.points_per_axis_z, 2)
    Rs = _restriction_1d(g.points_per_axis_s, 4)
    for axis in range(arr.ndim):
        R = Rs if axis == arr.ndim - 1 else Rz
        arr = np.moveaxis(np.tensordot(R, arr, axes=([1], [axis])), 0, axis)
    coarse = dilate_grid(g, 2.0)
    return DiscreteField(coarse, arr.ravel() * g.cellvol / coarse.cellvol)


def core_extent(u: DiscreteField, level: float = 0.5) -> float:
    """Largest box-shell factor reached by the superlevel set {|u| >= level * max|u|}.

    The shell factor of a node is max(|z_k| / half_extent_z, sqrt(|s| / half_extent_s)),
    the gauge of the box under the group dilations.
    """
    g = u.grid
    a = np.abs(u.values)
    top = a.max()
    if top == 0:
        return 0.0
    x = g.nodes()[a >= level * top]
    gz = np.max(np.abs(x[:, :-1]), axis=1) / g.half_extent_z
    gs = np.sqrt(np.abs(x[:, -1]) / g.half_extent_s)
    return float(np.max(np.maximum(gz, gs)))


def run_renormalized(cfg: EvolutionConfig, u0: DiscreteField, op: NonlocalOperator | None = None,
                     shell: float = 0.5, core_level: float = 0.5, max_levels: int = 40) -> Trajectory:
    """Evolve on a lattice that is dilated by delta_2 whenever the core
    {|u| >= core_level * max|u|} reaches the central ``shell`` of the box.

    For the pure power kernel the assembled operator on the dilated lattice is exactly
    2^{-alpha} times the original one (same node order), so no reassembly is needed and
    the scheme follows the solution on ever larger regions of the group. Each step is
    solved for data normalised to unit maximum, using the exact amplitude scaling
    u -> lam u, dt -> dt lam^{1-m} of the implicit step. Fields in the trajectory carry
    their own (dilated) grids; diagnostics are in physical units.
    """
    if cfg.kernel.family != "pure_power" or not cfg.kernel.is_radial:
        raise ValueError("dilation renormalisation needs the homogeneous pure_power kernel")
    if u0.grid != cfg.grid:
        raise ValueError("initial data must live on the configured grid")
    if op is None:
        op = assemble(cfg.grid, cfg.kernel, cfg.quad)
    ps = tuple(cfg.diagnostics_p_list)
    traj = Trajectory(cfg)
    traj.levels = []
    u = u0
    t = 0.0
    level = 0
    scale = 1.0  # operator multiplier 2^{-alpha level}
    m = cfg.m

    def record(k, t, dt, u, w_unit, lam, report):
        traj.times.append(t)
        traj.fields.append(u if cfg.store == "full" or k == 0 else None)
        d = _diagnostics(k, t, dt, u, w_unit, op, ps, report)
        # energy of w = lam^m w_unit on the current lattice
        d.energy_mm *= scale * lam ** (2 * m) * (u.grid.cellvol / op.grid.cellvol)
        traj.diagnostics.append(d)
        traj.levels.append(level)

    lam0 = float(np.max(np.abs(u.values))) or 1.0
    record(0, t, 0.0, u, signed_power(u.values / lam0, m), lam0, None)
    for k, dt in enumerate(cfg.dt_schedule, start=1):
        while level < max_levels and core_extent(u, core_level) > shell:
            u = restrict_to_dilated(u)
            level += 1
            scale *= 2.0 ** (-cfg.alpha)
        lam = float(np.max(np.abs(u.values)))
        if lam == 0:
            t += dt
            record(k, t, dt, u, np.zeros_like(u.values), 1.0, None)
            continue
        base = DiscreteField(op.grid, u.values / lam)
        try:
            nxt, report, w = step(op, base, m, dt * scale * lam ** (m - 1), cfg.resolvent_tol,
                                  cfg.max_iters, return_report=True)
        except StepFailure as exc:
            traj.status = "failed"
            traj.error = f"step {k}: {exc}"
            break
        u = DiscreteField(u.grid, lam * nxt.values)
        t += dt
        record(k, t, dt, u, w.values, lam, report)
    return traj
