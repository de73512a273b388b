"""Resolvent problem  v^{1/m} + eps L v = g  by convex minimisation.

The solution minimises

    F(v) = eps/2 E(v, v) + sum_i m/(m+1) |v_i|^{1/m+1} vol - sum_i v_i g_i vol

whose gradient (in the Haar metric) is the strong residual
r = |v|^{1/m-1} v + eps L v - g. Minimisation uses damped Newton steps with an
Armijo backtracking line search on F:

* m <= 1: Newton in v; the Hessian diag(|v|^{1/m-1}/m) + eps L is bounded.
* m > 1: Newton in u = v^{1/m}; the u-Jacobian I + eps L diag(m|u|^{m-1}) stays
  regular where u = 0 (in v the Hessian blows up there). The linear system is
  solved in the symmetric form (I + eps D^{1/2} L D^{1/2}) y = -D^{1/2} r.

If the Newton direction fails to decrease F, a diagonally preconditioned
gradient step is taken instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, cg

from .discrete import DiscreteField, NonlocalOperator, signed_power

DIRECT_SOLVE_MAX = 800


class NumericalFailure(RuntimeError):
    """NaN or inf appeared in a resolvent iterate."""


@dataclass
class ResolventProblem:
    op: NonlocalOperator
    g: DiscreteField
    m: float
    epsilon: float
    tol: float = 1e-10
    max_iters: int = 200

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"m must be positive, got {self.m}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.g.grid != self.op.grid:
            raise ValueError("data and operator live on different grids")


@dataclass
class SolverReport:
    iterations: int
    final_residual_inf: float
    functional_value: float
    converged: bool
    history: list[float] = field(default_factory=list, repr=False)


def _potential(v, m):
    return m / (m + 1.0) * np.abs(v) ** (1.0 / m + 1.0)


def _functional_values(prob: ResolventProblem, v: np.ndarray, Lv: np.ndarray) -> float:
    vol = prob.op.grid.cellvol
    g = prob.g.values
    # E(v, v) = <L v, v>_mu
    energy = float(np.dot(Lv, v)) * vol
    return 0.5 * prob.epsilon * energy + float(np.sum(_potential(v, prob.m) - v * g)) * vol


def functional(prob: ResolventProblem, v: DiscreteField) -> float:
    if v.grid != prob.op.grid:
        raise ValueError("field and operator live on different grids")
    return _functional_values(prob, v.values, prob.op.matvec(v.values))


def _residual(prob, v, Lv):
    return signed_power(v, 1.0 / prob.m) + prob.epsilon * Lv - prob.g.values


def gradient(prob: ResolventProblem, v: DiscreteField) -> DiscreteField:
    """Strong-form residual |v|^{1/m-1} v + eps L v - g."""
    if v.grid != prob.op.grid:
        raise ValueError("field and operator live on different grids")
    return v.like(_residual(prob, v.values, prob.op.matvec(v.values)))


def _spd_solve(op: NonlocalOperator, diag_shift, scale, eps, rhs, rtol, Lmat=None):
    """Solve (diag(diag_shift) + eps S L S) y = rhs with S = diag(scale)."""
    N = rhs.size
    if N <= DIRECT_SOLVE_MAX:
        A = eps * (scale[:, None] * Lmat * scale[None, :])
        A[np.diag_indices(N)] += diag_shift
        try:
            c = linalg.cho_factor(A, check_finite=False)
            return linalg.cho_solve(c, rhs, check_finite=False)
        except linalg.LinAlgError:
            return linalg.lstsq(A, rhs, check_finite=False)[0]
    dg = diag_shift + eps * scale ** 2 * op.diagonal
    dg = np.where(dg > 0, dg, 1.0)

    def mv(y):
        return diag_shift * y + eps * scale * op.matvec(scale * y)

    A = LinearOperator((N, N), matvec=mv, dtype=float)
    M = LinearOperator((N, N), matvec=lambda y: y / dg, dtype=float)
    y, _ = cg(A, rhs, rtol=rtol, atol=0.0, maxiter=10 * N, M=M)
    return y


def solve(prob: ResolventProblem, v0: np.ndarray | DiscreteField | None = None):
    """Minimise the resolvent functional; returns (v, SolverReport)."""
    op, m, eps = prob.op, prob.m, prob.epsilon
    g = prob.g.values
    N = g.size
    if not np.all(np.isfinite(g)):
        raise NumericalFailure("data contains non-finite values")
    if not np.any(g):
        return prob.g.like(np.zeros(N)), SolverReport(0, 0.0, 0.0, True)
    Lmat = op.to_matrix() if N <= DIRECT_SOLVE_MAX else None

    if v0 is None:
        v = signed_power(g, m)
    else:
        v = np.array(v0.values if isinstance(v0, DiscreteField) else v0, dtype=float)
    Lv = op.matvec(v)
    r = _residual(prob, v, Lv)
    F = _functional_values(prob, v, Lv)
    vol = op.grid.cellvol
    history = [float(np.max(np.abs(r)))]
    it = 0
    while history[-1] > prob.tol and it < prob.max_iters:
        it += 1
        rnorm = history[-1]
        cg_tol = max(1e-14, min(1e-2, rnorm))
        if m > 1:
            u = signed_power(v, 1.0 / m)
            D = m * np.abs(u) ** (m - 1.0)
            sD = np.sqrt(D)
            y = _spd_solve(op, np.ones(N), sD, eps, -sD * r, cg_tol, Lmat)
            dv_lin = sD * y
            du = -r - eps * op.matvec(dv_lin)

            def trial(t):
                return signed_power(u + t * du, m)
            slope = float(np.dot(r, dv_lin)) * vol
        else:
            c = np.abs(v) ** (1.0 / m - 1.0) / m if m < 1 else np.ones(N)
            dv = _spd_solve(op, c, np.ones(N), eps, -r, cg_tol, Lmat)

            def trial(t):
                return v + t * dv
            slope = float(np.dot(r, dv)) * vol

        if not slope < 0:
            # fall back to a preconditioned gradient step
            pre = 1.0 / (np.abs(v) ** (1.0 / m - 1.0) / m + eps * op.diagonal + 1e-300)
            pre = np.where(np.isfinite(pre), pre, 0.0)
            dv = -pre * r
            slope = float(np.dot(r, dv)) * vol

            def trial(t):
                return v + t * dv

        t = 1.0
        accepted = False
        for _ in range(60):
            v_new = trial(t)
            Lv_new = op.matvec(v_new)
            F_new = _functional_values(prob, v_new, Lv_new)
            if F_new <= F + 1e-4 * t * slope:
                accepted = True
                break
            # near the minimiser F is flat to round-off; accept residual decrease
            r_try = _residual(prob, v_new, Lv_new)
            if abs(F_new - F) <= 1e-13 * max(1.0, abs(F)) and np.max(np.abs(r_try)) < rnorm:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        v, Lv, F = v_new, Lv_new, F_new
        if not np.all(np.isfinite(v)):
            raise NumericalFailure(f"non-finite iterate at iteration {it}")
        r = _residual(prob, v, Lv)
        history.append(float(np.max(np.abs(r))))
    res = history[-1]
    if not math.isfinite(res):
        raise NumericalFailure("non-finite residual")
    report = SolverReport(it, res, F, res <= prob.tol, history)
    return prob.g.like(v), report


@dataclass
class ContractionReport:
    lhs: float
    rhs: float
    margin: float
    holds: bool
    reports: tuple[SolverReport, SolverReport]


def t_contraction_check(op: NonlocalOperator, g1: DiscreteField, g2: DiscreteField, m: float,
                        epsilon: float, tol: float = 1e-10) -> ContractionReport:
    """Solve both problems and compare sum (v1^{1/m} - v2^{1/m})_+ with sum (g1 - g2)_+."""
    v1, rep1 = solve(ResolventProblem(op, g1, m, epsilon, tol))
    v2, rep2 = solve(ResolventProblem(op, g2, m, epsilon, tol))
    vol = op.grid.cellvol
    u1 = signed_power(v1.values, 1.0 / m)
    u2 = signed_power(v2.values, 1.0 / m)
    lhs = float(np.sum(np.maximum(u1 - u2, 0.0))) * vol
    rhs = float(np.sum(np.maximum(g1.values - g2.values, 0.0))) * vol
    margin = rhs - lhs
    return ContractionReport(lhs, rhs, margin, margin >= -tol, (rep1, rep2))
