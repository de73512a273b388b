"""Rough jump kernels on H^n.

Every built-in family is radial in the Koranyi distance d = |x^{-1} y|:

    J(x, y) = d^{-(Q+alpha)} * g(d)

with a bounded multiplier ``g`` taking values in [1/Lambda, Lambda]. Radial
kernels are automatically symmetric in (x, y) and satisfy the reflection
symmetry J(x, x.y) = J(x, x.y^{-1}).

Non-radial kernels can be supplied through ``KernelSpec.hook``; they are only
checked against the two-sided power bounds, and ``assemble`` symmetrises them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .hgroup import GroupContext, GroupPoint, kdist_arr, mul_arr

FAMILIES = ("pure_power", "log_rough", "tabulated_radial")


class KernelSingularityError(ValueError):
    """Raised when a kernel is evaluated on the diagonal x = y."""


@dataclass(frozen=True)
class KernelSpec:
    alpha: float
    Lambda: float = 1.0
    family: str = "pure_power"
    amplitude: float = 0.0
    profile: tuple[tuple[float, float], ...] = ()
    # hook(x, y) -> J on arrays of shape (..., 2n+1); replaces the radial family
    hook: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
        if not self.Lambda >= 1:
            raise ValueError(f"Lambda must be >= 1, got {self.Lambda}")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "log_rough" and not 0 <= self.amplitude < 1:
            raise ValueError(f"log_rough amplitude must lie in [0, 1), got {self.amplitude}")
        if self.family == "tabulated_radial":
            prof = tuple((float(d), float(g)) for d, g in self.profile)
            if len(prof) == 0:
                raise ValueError("tabulated_radial needs a non-empty profile")
            dists = np.array([d for d, _ in prof])
            if np.any(np.diff(dists) <= 0):
                raise ValueError("profile distances must be strictly increasing")
            object.__setattr__(self, "profile", prof)

    @classmethod
    def pure_power(cls, alpha: float) -> "KernelSpec":
        return cls(alpha=alpha, Lambda=1.0, family="pure_power")

    @classmethod
    def log_rough(cls, alpha: float, amplitude: float) -> "KernelSpec":
        """d^{-(Q+alpha)} (1 + a sin(log d)); admissible with Lambda = 1/(1-a)."""
        return cls(alpha=alpha, Lambda=1.0 / (1.0 - amplitude), family="log_rough", amplitude=amplitude)

    @classmethod
    def tabulated(cls, alpha: float, Lambda: float, profile) -> "KernelSpec":
        return cls(alpha=alpha, Lambda=Lambda, family="tabulated_radial", profile=tuple(profile))

    @property
    def is_radial(self) -> bool:
        return self.hook is None

    def multiplier(self, d) -> np.ndarray:
        """Radial multiplier g(d); J = d^{-(Q+alpha)} g(d)."""
        d = np.asarray(d, dtype=float)
        if self.family == "pure_power":
            return np.ones_like(d)
        if self.family == "log_rough":
            with np.errstate(divide="ignore"):
                return 1.0 + self.amplitude * np.sin(np.log(d))
        dist, mult = np.array(self.profile).T
        # np.interp extrapolates with the end values
        return np.clip(np.interp(d, dist, mult), 1.0 / self.Lambda, self.Lambda)

    def raw_multiplier(self, d) -> np.ndarray:
        """Tabulated multiplier without the [1/Lambda, Lambda] clip (for validation)."""
        if self.family != "tabulated_radial":
            return self.multiplier(d)
        dist, mult = np.array(self.profile).T
        return np.interp(np.asarray(d, dtype=float), dist, mult)

    def radial(self, d, Q: int) -> np.ndarray:
        d = np.asarray(d, dtype=float)
        return d ** (-(Q + self.alpha)) * self.multiplier(d)


def load_profile_csv(path) -> tuple[tuple[float, float], ...]:
    """Read a two-column (distance, multiplier) CSV; a non-numeric first row is a header."""
    rows = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                d, g = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                if i == 0:
                    continue
                raise ValueError(f"{path}:{i + 1}: expected two numeric columns, got {row}")
            rows.append((d, g))
    if not rows:
        raise ValueError(f"{path}: empty profile")
    if any(b[0] <= a[0] for a, b in zip(rows, rows[1:])):
        raise ValueError(f"{path}: distances must be strictly increasing")
    return tuple(rows)


def kernel_values(spec: KernelSpec, x, y, Q: int) -> np.ndarray:
    """Vectorised J(x, y) for arrays of points (broadcast over leading axes)."""
    if spec.hook is not None:
        return np.asarray(spec.hook(np.asarray(x, float), np.asarray(y, float)), dtype=float)
    return spec.radial(kdist_arr(x, y), Q)


def eval_kernel(spec: KernelSpec, x: GroupPoint, y: GroupPoint) -> float:
    if x.n != y.n:
        raise ValueError(f"dimension mismatch: n={x.n} vs n={y.n}")
    if x == y:
        raise KernelSingularityError("kernel is singular on the diagonal x = y")
    Q = 2 * x.n + 2
    return float(kernel_values(spec, x.as_array(), y.as_array(), Q))


@dataclass
class ValidationReport:
    worst_upper_ratio: float
    worst_lower_ratio: float
    worst_symmetry_residual: float
    worst_pair_residual: float
    sample_count: int
    passed: bool
    messages: list[str] = field(default_factory=list)

    @property
    def worst_bound_ratio(self) -> float:
        return max(self.worst_upper_ratio, self.worst_lower_ratio)


def validate_kernel(spec: KernelSpec, ctx: GroupContext, sample_count: int = 1000, seed: int = 0,
                    scale: float = 4.0, rtol: float = 1e-12) -> ValidationReport:
    """Sample (x, y) pairs and check the two-sided power bounds and both symmetries.

    Failures are recorded in the report, never raised.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    Q = ctx.Q
    x = rng.normal(scale=scale, size=(sample_count, ctx.dim))
    # log-uniform offsets so several decades of distance are probed
    y = rng.normal(size=(sample_count, ctx.dim))
    y *= np.exp(rng.uniform(-4, 4, size=(sample_count, 1)))
    xy = mul_arr(x, y)
    xyinv = mul_arr(x, -y)
    d = kdist_arr(x, xy)

    if spec.hook is None:
        J = d ** (-(Q + spec.alpha)) * spec.raw_multiplier(d)
    else:
        J = kernel_values(spec, x, xy, Q)
    scaled = J * d ** (Q + spec.alpha)
    upper = float(np.max(scaled))
    lower = float(np.max(1.0 / scaled))

    if spec.hook is None:
        # radial: d(x, x.y) = |y| exactly; evaluating at the offset avoids the
        # rounding of x.y when |x| >> |y|
        zero = np.zeros_like(y)
        Jdirect = kernel_values(spec, zero, y, Q)
        Jrefl = kernel_values(spec, zero, -y, Q)
    else:
        Jrefl = kernel_values(spec, x, xyinv, Q)
        Jdirect = kernel_values(spec, x, xy, Q)
    sym = float(np.max(np.abs(Jdirect - Jrefl) / Jdirect))
    Jxy = kernel_values(spec, x, xy, Q)
    pair = float(np.max(np.abs(Jxy - kernel_values(spec, xy, x, Q)) / Jxy))

    messages = []
    tol = spec.Lambda * (1 + rtol)
    if upper > tol:
        messages.append(f"upper bound violated: max J d^(Q+alpha) = {upper:.6g} > Lambda = {spec.Lambda}")
    if lower > tol:
        messages.append(f"lower bound violated: max 1/(J d^(Q+alpha)) = {lower:.6g} > Lambda = {spec.Lambda}")
    if sym > rtol:
        messages.append(f"reflection symmetry residual {sym:.3g}")
    if pair > rtol:
        # only a warning: assembly symmetrises the weights
        messages.append(f"pair symmetry residual {pair:.3g} (weights will be symmetrised)")
    passed = upper <= tol and lower <= tol and sym <= rtol
    return ValidationReport(upper, lower, sym, pair, sample_count, passed, messages)
