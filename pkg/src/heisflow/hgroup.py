"""Heisenberg group primitives in (xi, eta, s) coordinates.

Points of H^n are stored either as :class:`GroupPoint` values or, for the
vectorised helpers (``*_arr``), as arrays whose last axis has length 2n+1
ordered ``(xi_1..xi_n, eta_1..eta_n, s)``.

The group law is

    (xi, eta, s) . (xi', eta', s') = (xi+xi', eta+eta', s+s' + 2<eta,xi'> - 2<xi,eta'>)

and the Koranyi quasi-norm is ``(|z|^4 + s^2)^(1/4)`` with ``|z|^2 = |xi|^2 + |eta|^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate


@dataclass(frozen=True)
class GroupPoint:
    xi: tuple[float, ...]
    eta: tuple[float, ...]
    s: float

    def __post_init__(self):
        xi = tuple(float(v) for v in np.atleast_1d(self.xi))
        eta = tuple(float(v) for v in np.atleast_1d(self.eta))
        if len(xi) != len(eta) or len(xi) == 0:
            raise ValueError(f"xi and eta must have the same positive length, got {len(xi)} and {len(eta)}")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "s", float(self.s))

    @property
    def n(self) -> int:
        return len(self.xi)

    def as_array(self) -> np.ndarray:
        return np.array(self.xi + self.eta + (self.s,))

    @classmethod
    def from_array(cls, arr) -> "GroupPoint":
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != 1 or arr.size % 2 != 1:
            raise ValueError(f"expected a flat array of odd length 2n+1, got shape {arr.shape}")
        n = arr.size // 2
        return cls(tuple(arr[:n]), tuple(arr[n:2 * n]), arr[-1])

    @classmethod
    def neutral(cls, n: int) -> "GroupPoint":
        return cls((0.0,) * n, (0.0,) * n, 0.0)


@dataclass(frozen=True)
class GroupContext:
    """Dimension data for H^n: index n, homogeneous degree Q and annulus constant C0."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")

    @property
    def Q(self) -> int:
        return 2 * self.n + 2

    @property
    def dim(self) -> int:
        return 2 * self.n + 1

    @property
    def C0(self) -> float:
        return annulus_constant(self.n)


def _check_same_n(a: GroupPoint, b: GroupPoint):
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: n={a.n} vs n={b.n}")


def mul(a: GroupPoint, b: GroupPoint) -> GroupPoint:
    _check_same_n(a, b)
    return GroupPoint.from_array(mul_arr(a.as_array(), b.as_array()))


def inv(a: GroupPoint) -> GroupPoint:
    return GroupPoint.from_array(-a.as_array())


def dilate(lam: float, a: GroupPoint) -> GroupPoint:
    return GroupPoint.from_array(dilate_arr(lam, a.as_array()))


def knorm(a: GroupPoint) -> float:
    return float(knorm_arr(a.as_array()))


def kdist(a: GroupPoint, b: GroupPoint) -> float:
    _check_same_n(a, b)
    return float(kdist_arr(a.as_array(), b.as_array()))


# -- vectorised versions -----------------------------------------------------

def _split(x: np.ndarray):
    n = (x.shape[-1] - 1) // 2
    return x[..., :n], x[..., n:2 * n], x[..., -1]


def mul_arr(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1] or a.shape[-1] % 2 != 1:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    xa, ea, sa = _split(a)
    xb, eb, sb = _split(b)
    s = sa + sb + 2.0 * (np.sum(ea * xb, axis=-1) - np.sum(xa * eb, axis=-1))
    return np.concatenate([xa + xb, ea + eb, s[..., None]], axis=-1)


def dilate_arr(lam, a) -> np.ndarray:
    if not lam > 0:
        raise ValueError(f"dilation factor must be positive, got {lam}")
    a = np.array(a, dtype=float)
    a[..., :-1] *= lam
    a[..., -1] *= lam * lam
    return a


def knorm_arr(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    z2 = np.sum(a[..., :-1] ** 2, axis=-1)
    return np.sqrt(np.sqrt(z2 * z2 + a[..., -1] ** 2))


def kdist_arr(a, b) -> np.ndarray:
    """Koranyi distance |a^{-1} b|, broadcasting over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    xa, ea, sa = _split(a)
    xb, eb, sb = _split(b)
    dz2 = np.sum((xb - xa) ** 2, axis=-1) + np.sum((eb - ea) ** 2, axis=-1)
    ds = sb - sa - 2.0 * (np.sum(ea * xb, axis=-1) - np.sum(xa * eb, axis=-1))
    return np.sqrt(np.sqrt(dz2 * dz2 + ds * ds))


def sphere_area(dim: int) -> float:
    """Surface area of the unit sphere S^{dim-1} in R^dim."""
    return 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)


def annulus_integral(n: int, exponent: float, a: float, b: float, rel_tol: float = 1e-10) -> float:
    """Integral of |x|^(exponent - Q) over the Koranyi annulus a <= |x| <= b in H^n.

    Uses the rotational symmetry in z to reduce to the (rho, s) half plane with
    weight |S^{2n-1}| rho^{2n-1}, then nested adaptive quadrature. The inner
    s-integral is taken in the angle theta = arctan(s / rho^2), which keeps the
    integrand smooth over several decades of b.
    """
    if not 0 < a < b:
        raise ValueError(f"need 0 < a < b, got a={a}, b={b}")
    Q = 2 * n + 2
    p = (exponent - Q) / 4.0

    def inner(rho):
        r4 = rho ** 4
        lo = math.sqrt(max(a ** 4 - r4, 0.0))
        hi_sq = b ** 4 - r4
        if hi_sq <= lo * lo:
            return 0.0
        hi = math.sqrt(hi_sq)
        rho2 = rho * rho
        th_lo = math.atan2(lo, rho2)
        th_hi = math.atan2(hi, rho2)
        # s = rho^2 tan(th): (rho^4 + s^2)^p ds = rho^(4p+2) sec(th)^(2p+2) dth
        val, _ = integrate.quad(lambda th: math.cos(th) ** (-2 * p - 2), th_lo, th_hi,
                                epsabs=0.0, epsrel=rel_tol, limit=200)
        return 2.0 * rho2 ** (2 * p + 1) * val * rho ** (2 * n - 1)

    # geometric breakpoints for the outer integral
    edges = [0.0, a]
    r = a
    while r * 2 < b:
        r *= 2
        edges.append(r)
    edges.append(b)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(inner, lo, hi, epsabs=0.0, epsrel=rel_tol, limit=200)
        total += val
    return sphere_area(2 * n) * total


@lru_cache(maxsize=None)
def annulus_constant(n: int) -> float:
    """C0 such that the integral of |x|^-Q over 1 <= |x| <= b equals C0 log b."""
    return annulus_integral(n, 0.0, 1.0, 2.0) / math.log(2.0)
