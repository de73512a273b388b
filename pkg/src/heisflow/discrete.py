"""Truncated-grid discretisation of the nonlocal operator on H^n.

Nodes form a uniform Cartesian lattice in (xi, eta, s). Haar measure is
Lebesgue measure, so every node carries the same cell volume. The operator

    (L f)_i = sum_j W_ij (f_i - f_j) + tail_i f_i

uses symmetric weights W_ij = (J(x_i, x_j) + J(x_j, x_i)) / 2 * cellvol for all
pairs at Koranyi distance >= rho0 (the principal value is realised by cutting
out the inner ball). Under the ``dirichlet_zero`` closure the field is zero
outside the padded box and ``tail_i`` is the kernel mass of the exterior; under
``censored`` closure there is no exterior.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .hgroup import GroupContext, annulus_constant, kdist_arr, sphere_area
from .hgroup import annulus_integral as _annulus_integral
from .kernels import KernelSpec, kernel_values

CLOSURES = ("censored", "dirichlet_zero")

_CHUNK_PAIRS = 2_000_000


@dataclass(frozen=True)
class GridSpec:
    n: int = 1
    half_extent_z: float = 2.0
    half_extent_s: float = 4.0
    points_per_axis_z: int = 9
    points_per_axis_s: int = 9
    closure: str = "censored"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        for name in ("half_extent_z", "half_extent_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("points_per_axis_z", "points_per_axis_s"):
            k = getattr(self, name)
            if int(k) != k or k < 1 or k % 2 == 0:
                raise ValueError(f"{name} must be an odd positive integer, got {k}")
        if self.closure not in CLOSURES:
            raise ValueError(f"closure must be one of {CLOSURES}, got {self.closure!r}")

    @property
    def Q(self) -> int:
        return 2 * self.n + 2

    @property
    def h_z(self) -> float:
        if self.points_per_axis_z == 1:
            return 2.0 * self.half_extent_z
        return 2.0 * self.half_extent_z / (self.points_per_axis_z - 1)

    @property
    def h_s(self) -> float:
        if self.points_per_axis_s == 1:
            return 2.0 * self.half_extent_s
        return 2.0 * self.half_extent_s / (self.points_per_axis_s - 1)

    @property
    def cellvol(self) -> float:
        return self.h_z ** (2 * self.n) * self.h_s

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis_z,) * (2 * self.n) + (self.points_per_axis_s,)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def box(self) -> tuple[float, float]:
        """Half widths of the padded box covered by the cells (z, s)."""
        return self.half_extent_z + self.h_z / 2, self.half_extent_s + self.h_s / 2

    def axes(self) -> list[np.ndarray]:
        z = np.linspace(-self.half_extent_z, self.half_extent_z, self.points_per_axis_z)
        s = np.linspace(-self.half_extent_s, self.half_extent_s, self.points_per_axis_s)
        return [z] * (2 * self.n) + [s]

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape (size, 2n+1), C order over ``shape``."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def center_index(self) -> int:
        return int(np.ravel_multi_index(tuple(k // 2 for k in self.shape), self.shape))

    def replace(self, **kw) -> "GridSpec":
        from dataclasses import replace
        return replace(self, **kw)


@dataclass
class DiscreteField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.size != self.grid.size:
            raise ValueError(f"field has {self.values.size} values, grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @classmethod
    def from_function(cls, grid: GridSpec, f) -> "DiscreteField":
        return cls(grid, f(grid.nodes()))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "DiscreteField":
        return cls(grid, np.zeros(grid.size))

    def like(self, values) -> "DiscreteField":
        return DiscreteField(self.grid, values)

    def as_grid_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


@dataclass(frozen=True)
class QuadratureConfig:
    inner_cutoff_factor: float = 2.0
    tail_radius: float | str = "auto"
    subcell_refinement: int = 0
    dense_threshold: int = 20_000
    # direction quadrature for exterior tails: Gauss-Legendre nodes in the
    # polar angle and equispaced nodes on the z-sphere
    tail_phi_points: int = 48
    tail_theta_points: int = 64
    seed: int = 0

    def __post_init__(self):
        if not self.inner_cutoff_factor >= 1:
            raise ValueError(f"inner_cutoff_factor must be >= 1, got {self.inner_cutoff_factor}")
        if self.tail_radius != "auto" and not float(self.tail_radius) > 0:
            raise ValueError(f"tail_radius must be positive or 'auto', got {self.tail_radius}")
        if int(self.subcell_refinement) != self.subcell_refinement or self.subcell_refinement < 0:
            raise ValueError("subcell_refinement must be a non-negative integer")


@dataclass
class NonlocalOperator:
    grid: GridSpec
    kernel: KernelSpec
    rho0: float
    tail: np.ndarray
    weights: np.ndarray | None = None
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)
    _nodes: np.ndarray | None = field(default=None, repr=False)
    _rowsum: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_weights(cls, grid: GridSpec, weights, tail=None, kernel: KernelSpec | None = None,
                     rho0: float = 0.0) -> "NonlocalOperator":
        """Operator with explicitly given weights (symmetrised, diagonal dropped)."""
        W = np.array(weights, dtype=float)
        if W.shape != (grid.size, grid.size):
            raise ValueError(f"weights must be {grid.size}x{grid.size}, got {W.shape}")
        W = 0.5 * (W + W.T)
        np.fill_diagonal(W, 0.0)
        tail = np.zeros(grid.size) if tail is None else np.asarray(tail, dtype=float)
        return cls(grid, kernel or KernelSpec.pure_power(1.0), rho0, tail, W)

    @property
    def dense(self) -> bool:
        return self.weights is not None

    @property
    def nodes(self) -> np.ndarray:
        if self._nodes is None:
            self._nodes = self.grid.nodes()
        return self._nodes

    @property
    def rowsum(self) -> np.ndarray:
        if self._rowsum is None:
            if self.dense:
                self._rowsum = self.weights.sum(axis=1)
            else:
                self._rowsum = np.concatenate([w.sum(axis=1) for _, w in self._weight_blocks()])
        return self._rowsum

    @property
    def diagonal(self) -> np.ndarray:
        return self.rowsum + self.tail

    def _weight_blocks(self):
        N = self.grid.size
        step = max(1, _CHUNK_PAIRS // N)
        for start in range(0, N, step):
            rows = slice(start, min(N, start + step))
            yield rows, _weight_rows(self.nodes, rows, self.kernel, self.grid, self.rho0, self.quad)

    def _blocks(self):
        if not self.dense:
            yield from self._weight_blocks()
            return
        N = self.grid.size
        step = max(1, _CHUNK_PAIRS // N)
        for a in range(0, N, step):
            rows = slice(a, min(N, a + step))
            yield rows, self.weights[rows]

    def matvec(self, f: np.ndarray) -> np.ndarray:
        """Raw (L f) on value arrays."""
        f = np.asarray(f, dtype=float)
        if self.dense:
            return self.diagonal * f - self.weights @ f
        out = np.empty_like(f)
        for rows, w in self._weight_blocks():
            out[rows] = w.sum(axis=1) * f[rows] - w @ f + self.tail[rows] * f[rows]
        return out

    def pair_form(self, f: np.ndarray, g: np.ndarray) -> float:
        """(1/2) sum_ij W_ij (f_i - f_j)(g_i - g_j) + sum_i tail_i f_i g_i (no cell volume)."""
        f = np.asarray(f, dtype=float)
        g = np.asarray(g, dtype=float)
        total = 0.0
        for rows, w in self._blocks():
            df = f[rows, None] - f[None, :]
            dg = g[rows, None] - g[None, :]
            total += float(np.sum(w * df * dg))
        return 0.5 * total + float(np.sum(self.tail * f * g))

    def to_matrix(self) -> np.ndarray:
        """Dense matrix of L (for small grids and oracles)."""
        W = self.weights if self.dense else np.vstack([w for _, w in self._weight_blocks()])
        return np.diag(self.diagonal) - W


def cutoff_radius(grid: GridSpec, quad: QuadratureConfig) -> float:
    return quad.inner_cutoff_factor * max(grid.h_z, math.sqrt(grid.h_s))


def _weight_rows(nodes, rows, kernel: KernelSpec, grid: GridSpec, rho0: float,
                 quad: QuadratureConfig) -> np.ndarray:
    """Symmetrised weights W[rows, :]."""
    Q = grid.Q
    xr = nodes[rows]
    d = kdist_arr(xr[:, None, :], nodes[None, :, :])
    mask = d >= rho0
    with np.errstate(divide="ignore", invalid="ignore"):
        if kernel.is_radial:
            Jf = np.where(mask, kernel.radial(np.where(mask, d, 1.0), Q), 0.0)
            Jb = Jf
        else:
            Jf = np.where(mask, kernel_values(kernel, xr[:, None, :], nodes[None, :, :], Q), 0.0)
            Jb = np.where(mask, kernel_values(kernel, nodes[None, :, :], xr[:, None, :], Q), 0.0)
    if quad.tail_radius != "auto":
        far = d > float(quad.tail_radius)
        Jf = np.where(far, 0.0, Jf)
        Jb = np.where(far, 0.0, Jb)
    w = 0.5 * (Jf + Jb) * grid.cellvol
    if quad.subcell_refinement > 0:
        w = _refine_near_diagonal(w, xr, nodes, d, kernel, grid, rho0, quad.subcell_refinement)
    return w


def _subcell_offsets(grid: GridSpec, level: int) -> np.ndarray:
    k = 2 ** level
    frac = (np.arange(k) + 0.5) / k - 0.5
    axes = [frac * grid.h_z] * (2 * grid.n) + [frac * grid.h_s]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _refine_near_diagonal(w, xr, nodes, d, kernel, grid, rho0, level):
    """Replace weights of pairs with rho0/2 <= d < 2 rho0 by sub-cell averages.

    The target cell is split into 2^level sub-cells per axis; sub-points inside
    the cut-out ball contribute nothing. The result is symmetrised by averaging
    with the mirrored computation (source cell split instead of target).
    """
    Q = grid.Q
    off = _subcell_offsets(grid, level)
    ii, jj = np.nonzero((d >= 0.5 * rho0) & (d < 2.0 * rho0) & (d > 0))
    if ii.size == 0:
        return w
    w = w.copy()
    x = xr[ii]
    y = nodes[jj]

    def cell_avg(a, b):
        pts = b[:, None, :] + off[None, :, :]
        dd = kdist_arr(a[:, None, :], pts)
        keep = dd >= rho0
        with np.errstate(divide="ignore"):
            if kernel.is_radial:
                J = np.where(keep, kernel.radial(np.where(keep, dd, 1.0), Q), 0.0)
            else:
                J = np.where(keep, kernel_values(kernel, a[:, None, :], pts, Q), 0.0)
        return J.mean(axis=1)

    w[ii, jj] = 0.5 * (cell_avg(x, y) + cell_avg(y, x)) * grid.cellvol
    return w


# -- exterior tail ---------------------------------------------------------------

def sphere_directions(n: int, phi_points: int, theta_points: int, seed: int = 0):
    """Quadrature on the unit Koranyi sphere for the polar decomposition
    d mu = r^{Q-1} dr d sigma. Returns (directions (K, 2n+1), weights (K,));
    weights sum to C0.

    Parametrisation: z = cos(phi)^{1/2} theta, s = sin(phi) with theta on
    S^{2n-1}; then d sigma = cos(phi)^{n-1} d phi d theta.
    """
    t, wt = np.polynomial.legendre.leggauss(phi_points)
    phi = 0.5 * math.pi * t
    wphi = 0.5 * math.pi * wt * np.cos(phi) ** (n - 1)
    if n == 1:
        ang = 2 * math.pi * (np.arange(theta_points) + 0.5) / theta_points
        theta = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    else:
        rng = np.random.default_rng(seed)
        theta = rng.normal(size=(theta_points, 2 * n))
        theta /= np.linalg.norm(theta, axis=1, keepdims=True)
    wtheta = sphere_area(2 * n) / theta_points
    z = np.sqrt(np.cos(phi))[:, None, None] * theta[None, :, :]
    s = np.broadcast_to(np.sin(phi)[:, None, None], (phi_points, theta_points, 1))
    dirs = np.concatenate([z, s], axis=-1).reshape(-1, 2 * n + 1)
    weights = np.repeat(wphi * wtheta, theta_points)
    return dirs, weights


class RadialTail:
    """G(r) = int_r^R t^{-1-alpha} g(t) dt for the kernel multiplier g, R = tail radius."""

    def __init__(self, kernel: KernelSpec, r_max: float | None = None):
        self.kernel = kernel
        self.alpha = kernel.alpha
        self.r_max = r_max
        if kernel.family != "pure_power" and kernel.is_radial:
            # cumulative integral in log r on a fine grid; beyond the table
            # the multiplier is treated as its end value
            self._lr = np.linspace(math.log(1e-8), math.log(1e8), 64001)
            r = np.exp(self._lr)
            f = r ** (-self.alpha) * kernel.multiplier(r)
            seg = 0.5 * (f[1:] + f[:-1]) * np.diff(self._lr)
            g_end = float(kernel.multiplier(np.array([r[-1]]))[0])
            tail_end = g_end * r[-1] ** (-self.alpha) / self.alpha
            self._G = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]]) + tail_end
        elif not kernel.is_radial:
            raise ValueError("exterior tails need a radial kernel; supply tail coefficients explicitly")

    def _G_inf(self, r):
        r = np.asarray(r, dtype=float)
        if self.kernel.family == "pure_power":
            with np.errstate(divide="ignore"):
                return np.where(np.isinf(r), 0.0, r ** (-self.alpha) / self.alpha)
        lr = np.log(np.clip(r, 1e-300, None))
        out = np.interp(lr, self._lr, self._G)
        below = lr < self._lr[0]
        if np.any(below):
            g0 = float(self.kernel.multiplier(np.array([1e-8]))[0])
            out = np.where(below, self._G[0] + g0 * (r ** (-self.alpha) - 1e-8 ** (-self.alpha)) / self.alpha, out)
        return np.where(np.isinf(r), 0.0, out)

    def __call__(self, r):
        if self.r_max is None:
            return self._G_inf(r)
        r = np.minimum(np.asarray(r, dtype=float), self.r_max)
        return self._G_inf(r) - self._G_inf(self.r_max)


def _interval_exit(c0, c1, lo, hi):
    """For t -> c0 + c1 t with lo <= c0 <= hi, first t >= 0 where it leaves [lo, hi]."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(c1 > 0, (hi - c0) / c1, np.where(c1 < 0, (lo - c0) / c1, np.inf))
    return t


def exterior_tail(points: np.ndarray, grid: GridSpec, kernel: KernelSpec, rho0: float,
                  quad: QuadratureConfig) -> np.ndarray:
    """Kernel mass int_{y outside box, |x^{-1}y| >= rho0} J(x, y) dy for each point x.

    Along the ray r -> x . delta_r(omega) the z coordinates move linearly and s
    quadratically, so the set of radii inside the box is an intersection of an
    interval with the solution set of a quadratic inequality. Its complement is
    integrated exactly in r through G and by quadrature over directions omega.
    """
    n = grid.n
    Bz, Bs = grid.box
    r_max = None if quad.tail_radius == "auto" else float(quad.tail_radius)
    G = RadialTail(kernel, r_max)
    dirs, dw = sphere_directions(n, quad.tail_phi_points, quad.tail_theta_points, quad.seed)
    out = np.empty(len(points))
    K = len(dirs)
    step = max(1, 400_000 // K)
    oz, oe, os_ = dirs[:, :n], dirs[:, n:2 * n], dirs[:, -1]
    for a in range(0, len(points), step):
        x = points[a:a + step]
        xz = x[:, :2 * n]
        xs = x[:, -1]
        xi, eta = x[:, :n], x[:, n:2 * n]
        # linear exit radius from the z slab
        r_lin = np.full((len(x), K), np.inf)
        for k in range(2 * n):
            r_lin = np.minimum(r_lin, _interval_exit(xz[:, k:k + 1], dirs[None, :, k], -Bz, Bz))
        b = 2.0 * (eta @ oz.T - xi @ oe.T)
        c = np.broadcast_to(os_[None, :], b.shape)
        # breakpoints: roots of s(r) = +-Bs within (0, r_lin)
        cands = [np.zeros_like(b), r_lin]
        for target in (Bs, -Bs):
            cc = xs[:, None] - target
            with np.errstate(divide="ignore", invalid="ignore"):
                disc = b * b - 4 * c * cc
                sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
                lin = np.where(b != 0, -cc / b, np.nan)
                r1 = np.where(c != 0, (-b - sq) / (2 * c), lin)
                r2 = np.where(c != 0, (-b + sq) / (2 * c), np.nan)
            for r in (r1, r2):
                cands.append(np.where((r > 0) & (r < r_lin), r, np.nan))
        bp = np.sort(np.stack(cands, axis=-1), axis=-1)  # nan sorts last
        inside_measure = np.zeros_like(b)
        for j in range(bp.shape[-1] - 1):
            lo, hi = bp[..., j], bp[..., j + 1]
            valid = np.isfinite(lo) & np.isfinite(hi) & (hi > lo)
            mid = np.where(valid, 0.5 * (lo + hi), 0.0)
            smid = xs[:, None] + b * mid + c * mid * mid
            ins = valid & (np.abs(smid) <= Bs)
            lo_c = np.maximum(lo, rho0)
            hi_c = np.maximum(hi, rho0)
            seg = np.where(ins, G(np.where(ins, lo_c, 1.0)) - G(np.where(ins, hi_c, 1.0)), 0.0)
            inside_measure += seg
        total = G(np.full(1, rho0))[0]
        out[a:a + step] = (total - inside_measure) @ dw
    return out


# -- public operations ------------------------------------------------------------

def assemble(grid: GridSpec, kernel: KernelSpec, quad: QuadratureConfig | None = None,
             tail: np.ndarray | None = None) -> NonlocalOperator:
    """Build the symmetric quadrature operator; dense below ``quad.dense_threshold`` nodes."""
    quad = quad or QuadratureConfig()
    if kernel.hook is None and not isinstance(kernel, KernelSpec):
        raise TypeError("kernel must be a KernelSpec")
    rho0 = cutoff_radius(grid, quad)
    nodes = grid.nodes()
    if nodes.shape[1] != 2 * grid.n + 1:
        raise ValueError("kernel/grid dimension mismatch")
    N = grid.size
    if grid.closure == "censored":
        tail_c = np.zeros(N)
    elif tail is not None:
        tail_c = np.asarray(tail, dtype=float)
        if tail_c.shape != (N,):
            raise ValueError("tail must have one entry per node")
    else:
        tail_c = exterior_tail(nodes, grid, kernel, rho0, quad)
    op = NonlocalOperator(grid, kernel, rho0, tail_c, None, quad, _nodes=nodes)
    if N <= quad.dense_threshold:
        W = np.empty((N, N))
        for rows, w in op._weight_blocks():
            W[rows] = w
        _symmetrize_inplace(W)
        np.fill_diagonal(W, 0.0)
        op.weights = W
    return op


def _symmetrize_inplace(W: np.ndarray, block: int = 512):
    """W <- (W + W^T) / 2 block by block, without a full-size temporary."""
    N = W.shape[0]
    for a in range(0, N, block):
        ra = slice(a, min(N, a + block))
        for b in range(a, N, block):
            rb = slice(b, min(N, b + block))
            avg = 0.5 * (W[ra, rb] + W[rb, ra].T)
            W[ra, rb] = avg
            W[rb, ra] = avg.T


def _check_grid(op: NonlocalOperator, f: DiscreteField):
    if f.grid != op.grid:
        raise ValueError("field and operator live on different grids")


def apply(op: NonlocalOperator, f: DiscreteField) -> DiscreteField:
    _check_grid(op, f)
    return f.like(op.matvec(f.values))


def dirichlet_form(op: NonlocalOperator, f: DiscreteField, g: DiscreteField) -> float:
    """Discrete E_J(f, g) with Haar-weighted sums, so that <L f, g>_mu = E_J(f, g)."""
    _check_grid(op, f)
    _check_grid(op, g)
    return op.grid.cellvol * op.pair_form(f.values, g.values)


def inner(f: DiscreteField, g: DiscreteField) -> float:
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")
    return float(np.dot(f.values, g.values)) * f.grid.cellvol


def annulus_integral(ctx: GroupContext, exponent: float, a: float, b: float) -> float:
    """Numerical integral of |x|^(exponent-Q) over a <= |x| <= b."""
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    return _annulus_integral(ctx.n, exponent, a, b)


def annulus_closed_form(ctx: GroupContext, exponent: float, a: float, b: float) -> float:
    if exponent == 0:
        return ctx.C0 * math.log(b / a)
    return ctx.C0 * (b ** exponent - a ** exponent) / exponent


def lp_norm(f: DiscreteField | np.ndarray, p: float, cellvol: float | None = None) -> float:
    if isinstance(f, DiscreteField):
        vals, cellvol = f.values, f.grid.cellvol
    else:
        vals = np.asarray(f, dtype=float)
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    a = np.abs(vals)
    if math.isinf(p):
        return float(a.max()) if a.size else 0.0
    if p == 1:
        return float(a.sum() * cellvol)
    top = a.max() if a.size else 0.0
    if top == 0:
        return 0.0
    # scale to avoid under/overflow for large p
    return float(top * (np.sum((a / top) ** p) * cellvol) ** (1.0 / p))


def mass(f: DiscreteField) -> float:
    return float(np.sum(f.values) * f.grid.cellvol)


def signed_power(u, m: float) -> np.ndarray:
    """|u|^{m-1} u."""
    u = np.asarray(u, dtype=float)
    return np.sign(u) * np.abs(u) ** m


# -- field I/O -----------------------------------------------------------------

_MAGIC = b"HFLD"
_HEADER = struct.Struct("<4sIIIIddI")
_CLOSURE_CODE = {c: i for i, c in enumerate(CLOSURES)}


def coordinate_names(n: int) -> list[str]:
    if n == 1:
        return ["xi", "eta", "s"]
    return [f"xi{i + 1}" for i in range(n)] + [f"eta{i + 1}" for i in range(n)] + ["s"]


def write_field_csv(f: DiscreteField, path):
    nodes = f.grid.nodes()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(coordinate_names(f.grid.n) + ["value"])
        for x, v in zip(nodes, f.values):
            w.writerow([repr(float(c)) for c in x] + [repr(float(v))])


def read_field_csv(path, grid: GridSpec) -> DiscreteField:
    """Read a field CSV; rows are matched to nodes by coordinates, in any order."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    names = coordinate_names(grid.n)
    missing = [c for c in names + ["value"] if c not in data.dtype.names]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    coords = np.stack([np.atleast_1d(data[c]) for c in names], axis=-1)
    if len(coords) != grid.size:
        raise ValueError(f"{path}: {len(coords)} rows, grid has {grid.size} nodes")
    idx = []
    for k, ax in enumerate(grid.axes()):
        h = ax[1] - ax[0] if len(ax) > 1 else 1.0
        i = np.rint((coords[:, k] - ax[0]) / h).astype(int)
        if np.any(i < 0) or np.any(i >= len(ax)) or not np.allclose(ax[i], coords[:, k], atol=1e-9 * max(1.0, abs(h))):
            raise ValueError(f"{path}: coordinates in column {names[k]} do not match the grid")
        idx.append(i)
    flat = np.ravel_multi_index(tuple(idx), grid.shape)
    values = np.full(grid.size, np.nan)
    values[flat] = np.atleast_1d(data["value"])
    if np.any(np.isnan(values)):
        raise ValueError(f"{path}: duplicate or missing nodes")
    return DiscreteField(grid, values)


def write_field_binary(f: DiscreteField, path):
    g = f.grid
    header = _HEADER.pack(_MAGIC, 1, g.n, g.points_per_axis_z, g.points_per_axis_s,
                          g.half_extent_z, g.half_extent_s, _CLOSURE_CODE[g.closure])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_field_binary(path) -> DiscreteField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, n, nz, ns, hz, hs, closure = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != 1:
        raise ValueError(f"{path}: unsupported version {version}")
    grid = GridSpec(n, hz, hs, nz, ns, CLOSURES[closure])
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if values.size != grid.size:
        raise ValueError(f"{path}: expected {grid.size} values, found {values.size}")
    return DiscreteField(grid, values.copy())


def koranyi_ball_volume(n: int) -> float:
    """|B_1| = C0 / Q (polar decomposition)."""
    return annulus_constant(n) / (2 * n + 2)
