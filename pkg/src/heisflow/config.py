"""Flat dotted-key JSON configuration.

Keys are grouped by module (``grid.*``, ``kernel.*``, ``quadrature.*``,
``evolution.*``, ``initial.*``, ``verify.*``) plus a top-level ``seed``.
Missing keys take the values in :data:`DEFAULTS`. Errors carry the file line
of the offending key when the config came from a file.
"""

from __future__ import annotations

import json
import math
import re

from .discrete import GridSpec, QuadratureConfig
from .evolution import PRESETS, EvolutionConfig, geometric_schedule, uniform_schedule
from .kernels import KernelSpec, load_profile_csv

DEFAULTS: dict = {
    "seed": 0,
    "grid.n": 1,
    "grid.half_extent_z": 2.0,
    "grid.half_extent_s": 4.0,
    "grid.points_per_axis_z": 9,
    "grid.points_per_axis_s": 9,
    "grid.closure": "censored",
    "kernel.family": "pure_power",
    "kernel.alpha": 1.0,
    "kernel.Lambda": 1.0,
    "kernel.amplitude": 0.0,
    "kernel.profile_csv": None,
    "quadrature.inner_cutoff_factor": 2.0,
    "quadrature.tail_radius": "auto",
    "quadrature.subcell_refinement": 0,
    "quadrature.tail_phi_points": 48,
    "quadrature.tail_theta_points": 64,
    "evolution.m": 2.0,
    "evolution.dt": 0.02,
    "evolution.horizon": 1.0,
    "evolution.dt_ratio": 1.0,
    "evolution.steps": 0,
    "evolution.resolvent_tol": 1e-10,
    "evolution.max_iters": 200,
    "evolution.p_list": [1.0, 2.0, "inf"],
    "evolution.store": "full",
    "evolution.checkpoints": [],
    "evolution.renormalize": False,
    "initial.preset": "koranyi_bump",
    "initial.r0": 1.0,
    "initial.amplitude": 1.0,
    "initial.separation": 2.0,
    "initial.field_csv": None,
    "verify.smoothing_p": 1.0,
    "verify.smoothing_tolerance": 0.15,
    "verify.extinction_p": 3.0,
    "verify.scaling_lambda": 2.0,
    "verify.leak_radii": [4.0, 8.0, 16.0],
    "verify.leak_h_z": 2.0,
    "verify.leak_h_s": 4.0,
    "verify.leak_s_ratio": 0.25,
    "verify.leak_horizon": 0.5,
    "verify.leak_steps": 5,
    "verify.leak_r0": 3.0,
    "verify.leak_tolerance": 0.2,
    "verify.holder_R": 2.0,
    "verify.holder_depth": 4,
    "verify.holder_scale": 0.5,
    "verify.holder_t0": None,
    "verify.holder_center": None,
    "verify.holder_degenerate": False,
    "verify.sv_samples": 1000,
    "verify.resolvent_count": 100,
}

DESCRIPTIONS = {
    "seed": "seed for every random draw (kernel sampling, random test fields)",
    "grid.n": "Heisenberg index n (H^n has dimension 2n+1)",
    "grid.half_extent_z": "half width of the lattice in each horizontal coordinate",
    "grid.half_extent_s": "half width of the lattice in the vertical coordinate s",
    "grid.points_per_axis_z": "odd number of nodes per horizontal axis",
    "grid.points_per_axis_s": "odd number of nodes on the s axis",
    "grid.closure": "censored (no exterior) or dirichlet_zero (zero outside the box)",
    "kernel.family": "pure_power, log_rough or tabulated_radial",
    "kernel.alpha": "operator order alpha in (0, 2)",
    "kernel.Lambda": "ellipticity bound for tabulated_radial",
    "kernel.amplitude": "log_rough amplitude a in [0, 1)",
    "kernel.profile_csv": "two-column (distance, multiplier) CSV for tabulated_radial",
    "quadrature.inner_cutoff_factor": "cutoff radius = factor * max(h_z, sqrt(h_s))",
    "quadrature.tail_radius": "far-field truncation radius or 'auto' (no truncation)",
    "quadrature.subcell_refinement": "sub-cell averaging level for near-diagonal weights",
    "quadrature.tail_phi_points": "Gauss-Legendre nodes in the polar angle of the tail quadrature",
    "quadrature.tail_theta_points": "equispaced nodes on the horizontal sphere of the tail quadrature",
    "evolution.m": "filtration exponent m > 0",
    "evolution.dt": "first time step",
    "evolution.horizon": "final time for uniform steps (ignored when evolution.steps > 0)",
    "evolution.dt_ratio": "geometric growth factor of the step (1 = uniform)",
    "evolution.steps": "number of steps for geometric schedules",
    "evolution.resolvent_tol": "sup-norm residual tolerance of each implicit step",
    "evolution.max_iters": "Newton iteration cap per step",
    "evolution.p_list": "norms recorded every step ('inf' allowed)",
    "evolution.store": "full or diagnostics (fields only at checkpoints)",
    "evolution.checkpoints": "times whose fields are kept in diagnostics mode",
    "evolution.renormalize": "follow the solution on dilated lattices (pure_power, long runs)",
    "initial.preset": "koranyi_bump, koranyi_indicator, two_bump or signed_two_bump",
    "initial.r0": "Koranyi radius of the bumps",
    "initial.amplitude": "bump height",
    "initial.separation": "distance between the two bump centres along xi_1",
    "initial.field_csv": "read the initial field from a field CSV instead of a preset",
    "verify.smoothing_p": "p of the smoothing exponent gamma_p",
    "verify.smoothing_tolerance": "relative tolerance of the smoothing slope",
    "verify.extinction_p": "p of J = ||u||_p^p in the extinction check",
    "verify.scaling_lambda": "amplitude factor of the scaling check",
    "verify.leak_radii": "box radii of the mass-leak sweep",
    "verify.leak_h_z": "horizontal spacing of the leak sweep",
    "verify.leak_h_s": "vertical spacing of the leak sweep",
    "verify.leak_s_ratio": "s half-extent = ratio * R^2 in the leak sweep",
    "verify.leak_horizon": "final time of every leak run",
    "verify.leak_steps": "steps of every leak run",
    "verify.leak_r0": "bump radius of the leak runs",
    "verify.leak_tolerance": "relative tolerance of the leak slope",
    "verify.holder_R": "ratio of consecutive cylinder radii",
    "verify.holder_depth": "number of nested cylinders after the first",
    "verify.holder_scale": "radius of the outermost cylinder",
    "verify.holder_t0": "top time of the cylinders (default: end of run)",
    "verify.holder_center": "cylinder centre (default: origin)",
    "verify.holder_degenerate": "use degeneracy-scaled cylinders (m > 1)",
    "verify.sv_samples": "random fields per m in the Stroock-Varopoulos check",
    "verify.resolvent_count": "random resolvent problems",
}


class ConfigError(ValueError):
    """Malformed configuration; ``str`` is a path:line anchored diagnostic."""


def _key_line(text: str | None, key: str) -> int | None:
    if not text:
        return None
    pat = re.compile(r'"' + re.escape(key) + r'"\s*:')
    for i, line in enumerate(text.splitlines(), start=1):
        if pat.search(line):
            return i
    return None


def _error(source: str, text: str | None, key: str, msg: str) -> ConfigError:
    line = _key_line(text, key)
    where = f"{source}:{line}" if line else source
    return ConfigError(f"{where}: {key}: {msg}")


def _p(x):
    if isinstance(x, str):
        if x.lower() in ("inf", "infinity"):
            return math.inf
        raise ValueError(f"not a number: {x!r}")
    return float(x)


def load_config(path) -> dict:
    with open(path) as fh:
        text = fh.read()
    return parse_config(text, str(path))


def parse_config(text: str, source: str = "<config>") -> dict:
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}:1: top level must be a JSON object")
    return normalize(raw, source, text)


def normalize(raw: dict, source: str = "<config>", text: str | None = None) -> dict:
    """Fill defaults and validate types and ranges."""
    cfg = dict(DEFAULTS)
    for key, val in raw.items():
        if key not in DEFAULTS:
            raise _error(source, text, key, "unknown key")
        cfg[key] = val

    def check(key, cond, msg):
        if not cond:
            raise _error(source, text, key, msg)

    ints = ["seed", "grid.n", "grid.points_per_axis_z", "grid.points_per_axis_s", "quadrature.subcell_refinement",
            "quadrature.tail_phi_points", "quadrature.tail_theta_points", "evolution.steps", "evolution.max_iters",
            "verify.leak_steps", "verify.holder_depth", "verify.sv_samples", "verify.resolvent_count"]
    for key in ints:
        v = cfg[key]
        check(key, isinstance(v, int) and not isinstance(v, bool), f"expected an integer, got {v!r}")
    for key, default in DEFAULTS.items():
        if isinstance(default, float):
            v = cfg[key]
            check(key, isinstance(v, (int, float)) and not isinstance(v, bool), f"expected a number, got {v!r}")
            cfg[key] = float(v)
    check("evolution.m", cfg["evolution.m"] > 0, f"must be positive, got {cfg['evolution.m']}")
    check("evolution.dt", cfg["evolution.dt"] > 0, "must be positive")
    check("evolution.horizon", cfg["evolution.horizon"] > 0, "must be positive")
    check("evolution.dt_ratio", cfg["evolution.dt_ratio"] > 0, "must be positive")
    check("evolution.resolvent_tol", cfg["evolution.resolvent_tol"] > 0, "must be positive")
    check("evolution.store", cfg["evolution.store"] in ("full", "diagnostics"), "must be 'full' or 'diagnostics'")
    check("initial.preset", cfg["initial.preset"] in PRESETS, f"must be one of {sorted(PRESETS)}")
    check("evolution.renormalize", isinstance(cfg["evolution.renormalize"], bool), "expected true or false")
    check("verify.holder_degenerate", isinstance(cfg["verify.holder_degenerate"], bool), "expected true or false")
    for key in ("evolution.p_list", "evolution.checkpoints", "verify.leak_radii"):
        check(key, isinstance(cfg[key], list), "expected a list")
    try:
        ps = [_p(x) for x in cfg["evolution.p_list"]]
    except (TypeError, ValueError) as exc:
        raise _error(source, text, "evolution.p_list", str(exc)) from None
    check("evolution.p_list", all(p >= 1 for p in ps), "every p must be >= 1")
    # build the objects once so range errors surface here, named by key
    for prefix, build in (("grid", grid_from), ("kernel", kernel_from), ("quadrature", quad_from)):
        try:
            build(cfg)
        except (ValueError, OSError) as exc:
            msg = str(exc)
            hits = [k for k in DEFAULTS if k.startswith(prefix + ".")
                    and re.search(r"\b" + re.escape(k.split(".", 1)[1]) + r"\b", msg)]
            key = max(hits, key=len) if hits else prefix
            raise _error(source, text, key, msg) from None
    return cfg


def grid_from(cfg: dict) -> GridSpec:
    return GridSpec(cfg["grid.n"], cfg["grid.half_extent_z"], cfg["grid.half_extent_s"],
                    cfg["grid.points_per_axis_z"], cfg["grid.points_per_axis_s"], cfg["grid.closure"])


def kernel_from(cfg: dict) -> KernelSpec:
    fam = cfg["kernel.family"]
    alpha = cfg["kernel.alpha"]
    if fam == "pure_power":
        return KernelSpec.pure_power(alpha)
    if fam == "log_rough":
        return KernelSpec.log_rough(alpha, cfg["kernel.amplitude"])
    if fam == "tabulated_radial":
        if not cfg["kernel.profile_csv"]:
            raise ValueError("profile_csv is required for tabulated_radial")
        return KernelSpec.tabulated(alpha, cfg["kernel.Lambda"], load_profile_csv(cfg["kernel.profile_csv"]))
    return KernelSpec(alpha=alpha, family=fam)


def quad_from(cfg: dict) -> QuadratureConfig:
    tr = cfg["quadrature.tail_radius"]
    return QuadratureConfig(inner_cutoff_factor=cfg["quadrature.inner_cutoff_factor"],
                            tail_radius=tr if tr == "auto" else float(tr),
                            subcell_refinement=cfg["quadrature.subcell_refinement"],
                            tail_phi_points=cfg["quadrature.tail_phi_points"],
                            tail_theta_points=cfg["quadrature.tail_theta_points"],
                            seed=cfg["seed"])


def schedule_from(cfg: dict) -> list[float]:
    if cfg["evolution.dt_ratio"] != 1.0 or cfg["evolution.steps"] > 0:
        steps = cfg["evolution.steps"] or max(1, int(round(cfg["evolution.horizon"] / cfg["evolution.dt"])))
        return geometric_schedule(cfg["evolution.dt"], cfg["evolution.dt_ratio"], steps)
    return uniform_schedule(cfg["evolution.dt"], cfg["evolution.horizon"])


def evolution_from(cfg: dict) -> EvolutionConfig:
    return EvolutionConfig(cfg["evolution.m"], kernel_from(cfg), grid_from(cfg), schedule_from(cfg),
                           resolvent_tol=cfg["evolution.resolvent_tol"],
                           diagnostics_p_list=tuple(_p(x) for x in cfg["evolution.p_list"]),
                           quad=quad_from(cfg), store=cfg["evolution.store"],
                           checkpoints=tuple(float(c) for c in cfg["evolution.checkpoints"]),
                           max_iters=cfg["evolution.max_iters"])


def initial_from(cfg: dict, grid: GridSpec | None = None):
    from .discrete import read_field_csv
    grid = grid or grid_from(cfg)
    if cfg["initial.field_csv"]:
        return read_field_csv(cfg["initial.field_csv"], grid)
    name = cfg["initial.preset"]
    if name in ("two_bump", "signed_two_bump"):
        return PRESETS[name](grid, cfg["initial.r0"], cfg["initial.amplitude"], cfg["initial.separation"])
    return PRESETS[name](grid, cfg["initial.r0"], cfg["initial.amplitude"])


def defaults_reference() -> str:
    """Markdown table of every key, default and meaning."""
    lines = ["# Configuration reference", "",
             "Flat JSON object with dotted keys; omitted keys take these defaults.", "",
             "| key | default | meaning |", "|---|---|---|"]
    for key, val in DEFAULTS.items():
        lines.append(f"| `{key}` | `{json.dumps(val)}` | {DESCRIPTIONS.get(key, '')} |")
    return "\n".join(lines) + "\n"
