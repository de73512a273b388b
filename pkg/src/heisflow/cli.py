"""Command line driver: ``heisflow {run, verify, sweep, export-defaults}``.

Exit codes: 0 success, 1 bad input (config, suite name, arguments) or a failed
check, 2 solver failure during ``run``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
import warnings
from dataclasses import replace
from importlib import metadata

import numpy as np

from . import config as C
from . import verify as V
from .discrete import DiscreteField, assemble, write_field_csv
from .evolution import koranyi_bump, run, run_renormalized

SUITES = ("operator_oracle", "stroock_varopoulos", "resolvent", "contraction", "mass", "decay", "smoothing",
          "extinction", "scaling", "holder")


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


class _Manifest:
    def __init__(self, cfg, out, command):
        self.data = {"command": command, "config": cfg, "version": _version(), "seed": cfg["seed"],
                     "phases": {}, "outputs": [], "status": "ok"}
        self.out = out

    def phase(self, name, seconds):
        self.data["phases"][name] = round(seconds, 6)

    def add(self, path):
        self.data["outputs"].append(os.path.relpath(path, self.out))

    def write(self, status):
        self.data["status"] = status
        path = os.path.join(self.out, "manifest.json")
        with open(path, "w") as fh:
            json.dump(V._clean(self.data), fh, indent=2, sort_keys=True)
        return path


def _load(args) -> dict:
    raw_text, source = None, "<defaults>"
    raw = {}
    if args.config:
        source = args.config
        with open(args.config) as fh:
            raw_text = fh.read()
        cfg = C.parse_config(raw_text, source)
    else:
        cfg = C.normalize(raw)
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _evolve(cfg, op=None):
    ecfg = C.evolution_from(cfg)
    u0 = C.initial_from(cfg, ecfg.grid)
    op = op or assemble(ecfg.grid, ecfg.kernel, ecfg.quad)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if cfg["evolution.renormalize"]:
            return run_renormalized(ecfg, u0, op), op
        return run(ecfg, u0, op), op


def _fname(t):
    return f"{t:.6g}".replace(".", "p").replace("-", "m")


def cmd_run(cfg: dict, out: str) -> int:
    os.makedirs(out, exist_ok=True)
    man = _Manifest(cfg, out, "run")
    t0 = time.perf_counter()
    ecfg = C.evolution_from(cfg)
    op = assemble(ecfg.grid, ecfg.kernel, ecfg.quad)
    man.phase("assemble", time.perf_counter() - t0)
    t0 = time.perf_counter()
    traj, _ = _evolve(cfg, op)
    man.phase("evolve", time.perf_counter() - t0)
    path = os.path.join(out, "trajectory.csv")
    traj.write_csv(path)
    man.add(path)
    fdir = os.path.join(out, "fields")
    os.makedirs(fdir, exist_ok=True)
    stored = traj.stored()
    if cfg["evolution.store"] == "full":
        stored = [stored[0], stored[-1]]
    for t, f in stored:
        p = os.path.join(fdir, f"field_t{_fname(t)}.csv")
        write_field_csv(f, p)
        man.add(p)
    if traj.status != "ok":
        print(f"error: solver failure: {traj.error}", file=sys.stderr)
        man.write("solver_failure")
        return 2
    man.write("ok")
    print(f"wrote {path} ({len(traj.times)} rows)")
    return 0


# -- verification suites -------------------------------------------------------------------------

def _suite_reports(name: str, cfg: dict, cache: dict) -> list:
    grid = C.grid_from(cfg)
    kernel = C.kernel_from(cfg)
    quad = C.quad_from(cfg)
    seed = cfg["seed"]

    def op():
        if "op" not in cache:
            cache["op"] = assemble(grid, kernel, quad)
        return cache["op"]

    def traj(full=True):
        key = "traj_full" if full else "traj"
        if key not in cache:
            c = dict(cfg)
            if full:
                c["evolution.store"] = "full"
            cache[key] = _evolve(c, op())[0]
        return cache[key]

    if name == "operator_oracle":
        return [V.operator_oracle(grid, [kernel], seed)]
    if name == "stroock_varopoulos":
        return [V.stroock_varopoulos(op(), samples=cfg["verify.sv_samples"], seed=seed)]
    if name == "resolvent":
        return [V.resolvent_contract(cfg["verify.resolvent_count"], seed=seed, kernel=kernel,
                                     tol=cfg["evolution.resolvent_tol"])]
    if name == "contraction":
        ecfg = replace(C.evolution_from(cfg), store="full")
        u0 = C.initial_from(cfg, grid)
        rng = np.random.default_rng(seed)
        other = DiscreteField(grid, u0.values + 0.1 * rng.normal(size=grid.size) * np.max(np.abs(u0.values)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            a = run(ecfg, u0, op())
            b = run(ecfg, other, op())
        return [V.check_contraction(a, b, tol=10 * ecfg.resolvent_tol)]
    if name == "mass":
        if grid.closure == "censored":
            return [V.check_mass(traj(False))]
        r0 = cfg["verify.leak_r0"]
        return [V.check_mass(traj(False), cfg["verify.leak_radii"], lambda g: koranyi_bump(g, r0, 1.0),
                             horizon=cfg["verify.leak_horizon"], steps=cfg["verify.leak_steps"],
                             h_z=cfg["verify.leak_h_z"], h_s=cfg["verify.leak_h_s"],
                             s_ratio=cfg["verify.leak_s_ratio"], tol=cfg["verify.leak_tolerance"])]
    if name == "decay":
        tr = traj(True)
        reps = [V.check_decay(tr), V.check_energy(tr)]
        if tr.m != 1:
            reps.append(V.check_time_derivative(tr, t_min=0.1 * tr.config.horizon))
        return reps
    if name == "smoothing":
        return [V.fit_smoothing(traj(False), cfg["verify.smoothing_p"], cfg["verify.smoothing_tolerance"]).to_report()]
    if name == "extinction":
        m, alpha = cfg["evolution.m"], kernel.alpha
        if m >= (grid.Q - alpha) / grid.Q:
            return [V.CheckReport("extinction", "skipped", {"m": m},
                                  message=f"skipped: m >= m* = {(grid.Q - alpha) / grid.Q:.6g}")]
        return [V.check_extinction(traj(True), cfg["verify.extinction_p"])]
    if name == "scaling":
        ecfg = C.evolution_from(cfg)
        return [V.check_scaling(ecfg, C.initial_from(cfg, grid), cfg["verify.scaling_lambda"], op())]
    if name == "holder":
        tr = traj(True)
        t0 = cfg["verify.holder_t0"] if cfg["verify.holder_t0"] is not None else tr.times[-1]
        center = cfg["verify.holder_center"] or [0.0] * (2 * grid.n + 1)
        return [V.holder_diagnostic(tr, (np.asarray(center, float), float(t0)), cfg["verify.holder_R"],
                                    cfg["verify.holder_depth"], cfg["verify.holder_degenerate"],
                                    scale=cfg["verify.holder_scale"])]
    raise KeyError(name)


def cmd_verify(suite: str, cfg: dict, out: str) -> int:
    if suite != "all" and suite not in SUITES:
        print(f"error: unknown suite {suite!r}; valid: {', '.join(SUITES + ('all',))}", file=sys.stderr)
        return 1
    os.makedirs(out, exist_ok=True)
    man = _Manifest(cfg, out, f"verify {suite}")
    names = SUITES if suite == "all" else (suite,)
    reports = []
    cache: dict = {}
    for name in names:
        t0 = time.perf_counter()
        reps = _suite_reports(name, cfg, cache)
        man.phase(name, time.perf_counter() - t0)
        reports.extend(r if isinstance(r, V.CheckReport) else r.to_report() for r in reps)
    path = os.path.join(out, f"report_{suite}.json")
    V.write_reports(reports, path)
    man.add(path)
    failed = [r.name for r in reports if r.status == "fail"]
    flagged = [r.name for r in reports if r.status == "inconclusive"]
    for r in reports:
        print(f"{r.name}: {r.status}" + (f" ({r.message})" if r.message else ""))
    if flagged:
        print(f"inconclusive: {', '.join(flagged)}")
    man.write("fail" if failed else "ok")
    return 1 if failed else 0


# -- sweep ---------------------------------------------------------------------------------------------

def cmd_sweep(cfg: dict, axis: str, values: list, out: str) -> int:
    if not values:
        print("error: --values needs at least one value", file=sys.stderr)
        return 1
    if axis not in C.DEFAULTS or isinstance(C.DEFAULTS[axis], (str, list, bool)) or C.DEFAULTS[axis] is None:
        print(f"error: axis {axis!r} is not a numeric config key", file=sys.stderr)
        return 1
    os.makedirs(out, exist_ok=True)
    man = _Manifest(cfg, out, f"sweep {axis}")
    rows = []
    status = 0
    for v in values:
        c = dict(cfg)
        c[axis] = int(v) if isinstance(C.DEFAULTS[axis], int) else float(v)
        try:
            c = C.normalize(c, f"{axis}={v}")
        except C.ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        sub = os.path.join(out, f"{axis}={v}")
        t0 = time.perf_counter()
        code = cmd_run(c, sub)
        man.phase(f"{axis}={v}", time.perf_counter() - t0)
        status = max(status, code)
        with open(os.path.join(sub, "trajectory.csv")) as fh:
            rec = list(csv.DictReader(fh))
        first, last = rec[0], rec[-1]
        m0, m1 = float(first["mass"]), float(last["mass"])
        rows.append({"value": c[axis], "t_final": float(last["t"]), "mass0": m0, "mass_final": m1,
                     "abs_mass_drift": abs(m1 - m0), "linf_final": float(last["linf"]),
                     "l1_final": float(last["l1"])})
        for f in ("trajectory.csv", "manifest.json"):
            man.add(os.path.join(sub, f))
    path = os.path.join(out, "sweep.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([axis] + list(rows[0])[1:])
        for r in rows:
            w.writerow([repr(v) for v in r.values()])
    man.add(path)
    fits = {}
    x = np.array([r["value"] for r in rows])
    for col in ("abs_mass_drift", "linf_final"):
        y = np.array([r[col] for r in rows])
        if len(rows) >= 2 and np.all(x > 0) and np.all(y > 0) and len(set(x)) > 1:
            slope, icpt, r2 = V.loglog_fit(x, y)
            fits[col] = {"slope": slope, "intercept": icpt, "r_squared": r2}
    fpath = os.path.join(out, "sweep_fit.json")
    with open(fpath, "w") as fh:
        json.dump(V._clean({"axis": axis, "values": list(x), "fits": fits}), fh, indent=2, sort_keys=True)
    man.add(fpath)
    man.write("ok" if status == 0 else "solver_failure")
    print(f"wrote {path}")
    return status


def cmd_export_defaults(out: str) -> int:
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "defaults.json"), "w") as fh:
        json.dump(C.DEFAULTS, fh, indent=2)
    with open(os.path.join(out, "CONFIG_REFERENCE.md"), "w") as fh:
        fh.write(C.defaults_reference())
    print(f"wrote {out}/defaults.json and {out}/CONFIG_REFERENCE.md")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat dotted-key JSON config")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, default=None, help="BLAS thread count")
    common.add_argument("--out", default="out", help="output directory")
    p = argparse.ArgumentParser(prog="heisflow", description="Nonlocal filtration solver on the Heisenberg group")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run one evolution")
    pv = sub.add_parser("verify", parents=[common], help="run a verification suite")
    pv.add_argument("suite", help=f"one of {', '.join(SUITES)}, all")
    ps = sub.add_parser("sweep", parents=[common], help="repeat a run over values of one config key")
    ps.add_argument("--axis", required=True)
    ps.add_argument("--values", nargs="*", default=[])
    sub.add_parser("export-defaults", parents=[common], help="write the default config and its reference")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 1
    from threadpoolctl import threadpool_limits
    with threadpool_limits(limits=args.threads):
        if args.command == "export-defaults":
            return cmd_export_defaults(args.out)
        try:
            cfg = _load(args)
        except C.ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        if args.command == "run":
            return cmd_run(cfg, args.out)
        if args.command == "verify":
            return cmd_verify(args.suite, cfg, args.out)
        return cmd_sweep(cfg, args.axis, args.values, args.out)


if __name__ == "__main__":
    sys.exit(main())
