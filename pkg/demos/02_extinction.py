"""Fast diffusion below the critical exponent: finite-time extinction.

With alpha = 1 on H^1 (Q = 4) the critical exponent is m* = 3/4. For m = 0.5
the solution with zero exterior data vanishes in finite time; for m = 2 it does not.
Run: python3 demos/02_extinction.py
"""
import warnings

from heisflow.discrete import GridSpec, assemble
from heisflow.evolution import EvolutionConfig, koranyi_bump, run, uniform_schedule
from heisflow.kernels import KernelSpec
from heisflow.verify import check_extinction, check_no_extinction

warnings.simplefilter("ignore")
kernel = KernelSpec.pure_power(1.0)
grid = GridSpec(1, 2.0, 4.0, 9, 17, "dirichlet_zero")
op = assemble(grid, kernel)
for m in (0.5, 2.0):
    cfg = EvolutionConfig(m, kernel, grid, uniform_schedule(0.005, 0.5))
    traj = run(cfg, koranyi_bump(grid, 1.0), op)
    sup = traj.series("linf")
    print(f"m = {m}: sup norm at t = 0.1, 0.2, 0.5: {sup[20]:.3e} {sup[40]:.3e} {sup[-1]:.3e}")
    rep = check_extinction(traj) if m < 0.75 else check_no_extinction(traj)
    print(rep.to_json())
