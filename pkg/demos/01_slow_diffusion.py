"""Slow diffusion (m = 2) from a Koranyi bump on a censored lattice.

Mass stays fixed to round-off while the sup norm and the energy decay.
Run: python3 demos/01_slow_diffusion.py
"""
import math

from heisflow.discrete import GridSpec
from heisflow.evolution import EvolutionConfig, koranyi_bump, run, uniform_schedule
from heisflow.kernels import KernelSpec
from heisflow.verify import check_energy, check_mass_conservation

grid = GridSpec(1, 2.0, 4.0, 11, 11, "censored")
cfg = EvolutionConfig(2.0, KernelSpec.pure_power(1.0), grid, uniform_schedule(0.05, 1.0), resolvent_tol=1e-12)
traj = run(cfg, koranyi_bump(grid, 1.5))

print(f"{'t':>6} {'mass':>14} {'sup':>10} {'L2':>10}")
for d in traj.diagnostics[::4]:
    print(f"{d.t:6.2f} {d.mass:14.10f} {d.norms[math.inf]:10.5f} {d.norms[2.0]:10.5f}")
print(check_mass_conservation(traj).to_json())
print(check_energy(traj).to_json())
