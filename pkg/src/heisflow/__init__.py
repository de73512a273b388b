"""Nonlocal filtration flow du/dt + L(|u|^{m-1} u) = 0 on the Heisenberg group H^n.

Modules: ``hgroup`` (group law, Koranyi norm), ``kernels`` (rough jump
kernels), ``discrete`` (lattice operator, norms, field I/O), ``resolvent``
(implicit step solver), ``evolution`` (time stepping, presets), ``verify``
(checks and fits), ``config`` and ``cli``.
"""

from .discrete import (DiscreteField, GridSpec, NonlocalOperator, QuadratureConfig, apply, assemble,
                       dirichlet_form, lp_norm, mass)
from .evolution import EvolutionConfig, Trajectory, run, run_renormalized, step
from .hgroup import GroupContext, GroupPoint, dilate, inv, kdist, knorm, mul
from .kernels import KernelSpec, eval_kernel, validate_kernel
from .resolvent import ResolventProblem, solve

__all__ = [
    "DiscreteField", "GridSpec", "NonlocalOperator", "QuadratureConfig", "apply", "assemble",
    "dirichlet_form", "lp_norm", "mass", "EvolutionConfig", "Trajectory", "run", "run_renormalized", "step",
    "GroupContext", "GroupPoint", "dilate", "inv", "kdist", "knorm", "mul", "KernelSpec", "eval_kernel",
    "validate_kernel", "ResolventProblem", "solve",
]
