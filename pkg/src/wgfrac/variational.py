"""Calculus of variations with the weighted generalized derivative.

Minimize ``int_a^b L(t, x, D_left x) dt`` with ``x(a) = x_a, x(b) = x_b``.
Setting ``u = D_left x`` turns this into a control problem with ``f = u``;
the necessary conditions then collapse to the Euler-Lagrange equation

    dL/dx + w^2 D_right( (dL/dv) / w^2 ) = 0.

Named parameter bindings (presets) specialize the operators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UsageError, ValidationError
from .expr import Expr, Var, eval_with_partials, functions_used, parse, substitute, variables
from .grid import Grid, GridFunction, WeightFunction
from .ocp import ControlProblem, Fixed, SolverConfig, SweepResult, shoot_terminal
from .operators import OperatorParams, left_deriv, make_params, right_deriv

__all__ = ["Preset", "PRESETS", "apply_preset", "VariationalProblem",
           "el_residual", "solve_variational"]


@dataclass(frozen=True)
class Preset:
    """A parameter binding: ``beta`` fixed or tied to ``alpha``, optional unit weight."""

    name: str
    beta: str          # "one" or "alpha"
    unit_weight: bool

    def describe(self) -> dict:
        return {"name": self.name,
                "beta": "1" if self.beta == "one" else "alpha",
                "w": "1" if self.unit_weight else "caller-supplied"}


PRESETS = {
    "caputo-fabrizio": Preset("caputo-fabrizio", "one", True),
    "atangana-baleanu": Preset("atangana-baleanu", "alpha", True),
    "weighted-ab": Preset("weighted-ab", "alpha", False),
}


def apply_preset(preset, alpha: float, normalization: str = "unit",
                 w: WeightFunction | None = None) -> tuple[OperatorParams, WeightFunction | None]:
    """Bound ``(params, w)`` for a preset; ``weighted-ab`` passes ``w`` through."""
    if isinstance(preset, str):
        if preset not in PRESETS:
            raise UsageError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        preset = PRESETS[preset]
    beta = 1.0 if preset.beta == "one" else alpha
    if preset.beta == "alpha" and alpha == 0:
        raise DomainError(f"preset {preset.name} binds beta = alpha, which needs alpha > 0")
    params = make_params(alpha, beta, normalization)
    return params, (WeightFunction.unit() if preset.unit_weight else w)


@dataclass(frozen=True)
class VariationalProblem:
    L: Expr
    params: OperatorParams
    w: WeightFunction
    grid: Grid
    x_a: float
    x_b: float
    solver: SolverConfig = SolverConfig()

    def __post_init__(self):
        e = parse(self.L) if isinstance(self.L, str) else self.L
        extra = variables(e) - {"t", "x", "v"}
        if extra:
            raise ValidationError(f"L may only use ['t', 'v', 'x'], found {sorted(extra)}")
        if "abs" in functions_used(e):
            raise ValidationError("L uses abs, which is not differentiable")
        if not (math.isfinite(self.x_a) and math.isfinite(self.x_b)):
            raise ValidationError("boundary values must be finite")
        object.__setattr__(self, "L", e)

    def to_control_problem(self) -> ControlProblem:
        """``L(t, x, v) -> L(t, x, u)`` with dynamics ``D_left x = u``."""
        return ControlProblem(
            L=substitute(self.L, {"v": Var("u")}), f=parse("u"), params=self.params,
            w=self.w, grid=self.grid, x_a=self.x_a, terminal=Fixed(self.x_b),
            solver=self.solver)


def el_residual(vp: VariationalProblem, x: GridFunction) -> GridFunction:
    """``dL/dx + w^2 D_right((dL/dv) / w^2)`` along ``x`` with ``v = D_left x``."""
    if x.grid != vp.grid:
        raise UsageError("trajectory is sampled on a different grid")
    t = vp.grid.nodes
    wv = vp.w.samples(vp.grid)
    v = left_deriv(vp.params, vp.w, x)
    _, lx, _, lv = eval_with_partials(vp.L, dict(t=t, x=x.values, u=0.0, v=v.values))
    scaled = GridFunction(vp.grid, np.broadcast_to(lv, t.shape) / wv**2)
    dr = right_deriv(vp.params, vp.w, scaled)
    return GridFunction(vp.grid, np.broadcast_to(lx, t.shape) + wv**2 * dr.values)


def solve_variational(vp: VariationalProblem) -> SweepResult:
    """Solve through the equivalent control problem with both endpoints fixed."""
    return shoot_terminal(vp.to_control_problem())
