"""Numerical checks of the weighted integration-by-parts identities.

``eq8``::

    int_a^b f * (D_right g) dt  ==  int_a^b w^2 g * D_left(f / w^2) dt

``eq9`` is the same statement with left and right exchanged.  Both sides
are computed with the grid operators and the trapezoid rule on the same
nodes, so the residual measures the discrete identity rather than a
quadrature mismatch.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import UsageError
from .grid import Grid, GridFunction, WeightFunction
from .operators import OperatorParams, apply_operator, assemble_matrix

__all__ = ["IbpReport", "FORMS", "ibp_residual", "adjointness_gap"]

FORMS = ("eq8", "eq9")
_FLOOR = 1e-30


@dataclass(frozen=True)
class IbpReport:
    lhs: float
    rhs: float
    abs_residual: float
    rel_residual: float
    grid_n: int

    @classmethod
    def from_sides(cls, lhs: float, rhs: float, grid_n: int) -> "IbpReport":
        res = abs(lhs - rhs)
        return cls(float(lhs), float(rhs), float(res),
                   float(res / max(abs(lhs), abs(rhs), _FLOOR)), int(grid_n))

    def to_dict(self) -> dict:
        return asdict(self)


def ibp_residual(params: OperatorParams, w: WeightFunction, f: GridFunction,
                 g: GridFunction, form: str = "eq8") -> IbpReport:
    """Both sides of the chosen identity and their discrepancy.

    Parameters
    ----------
    form : {"eq8", "eq9"}
        ``eq8`` pairs the right derivative of ``g`` with the left derivative
        of ``f / w**2``; ``eq9`` swaps the sides.
    """
    if form not in FORMS:
        raise UsageError(f"form must be one of {FORMS}, got {form!r}")
    if f.grid != g.grid:
        raise UsageError("f and g are sampled on different grids")
    grid = f.grid
    wv = w.samples(grid)
    outer, inner = ("right", "left") if form == "eq8" else ("left", "right")
    lhs = GridFunction(grid, f.values * apply_operator(params, w, g, outer, "derivative").values)
    scaled = GridFunction(grid, f.values / wv**2)
    rhs_d = apply_operator(params, w, scaled, inner, "derivative")
    rhs = GridFunction(grid, wv**2 * g.values * rhs_d.values)
    return IbpReport.from_sides(lhs.integral(), rhs.integral(), grid.n)


def adjointness_gap(params: OperatorParams, w: WeightFunction, grid: Grid) -> float:
    """Relative defect of the matrix form of ``eq8``.

    ``||Q A_r - (W^2 A_l W^-2)^T Q||_inf / ||Q A_r||_inf`` with the
    derivative matrices ``A_l, A_r``, weight samples ``W`` and trapezoid
    weights ``Q`` (all diagonal except the ``A``).
    """
    wv = w.samples(grid)
    q = grid.trapezoid_weights()
    a_l = assemble_matrix(params, w, grid, "left", "derivative").entries
    a_r = assemble_matrix(params, w, grid, "right", "derivative").entries
    qa_r = q[:, None] * a_r
    conj = (wv**2)[:, None] * a_l / (wv**2)[None, :]
    diff = qa_r - conj.T * q[None, :]
    return float(np.max(np.sum(np.abs(diff), axis=1)) / np.max(np.sum(np.abs(qa_r), axis=1)))
