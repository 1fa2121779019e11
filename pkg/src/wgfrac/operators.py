"""Weighted generalized fractional derivatives and integrals on uniform grids.

For ``0 <= alpha < 1``, ``beta > 0`` and the kernel
``K(r) = E_beta(-mu r**beta)`` with ``mu = alpha/(1 - alpha)``, the left
derivative (Riemann-Liouville sense) is

    D f(x) = 1/(phi w(x)) d/dx  int_a^x (w f)(s) K(x - s) ds

and the left integral is ``phi f + psi * I_RL^beta f`` with the weighted
Riemann-Liouville integral of order ``beta``.  Right operators are the
mirror images under ``t -> a + b - t``.

Discretization
--------------
``w f`` is replaced by its piecewise-linear interpolant on the grid and every
convolution is integrated exactly against the kernel, cell by cell
("product trapezoid").  For the derivative the outer ``d/dx`` is applied to
that interpolated convolution analytically::

    d/dx int_a^x g(s) K(x - s) ds = g(x) K(0) + int_a^x g(s) K'(x - s) ds,

whose cell weights need only ``K`` and its first moment at the nodes
(``int_0^tau K = tau E_{beta,2}(-mu tau**beta)``).  The weakly singular
``K'`` (``beta < 1``) is never evaluated.  With ``alpha = 0`` the kernel is
constant, the weights vanish and the derivative is exactly the identity.

Every operator has two code paths: a direct one (``numpy.convolve`` of the
cell weights) and a dense matrix (:func:`assemble_matrix`, Toeplitz layout
of the same weights).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainError, UsageError
from .grid import Grid, GridFunction, WeightFunction
from .mittag_leffler import gamma_fn, ml_array

__all__ = [
    "NORMALIZATIONS", "OperatorParams", "OperatorMatrix", "make_params",
    "normalization_value", "kernel_moments", "kernel", "left_conv",
    "left_deriv", "right_deriv", "left_integral", "right_integral",
    "apply_operator", "assemble_matrix",
]

NORMALIZATIONS = ("unit", "ab")
SIDES = ("left", "right")
KINDS = ("derivative", "integral")
_LD = np.longdouble


def normalization_value(alpha: float, normalization: str) -> float:
    """B(alpha): ``unit`` is 1, ``ab`` is ``1 - alpha + alpha/Gamma(alpha)``."""
    if normalization == "unit":
        return 1.0
    if normalization == "ab":
        # alpha/Gamma(alpha) = alpha**2/Gamma(alpha + 1), finite at alpha = 0
        return 1.0 - alpha + alpha * alpha / math.gamma(alpha + 1.0)
    raise DomainError(f"unknown normalization {normalization!r}; expected one of {NORMALIZATIONS}")


@dataclass(frozen=True)
class OperatorParams:
    """Fractional orders and the derived constants phi, psi, mu."""

    alpha: float
    beta: float
    normalization: str = "unit"
    B: float = field(init=False)
    phi: float = field(init=False)
    psi: float = field(init=False)
    mu: float = field(init=False)

    def __post_init__(self):
        alpha, beta = float(self.alpha), float(self.beta)
        if not (math.isfinite(alpha) and 0.0 <= alpha < 1.0):
            raise DomainError(f"alpha must lie in [0, 1), got {self.alpha!r}")
        if not (math.isfinite(beta) and beta > 0.0):
            raise DomainError(f"beta must be > 0, got {self.beta!r}")
        B = normalization_value(alpha, self.normalization)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "phi", (1.0 - alpha) / B)
        object.__setattr__(self, "psi", alpha / B)
        object.__setattr__(self, "mu", alpha / (1.0 - alpha))

    def describe(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "normalization": self.normalization,
                "B": self.B, "phi": self.phi, "psi": self.psi, "mu": self.mu}


def make_params(alpha: float, beta: float, normalization: str = "unit") -> OperatorParams:
    return OperatorParams(alpha, beta, normalization)


def kernel(params: OperatorParams, tau):
    """K(tau) = E_beta(-mu tau**beta) for tau >= 0."""
    tau = np.asarray(tau, dtype=float)
    if params.mu == 0.0:
        return np.ones(tau.shape)
    return ml_array(params.beta, 1.0, -params.mu * tau**params.beta).astype(float)


def kernel_moments(params: OperatorParams, tau: float) -> tuple[float, float]:
    """``(int_0^tau K(s) ds, int_0^tau (tau - s) K(s) ds)``.

    Term-by-term integration of the series gives
    ``tau E_{beta,2}(-mu tau^beta)`` and ``tau^2 E_{beta,3}(-mu tau^beta)``.
    """
    tau = float(tau)
    if not (math.isfinite(tau) and tau >= 0.0):
        raise DomainError(f"kernel_moments needs tau >= 0, got {tau!r}")
    if tau == 0.0:
        return 0.0, 0.0
    if params.mu == 0.0:
        return tau, 0.5 * tau * tau
    z = -params.mu * tau**params.beta
    e2 = float(ml_array(params.beta, 2.0, [z])[0])
    e3 = float(ml_array(params.beta, 3.0, [z])[0])
    return tau * e2, tau * tau * e3


# ---------------------------------------------------------------------------
# cell weights
#
# For a grid of spacing h and cells r in [k h, (k+1) h], k = 0..n-2, each
# weight pair (wa_k, wb_k) integrates the kernel against the two hat-function
# pieces of the interpolant: wa_k multiplies the sample at x_i - (k+1) h and
# wb_k the sample at x_i - k h.


@lru_cache(maxsize=64)
def _kernel_tables(beta: float, mu: float, h: float, n: int):
    """Nodes ``tau_k = k h`` with ``int_0^tau K`` and ``int_0^tau (tau - s) K(s) ds``."""
    tau = np.arange(n, dtype=_LD) * _LD(h)
    z = (-mu * tau.astype(float) ** beta)
    k0 = ml_array(beta, 1.0, z)
    m0 = tau * ml_array(beta, 2.0, z)
    m1 = tau * tau * ml_array(beta, 3.0, z)
    for arr in (tau, k0, m0, m1):
        arr.setflags(write=False)
    return tau, k0, m0, m1


def _readonly(*arrays):
    for arr in arrays:
        arr.setflags(write=False)
    return arrays


@lru_cache(maxsize=64)
def _derivative_weights(beta: float, mu: float, h: float, n: int):
    """Cell weights of int g(x - r) K'(r) dr for the interpolant of g."""
    if mu == 0.0:
        return _readonly(np.zeros(n - 1), np.zeros(n - 1))
    _, k0, m0, _ = _kernel_tables(beta, mu, h, n)
    avg = np.diff(m0) / _LD(h)           # cell averages of K
    wa = (k0[1:] - avg).astype(float)
    wb = (avg - k0[:-1]).astype(float)
    return _readonly(wa, wb)


@lru_cache(maxsize=64)
def _convolution_weights(beta: float, mu: float, h: float, n: int):
    """Cell weights of int g(x - r) K(r) dr for the interpolant of g."""
    if mu == 0.0:
        half = np.full(n - 1, 0.5 * h)
        return _readonly(half, half.copy())
    tau, _, m0, m1 = _kernel_tables(beta, mu, h, n)
    k = np.arange(n - 1, dtype=_LD)
    hl = _LD(h)
    d0 = np.diff(m0)
    d1 = np.diff(tau * m0 - m1)         # cell integrals of r K(r)
    wa = ((d1 - k * hl * d0) / hl).astype(float)
    wb = (((k + 1) * hl * d0 - d1) / hl).astype(float)
    return _readonly(wa, wb)


@lru_cache(maxsize=64)
def _rl_weights(beta: float, h: float, n: int):
    """Cell weights of int g(x - r) r^(beta-1) dr / Gamma(beta)."""
    k = np.arange(n - 1, dtype=_LD)
    b = _LD(beta)
    p0 = ((k + 1) ** b - k**b) / b                       # int r^(b-1), unit spacing
    p1 = ((k + 1) ** (b + 1) - k ** (b + 1)) / (b + 1)   # int r^b
    scale = _LD(h) ** b / _LD(gamma_fn(beta))
    wa = (scale * (p1 - k * p0)).astype(float)
    wb = (scale * ((k + 1) * p0 - p1)).astype(float)
    return _readonly(wa, wb)


def _convolve(g: np.ndarray, wa: np.ndarray, wb: np.ndarray) -> np.ndarray:
    """out_i = sum_{k<i} wa_k g_{i-k-1} + wb_k g_{i-k}  (direct path)."""
    n = g.size
    out = np.zeros(n)
    out[1:] = np.convolve(g, wa)[: n - 1]
    wb_full = np.convolve(g, wb)[:n]
    wb_full[: n - 1] -= wb * g[0]
    return out + wb_full


def _toeplitz(wa: np.ndarray, wb: np.ndarray) -> np.ndarray:
    """Matrix of :func:`_convolve` (matrix path)."""
    n = wa.size + 1
    ca = np.concatenate([[0.0], wa])
    cb = np.concatenate([wb, [0.0]])
    i, j = np.indices((n, n))
    d = i - j
    lower = d >= 0
    dd = np.where(lower, d, 0)
    mat = np.where(lower, ca[dd], 0.0)
    mat += np.where(lower & (j >= 1), cb[dd], 0.0)
    return mat


def _check_function(grid: Grid, f: GridFunction) -> None:
    if f.grid != grid:
        raise UsageError("grid function is sampled on a different grid")


def _left_apply(params, wvals, fvals, kind, h):
    n = fvals.size
    g = wvals * fvals
    if kind == "derivative":
        wa, wb = _derivative_weights(params.beta, params.mu, h, n)
        return (g + _convolve(g, wa, wb)) / (params.phi * wvals)
    if params.psi == 0.0:
        return params.phi * fvals
    wa, wb = _rl_weights(params.beta, h, n)
    return params.phi * fvals + params.psi * _convolve(g, wa, wb) / wvals


def apply_operator(params: OperatorParams, w: WeightFunction, f: GridFunction,
                   side: str, kind: str) -> GridFunction:
    """Direct evaluation of one of the four operators."""
    if side not in SIDES or kind not in KINDS:
        raise UsageError(f"side must be in {SIDES} and kind in {KINDS}")
    grid = f.grid
    wvals = w.samples(grid)
    if side == "left":
        out = _left_apply(params, wvals, f.values, kind, grid.h)
    else:
        out = _left_apply(params, wvals[::-1], f.values[::-1], kind, grid.h)[::-1]
    return GridFunction(grid, out)


def left_conv(params: OperatorParams, w: WeightFunction, f: GridFunction) -> GridFunction:
    """C(t_i) = int_a^{t_i} (w f)(s) K(t_i - s) ds by product trapezoid."""
    grid = f.grid
    g = w.samples(grid) * f.values
    wa, wb = _convolution_weights(params.beta, params.mu, grid.h, grid.n)
    return GridFunction(grid, _convolve(g, wa, wb))


def left_deriv(params: OperatorParams, w: WeightFunction, f: GridFunction) -> GridFunction:
    """Left weighted generalized fractional derivative at the nodes."""
    return apply_operator(params, w, f, "left", "derivative")


def right_deriv(params: OperatorParams, w: WeightFunction, f: GridFunction) -> GridFunction:
    """Right weighted generalized fractional derivative (mirror of the left one)."""
    return apply_operator(params, w, f, "right", "derivative")


def left_integral(params: OperatorParams, w: WeightFunction, f: GridFunction) -> GridFunction:
    """``phi f + psi * I_RL^beta f`` with the left weighted RL integral."""
    return apply_operator(params, w, f, "left", "integral")


def right_integral(params: OperatorParams, w: WeightFunction, f: GridFunction) -> GridFunction:
    return apply_operator(params, w, f, "right", "integral")


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense ``n x n`` matrix M with ``(op f)(t_i) ~ sum_j M[i, j] f(t_j)``."""

    grid: Grid
    side: str
    kind: str
    entries: np.ndarray = field(repr=False)

    def apply(self, f: GridFunction) -> GridFunction:
        _check_function(self.grid, f)
        return GridFunction(self.grid, self.entries @ f.values)


def _left_matrix(params, wvals, kind, h):
    n = wvals.size
    if kind == "derivative":
        wa, wb = _derivative_weights(params.beta, params.mu, h, n)
        core = _toeplitz(wa, wb)
        core[np.diag_indices(n)] += 1.0
        return core * (wvals[None, :] / (params.phi * wvals[:, None]))
    mat = params.phi * np.eye(n)
    if params.psi != 0.0:
        wa, wb = _rl_weights(params.beta, h, n)
        mat += params.psi * _toeplitz(wa, wb) * (wvals[None, :] / wvals[:, None])
    return mat


def assemble_matrix(params: OperatorParams, w: WeightFunction, grid: Grid,
                    side: str, kind: str) -> OperatorMatrix:
    """Dense matrix of the operator, built from the same cell weights."""
    if side not in SIDES or kind not in KINDS:
        raise UsageError(f"side must be in {SIDES} and kind in {KINDS}")
    wvals = w.samples(grid)
    if side == "left":
        mat = _left_matrix(params, wvals, kind, grid.h)
    else:
        mat = np.ascontiguousarray(_left_matrix(params, wvals[::-1], kind, grid.h)[::-1, ::-1])
    mat.setflags(write=False)
    return OperatorMatrix(grid, side, kind, mat)
