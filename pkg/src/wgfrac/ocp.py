"""Optimal control with a weighted generalized fractional state equation.

Minimize ``J = int_a^b L(t, x, u) dt`` subject to ``D_left x = f(t, x, u)``,
``x(a) = x_a`` and either a free or a fixed terminal state.  The solver
iterates the necessary conditions

* state:        ``D_left x = dH/dlambda = f``
* adjoint:      ``w^2 D_right(lambda / w^2) = dH/dx``
* stationarity: ``dH/du = 0``

with ``H = L + lambda f``, by a forward-backward sweep.  A fixed terminal
state is reached by secant shooting on ``lambda(b)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Union

import numpy as np
import scipy.linalg

from .errors import NonConvergenceError, ValidationError
from .expr import Expr, eval_with_partials, evaluate, functions_used, parse, variables
from .grid import Grid, GridFunction, WeightFunction
from .operators import OperatorParams, assemble_matrix

__all__ = [
    "Free", "Fixed", "SolverConfig", "ControlProblem", "SweepResult",
    "hamiltonian", "forward_solve", "adjoint_solve", "cost", "sweep",
    "shoot_terminal", "solve",
]

_MAX_HALVINGS = 30
_SUFFICIENT = 1e-4
_NEWTON_TOL = 1e-12
_NEWTON_MAX = 200


@dataclass(frozen=True)
class Free:
    """Free terminal state, ``lambda(b) = 0``."""

    mode = "free"


@dataclass(frozen=True)
class Fixed:
    """Fixed terminal state ``x(b) = x_b``."""

    x_b: float
    mode = "fixed"


Terminal = Union[Free, Fixed]


@dataclass(frozen=True)
class SolverConfig:
    max_sweeps: int = 500
    tol_stationarity: float = 1e-9
    tol_state: float = 1e-9
    relaxation: float = 1.0
    step0: float = 0.5
    shooting_tol: float = 1e-8
    shooting_max_iters: int = 30

    def __post_init__(self):
        for name in ("tol_stationarity", "tol_state", "step0", "shooting_tol"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValidationError(f"solver.{name} must be a positive number, got {val!r}")
        if not 0 < self.relaxation <= 1:
            raise ValidationError(f"solver.relaxation must lie in (0, 1], got {self.relaxation!r}")
        for name in ("max_sweeps", "shooting_max_iters"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise ValidationError(f"solver.{name} must be a positive integer")


def _as_expr(value, name, allowed):
    e = parse(value) if isinstance(value, str) else value
    extra = variables(e) - set(allowed)
    if extra:
        raise ValidationError(f"{name} may only use {sorted(allowed)}, found {sorted(extra)}")
    if "abs" in functions_used(e):
        raise ValidationError(f"{name} uses abs, which is not differentiable")
    return e


@dataclass(frozen=True)
class ControlProblem:
    """Data of one control problem; ``L`` and ``f`` may be given as strings."""

    L: Expr
    f: Expr
    params: OperatorParams
    w: WeightFunction
    grid: Grid
    x_a: float
    terminal: Terminal = Free()
    solver: SolverConfig = SolverConfig()

    def __post_init__(self):
        object.__setattr__(self, "L", _as_expr(self.L, "L", ("t", "x", "u")))
        object.__setattr__(self, "f", _as_expr(self.f, "f", ("t", "x", "u")))
        if self.params.alpha == 0.0:
            raise ValidationError(
                "alpha = 0 turns the state equation into the algebraic relation "
                "x = f(t, x, u); control problems need alpha > 0")
        if not math.isfinite(self.x_a):
            raise ValidationError("x_a must be finite")
        if isinstance(self.terminal, Fixed) and not math.isfinite(self.terminal.x_b):
            raise ValidationError("x_b must be finite")
        self.w.samples(self.grid)


@dataclass(frozen=True, eq=False)
class SweepResult:
    x: GridFunction
    lam: GridFunction
    u: GridFunction
    dH_du: GridFunction
    converged: bool
    sweeps_used: int
    stationarity_norm: float
    state_residual: float
    adjoint_residual: float
    compat_initial: float
    compat_terminal: float
    stationarity_initial: float
    cost: float
    lambda_b: float = 0.0
    history: list = field(default_factory=list, repr=False)
    shooting_history: list = field(default_factory=list, repr=False)
    message: str = ""

    def summary(self) -> dict:
        keys = ("converged", "sweeps_used", "cost", "stationarity_norm", "state_residual",
                "adjoint_residual", "compat_initial", "compat_terminal", "stationarity_initial",
                "lambda_b", "message")
        out = {k: getattr(self, k) for k in keys}
        out["x_b"] = float(self.x.values[-1])
        out["shooting_history"] = list(self.shooting_history)
        return out

    def to_csv_text(self) -> str:
        from .grid import format_float
        rows = ["t,x,lambda,u,dH_du"]
        cols = (self.x.t, self.x.values, self.lam.values, self.u.values, self.dH_du.values)
        rows += [",".join(format_float(v) for v in r) for r in zip(*cols)]
        return "\n".join(rows) + "\n"


class ForwardResult(NamedTuple):
    x: GridFunction
    state_residual: float
    compat_initial: float


class AdjointResult(NamedTuple):
    lam: GridFunction
    adjoint_residual: float


def hamiltonian(problem: ControlProblem, t, x, lam, u):
    """``(H, dH/dx, dH/du)`` with ``H = L + lam * f``; arrays broadcast."""
    env = dict(t=t, x=x, u=u, v=0.0)
    lv, lx, lu, _ = eval_with_partials(problem.L, env)
    fv, fx, fu, _ = eval_with_partials(problem.f, env)
    return lv + lam * fv, lx + lam * fx, lu + lam * fu


def _matrices(problem):
    # cached on the instance: the same problem is swept many times
    cache = problem.__dict__.get("_mats")
    if cache is None:
        g = problem.grid
        wv = problem.w.samples(g)
        a_l = assemble_matrix(problem.params, problem.w, g, "left", "derivative").entries
        a_r = assemble_matrix(problem.params, problem.w, g, "right", "derivative").entries
        conj = (wv**2)[:, None] * a_r / (wv**2)[None, :]
        cache = (a_l, conj)
        object.__setattr__(problem, "_mats", cache)
    return cache


def _factor(problem, key, mat, row, fx):
    """LU of ``mat - diag(fx)`` with ``row`` replaced by a unit row.

    The last factorization per ``key`` is kept, so linear dynamics (constant
    ``fx``) factor once per problem.
    """
    fx = np.array(np.broadcast_to(fx, (mat.shape[0],)), dtype=float)
    cache = problem.__dict__.setdefault("_lu", {})
    hit = cache.get(key)
    if hit is not None and np.array_equal(hit[0], fx):
        return hit[1]
    jac = mat - np.diag(fx)
    jac[row] = 0.0
    jac[row, row] = 1.0
    with np.errstate(all="ignore"):
        lu = scipy.linalg.lu_factor(jac, check_finite=False)
    if not np.all(np.isfinite(lu[0])) or np.any(np.diag(lu[0]) == 0):
        raise NonConvergenceError(f"{key} system is singular")
    cache[key] = (fx, lu)
    return lu


def cost(problem: ControlProblem, x: GridFunction, u: GridFunction) -> float:
    """Trapezoid value of ``int L(t, x, u) dt``."""
    vals = evaluate(problem.L, dict(t=x.t, x=x.values, u=u.values, v=0.0))
    return float(problem.grid.trapezoid_weights() @ np.broadcast_to(vals, x.t.shape))


def forward_solve(problem: ControlProblem, u: GridFunction) -> ForwardResult:
    """Solve ``A_left x = f(t, x, u)`` at nodes ``1..n-1`` with ``x_0 = x_a``.

    Newton's method on the dense discrete system; linear dynamics converge
    in one step.
    """
    grid = problem.grid
    t = grid.nodes
    a_l, _ = _matrices(problem)
    x = np.full(grid.n, float(problem.x_a))
    history = []
    for _ in range(_NEWTON_MAX):
        fv, fx, _, _ = eval_with_partials(problem.f, dict(t=t, x=x, u=u.values, v=0.0))
        res = a_l @ x - fv
        res[0] = x[0] - problem.x_a
        lu = _factor(problem, "state", a_l, 0, fx)
        dx = scipy.linalg.lu_solve(lu, -res, check_finite=False)
        x = x + dx
        step = float(np.max(np.abs(dx)))
        history.append(step)
        if not np.all(np.isfinite(x)):
            break
        if step <= _NEWTON_TOL * max(1.0, float(np.max(np.abs(x)))):
            fv = evaluate(problem.f, dict(t=t, x=x, u=u.values, v=0.0))
            resid = float(np.max(np.abs((a_l @ x - fv)[1:])))
            f_a = float(np.broadcast_to(fv, t.shape)[0])
            compat = abs(f_a - problem.x_a / problem.params.phi)
            return ForwardResult(GridFunction(grid, x), resid, compat)
    raise NonConvergenceError("state equation: Newton iteration did not converge", history)


def adjoint_solve(problem: ControlProblem, x: GridFunction, u: GridFunction,
                  lambda_b: float) -> AdjointResult:
    """Solve ``W^2 A_right W^-2 lambda = dH/dx`` with ``lambda(b) = lambda_b``.

    ``dH/dx`` is affine in ``lambda``, so this is one dense linear solve.
    """
    grid = problem.grid
    t = grid.nodes
    _, b_r = _matrices(problem)
    _, lx, _, _ = eval_with_partials(problem.L, dict(t=t, x=x.values, u=u.values, v=0.0))
    _, fx, _, _ = eval_with_partials(problem.f, dict(t=t, x=x.values, u=u.values, v=0.0))
    rhs = np.array(np.broadcast_to(lx, t.shape), dtype=float)
    rhs[-1] = lambda_b
    lam = scipy.linalg.lu_solve(_factor(problem, "adjoint", b_r, -1, fx), rhs, check_finite=False)
    resid = float(np.max(np.abs((b_r @ lam - lx - lam * fx)[:-1])))
    return AdjointResult(GridFunction(grid, lam), resid)


def _state(problem, u, lambda_b):
    """State, adjoint, and the stationarity residual that the sweep drives to zero.

    Row 0 of the state system carries ``x(a) = x_a`` instead of the
    dynamics, so no multiplier acts there and the condition at ``t = a``
    is ``dL/du = 0``; the full ``dH/du(a)`` is reported separately.
    """
    t = problem.grid.nodes
    fw = forward_solve(problem, u)
    ad = adjoint_solve(problem, fw.x, u, lambda_b)
    _, _, hu = hamiltonian(problem, t, fw.x.values, ad.lam.values, u.values)
    hu = np.array(np.broadcast_to(hu, t.shape), dtype=float)
    _, _, lu, _ = eval_with_partials(problem.L, dict(t=t[0], x=fw.x.values[0], u=u.values[0], v=0.0))
    grad = hu.copy()
    grad[0] = lu
    return fw, ad, hu, grad


def sweep(problem: ControlProblem, lambda_b: float = 0.0,
          u0: GridFunction | None = None) -> SweepResult:
    """Forward-backward sweep for a given terminal multiplier ``lambda_b``.

    Each sweep moves ``u`` against the stationarity residual ``dH/du`` and
    halves the step (up to 30 times) until the trial point is acceptable
    to a filter of earlier iterates.

    Two measures enter the filter.  ``theta`` is the quadrature-weighted
    L2 norm of the residual.  The merit is ``J + nu * x(b)`` with
    ``nu = q_b * ((A_bb - df/dx(b)) * lambda_b - dL/dx(b))``, frozen for
    each sweep (``q_b`` is the last trapezoid weight and ``A_bb`` the last
    diagonal entry of the left derivative matrix).  This term moves the
    discrete multiplier of the terminal row onto ``lambda_b``; without it
    the merit is minimized by a different ``u(b)`` than the sweep's fixed
    point.  A trial is acceptable when, against every filter entry, it
    lowers ``theta`` by a factor ``1 - 1e-4`` or lowers the merit by
    ``1e-4 * theta_j**2``.

    The merit and the residual still disagree by O(h) in the interior,
    because the adjoint equation uses the right derivative rather than the
    transpose of the state matrix; the filter lets ``theta`` decide once
    the merit stops resolving progress.

    The iteration stops when ``sup |dH/du| <= tol_stationarity``, when
    ``max_sweeps`` is reached, or when no step size is acceptable.
    """
    cfg = problem.solver
    grid = problem.grid
    q = grid.trapezoid_weights()
    a_bb = _matrices(problem)[0][-1, -1]

    def terminal_weight(x, u):
        env = dict(t=grid.b, x=x.values[-1], u=u.values[-1], v=0.0)
        _, lx_b, _, _ = eval_with_partials(problem.L, env)
        _, fx_b, _, _ = eval_with_partials(problem.f, env)
        return float(q[-1] * ((a_bb - fx_b) * lambda_b - lx_b))

    def theta(grad):
        return float(np.sqrt(q @ grad**2))

    def acceptable(J_t, xb_t, th_t, nu):
        m_t = J_t + nu * xb_t
        return all(th_t <= (1.0 - _SUFFICIENT) * th_j or m_t <= J_j + nu * xb_j - _SUFFICIENT * th_j**2
                   for J_j, xb_j, th_j in filt)

    def first_step():
        # Barzilai-Borwein estimate from the previous sweep, within [step0 / 2^30, step0 * 2^10]
        if prev is None:
            return cfg.step0
        du, dg = u.values - prev[0], grad - prev[1]
        curv = float(q @ (du * dg))
        if not curv > 0:
            return cfg.step0
        bb = float(q @ du**2) / curv / cfg.relaxation
        return min(max(bb, cfg.step0 * 2.0**-_MAX_HALVINGS), cfg.step0 * 2.0**10)

    prev = None
    u = u0 if u0 is not None else GridFunction(grid, np.zeros(grid.n))
    fw, ad, hu, grad = _state(problem, u, lambda_b)
    J = cost(problem, fw.x, u)
    th = theta(grad)
    filt = [(J, float(fw.x.values[-1]), th)]
    history = [{"sweep": 0, "cost": J, "merit": J + terminal_weight(fw.x, u) * fw.x.values[-1],
                "accepted_by": "", "stationarity": float(np.max(np.abs(grad))), "step": 0.0}]
    message = "max_sweeps reached"
    sweeps = 0
    while sweeps < cfg.max_sweeps:
        if np.max(np.abs(grad)) <= cfg.tol_stationarity:
            message = "stationarity tolerance met"
            break
        nu = terminal_weight(fw.x, u)
        M = J + nu * float(fw.x.values[-1])
        s = first_step()
        accepted = None
        for _ in range(_MAX_HALVINGS + 1):
            trial = GridFunction(grid, u.values - cfg.relaxation * s * grad)
            state_t = _state(problem, trial, lambda_b)
            x_t = state_t[0].x
            J_t, th_t = cost(problem, x_t, trial), theta(state_t[3])
            if acceptable(J_t, float(x_t.values[-1]), th_t, nu):
                M_t = J_t + nu * float(x_t.values[-1])
                rule = "merit" if M_t <= M - _SUFFICIENT * th**2 else "stationarity"
                accepted = (trial, rule, state_t, J_t, th_t, M_t)
                break
            s *= 0.5
        if accepted is None:
            message = "line search found no step acceptable to the filter"
            break
        prev = (u.values, grad)
        u, rule, (fw, ad, hu, grad), J, th, M = accepted
        filt.append((J, float(fw.x.values[-1]), th))
        sweeps += 1
        history.append({"sweep": sweeps, "cost": J, "merit": M, "accepted_by": rule,
                        "stationarity": float(np.max(np.abs(grad))), "step": s})
    stat = float(np.max(np.abs(grad)))
    converged = stat <= cfg.tol_stationarity and fw.state_residual <= cfg.tol_state
    t = grid.nodes
    _, hx_all, _ = hamiltonian(problem, t, fw.x.values, ad.lam.values, u.values)
    compat_terminal = abs(float(np.broadcast_to(hx_all, t.shape)[-1])
                          - lambda_b / problem.params.phi)
    return SweepResult(
        x=fw.x, lam=ad.lam, u=u, dH_du=GridFunction(grid, hu),
        converged=bool(converged), sweeps_used=sweeps, stationarity_norm=stat,
        state_residual=fw.state_residual, adjoint_residual=ad.adjoint_residual,
        compat_initial=fw.compat_initial, compat_terminal=compat_terminal,
        stationarity_initial=abs(float(hu[0])), cost=J,
        lambda_b=float(lambda_b), history=history, message=message)


def shoot_terminal(problem: ControlProblem) -> SweepResult:
    """Secant iteration on ``c = lambda(b)`` until ``|x(b) - x_b| <= shooting_tol``."""
    if not isinstance(problem.terminal, Fixed):
        raise ValidationError("shoot_terminal needs a fixed terminal state")
    cfg = problem.solver
    target = problem.terminal.x_b
    hist = []

    def run(c, u0=None):
        res = sweep(problem, c, u0)
        mismatch = float(res.x.values[-1] - target)
        hist.append({"lambda_b": float(c), "mismatch": mismatch,
                     "converged": res.converged, "sweeps": res.sweeps_used})
        return res, mismatch

    def done(res):
        return replace(res, shooting_history=list(hist))

    c0, c1 = 0.0, 1.0
    r0, m0 = run(c0)
    if abs(m0) <= cfg.shooting_tol:
        return done(r0)
    r1, m1 = run(c1, r0.u)
    for _ in range(cfg.shooting_max_iters):
        if abs(m1) <= cfg.shooting_tol:
            return done(r1)
        if m1 == m0 or not math.isfinite(m1):
            raise NonConvergenceError(
                "shooting stagnated: terminal state does not respond to lambda(b)", hist)
        c2 = c1 - m1 * (c1 - c0) / (m1 - m0)
        if not math.isfinite(c2):
            raise NonConvergenceError("shooting produced a non-finite multiplier", hist)
        c0, m0 = c1, m1
        r1, m1 = run(c2, r1.u)
        c1 = c2
    if abs(m1) <= cfg.shooting_tol:
        return done(r1)
    raise NonConvergenceError(
        f"shooting did not reach |x(b) - x_b| <= {cfg.shooting_tol} "
        f"in {cfg.shooting_max_iters} iterations", hist)


def solve(problem: ControlProblem) -> SweepResult:
    """Dispatch on the terminal condition."""
    if isinstance(problem.terminal, Fixed):
        return shoot_terminal(problem)
    return sweep(problem, 0.0)
