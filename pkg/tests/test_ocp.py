import numpy as np
import pytest

from oracles import direct_transcription
from wgfrac.errors import NonConvergenceError, ValidationError
from wgfrac.grid import Grid, GridFunction, WeightFunction
from wgfrac.ocp import (ControlProblem, Fixed, Free, SolverConfig, adjoint_solve, forward_solve,
                        hamiltonian, shoot_terminal, solve, sweep)
from wgfrac.operators import assemble_matrix, make_params
from wgfrac.variational import apply_preset

UNIT = WeightFunction.unit()
P = make_params(0.5, 1.0)
INTERIOR = slice(1, -1)


def rel_sup(a, b):
    return np.max(np.abs(a - b)[INTERIOR]) / np.max(np.abs(b[INTERIOR]))


def problem(L="x^2 + u^2", f="-x + u", n=201, x_a=1.0, terminal=Free(), w=UNIT, params=P,
            **solver):
    return ControlProblem(L, f, params, w, Grid(0.0, 1.0, n), x_a, terminal,
                          SolverConfig(**solver))


def test_hamiltonian_examples():
    pr = problem(f="u")
    assert hamiltonian(pr, 0.0, 2.0, 3.0, 1.0) == (8.0, 4.0, 5.0)
    assert hamiltonian(pr, 0.3, 2.0, 0.0, 1.5)[0] == 4.0 + 2.25
    pr = problem(L="0", f="x")
    H, Hx, _ = hamiltonian(pr, 0.0, 5.0, 1.0, 0.0)
    assert (H, Hx) == (5.0, 1.0)


@pytest.mark.parametrize("kwargs, match", [
    (dict(L="x^2 + v"), "L may only use"),
    (dict(f="abs(u)"), "abs"),
    (dict(params=make_params(0.0, 1.0)), "alpha"),
])
def test_validation(kwargs, match):
    with pytest.raises(ValidationError, match=match):
        problem(**kwargs)


@pytest.mark.parametrize("cfg", [dict(relaxation=0.0), dict(relaxation=1.5),
                                 dict(tol_stationarity=0.0), dict(max_sweeps=0)])
def test_solver_config_validation(cfg):
    with pytest.raises(ValidationError):
        SolverConfig(**cfg)


def test_forward_zero_dynamics():
    pr = problem(f="0", x_a=0.0)
    fw = forward_solve(pr, GridFunction(pr.grid, np.ones(pr.grid.n)))
    assert fw.x.sup() == 0.0 and fw.state_residual == 0.0


def test_forward_constant_control():
    # D x = 1, x(0) = 0 has the continuum solution x = (1 + t) / 2 for t > 0
    pr = problem(L="u^2", f="u", n=2001, x_a=0.0)
    fw = forward_solve(pr, GridFunction(pr.grid, np.ones(pr.grid.n)))
    exact = 0.5 * (1 + pr.grid.nodes)
    assert np.max(np.abs(fw.x.values - exact)[1:]) <= 1e-3 * np.max(exact)
    assert fw.compat_initial == pytest.approx(1.0)
    assert fw.state_residual <= 1e-12


def test_forward_nonlinear_residual():
    pr = problem(f="sin(x) - x^3/3 + u*t", n=301)
    fw = forward_solve(pr, GridFunction.sample(pr.grid, np.cos))
    assert fw.state_residual <= 1e-12
    assert fw.x.values[0] == 1.0


def test_adjoint_trivial():
    pr = problem(L="u^2", f="u")
    z = GridFunction(pr.grid, np.zeros(pr.grid.n))
    ad = adjoint_solve(pr, z, z, 0.0)
    assert ad.lam.sup() == 0.0
    ad = adjoint_solve(pr, z, z, 2.5)
    assert ad.lam.values[-1] == 2.5 and ad.adjoint_residual <= 1e-12


def test_sweep_zero_cost():
    r = sweep(problem(L="u^2", f="u", x_a=0.0))
    assert r.converged and r.cost == 0.0
    assert r.x.sup() == r.lam.sup() == r.u.sup() == 0.0


def _lq_oracle(pr, L, f):
    g = pr.grid
    A = assemble_matrix(pr.params, pr.w, g, "left", "derivative").entries
    return direct_transcription(A, g.nodes, g.trapezoid_weights(), pr.x_a, L, f)


def test_lq_matches_direct_transcription():
    pr = problem(n=401)
    r = solve(pr)
    assert r.converged and r.stationarity_norm <= pr.solver.tol_stationarity
    x, u, lam = _lq_oracle(pr, (lambda t, x, u: x * x + u * u, lambda t, x, u: 2 * x,
                                lambda t, x, u: 2 * u),
                           (lambda t, x, u: u - x, lambda t, x, u: -np.ones_like(x),
                            lambda t, x, u: np.ones_like(x)))
    assert rel_sup(r.u.values, u) <= 1e-3
    assert rel_sup(r.lam.values, lam) <= 1e-2


def test_nonlinear_agreement_shrinks_with_h():
    # the sweep's adjoint is the right derivative, not the transpose of the
    # state matrix, so the two discrete optima differ by O(h)
    L = (lambda t, x, u: x * x + u * u + t * u, lambda t, x, u: 2 * x,
         lambda t, x, u: 2 * u + t)
    f = (lambda t, x, u: np.sin(x) - x**3 / 3 + u, lambda t, x, u: np.cos(x) - x * x,
         lambda t, x, u: np.ones_like(x))
    gaps = []
    for n in (101, 201):
        pr = problem("x^2 + u^2 + t*u", "sin(x) - x^3/3 + u", n=n, x_a=0.8,
                     w=WeightFunction("exp", k=0.4))
        r = solve(pr)
        assert r.converged
        gaps.append(rel_sup(r.u.values, _lq_oracle(pr, L, f)[1]))
    assert gaps[1] < 0.6 * gaps[0] and gaps[1] <= 5e-3


def test_certificate_and_descent():
    r = solve(problem(n=301, w=WeightFunction("power", k=0.5)))
    assert r.converged
    assert r.state_residual <= 1e-9 and r.adjoint_residual <= 1e-9
    assert r.stationarity_norm <= 1e-9
    merits = [h["merit"] for h in r.history]
    assert all(b <= a + 1e-12 for a, b in zip(merits, merits[1:]))


def test_max_sweeps_is_not_an_exception():
    r = sweep(problem(max_sweeps=1))
    assert not r.converged and r.sweeps_used == 1 and r.message == "max_sweeps reached"


def test_shoot_at_free_endpoint_returns_immediately():
    free = solve(problem())
    r = shoot_terminal(problem(terminal=Fixed(float(free.x.values[-1]))))
    assert r.lambda_b == 0.0 and len(r.shooting_history) == 1
    np.testing.assert_array_equal(r.u.values, free.u.values)


def test_shoot_reaches_target():
    r = solve(problem(L="u^2", f="u", x_a=0.0, terminal=Fixed(1.0)))
    assert r.converged and abs(r.x.values[-1] - 1.0) <= 1e-6


def test_shoot_nonlinear_target():
    r = solve(problem("x^2 + u^2 + t*u", "sin(x) + u", n=101, x_a=0.3, terminal=Fixed(0.7)))
    assert r.converged and abs(r.x.values[-1] - 0.7) <= 1e-8


def test_unreachable_target():
    with pytest.raises(NonConvergenceError) as info:
        solve(problem(L="u^2", f="0", x_a=0.0, terminal=Fixed(1.0)))
    assert info.value.history


@pytest.mark.parametrize("preset, beta, weighted", [("caputo-fabrizio", 1.0, False),
                                                    ("atangana-baleanu", 0.5, False),
                                                    ("weighted-ab", 0.5, True)])
def test_preset_equivalence_bit_identical(preset, beta, weighted):
    w = WeightFunction("exp", k=0.3) if weighted else UNIT
    params, w_p = apply_preset(preset, 0.5, "unit", w if weighted else None)
    a = solve(problem(params=params, w=w_p, n=151))
    b = solve(problem(params=make_params(0.5, beta), w=w, n=151))
    assert a.to_csv_text() == b.to_csv_text()
    assert a.summary() == b.summary()


def test_csv_header():
    r = solve(problem(n=21))
    assert r.to_csv_text().splitlines()[0] == "t,x,lambda,u,dH_du"
    assert len(r.to_csv_text().splitlines()) == 22
