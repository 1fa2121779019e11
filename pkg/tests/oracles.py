"""Independent reference solutions used by the tests.

Nothing here calls into ``wgfrac.ocp`` or ``wgfrac.variational``; the only
shared ingredient is the left-derivative matrix, which defines the discrete
problem being solved.
"""
from __future__ import annotations

import mpmath
import numpy as np
import scipy.linalg


def ml_half(z: float) -> float:
    """E_{1/2}(z) = exp(z^2) erfc(-z), at 40 digits."""
    with mpmath.workdps(40):
        return float(mpmath.exp(mpmath.mpf(z) ** 2) * mpmath.erfc(-mpmath.mpf(z)))


def _state(A, t, x_a, u, f, fx):
    """Solve A x = f(t, x, u) on rows 1.. with x_0 = x_a (plain Newton)."""
    x = np.full(len(t), float(x_a))
    for _ in range(100):
        r = A @ x - f(t, x, u)
        r[0] = x[0] - x_a
        J = A - np.diag(np.broadcast_to(fx(t, x, u), x.shape))
        J[0] = 0.0
        J[0, 0] = 1.0
        dx = scipy.linalg.solve(J, -r)
        x = x + dx
        if np.max(np.abs(dx)) <= 1e-13 * max(1.0, np.max(np.abs(x))):
            return x
    raise RuntimeError("oracle state solve did not converge")


def direct_transcription(A, t, q, x_a, L, f, tol=1e-11, max_iter=20000):
    """Minimize ``sum q_i L(t_i, x_i, u_i)`` subject to the discrete dynamics.

    ``L`` and ``f`` are triples ``(value, d/dx, d/du)`` of vectorized
    callables.  Unconstrained controls, so the projected gradient method is
    plain gradient descent; Barzilai-Borwein steps on the
    quadrature-scaled gradient.  Returns ``(x, u, multiplier estimate)``.
    """
    Lv, Lx, Lu = L
    fv, fx, fu = f
    n = len(t)

    def gradient(u):
        x = _state(A, t, x_a, u, fv, fx)
        Jx = A - np.diag(fx(t, x, u))
        Jx[0] = 0.0
        Jx[0, 0] = 1.0
        mu = scipy.linalg.solve(Jx.T, q * Lx(t, x, u))
        fu_v = np.array(np.broadcast_to(fu(t, x, u), (n,)), dtype=float)
        fu_v[0] = 0.0
        g = q * Lu(t, x, u) + fu_v * mu
        return x, mu, g / q

    u = np.zeros(n)
    x, mu, g = gradient(u)
    step = 0.1
    for _ in range(max_iter):
        if np.max(np.abs(g)) <= tol:
            break
        u_new = u - step * g
        x, mu, g_new = gradient(u_new)
        s, y = u_new - u, g_new - g
        sy = float(s @ (q * y))
        step = float(s @ (q * s)) / sy if sy > 0 else 0.1
        u, g = u_new, g_new
    else:
        raise RuntimeError("direct transcription did not converge")
    return x, u, mu / q


def lq_least_squares(A, q, x_a, a_x, c_x=1.0, c_u=1.0):
    """Exact minimizer of ``sum q (c_x x^2 + c_u u^2)`` with ``A x = a_x x + u``."""
    n = len(q)
    S = A - a_x * np.eye(n)
    S[0] = 0.0
    S[0, 0] = 1.0
    E = np.eye(n)
    E[0, 0] = 0.0
    e0 = np.zeros(n)
    e0[0] = x_a
    Sinv_E = scipy.linalg.solve(S, E)
    x0 = scipy.linalg.solve(S, e0)
    rows = np.vstack([np.sqrt(c_x * q)[:, None] * Sinv_E, np.sqrt(c_u * q)[:, None] * np.eye(n)])
    rhs = np.concatenate([-np.sqrt(c_x * q) * x0, np.zeros(n)])
    u = np.linalg.lstsq(rows, rhs, rcond=None)[0]
    return x0 + Sinv_E @ u, u


def variational_least_squares(A, q, x_a, x_b, c_v=1.0, c_x=1.0):
    """Minimize ``sum q (c_v v^2 + c_x x^2)`` with ``v = A x`` and both ends fixed.

    At ``t_0`` the derivative slot is a free variable (the discrete
    dynamics do not constrain it), which makes ``v_0 = 0`` optimal.
    """
    n = len(q)
    inner = slice(1, n - 1)
    fixed = np.zeros(n)
    fixed[0], fixed[-1] = x_a, x_b
    sv, sx = np.sqrt(c_v * q[1:]), np.sqrt(c_x * q[1:])
    M = np.vstack([sv[:, None] * A[1:, inner], sx[:, None] * np.eye(n)[1:, inner]])
    rhs = -np.concatenate([sv * (A[1:] @ fixed), sx * fixed[1:]])
    x = fixed.copy()
    x[inner] = np.linalg.lstsq(M, rhs, rcond=None)[0]
    return x


def ml_mp(beta: float, z: float, dps: int = 50):
    """Plain power series of E_beta(z) in mpmath (moderate |z| only)."""
    with mpmath.workdps(dps):
        z = mpmath.mpf(z)
        return mpmath.nsum(lambda j: z**j / mpmath.gamma(beta * j + 1), [0, mpmath.inf])


def kernel_moments_mp(beta: float, mu: float, tau: float):
    """``(int_0^tau K, int_0^tau (tau - s) K)`` by mpmath quadrature."""
    with mpmath.workdps(30):
        K = lambda s: ml_mp(beta, -mu * s**beta, 30)
        m0 = mpmath.quad(K, [0, tau])
        m1 = mpmath.quad(lambda s: (tau - s) * K(s), [0, tau])
        return float(m0), float(m1)
