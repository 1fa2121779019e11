"""Mittag-Leffler functions E_beta(z) and E_{beta,gamma}(z) for real arguments.

Evaluation picks, per argument, the first route that meets the accuracy
contract:

1. closed forms (``beta = 1``: exponentials; ``beta = 2, gamma = 1``: cos/cosh),
2. the algebraic asymptotic expansion for ``0 < beta < 1`` and ``z <= -1``,
   truncated at its smallest term,
3. the power series by compensated Horner in long double, with coefficients
   ``1/Gamma(beta*j + gamma)`` from mpmath stored as hi/lo pairs,
4. the power series in mpmath arbitrary precision, with working precision
   sized from the largest series term so that cancellation is harmless.

The array entry point :func:`ml_array` returns ``numpy.longdouble`` so that
kernel moment differences downstream keep a few digits beyond double.
"""
from __future__ import annotations

import math
import threading

import mpmath
import numpy as np
from scipy.special import gammaln

from .errors import DomainError, EvaluationError

__all__ = ["gamma_fn", "mittag_leffler", "mittag_leffler2", "ml_array"]

TERM_CAP = 10_000
_LD = np.longdouble
_LD_EPS = float(np.finfo(np.longdouble).eps)
_ASYMPTOTIC_TERMS = 200
# relative error budget of the extended-precision routes
_REL_TARGET = 1e-16

_cache_lock = threading.Lock()
_series_coeffs: dict[tuple[float, float], np.ndarray] = {}
_mp_coeffs: dict[tuple[float, float, int], list] = {}
_asym_coeffs: dict[tuple[float, float], np.ndarray] = {}


def gamma_fn(x: float) -> float:
    """Gamma function with poles reported as :class:`DomainError`."""
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"gamma_fn: non-finite argument {x!r}")
    if x <= 0 and x == math.floor(x):
        raise DomainError(f"gamma_fn: pole at non-positive integer {x!r}")
    try:
        return math.gamma(x)
    except OverflowError as exc:
        raise DomainError(f"gamma_fn: overflow at {x!r}") from exc


def _check_params(beta, gamma):
    beta = float(beta)
    gamma = float(gamma)
    if not (math.isfinite(beta) and beta > 0):
        raise DomainError(f"Mittag-Leffler parameter beta must be > 0, got {beta!r}")
    if not (math.isfinite(gamma) and gamma > 0):
        raise DomainError(f"Mittag-Leffler parameter gamma must be > 0, got {gamma!r}")
    return beta, gamma


def _mp_to_ld(value) -> np.longdouble:
    """Round an mpf to the nearest long double, exactly."""
    with mpmath.workprec(64):
        y = +value
    sign, man, exp, _ = y._mpf_
    if not man:
        return _LD(0)
    return np.ldexp(_LD(-int(man) if sign else int(man)), int(exp))


def _series_coefficients(beta: float, gamma: float, count: int):
    """1/Gamma(beta*j + gamma) for j < count as (hi, lo) long double pairs."""
    key = (beta, gamma)
    with _cache_lock:
        have = _series_coeffs.get(key)
        if have is not None and have.shape[1] >= count:
            return have[0, :count], have[1, :count]
        start = 0 if have is None else have.shape[1]
        size = max(count, 2 * start, 64)
        extra = np.empty((2, size - start), dtype=_LD)
        with mpmath.workdps(45):
            b = mpmath.mpf(beta)
            g = mpmath.mpf(gamma)
            for j in range(start, size):
                c = mpmath.rgamma(b * j + g)
                hi = _mp_to_ld(c)
                extra[0, j - start] = hi
                extra[1, j - start] = _mp_to_ld(c - _ld_to_mp(hi))
        full = extra if have is None else np.concatenate([have, extra], axis=1)
        _series_coeffs[key] = full
        return full[0, :count], full[1, :count]


def _ld_to_mp(x):
    m, e = np.frexp(x)
    return mpmath.ldexp(mpmath.mpf(int(np.ldexp(m, 64))), int(e) - 64)


def _asymptotic_coefficients(beta: float, gamma: float) -> np.ndarray:
    """1/Gamma(gamma - beta*k) for k = 1.._ASYMPTOTIC_TERMS (zero at poles)."""
    key = (beta, gamma)
    with _cache_lock:
        have = _asym_coeffs.get(key)
        if have is None:
            have = np.empty(_ASYMPTOTIC_TERMS, dtype=_LD)
            with mpmath.workdps(30):
                b = mpmath.mpf(beta)
                g = mpmath.mpf(gamma)
                for k in range(1, _ASYMPTOTIC_TERMS + 1):
                    have[k - 1] = _mp_to_ld(mpmath.rgamma(g - b * k))
            _asym_coeffs[key] = have
        return have


def _mp_coefficients(beta: float, gamma: float, count: int, dps: int) -> list:
    key = (beta, gamma, dps)
    with _cache_lock:
        have = _mp_coeffs.get(key, [])
        if len(have) < count:
            with mpmath.workdps(dps):
                b = mpmath.mpf(beta)
                g = mpmath.mpf(gamma)
                have = have + [mpmath.rgamma(b * j + g) for j in range(len(have), count)]
            _mp_coeffs[key] = have
        return have[:count]


def _log_terms(beta, gamma, absz, count):
    """log|z^j / Gamma(beta j + gamma)| for j < count (absz > 0)."""
    j = np.arange(count, dtype=float)
    return j * math.log(absz) - gammaln(beta * j + gamma)


def _series_length(beta, gamma, absz):
    """Number of series terms after which the tail is negligible.

    Returns ``(count, log_max_term)``, or ``(None, log_max_term)`` when more
    than TERM_CAP terms would be needed.
    """
    if absz == 0.0:
        return 1, -gammaln(gamma)
    lt = _log_terms(beta, gamma, absz, TERM_CAP + 1)
    peak = int(np.argmax(lt))
    cutoff = min(lt[peak], 0.0) - 50.0
    tail = np.nonzero(lt[peak:] < cutoff)[0]
    if tail.size == 0:
        return None, float(lt[peak])
    return peak + int(tail[0]) + 1, float(lt[peak])


def _closed_form(beta, gamma, z):
    """Closed forms; returns (values, mask of handled entries)."""
    vals = np.zeros(z.shape, dtype=_LD)
    mask = np.zeros(z.shape, dtype=bool)
    if beta == 1.0 and gamma == 1.0:
        return np.exp(z), np.ones(z.shape, dtype=bool)
    if beta == 2.0 and gamma == 1.0:
        neg = z < 0
        vals[neg] = np.cos(np.sqrt(-z[neg]))
        vals[~neg] = np.cosh(np.sqrt(z[~neg]))
        return vals, np.ones(z.shape, dtype=bool)
    if beta == 1.0 and gamma in (2.0, 3.0):
        # E_{1,m+1}(z) = (E_{1,m}(z) - 1/Gamma(m)) / z; stable once |z| >= 1
        mask = np.abs(z) >= 1
        zz = z[mask]
        e = np.expm1(zz) / zz
        if gamma == 3.0:
            e = (e - 1) / zz
        vals[mask] = e
    return vals, mask


def _asymptotic(beta, gamma, z):
    """Algebraic asymptotic expansion for 0 < beta < 1, z < 0.

    Returns (values, accepted mask).  An entry is accepted when the smallest
    term, used as the truncation error estimate, is below the target.
    """
    coeffs = _asymptotic_coefficients(beta, gamma)
    k = np.arange(1, _ASYMPTOTIC_TERMS + 1)
    # |1/Gamma(x)| <= Gamma(1 - x)/pi for x < 1 (reflection); truncating on this
    # envelope keeps near-pole dips from posing as the smallest term
    x = gamma - beta * k
    log_env = np.where(x < 1, gammaln(np.maximum(1 - x, 1e-300)) - math.log(math.pi),
                       -gammaln(np.maximum(x, 1e-300)))
    log_env = np.maximum(log_env, np.log(np.abs(coeffs) + _LD(1e-300)).astype(float))
    logz = np.log(np.abs(z.astype(float)))
    env = log_env[None, :] - k[None, :] * logz[:, None]
    stop = np.argmin(env, axis=1)
    width = max(int(stop.max()), 1)
    powers = np.cumprod(np.broadcast_to((1 / z)[:, None], (len(z), width)), axis=1)
    terms = -coeffs[None, :width] * powers
    keep = k[None, :width] - 1 < stop[:, None]
    vals = np.sum(np.where(keep, terms, 0), axis=1)
    err = np.exp(env[np.arange(len(z)), stop])
    ok = err <= _REL_TARGET * np.abs(vals.astype(float))
    return vals, ok


_SPLIT = _LD(2**32 + 1)


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _two_prod(a, b):
    p = a * b
    ca = _SPLIT * a
    ah = ca - (ca - a)
    al = a - ah
    cb = _SPLIT * b
    bh = cb - (cb - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _series_ld(beta, gamma, z):
    """Compensated Horner in long double with double-word coefficients.

    Returns (values, accepted mask).  The working precision is about 2**-128,
    so the result survives cancellation between terms up to ~1e20 times
    larger than the sum.
    """
    absmax = float(np.max(np.abs(z)))
    count, _ = _series_length(beta, gamma, absmax)
    if count is None:
        return np.zeros(z.shape, dtype=_LD), np.zeros(z.shape, dtype=bool)
    c_hi, c_lo = _series_coefficients(beta, gamma, count)
    hi = np.full(z.shape, c_hi[-1], dtype=_LD)
    lo = np.full(z.shape, c_lo[-1], dtype=_LD)
    for j in range(count - 2, -1, -1):
        p, pe = _two_prod(hi, z)
        pe = pe + lo * z
        s, se = _two_sum(p, c_hi[j])
        lo = pe + se + c_lo[j]
        hi = s + lo
        lo = lo - (hi - s)
    value = hi + lo
    # cancellation check: largest term against the result
    absz = np.abs(z).astype(float)
    j = np.arange(count, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        logz = np.log(absz)
        lt = np.where(absz[:, None] > 0,
                      j[None, :] * logz[:, None] - gammaln(beta * j + gamma)[None, :],
                      -np.inf)
    lt[:, 0] = -gammaln(gamma)
    max_term = np.exp(np.max(lt, axis=1))
    err = 4 * count * _LD_EPS**2 * max_term
    ok = err <= _REL_TARGET * np.abs(value.astype(float))
    return value, ok


def _series_mp(beta, gamma, zval):
    """Arbitrary-precision series for one argument."""
    absz = abs(zval)
    count, log_max = _series_length(beta, gamma, absz)
    if count is None:
        raise EvaluationError(
            f"Mittag-Leffler series did not converge within {TERM_CAP} terms",
            {"beta": beta, "gamma": gamma, "z": zval, "terms": TERM_CAP,
             "log10_max_term": log_max / math.log(10)})
    dps = 30 + max(0, int(math.ceil(log_max / math.log(10))))
    for _ in range(4):
        coeffs = _mp_coefficients(beta, gamma, count, dps)
        with mpmath.workdps(dps):
            zz = mpmath.mpf(zval)
            acc = mpmath.mpf(0)
            for cj in reversed(coeffs):
                acc = acc * zz + cj
            # digits lost to cancellation must leave >= 20 correct digits
            if acc != 0 and (log_max / math.log(10)
                             - float(mpmath.log10(abs(acc)))) < dps - 20:
                return _mp_to_ld(acc)
        dps *= 2
    raise EvaluationError("Mittag-Leffler series lost all precision to cancellation",
                          {"beta": beta, "gamma": gamma, "z": zval, "dps": dps})


def ml_array(beta, gamma, z) -> np.ndarray:
    """Vectorized E_{beta,gamma}(z) returning long double values."""
    beta, gamma = _check_params(beta, gamma)
    zin = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(zin)):
        raise DomainError("Mittag-Leffler argument must be finite")
    flat = zin.ravel().astype(_LD)
    out, done = _closed_form(beta, gamma, flat)

    if beta < 1.0:
        sel = np.nonzero(~done & (flat <= -1))[0]
        if sel.size:
            vals, ok = _asymptotic(beta, gamma, flat[sel])
            out[sel[ok]] = vals[ok]
            done[sel[ok]] = True

    sel = np.nonzero(~done)[0]
    if sel.size:
        vals, ok = _series_ld(beta, gamma, flat[sel])
        out[sel[ok]] = vals[ok]
        done[sel[ok]] = True

    for i in np.nonzero(~done)[0]:
        out[i] = _series_mp(beta, gamma, float(flat[i]))
    return out.reshape(zin.shape)


def mittag_leffler2(beta: float, gamma: float, z: float) -> float:
    """Two-parameter Mittag-Leffler function sum_j z^j / Gamma(beta j + gamma).

    Raises
    ------
    DomainError
        For ``beta <= 0``, ``gamma <= 0`` or non-finite ``z``.
    EvaluationError
        If no route reaches the accuracy contract (e.g. more than
        ``TERM_CAP`` series terms needed) or the value overflows a double.
    """
    value = float(ml_array(beta, gamma, np.array([z], dtype=float))[0])
    if not math.isfinite(value):
        raise EvaluationError("Mittag-Leffler value overflows double precision",
                              {"beta": beta, "gamma": gamma, "z": z})
    return value


def mittag_leffler(beta: float, z: float) -> float:
    """One-parameter Mittag-Leffler function E_beta(z) = E_{beta,1}(z)."""
    return mittag_leffler2(beta, 1.0, z)
