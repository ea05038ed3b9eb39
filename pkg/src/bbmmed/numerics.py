"""Numerical kernels for the analytic side: Gaussian transition density,
image sums for Brownian motion absorbed at 0 and 1, quadrature, the matrix
exponential and the unit left eigenvector of a stochastic matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .core import BBMError, DomainError, ValidationError, check_stochastic

# exp(-x) < 1e-300 for x above this
_LOG_TINY = 690.8


class ConvergenceError(BBMError, ArithmeticError):
    pass


class QuadratureError(BBMError, ArithmeticError):
    pass


class NonUniqueEigenvectorError(BBMError, ValueError):
    pass


@dataclass(frozen=True)
class SeriesControl:
    """Truncation rule for the image sums.

    ``max_terms`` caps ``|n|``; summation stops once the bound on the next
    shell of terms drops below ``tail_tol``.
    """

    max_terms: int = 200
    tail_tol: float = 1e-14

    def __post_init__(self):
        if self.max_terms < 1 or not self.tail_tol > 0:
            raise ValidationError("SeriesControl needs max_terms >= 1 and tail_tol > 0")


@dataclass(frozen=True)
class QuadratureControl:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0 and self.max_subdivisions > 0):
            raise ValidationError("QuadratureControl fields must be positive")


DEFAULT_SERIES = SeriesControl()
DEFAULT_QUAD = QuadratureControl()


def _check_tc(t, c):
    if not t > 0:
        raise DomainError(f"time must be positive, got {t}")
    if not c > 0:
        raise DomainError(f"rate c must be positive, got {c}")


def gauss_transition(x, t: float, x0, c: float):
    """Density of ``x0 + c*B_t`` at ``x``. Works on scalars and arrays."""
    _check_tc(t, c)
    var = c * c * t
    d = np.asarray(x, dtype=float) - x0
    out = np.exp(-d * d / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)
    return float(out) if out.ndim == 0 else out


def _shell_bound(weight: float, dist: float, var: float, norm: float) -> float:
    return weight * norm * math.exp(-dist * dist / (2.0 * var))


def image_series_even(s0: float, tau: float, c: float, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    """Sum over even ``n`` of ``(s0 - n) * g(n, tau | s0)``.

    Divided by ``tau`` this is the density of the first passage through 0
    before 1, for a path started at ``s0``.
    """
    _check_tc(tau, c)
    var = c * c * tau
    norm = 1.0 / math.sqrt(2.0 * math.pi * var)
    sd = math.sqrt(var)
    total = s0 * norm * math.exp(-s0 * s0 / (2.0 * var))
    k = 1
    while True:
        n = 2 * k
        if n > ctl.max_terms:
            raise ConvergenceError(
                f"even image series did not converge within |n| <= {ctl.max_terms} (c^2 t = {var:g})"
            )
        a, b = s0 - n, s0 + n
        total += a * norm * math.exp(-a * a / (2.0 * var)) + b * norm * math.exp(-b * b / (2.0 * var))
        # next shell: |n'| = n + 2, distance from s0 at least n + 1, weight at most n + 3
        dist = n + 1.0
        if dist >= sd and _shell_bound(2.0 * (n + 3.0), dist, var, norm) < ctl.tail_tol:
            return total
        k += 1


def image_series_odd(s0: float, tau: float, c: float, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    """Sum over odd ``n`` of ``(n - s0) * g(n, tau | s0)``; first passage through 1 before 0, times ``tau``."""
    _check_tc(tau, c)
    var = c * c * tau
    norm = 1.0 / math.sqrt(2.0 * math.pi * var)
    sd = math.sqrt(var)
    total = 0.0
    k = 0
    while True:
        n = 2 * k + 1
        if n > ctl.max_terms:
            raise ConvergenceError(
                f"odd image series did not converge within |n| <= {ctl.max_terms} (c^2 t = {var:g})"
            )
        a, b = n - s0, -n - s0
        total += a * norm * math.exp(-a * a / (2.0 * var)) + b * norm * math.exp(-b * b / (2.0 * var))
        dist = n + 1.0
        if dist >= sd and _shell_bound(2.0 * (n + 3.0), dist, var, norm) < ctl.tail_tol:
            return total
        k += 1


def interior_image_density(x, t: float, s0: float, c: float, ctl: SeriesControl = DEFAULT_SERIES):
    """Sub-probability density on (0, 1) of Brownian motion killed at 0 and 1.

    Sum over even ``n`` of ``g(n + x, t | s0) - g(-n - x, t | s0)``.  Round-off
    negatives smaller than ``ctl.tail_tol`` are clamped to zero.
    """
    _check_tc(t, c)
    xa = np.asarray(x, dtype=float)
    if np.any((xa < 0) | (xa > 1)):
        raise DomainError("x must lie in [0, 1]")
    var = c * c * t
    norm = 1.0 / math.sqrt(2.0 * math.pi * var)
    sd = math.sqrt(var)

    def g(y):
        d = y - s0
        return norm * np.exp(-d * d / (2.0 * var))

    total = g(xa) - g(-xa)
    k = 1
    while True:
        n = 2 * k
        if n > ctl.max_terms:
            raise ConvergenceError(
                f"density image series did not converge within |n| <= {ctl.max_terms} (c^2 t = {var:g})"
            )
        total = total + (g(xa + n) - g(-xa - n)) + (g(xa - n) - g(-xa + n))
        # every term of shell n + 2 sits at least n from s0
        dist = float(n)
        if dist >= sd and _shell_bound(4.0, dist, var, norm) < ctl.tail_tol:
            break
        k += 1
    total = np.where((total < 0) & (total > -ctl.tail_tol), 0.0, total)
    return float(total) if total.ndim == 0 else total


def integrate_1d(f: Callable[[float], float], a: float, b: float,
                 ctl: QuadratureControl = DEFAULT_QUAD) -> float:
    """Adaptive Gauss-Kronrod quadrature of ``f`` over ``[a, b]`` (QUADPACK)."""
    if not a < b:
        raise DomainError(f"need a < b, got [{a}, {b}]")
    out = integrate.quad(
        f, a, b, epsabs=ctl.abs_tol, epsrel=ctl.rel_tol, limit=ctl.max_subdivisions, full_output=1
    )
    val, err = out[0], out[1]
    if not math.isfinite(val):
        raise QuadratureError("quadrature produced a non-finite value")
    if len(out) == 4:
        # QUADPACK flagged a problem; tolerate it only if the error estimate is still acceptable
        if not err <= 10.0 * max(ctl.abs_tol, ctl.rel_tol * abs(val)):
            msg = out[3].splitlines()[0].strip()
            raise QuadratureError(f"{msg} (estimate {val:g} +/- {err:g})")
    return float(val)


def quiet_start(distance: float, c: float) -> float:
    """Time below which ``exp(-distance**2 / (2 c**2 tau))`` is under 1e-300."""
    return distance * distance / (2.0 * c * c * _LOG_TINY)


def mat_exp(A, t: float = 1.0) -> np.ndarray:
    """``exp(A t)`` by scaling and squaring of the Taylor series.

    The scaling exponent makes ``||A t|| / 2**k <= 0.5`` in the infinity norm;
    the series is then summed until terms stop changing the result.
    """
    M = np.asarray(A, dtype=float) * t
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError(f"matrix must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise DomainError("matrix has non-finite entries")
    n = M.shape[0]
    norm = np.linalg.norm(M, np.inf)
    k = 0
    if norm > 0.5:
        k = int(math.ceil(math.log2(norm / 0.5)))
    X = M / (2.0 ** k)
    E = np.eye(n)
    term = np.eye(n)
    for j in range(1, 40):
        term = term @ X / j
        E = E + term
        if np.linalg.norm(term, np.inf) <= 1e-17 * np.linalg.norm(E, np.inf):
            break
    for _ in range(k):
        E = E @ E
    return E


def left_unit_eigenvector(W, tol: float = 1e-10) -> np.ndarray:
    """Probability vector ``l`` with ``l @ W = l``.

    Raises NonUniqueEigenvectorError when eigenvalue 1 of ``W`` is not simple
    (reducible ``W``), since then no unique consensus weighting exists.
    """
    W = np.asarray(W, dtype=float)
    check_stochastic(W, "W")
    n = W.shape[0]
    if W.shape != (n, n):
        raise DomainError(f"W must be square, got shape {W.shape}")
    L = W.T - np.eye(n)
    sv = np.linalg.svd(L, compute_uv=False)
    if n > 1 and sv[-2] < tol * max(1.0, sv[0]):
        raise NonUniqueEigenvectorError(
            "eigenvalue 1 of W is not simple; the consensus weights are not unique"
        )
    # replace one redundant equation with the normalisation sum(l) = 1
    system = np.vstack([L[:-1], np.ones(n)])
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    ell = np.linalg.solve(system, rhs)
    ell = np.where(np.abs(ell) < 1e-15, 0.0, ell)
    if np.any(ell < -1e-12):
        raise NonUniqueEigenvectorError("unit eigenvector has negative entries")
    ell = np.clip(ell, 0.0, None)
    ell /= ell.sum()
    resid = np.max(np.abs(ell @ W - ell))
    if resid > tol:
        raise NonUniqueEigenvectorError(f"eigenvector residual {resid:g} exceeds {tol:g}")
    return ell
