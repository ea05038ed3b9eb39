"""Closed-form oracles for the bounded Brownian message process.

Hitting probabilities come from integrating the first-passage densities
(image sums) over time; the interior density is the image sum itself.
Moments are the martingale mean and the two-regime variance bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import DerivedMessageStats, DomainError, MessageModelParams, initial_law_stats
from .numerics import (
    DEFAULT_QUAD,
    DEFAULT_SERIES,
    QuadratureControl,
    SeriesControl,
    image_series_even,
    image_series_odd,
    integrate_1d,
    interior_image_density,
    quiet_start,
)

# absorbed mass below which the free-Brownian variance c^2 t + delta^2 is trusted
SMALL_T_ABSORPTION = 0.01


def _check_s0(s0):
    if not 0 < s0 < 1:
        raise DomainError(f"s0 must lie in (0, 1), got {s0}")


def first_passage_density_zero(tau: float, s0: float, c: float, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    """Density of the hitting time of 0, on the event that 0 is hit before 1."""
    return image_series_even(s0, tau, c, ctl) / tau


def first_passage_density_one(tau: float, s0: float, c: float, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    return image_series_odd(s0, tau, c, ctl) / tau


def _cumulative(density: Callable[[float], float], start: float, times: Sequence[float],
                quad_ctl: QuadratureControl) -> np.ndarray:
    """Integral of ``density`` from 0 to each of ``times`` (sorted or not).

    The density is taken as zero below ``start``.  Each stretch between
    consecutive times is cut at a geometric ladder so that QUADPACK never sees
    the whole range at once.
    """
    ts = np.asarray(times, dtype=float)
    if np.any(ts < 0):
        raise DomainError("times must be nonnegative")
    order = np.argsort(ts, kind="stable")
    out = np.zeros(len(ts))
    acc = 0.0
    lo = start
    for idx in order:
        t = ts[idx]
        if t > lo:
            edges = [lo]
            while edges[-1] * 4.0 < t:
                edges.append(edges[-1] * 4.0)
            edges.append(t)
            for a, b in zip(edges[:-1], edges[1:]):
                acc += integrate_1d(density, a, b, quad_ctl)
            lo = t
        out[idx] = acc
    return np.clip(out, 0.0, 1.0)


def hitting_curve_zero(s0: float, c: float, times, series_ctl: SeriesControl = DEFAULT_SERIES,
                       quad_ctl: QuadratureControl = DEFAULT_QUAD) -> np.ndarray:
    """``P(s_t = 0 | s0)`` at each of ``times``."""
    _check_s0(s0)
    return _cumulative(lambda tau: first_passage_density_zero(tau, s0, c, series_ctl),
                       quiet_start(s0, c), times, quad_ctl)


def hitting_curve_one(s0: float, c: float, times, series_ctl: SeriesControl = DEFAULT_SERIES,
                      quad_ctl: QuadratureControl = DEFAULT_QUAD) -> np.ndarray:
    """``P(s_t = 1 | s0)`` at each of ``times``."""
    _check_s0(s0)
    return _cumulative(lambda tau: first_passage_density_one(tau, s0, c, series_ctl),
                       quiet_start(1.0 - s0, c), times, quad_ctl)


def hitting_prob_zero(s0: float, c: float, t: float, series_ctl: SeriesControl = DEFAULT_SERIES,
                      quad_ctl: QuadratureControl = DEFAULT_QUAD) -> float:
    return float(hitting_curve_zero(s0, c, [t], series_ctl, quad_ctl)[0])


def hitting_prob_one(s0: float, c: float, t: float, series_ctl: SeriesControl = DEFAULT_SERIES,
                     quad_ctl: QuadratureControl = DEFAULT_QUAD) -> float:
    return float(hitting_curve_one(s0, c, [t], series_ctl, quad_ctl)[0])


def averaged_hitting_curves(params: MessageModelParams, times, n_nodes: int = 24,
                            series_ctl: SeriesControl = DEFAULT_SERIES,
                            quad_ctl: QuadratureControl = DEFAULT_QUAD):
    """Hitting curves for the initial law of ``params`` (fixed start or uniform).

    The uniform average uses Gauss-Legendre nodes on ``[xi_low, xi_high]``.
    Returns ``(p_zero, p_one)`` arrays aligned with ``times``.
    """
    if params.fixed_s0 is not None or params.xi_low == params.xi_high:
        s0 = params.fixed_s0 if params.fixed_s0 is not None else params.xi_low
        return (hitting_curve_zero(s0, params.c, times, series_ctl, quad_ctl),
                hitting_curve_one(s0, params.c, times, series_ctl, quad_ctl))
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    half = 0.5 * (params.xi_high - params.xi_low)
    mid = 0.5 * (params.xi_high + params.xi_low)
    p0 = np.zeros(len(times))
    p1 = np.zeros(len(times))
    for x, w in zip(nodes, weights):
        s0 = mid + half * x
        p0 += 0.5 * w * hitting_curve_zero(s0, params.c, times, series_ctl, quad_ctl)
        p1 += 0.5 * w * hitting_curve_one(s0, params.c, times, series_ctl, quad_ctl)
    return p0, p1


def interior_density(x, t: float, s0: float, c: float, ctl: SeriesControl = DEFAULT_SERIES):
    """Density of the surviving (not yet absorbed) message at ``x`` in (0, 1)."""
    _check_s0(s0)
    return interior_image_density(x, t, s0, c, ctl)


def interior_bin_masses(edges, t: float, s0: float, c: float, ctl: SeriesControl = DEFAULT_SERIES,
                        quad_ctl: QuadratureControl = DEFAULT_QUAD) -> np.ndarray:
    """Mass of the interior density on each bin ``[edges[i], edges[i+1]]``."""
    edges = np.asarray(edges, dtype=float)
    return np.array([
        integrate_1d(lambda x: interior_image_density(x, t, s0, c, ctl), a, b, quad_ctl)
        for a, b in zip(edges[:-1], edges[1:])
    ])


@dataclass(frozen=True)
class AbsorbedLaw:
    """Law of the message at time ``t`` given start ``s0``: two atoms plus a density."""

    t: float
    s0: float
    c: float
    p_zero: float
    p_one: float
    series_ctl: SeriesControl = field(default=DEFAULT_SERIES, repr=False)

    def interior_density(self, x):
        if self.t == 0:
            raise DomainError("at t = 0 the law is a point mass at s0")
        return interior_image_density(x, self.t, self.s0, self.c, self.series_ctl)

    def interior_moment(self, k: int, quad_ctl: QuadratureControl = DEFAULT_QUAD) -> float:
        """Integral of ``x**k`` times the interior density over (0, 1)."""
        if self.t == 0:
            return self.s0 ** k
        # split at s0, where the density peaks for small t
        f = lambda x: x ** k * self.interior_density(x)
        return (integrate_1d(f, 0.0, self.s0, quad_ctl) + integrate_1d(f, self.s0, 1.0, quad_ctl))

    def mean(self) -> float:
        return self.p_one + self.interior_moment(1)

    def variance(self) -> float:
        m = self.mean()
        return self.p_one + self.interior_moment(2) - m * m


def absorbed_law(s0: float, c: float, t: float, series_ctl: SeriesControl = DEFAULT_SERIES,
                 quad_ctl: QuadratureControl = DEFAULT_QUAD) -> AbsorbedLaw:
    _check_s0(s0)
    if t < 0:
        raise DomainError("t must be nonnegative")
    return AbsorbedLaw(
        t=t, s0=s0, c=c,
        p_zero=hitting_prob_zero(s0, c, t, series_ctl, quad_ctl),
        p_one=hitting_prob_one(s0, c, t, series_ctl, quad_ctl),
        series_ctl=series_ctl,
    )


def asymptotic_law(s0: float) -> tuple[float, float]:
    """``(P(absorbed at 0), P(absorbed at 1))`` as t goes to infinity."""
    _check_s0(s0)
    return 1.0 - s0, s0


# --------------------------------------------------------------------------
# moments


def conditional_message_mean(s0: float) -> float:
    return float(s0)


def message_mean(stats: DerivedMessageStats) -> float:
    return float(stats.mu)


def conditional_variance_bound(s0: float, c: float, t: float) -> float:
    """``min(c^2 t, s0 (1 - s0))``."""
    return min(c * c * t, s0 * (1.0 - s0))


def variance_bound(stats: DerivedMessageStats, c: float, t: float) -> float:
    """``min(c^2 t + delta^2, mu (1 - mu))``."""
    return min(c * c * t + stats.delta_sq, stats.mu * (1.0 - stats.mu))


def small_t_variance(stats: DerivedMessageStats, c: float, t: float) -> float:
    """Free-Brownian variance ``c^2 t + delta^2``; only valid before absorption matters."""
    return c * c * t + stats.delta_sq


def small_t_reliable(absorbed_mass: float) -> bool:
    return absorbed_mass < SMALL_T_ABSORPTION


def steady_variance(stats: DerivedMessageStats) -> float:
    return stats.mu * (1.0 - stats.mu)


def moment_oracles(params: MessageModelParams, t: float) -> dict:
    """Mean, variance bound and regime values for the initial law of ``params``."""
    st = initial_law_stats(params)
    c = params.c
    return {
        "mean": message_mean(st),
        "variance_bound": variance_bound(st, c, t),
        "small_t_variance": small_t_variance(st, c, t),
        "steady_variance": steady_variance(st),
    }


def variance_law_bound_curve(stats: DerivedMessageStats, c: float, times) -> np.ndarray:
    return np.array([variance_bound(stats, c, float(t)) for t in np.asarray(times, dtype=float)])


__all__ = [
    "AbsorbedLaw",
    "SMALL_T_ABSORPTION",
    "absorbed_law",
    "asymptotic_law",
    "averaged_hitting_curves",
    "conditional_message_mean",
    "conditional_variance_bound",
    "first_passage_density_one",
    "first_passage_density_zero",
    "hitting_curve_one",
    "hitting_curve_zero",
    "hitting_prob_one",
    "hitting_prob_zero",
    "interior_bin_masses",
    "interior_density",
    "message_mean",
    "moment_oracles",
    "small_t_reliable",
    "small_t_variance",
    "steady_variance",
    "variance_bound",
    "variance_law_bound_curve",
]
