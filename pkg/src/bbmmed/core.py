"""Shared domain types, validation, time grids and random-stream management."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

ROW_SUM_TOL = 1e-12


class BBMError(Exception):
    """Base class for all package errors."""


class ValidationError(BBMError, ValueError):
    pass


class RowSumError(ValidationError):
    """A row of a stochastic matrix does not sum to one."""

    def __init__(self, matrix: str, row: int, total: float):
        self.matrix = matrix
        self.row = row
        self.total = total
        super().__init__(
            f"{matrix} row {row} sums to {total:.12g}, expected 1 "
            f"(tolerance {ROW_SUM_TOL:g}); use --renormalize-rows to rescale"
        )


class NegativeEntryError(ValidationError):
    def __init__(self, matrix: str, row: int, col: int, value: float):
        self.matrix = matrix
        self.row = row
        self.col = col
        self.value = value
        super().__init__(f"{matrix}[{row}, {col}] = {value:.12g} is negative")


class DimensionError(ValidationError):
    pass


class DomainError(BBMError, ValueError):
    pass


class GridMismatchError(BBMError, ValueError):
    pass


class CheckpointError(BBMError, ValueError):
    pass


# --------------------------------------------------------------------------
# message model


@dataclass(frozen=True)
class MessageModelParams:
    """Parameters of the bounded Brownian message process.

    Parameters
    ----------
    c : float
        Changing rate; increments over ``dt`` have standard deviation ``c*sqrt(dt)``.
    xi_low, xi_high : float
        Support of the uniform initial-message distribution, inside (0, 1).
    fixed_s0 : float, optional
        If given, every path starts here instead of drawing from the uniform law.
    """

    c: float
    xi_low: float
    xi_high: float
    fixed_s0: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c > 0):
            raise ValidationError(f"c must be positive, got {self.c}")
        if not (0 < self.xi_low <= self.xi_high < 1):
            raise ValidationError(
                f"need 0 < xi_low <= xi_high < 1, got [{self.xi_low}, {self.xi_high}]"
            )
        if self.fixed_s0 is not None and not (0 < self.fixed_s0 < 1):
            raise ValidationError(f"fixed_s0 must lie in (0, 1), got {self.fixed_s0}")

    @classmethod
    def fixed(cls, s0: float, c: float) -> "MessageModelParams":
        """Params for a process started deterministically at ``s0``."""
        return cls(c=c, xi_low=s0, xi_high=s0, fixed_s0=s0)


@dataclass(frozen=True)
class DerivedMessageStats:
    mu: float
    delta_sq: float


def derive_message_stats(p: MessageModelParams) -> DerivedMessageStats:
    """Mean and variance of the uniform law on ``[xi_low, xi_high]``."""
    width = p.xi_high - p.xi_low
    return DerivedMessageStats(mu=0.5 * (p.xi_low + p.xi_high), delta_sq=width * width / 12.0)


def initial_law_stats(p: MessageModelParams) -> DerivedMessageStats:
    """Moments of the law actually used for the initial message.

    Same as :func:`derive_message_stats` unless ``fixed_s0`` is set, in which
    case the start is a point mass.
    """
    if p.fixed_s0 is not None:
        return DerivedMessageStats(mu=float(p.fixed_s0), delta_sq=0.0)
    return derive_message_stats(p)


# --------------------------------------------------------------------------
# network


def _readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


def check_stochastic(matrix: np.ndarray, name: str, tol: float = ROW_SUM_TOL) -> None:
    """Raise if ``matrix`` has a negative entry or a row not summing to one."""
    if matrix.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise ValidationError(f"{name} has non-finite entries")
    neg = np.argwhere(matrix < 0)
    if len(neg):
        i, j = neg[0]
        raise NegativeEntryError(name, int(i), int(j), float(matrix[i, j]))
    sums = matrix.sum(axis=1)
    for i, s in enumerate(sums):
        if abs(s - 1.0) > tol:
            raise RowSumError(name, i, float(s))


def renormalize_rows(matrix) -> np.ndarray:
    """Divide every row by its sum."""
    m = np.asarray(matrix, dtype=float)
    sums = m.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        raise ValidationError("cannot renormalize a row with nonpositive sum")
    return m / sums


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Agent adjacency ``W`` (N x N), source influence ``U`` (N x M) and opinion weight ``alpha``.

    Construction only copies the matrices; call :func:`validate_network`
    (or :meth:`build`) before using a model.
    """

    W: np.ndarray
    U: np.ndarray
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "W", _readonly(self.W))
        object.__setattr__(self, "U", _readonly(self.U))
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def n_agents(self) -> int:
        return self.W.shape[0]

    @property
    def n_sources(self) -> int:
        return self.U.shape[1]

    @classmethod
    def build(cls, W, U, alpha: float, renormalize: bool = False) -> "NetworkModel":
        if renormalize:
            W, U = renormalize_rows(W), renormalize_rows(U)
        return validate_network(cls(W, U, alpha))


def validate_network(model: NetworkModel) -> NetworkModel:
    W, U = model.W, model.U
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DimensionError(f"W must be square, got shape {W.shape}")
    if U.ndim != 2 or U.shape[0] != W.shape[0]:
        raise DimensionError(f"U must be {W.shape[0]} x M, got shape {U.shape}")
    if W.shape[0] < 1 or U.shape[1] < 1:
        raise DimensionError("need at least one agent and one source")
    check_stochastic(W, "W")
    check_stochastic(U, "U")
    if not (0 < model.alpha <= 1):
        raise ValidationError(f"alpha must lie in (0, 1], got {model.alpha}")
    return model


# --------------------------------------------------------------------------
# time and randomness


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``0, dt, ..., n_steps*dt``."""

    dt: float
    n_steps: int

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ValidationError(f"n_steps must be a nonnegative integer, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @classmethod
    def from_horizon(cls, horizon: float, dt: float) -> "TimeGrid":
        n = int(round(horizon / dt))
        if abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
            raise ValidationError(f"horizon {horizon} is not a multiple of dt {dt}")
        return cls(dt, n)

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def step_of(self, t: float) -> int:
        """Index of grid time ``t``; raises CheckpointError when ``t`` is off-grid."""
        k = int(round(t / self.dt))
        if k < 0 or k > self.n_steps or abs(k * self.dt - t) > 1e-9 * max(self.dt, abs(t)):
            raise CheckpointError(f"t={t} is not a point of the grid (dt={self.dt}, n={self.n_steps})")
        return k


@dataclass(frozen=True)
class SeedSpec:
    """Master seed plus the rule mapping a path key to an independent stream.

    Streams are children of ``SeedSequence(master_seed)`` keyed by ``spawn_key``,
    so any path can be regenerated without replaying the others.
    """

    master_seed: int = 0

    def __post_init__(self):
        if not (0 <= int(self.master_seed) < 2**64):
            raise ValidationError("master_seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "master_seed", int(self.master_seed))

    def stream(self, *key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=tuple(int(k) for k in key))
        return np.random.Generator(np.random.PCG64(ss))
