"""Continuous-time DeGroot consensus ``do/dt = (W - I) o``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DimensionError, TimeGrid, check_stochastic
from .numerics import left_unit_eigenvector, mat_exp


@dataclass(frozen=True, eq=False)
class OpinionTrajectory:
    """Opinions of all agents on a grid; ``opinions[k]`` is the N-vector at ``grid.times[k]``."""

    grid: TimeGrid
    opinions: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def write_csv(self, fh) -> None:
        n = self.opinions.shape[1]
        fh.write("time," + ",".join(f"o_{i + 1}" for i in range(n)) + "\n")
        for t, row in zip(self.grid.times, self.opinions):
            fh.write(repr(float(t)) + "," + ",".join(repr(float(v)) for v in row) + "\n")


def _check_o0(o0, n):
    o0 = np.asarray(o0, dtype=float)
    if o0.shape != (n,):
        raise DimensionError(f"initial opinions must have length {n}, got shape {o0.shape}")
    return o0


def propagate(P: np.ndarray, o0: np.ndarray, n_steps: int) -> np.ndarray:
    """Iterate ``o <- P o`` and stack all iterates (including ``o0``)."""
    out = np.empty((n_steps + 1, len(o0)))
    out[0] = o0
    for k in range(n_steps):
        out[k + 1] = P @ out[k]
    return out


def degroot_trajectory(W, o0, grid: TimeGrid) -> OpinionTrajectory:
    W = np.asarray(W, dtype=float)
    check_stochastic(W, "W")
    o0 = _check_o0(o0, W.shape[0])
    P = mat_exp(W - np.eye(len(o0)), grid.dt)
    return OpinionTrajectory(grid, propagate(P, o0, grid.n_steps))


def degroot_steady_state(W, o0) -> np.ndarray:
    """Consensus vector ``(l . o0) * 1`` with ``l`` the unit left eigenvector of ``W``."""
    ell = left_unit_eigenvector(W)
    o0 = _check_o0(o0, len(ell))
    return np.full(len(ell), float(ell @ o0))


def degroot_at(W, o0, times) -> np.ndarray:
    """Closed form ``exp((W - I) t) o0`` at each of ``times``; shape ``(len(times), N)``."""
    W = np.asarray(W, dtype=float)
    o0 = _check_o0(o0, W.shape[0])
    A = W - np.eye(len(o0))
    return np.array([mat_exp(A, float(t)) @ o0 for t in np.atleast_1d(times)])
