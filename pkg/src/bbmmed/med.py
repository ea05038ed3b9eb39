"""Message-enhanced DeGroot dynamics ``do/dt = (alpha W - I) o + (1 - alpha) U s``.

Opinions are integrated exactly for inputs held constant over each grid
step (zero-order hold), so the only error comes from the message moving
inside a step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .bbm import MessagePath
from .core import BBMError, DimensionError, GridMismatchError, NetworkModel, TimeGrid, validate_network
from .degroot import OpinionTrajectory
from .numerics import mat_exp


class SingularAError(BBMError, ArithmeticError):
    pass


def _readonly(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MedSystem:
    """Drift ``A = alpha W - I``, input ``B = (1 - alpha) U`` and their one-step ZOH maps."""

    network: NetworkModel
    dt: float
    A: np.ndarray
    B: np.ndarray
    propagator: np.ndarray
    zoh_gain: np.ndarray

    @classmethod
    def build(cls, network: NetworkModel, dt: float) -> "MedSystem":
        validate_network(network)
        if not dt > 0:
            raise GridMismatchError(f"dt must be positive, got {dt}")
        n = network.n_agents
        A = network.alpha * network.W - np.eye(n)
        B = (1.0 - network.alpha) * network.U
        P = mat_exp(A, dt)
        if not np.any(B):
            G = np.zeros_like(B)
        else:
            _check_nonsingular(A)
            G = np.linalg.solve(A, (P - np.eye(n)) @ B)
        return cls(network, float(dt), _readonly(A), _readonly(B), _readonly(P), _readonly(G))

    @property
    def n_agents(self) -> int:
        return self.network.n_agents

    @property
    def n_sources(self) -> int:
        return self.network.n_sources

    def fixed_point(self, s) -> np.ndarray:
        """Equilibrium ``-A^{-1} B s`` for a constant message vector ``s``."""
        s = np.asarray(s, dtype=float)
        if not np.any(self.B):
            return np.zeros(s.shape[:-1] + (self.n_agents,))
        _check_nonsingular(self.A)
        return -np.linalg.solve(self.A, (s @ self.B.T).T).T


def _check_nonsingular(A):
    if np.linalg.cond(A) > 1e12:
        raise SingularAError("A = alpha W - I is numerically singular")


def _check_o0(o0, n):
    o0 = np.asarray(o0, dtype=float)
    if o0.shape != (n,):
        raise DimensionError(f"initial opinions must have length {n}, got shape {o0.shape}")
    return o0


def med_trajectory(sys: MedSystem, o0, message_paths: Sequence[MessagePath]) -> OpinionTrajectory:
    """Opinion trajectory driven by one realisation of the ``M`` message paths."""
    o0 = _check_o0(o0, sys.n_agents)
    if len(message_paths) != sys.n_sources:
        raise DimensionError(f"need {sys.n_sources} message paths, got {len(message_paths)}")
    grid = message_paths[0].grid
    for p in message_paths:
        if p.grid != grid:
            raise GridMismatchError("message paths are on different grids")
    if abs(grid.dt - sys.dt) > 1e-15 * sys.dt:
        raise GridMismatchError(f"paths use dt={grid.dt}, system was built for dt={sys.dt}")
    S = np.ascontiguousarray(np.stack([p.values for p in message_paths])[None, :, :])
    out = np.empty((1, grid.n_steps + 1, sys.n_agents))
    kernels.zoh_runs(sys.propagator, sys.zoh_gain, o0[None, :], S,
                     np.array([grid.n_steps], dtype=np.int64),
                     np.arange(grid.n_steps + 1, dtype=np.int64), out)
    return OpinionTrajectory(grid, out[0])


def _net(sys_or_net) -> NetworkModel:
    return sys_or_net.network if isinstance(sys_or_net, MedSystem) else sys_or_net


def opinion_mean(sys_or_net, o0, mu: float, t) -> np.ndarray:
    """``exp(A t) o0 + mu (I - exp(A t)) 1``.

    Scalar ``t`` gives an N-vector; an array of times gives shape ``(len(t), N)``.
    """
    net = _net(sys_or_net)
    o0 = _check_o0(o0, net.n_agents)
    A = net.alpha * net.W - np.eye(net.n_agents)
    ones = np.ones(net.n_agents)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty((len(ts), net.n_agents))
    for i, ti in enumerate(ts):
        E = mat_exp(A, ti)
        out[i] = E @ o0 + mu * (ones - E @ ones)
    return out[0] if np.ndim(t) == 0 else out


def opinion_mean_limit(mu: float, n_agents: int) -> np.ndarray:
    return np.full(n_agents, float(mu))


def opinion_variance_limit(sys_or_net, mu: float) -> np.ndarray:
    """Per-agent variance as t goes to infinity.

    ``mu (1 - mu) (1 - alpha)^2 diag[A^{-1} U U^T A^{-T}]``; needs ``alpha < 1``.
    """
    net = _net(sys_or_net)
    if net.alpha >= 1.0:
        raise SingularAError("variance limit needs alpha < 1 (A is singular at alpha = 1)")
    A = net.alpha * net.W - np.eye(net.n_agents)
    _check_nonsingular(A)
    X = np.linalg.solve(A, net.U)  # A^{-1} U
    return mu * (1.0 - mu) * (1.0 - net.alpha) ** 2 * np.einsum("ij,ij->i", X, X)
