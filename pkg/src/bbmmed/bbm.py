"""Sampling bounded Brownian message paths on a uniform grid.

Increments are exact Gaussians, so the only discretisation error is missing
a boundary touch between grid points.  With ``bridge_correction`` on, each
step is also absorbed with the Brownian-bridge probability of having crossed
a bound, which makes the absorbed law exact at grid times (up to the
negligible chance of touching both bounds in one step).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .core import MessageModelParams, TimeGrid

# per-call chunk sizes: short paths dominate, long survivors get bigger chunks
_FIRST_CHUNK = 256
_MAX_CHUNK = 16384


@dataclass(frozen=True, eq=False)
class MessagePath:
    """One message trajectory on ``grid``.

    ``values[k]`` is the message at ``grid.times[k]``.  ``absorbed_at`` is
    ``(step, bound)`` for the first grid step at which the path was absorbed.
    """

    grid: TimeGrid
    values: np.ndarray
    absorbed_at: Optional[tuple[int, int]] = None


@dataclass(frozen=True)
class CompactPath:
    """Values up to absorption only; ``value_at`` extends with the bound."""

    head: np.ndarray  # values at steps 0..len(head)-1
    bound: int  # -1 if never absorbed on the grid

    @property
    def absorbed_step(self) -> Optional[int]:
        return len(self.head) - 1 if self.bound >= 0 else None

    def value_at(self, step: int) -> float:
        if step < len(self.head):
            return float(self.head[step])
        return float(self.bound)

    def expand(self, n_steps: int) -> np.ndarray:
        out = np.empty(n_steps + 1)
        L = min(len(self.head), n_steps + 1)
        out[:L] = self.head[:L]
        out[L:] = self.bound
        return out


def sample_initial(p: MessageModelParams, stream: np.random.Generator) -> float:
    """Initial message: ``fixed_s0`` if set, else uniform on ``[xi_low, xi_high]``."""
    if p.fixed_s0 is not None:
        return float(p.fixed_s0)
    if p.xi_low == p.xi_high:
        return float(p.xi_low)
    return float(p.xi_low + (p.xi_high - p.xi_low) * stream.random())


def simulate_absorbed(s0: float, c: float, dt: float, n_steps: int, stream: np.random.Generator,
                      bridge_correction: bool = True, kernel=None) -> CompactPath:
    """Run one path from ``s0`` until absorption or ``n_steps``.

    Normals (and bridge uniforms) are drawn from ``stream`` in a fixed chunk
    schedule, so the result depends only on the stream state, not on the
    kernel backend.
    """
    advance = (kernel or kernels).advance_path
    sigma = c * math.sqrt(dt)
    var_dt = c * c * dt
    head = np.empty(n_steps + 1)
    head[0] = s0
    x = s0
    k = 0
    chunk = _FIRST_CHUNK
    while k < n_steps:
        m = min(chunk, n_steps - k)
        z = stream.standard_normal(m)
        u = stream.random(m) if bridge_correction else z
        written, bound = advance(x, sigma, var_dt, z, u, bridge_correction, head[k + 1:k + 1 + m])
        k += written
        if bound >= 0:
            return CompactPath(head[:k + 1].copy(), int(bound))
        x = head[k]
        chunk = min(2 * chunk, _MAX_CHUNK)
    return CompactPath(head, -1)


def sample_path(p: MessageModelParams, grid: TimeGrid, stream: np.random.Generator,
                bridge_correction: bool = True) -> MessagePath:
    """Draw an initial message and one full path on ``grid``."""
    s0 = sample_initial(p, stream)
    cp = simulate_absorbed(s0, p.c, grid.dt, grid.n_steps, stream, bridge_correction)
    step = cp.absorbed_step
    return MessagePath(
        grid=grid,
        values=cp.expand(grid.n_steps),
        absorbed_at=None if step is None else (step, cp.bound),
    )


def write_paths_csv(paths, fh) -> None:
    """Raw path dump with columns ``path_id, step, time, value, absorbed_flag``."""
    fh.write("path_id,step,time,value,absorbed_flag\n")
    for pid, path in enumerate(paths):
        times = path.grid.times
        k_abs = path.absorbed_at[0] if path.absorbed_at else None
        for k, (t, v) in enumerate(zip(times, path.values)):
            flag = 1 if (k_abs is not None and k >= k_abs) else 0
            fh.write(f"{pid},{k},{float(t)!r},{float(v)!r},{flag}\n")
