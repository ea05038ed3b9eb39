"""Monte Carlo ensembles and their comparison against the analytic oracles.

Runs are split into fixed-size blocks.  Each block produces a partial
aggregate (shifted sums, sums of squares, hit counts, surviving values at the
pdf checkpoints), and blocks are reduced in index order, so the result does
not depend on how many worker threads ran them.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats as _sps

from . import analytic, kernels
from .bbm import sample_initial, simulate_absorbed
from .core import (
    CheckpointError,
    DimensionError,
    GridMismatchError,
    MessageModelParams,
    SeedSpec,
    TimeGrid,
    ValidationError,
    initial_law_stats,
)
from .med import MedSystem, opinion_mean, opinion_variance_limit
from .numerics import mat_exp

BLOCK_SIZE = 250
# opinion ensembles record about this many grid points unless told otherwise
DEFAULT_RECORD_POINTS = 500


def default_record_every(grid: TimeGrid) -> int:
    return max(1, grid.n_steps // DEFAULT_RECORD_POINTS)


def record_steps(grid: TimeGrid, every: int = 1, checkpoints: Sequence[float] = ()) -> np.ndarray:
    """Grid steps to record: every ``every``-th step, the last step and each checkpoint."""
    if every < 1:
        raise ValidationError("record_every must be >= 1")
    steps = set(range(0, grid.n_steps + 1, every))
    steps.add(grid.n_steps)
    steps.update(grid.step_of(t) for t in checkpoints)
    return np.array(sorted(steps), dtype=np.int64)


def _run_blocks(fn, n_runs: int, threads: Optional[int]):
    blocks = [(b, min(b + BLOCK_SIZE, n_runs)) for b in range(0, n_runs, BLOCK_SIZE)]
    workers = threads or os.cpu_count() or 1
    if workers <= 1 or len(blocks) == 1:
        return [fn(lo, hi) for lo, hi in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), blocks))


@dataclass(eq=False)
class EnsembleStats:
    """Empirical estimators aligned to the recorded grid steps.

    ``mean`` and ``variance`` have shape ``(T,)`` for message ensembles and
    ``(T, N)`` for opinion ensembles.  Hit frequencies and surviving values
    exist only for message ensembles.
    """

    kind: str
    grid: TimeGrid
    steps: np.ndarray
    n_runs: int
    mean: np.ndarray
    variance: np.ndarray
    hit0_freq: Optional[np.ndarray] = None
    hit1_freq: Optional[np.ndarray] = None
    survivors: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.grid.dt

    @property
    def se_mean(self) -> np.ndarray:
        return np.sqrt(self.variance / self.n_runs)

    @property
    def se_variance(self) -> np.ndarray:
        # normal-theory approximation
        return self.variance * math.sqrt(2.0 / max(self.n_runs - 1, 1))

    @property
    def se_hit0(self):
        return None if self.hit0_freq is None else _binom_se(self.hit0_freq, self.n_runs)

    @property
    def se_hit1(self):
        return None if self.hit1_freq is None else _binom_se(self.hit1_freq, self.n_runs)

    def index_of(self, t: float) -> int:
        k = self.grid.step_of(t)
        i = int(np.searchsorted(self.steps, k))
        if i >= len(self.steps) or self.steps[i] != k:
            raise CheckpointError(f"t={t} was not recorded")
        return i

    def write_csv(self, fh) -> None:
        if self.kind == "message":
            fh.write("time,mean,variance,se_mean,se_variance,hit0,hit1,se_hit0,se_hit1\n")
            cols = [self.times, self.mean, self.variance, self.se_mean, self.se_variance,
                    self.hit0_freq, self.hit1_freq, self.se_hit0, self.se_hit1]
            for row in zip(*cols):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        else:
            fh.write("time,agent,mean,variance,ci_halfwidth,se_mean,se_variance\n")
            se_m, se_v = self.se_mean, self.se_variance
            for i, t in enumerate(self.times):
                for a in range(self.mean.shape[1]):
                    vals = (self.mean[i, a], self.variance[i, a], 1.96 * se_m[i, a], se_m[i, a], se_v[i, a])
                    fh.write(f"{float(t)!r},{a + 1}," + ",".join(repr(float(v)) for v in vals) + "\n")


def _binom_se(p, n):
    return np.sqrt(np.clip(p * (1.0 - p), 0.0, None) / n)


def _finish_moments(s1, s2, n, ref):
    mean = ref + s1 / n
    if n > 1:
        var = (s2 - s1 * s1 / n) / (n - 1)
    else:
        var = np.zeros_like(s1)
    return mean, np.clip(var, 0.0, None)


# --------------------------------------------------------------------------
# message ensembles


def run_message_ensemble(params: MessageModelParams, grid: TimeGrid, n_runs: int, seed: int = 0, *,
                         bridge_correction: bool = True, record_every: int = 1,
                         checkpoints: Sequence[float] = (), threads: Optional[int] = None) -> EnsembleStats:
    """Sample ``n_runs`` independent message paths and aggregate them.

    Path ``i`` uses stream ``(i,)`` of ``SeedSpec(seed)``.  Surviving values
    are kept at each of ``checkpoints`` for the empirical interior density.
    """
    if n_runs < 2:
        raise ValidationError("n_runs must be at least 2")
    seeds = SeedSpec(seed)
    steps = record_steps(grid, record_every, checkpoints)
    cp_steps = sorted({grid.step_of(t) for t in checkpoints})
    n = grid.n_steps
    ref = initial_law_stats(params).mu

    def block(lo, hi):
        # difference arrays: head contributions go straight in, absorbed tails via cumsum
        s1 = np.zeros(n + 2)
        s2 = np.zeros(n + 2)
        d1 = np.zeros(n + 2)
        d2 = np.zeros(n + 2)
        h0 = np.zeros(n + 2)
        h1 = np.zeros(n + 2)
        surv = {k: [] for k in cp_steps}
        for i in range(lo, hi):
            stream = seeds.stream(i)
            s0 = sample_initial(params, stream)
            cp = simulate_absorbed(s0, params.c, grid.dt, n, stream, bridge_correction)
            L = len(cp.head)
            dev = cp.head - ref
            s1[:L] += dev
            s2[:L] += dev * dev
            if cp.bound >= 0:
                db = cp.bound - ref
                d1[L] += db
                d2[L] += db * db
                (h1 if cp.bound == 1 else h0)[L - 1] += 1
                alive_until = L - 2
            else:
                alive_until = n
            for k in cp_steps:
                if k <= alive_until:
                    surv[k].append(cp.head[k])
        s1 += np.cumsum(d1)
        s2 += np.cumsum(d2)
        return s1[:n + 1], s2[:n + 1], np.cumsum(h0)[:n + 1], np.cumsum(h1)[:n + 1], surv

    parts = _run_blocks(block, n_runs, threads)
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    c0 = sum(p[2] for p in parts)
    c1 = sum(p[3] for p in parts)
    mean, var = _finish_moments(s1[steps], s2[steps], n_runs, ref)
    survivors = {int(k): np.array([v for p in parts for v in p[4][k]]) for k in cp_steps}
    return EnsembleStats(
        kind="message", grid=grid, steps=steps, n_runs=n_runs, mean=mean, variance=var,
        hit0_freq=c0[steps] / n_runs, hit1_freq=c1[steps] / n_runs, survivors=survivors,
        meta={"seed": int(seed), "bridge_correction": bool(bridge_correction),
              "params": asdict(params), "backend": kernels.BACKEND},
    )


@dataclass(frozen=True)
class BinnedDensity:
    edges: np.ndarray
    mass: np.ndarray  # fraction of all runs in each bin
    n_runs: int

    @property
    def density(self) -> np.ndarray:
        return self.mass / np.diff(self.edges)

    @property
    def se_mass(self) -> np.ndarray:
        return _binom_se(self.mass, self.n_runs)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])


def empirical_interior_pdf(stats: EnsembleStats, t: float, n_bins: int = 100) -> BinnedDensity:
    """Histogram over (0, 1) of the paths not yet absorbed at ``t``.

    Normalised by the total number of runs, so the bin masses add up to the
    surviving fraction.
    """
    if stats.kind != "message":
        raise CheckpointError("interior pdf only exists for message ensembles")
    k = stats.grid.step_of(t)
    if k not in stats.survivors:
        raise CheckpointError(f"surviving values were not kept at t={t}")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    counts, _ = np.histogram(stats.survivors[k], bins=edges)
    return BinnedDensity(edges, counts / stats.n_runs, stats.n_runs)


# --------------------------------------------------------------------------
# opinion ensembles


def run_opinion_ensemble(system: MedSystem, o0, params: MessageModelParams, grid: TimeGrid, n_runs: int,
                         seed: int = 0, *, bridge_correction: bool = True, record_every: Optional[int] = None,
                         checkpoints: Sequence[float] = (), threads: Optional[int] = None) -> EnsembleStats:
    """Sample ``n_runs`` MED realisations and aggregate per-agent moments.

    Source ``j`` of run ``r`` uses stream ``(r, j)``.  Once all messages of a
    run are absorbed the input is constant, and the run is advanced in closed
    form between record steps; this equals continued zero-order-hold
    stepping up to round-off.
    """
    if n_runs < 2:
        raise ValidationError("n_runs must be at least 2")
    if abs(grid.dt - system.dt) > 1e-15 * system.dt:
        raise GridMismatchError(f"grid dt={grid.dt} differs from system dt={system.dt}")
    o0 = np.asarray(o0, dtype=float)
    N, M = system.n_agents, system.n_sources
    if o0.shape != (N,):
        raise DimensionError(f"initial opinions must have length {N}")
    if record_every is None:
        record_every = default_record_every(grid)
    seeds = SeedSpec(seed)
    n = grid.n_steps
    steps = record_steps(grid, record_every, checkpoints)
    nrec = len(steps)
    gaps = np.diff(steps)
    Q = {int(g): mat_exp(system.A, int(g) * grid.dt) for g in np.unique(gaps)}
    P = np.ascontiguousarray(system.propagator)
    Gm = np.ascontiguousarray(system.zoh_gain)
    has_input = bool(np.any(system.B))

    def simulate(lo, hi):
        R = hi - lo
        if not has_input:
            # alpha = 1: messages never reach the agents, so every run is the same
            # deterministic trajectory (computed identically, hence zero spread)
            out = np.empty((1, nrec, N))
            kernels.zoh_runs(P, Gm, o0[None, :].copy(), np.zeros((1, M, max(n, 1))),
                             np.array([n], dtype=np.int64), steps, out)
            return np.repeat(out, R, axis=0)
        paths = []
        stop = np.empty(R, dtype=np.int64)
        for r in range(lo, hi):
            row = []
            for j in range(M):
                stream = seeds.stream(r, j)
                s0 = sample_initial(params, stream)
                row.append(simulate_absorbed(s0, params.c, grid.dt, n, stream, bridge_correction))
            paths.append(row)
            k_all = max(n if cp.bound < 0 else cp.absorbed_step for cp in row)
            stop[r - lo] = steps[np.searchsorted(steps, k_all)]
        kmax = int(stop.max())
        S = np.empty((R, M, max(kmax, 1)))
        s_final = np.empty((R, M))
        for r, row in enumerate(paths):
            for j, cp in enumerate(row):
                L = min(len(cp.head), kmax)
                S[r, j, :L] = cp.head[:L]
                S[r, j, L:] = cp.bound
                s_final[r, j] = cp.head[-1]
        out = np.empty((R, nrec, N))
        kernels.zoh_runs(P, Gm, np.ascontiguousarray(np.tile(o0, (R, 1))), S, stop, steps, out)
        # closed-form continuation for runs whose inputs are frozen
        first = np.searchsorted(steps, stop)
        fixed = system.fixed_point(s_final)
        for i in range(nrec - 1):
            m = first <= i
            if not m.any():
                continue
            Qi = Q[int(gaps[i])]
            out[m, i + 1] = (out[m, i] - fixed[m]) @ Qi.T + fixed[m]
        return out

    ref = simulate(0, 1)[0]

    def block(lo, hi):
        dev = simulate(lo, hi) - ref
        return dev.sum(axis=0), (dev * dev).sum(axis=0)

    parts = _run_blocks(block, n_runs, threads)
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    mean, var = _finish_moments(s1, s2, n_runs, ref)
    return EnsembleStats(
        kind="opinion", grid=grid, steps=steps, n_runs=n_runs, mean=mean, variance=var,
        meta={"seed": int(seed), "bridge_correction": bool(bridge_correction),
              "params": asdict(params), "alpha": system.network.alpha, "backend": kernels.BACKEND},
    )


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Thresholds:
    mandatory_z: float = 4.0
    advisory_z: float = 3.0
    pdf_bin_z: float = 4.0
    pdf_fraction: float = 0.97
    pdf_bins: int = 100
    min_runs: int = 100
    n_hit_checkpoints: int = 10
    n_opinion_checkpoints: int = 20


@dataclass(frozen=True)
class MessageOracles:
    """Analytic side for a message ensemble; ``params`` may differ from the sampler's."""

    params: MessageModelParams


@dataclass(frozen=True)
class OpinionOracles:
    system: MedSystem
    o0: Sequence[float]
    mu: float


@dataclass
class Check:
    name: str
    time: float
    analytic: float
    empirical: float
    se: float
    z: float
    threshold: float
    mandatory: bool
    kind: str = "two-sided"  # or "upper", "fraction", "exact"
    passed: bool = False
    inconclusive: bool = False
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list
    n_runs: int

    @property
    def inconclusive(self) -> bool:
        return any(c.inconclusive for c in self.checks)

    @property
    def passed(self) -> bool:
        return (not self.inconclusive) and all(c.passed for c in self.checks if c.mandatory)

    def failures(self):
        return [c for c in self.checks if c.mandatory and not c.passed]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "inconclusive": self.inconclusive, "n_runs": self.n_runs,
                "checks": [asdict(c) for c in self.checks]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_json_default, allow_nan=True)

    def to_text(self) -> str:
        lines = [f"{'check':<34}{'t':>10}{'analytic':>14}{'empirical':>14}{'z':>9}  result"]
        for c in self.checks:
            tag = "INCONCL" if c.inconclusive else ("pass" if c.passed else "FAIL")
            if not c.mandatory:
                tag += " (advisory)"
            lines.append(f"{c.name:<34}{c.time:>10.4g}{c.analytic:>14.6g}{c.empirical:>14.6g}{c.z:>9.2f}  {tag}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}"
                     + (" (inconclusive: too few runs)" if self.inconclusive else ""))
        return "\n".join(lines) + "\n"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


# floor on the standard error so pure round-off never reads as a discrepancy
SE_FLOOR = 1e-12


def _z(diff, se, scale=1.0):
    se = max(se, SE_FLOOR * max(1.0, abs(scale)))
    if se > 0:
        return diff / se
    return 0.0 if diff == 0 else math.copysign(math.inf, diff)


def binomial_z(count, n, p):
    """Signed normal quantile of the exact binomial tail of ``count`` successes in ``n``.

    For frequencies with small expected counts the normal approximation
    wildly overstates the surprise of a single event; this keeps a
    ``|z| <= 4`` threshold at its nominal false-alarm rate.
    """
    count = np.asarray(count, dtype=float)
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    upper = _sps.binom.sf(count - 1, n, p)  # P(X >= count)
    lower = _sps.binom.cdf(count, n, p)  # P(X <= count)
    z = np.where(upper < lower, _sps.norm.isf(np.minimum(upper, 0.5)), -_sps.norm.isf(np.minimum(lower, 0.5)))
    return z


def _make(name, t, analytic_v, emp, se, threshold, mandatory, kind="two-sided", detail="", z=None):
    if z is None:
        z = _z(emp - analytic_v, se, analytic_v)
    ok = (z <= threshold) if kind == "upper" else (abs(z) <= threshold)
    return Check(name, float(t), float(analytic_v), float(emp), float(se), float(z), float(threshold),
                 mandatory, kind, bool(ok), False, detail)


def _log_checkpoints(stats: EnsembleStats, count: int) -> list[int]:
    """Indices into ``stats.steps`` near ``count`` log-spaced times up to the horizon."""
    times = stats.times
    pos = times[times > 0]
    if len(pos) == 0:
        return []
    lo = max(pos[0], pos[-1] * 1e-3)
    targets = np.geomspace(lo, pos[-1], count) if lo < pos[-1] else [pos[-1]]
    idx = sorted({int(np.argmin(np.abs(times - t))) for t in targets})
    return idx


def validate(stats: EnsembleStats, oracles, thresholds: Thresholds = Thresholds()) -> ValidationReport:
    if stats.kind == "message":
        if not isinstance(oracles, MessageOracles):
            raise GridMismatchError("message ensemble needs MessageOracles")
        checks = _validate_message(stats, oracles.params, thresholds)
    else:
        if not isinstance(oracles, OpinionOracles):
            raise GridMismatchError("opinion ensemble needs OpinionOracles")
        if abs(oracles.system.dt - stats.grid.dt) > 1e-15 * stats.grid.dt:
            raise GridMismatchError("oracle system and ensemble use different dt")
        checks = _validate_opinion(stats, oracles, thresholds)
    if stats.n_runs < thresholds.min_runs:
        for c in checks:
            c.inconclusive = True
            c.detail = (c.detail + "; " if c.detail else "") + f"n_runs={stats.n_runs} < {thresholds.min_runs}"
    return ValidationReport(checks, stats.n_runs)


def _validate_message(stats, params, th):
    checks = []
    st = initial_law_stats(params)
    c = params.c
    idx = _log_checkpoints(stats, th.n_hit_checkpoints)
    if idx:
        ts = stats.times[idx]
        p0, p1 = analytic.averaged_hitting_curves(params, ts)
        n = stats.n_runs
        for i, t, a0, a1 in zip(idx, ts, p0, p1):
            for name, a, freq in (("hit0", a0, stats.hit0_freq[i]), ("hit1", a1, stats.hit1_freq[i])):
                z = float(binomial_z(round(freq * n), n, a))
                checks.append(_make(f"{name} vs first-passage integral", t, a, freq,
                                    math.sqrt(a * (1 - a) / n), th.mandatory_z, True, z=z))
    se_m, se_v = stats.se_mean, stats.se_variance
    for i in idx:
        t = stats.times[i]
        checks.append(_make("mean vs martingale mean", t, st.mu, stats.mean[i], se_m[i], th.mandatory_z, True))
        checks.append(_make("variance vs upper bound", t, analytic.variance_bound(st, c, t), stats.variance[i],
                            se_v[i], th.mandatory_z, True, kind="upper"))
        absorbed = stats.hit0_freq[i] + stats.hit1_freq[i]
        if analytic.small_t_reliable(absorbed):
            checks.append(_make("variance vs small-t formula", t, analytic.small_t_variance(st, c, t),
                                stats.variance[i], se_v[i], th.advisory_z, False))
    last = len(stats.steps) - 1
    if stats.hit0_freq[last] + stats.hit1_freq[last] > 0.99:
        checks.append(_make("variance vs steady state", stats.times[last], analytic.steady_variance(st),
                            stats.variance[last], se_v[last], th.advisory_z, False))
    if params.fixed_s0 is not None:
        for k in sorted(stats.survivors):
            if k == 0:
                continue
            t = k * stats.grid.dt
            checks.append(_pdf_check(stats, t, params, th))
    return checks


def _pdf_check(stats, t, params, th):
    emp = empirical_interior_pdf(stats, t, th.pdf_bins)
    expected = analytic.interior_bin_masses(emp.edges, t, params.fixed_s0, params.c)
    n = stats.n_runs
    z = binomial_z(np.round(emp.mass * n), n, expected)
    frac = float(np.mean(np.abs(z) <= th.pdf_bin_z))
    return Check("interior pdf bins within z", t, th.pdf_fraction, frac, 0.0, float(np.max(np.abs(z))),
                 th.pdf_bin_z, True, "fraction", frac >= th.pdf_fraction, False,
                 f"{int(np.sum(np.abs(z) > th.pdf_bin_z))} of {len(z)} bins beyond |z|={th.pdf_bin_z}")


def _validate_opinion(stats, oracles: OpinionOracles, th):
    checks = []
    sys_ = oracles.system
    alpha = sys_.network.alpha
    idx = _log_checkpoints(stats, th.n_opinion_checkpoints)
    ts = stats.times[idx]
    analytic_mean = opinion_mean(sys_, oracles.o0, oracles.mu, ts)
    se_m = stats.se_mean
    for row, i in enumerate(idx):
        for a in range(stats.mean.shape[1]):
            checks.append(_make(f"opinion mean agent {a + 1}", stats.times[i], analytic_mean[row, a],
                                stats.mean[i, a], se_m[i, a], th.mandatory_z, True))
    last = len(stats.steps) - 1
    T = stats.times[last]
    if alpha >= 1.0:
        vmax = float(np.max(stats.variance))
        checks.append(Check("degroot variance identically zero", T, 0.0, vmax, 0.0, 0.0 if vmax == 0 else math.inf,
                            0.0, True, "exact", vmax == 0.0))
        return checks
    lim = opinion_variance_limit(sys_, oracles.mu)
    c = float(stats.meta.get("params", {}).get("c", 1.0))
    settled = math.exp((alpha - 1.0) * T) < 1e-6 and math.exp(-0.5 * math.pi ** 2 * c * c * T) < 1e-6
    se_v = stats.se_variance
    for a in range(len(lim)):
        checks.append(_make(f"opinion variance limit agent {a + 1}", T, lim[a], stats.variance[last, a],
                            se_v[last, a], th.mandatory_z if settled else th.advisory_z, settled))
    return checks
