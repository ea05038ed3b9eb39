"""Experiment configuration files (YAML) and their resolution into core types.

Example::

    message: {c: 1.0, xi_low: 0.2, xi_high: 0.8}
    network:
      alpha: 0.3
      W: [[0.2, 0.3, 0.2], [0.7, 0.2, 0.1], [0.1, 0.1, 0.8]]
      U: [[0.8, 0.2], [0.2, 0.2], [0.2, 0.8]]
      o0: [0.2, 0.2, 0.8]
    grid: {dt: 1.0e-4, horizon: 5.0}
    opinion_grid: {dt: 1.0e-3, horizon: 50.0}
    ensemble: {n_runs: 10000, seed: 7, checkpoints: [0.005, 0.01, 0.02]}
    renormalize_rows: true

``grid`` drives message experiments and, unless ``opinion_grid`` is given,
opinion experiments too.  Every error names the file, line and key path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .core import BBMError, MessageModelParams, NetworkModel, TimeGrid, ValidationError

_SCHEMA = {
    "message": {"c", "xi_low", "xi_high", "fixed_s0"},
    "network": {"alpha", "W", "U", "o0"},
    "grid": {"dt", "n_steps", "horizon"},
    "opinion_grid": {"dt", "n_steps", "horizon"},
    "ensemble": {"n_runs", "seed", "bridge_correction", "record_every", "checkpoints", "pdf_bins"},
    "output": None,
    "renormalize_rows": None,
}
_REQUIRED = ("message", "grid")


class ConfigError(BBMError, ValueError):
    def __init__(self, message: str, source: str = "<config>", line: Optional[int] = None, key: str = ""):
        where = source if line is None else f"{source}:{line}"
        if key:
            where += f" [{key}]"
        super().__init__(f"{where}: {message}")
        self.source, self.line, self.key = source, line, key


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    message: MessageModelParams
    grid: TimeGrid
    network: Optional[NetworkModel] = None
    o0: Optional[tuple] = None
    opinion_grid: Optional[TimeGrid] = None
    n_runs: int = 10000
    seed: int = 0
    bridge_correction: bool = True
    record_every: Optional[int] = None
    checkpoints: tuple = ()
    pdf_bins: int = 100
    output: Optional[str] = None
    renormalize_rows: bool = False
    raw_W: Optional[tuple] = None  # matrices as written, before any renormalisation
    raw_U: Optional[tuple] = None

    @property
    def opinion_time_grid(self) -> TimeGrid:
        return self.opinion_grid or self.grid

    def to_dict(self) -> dict:
        """Plain mapping that :func:`load_dict` turns back into an equivalent config."""
        d: dict[str, Any] = {
            "message": {"c": self.message.c, "xi_low": self.message.xi_low, "xi_high": self.message.xi_high},
            "grid": {"dt": self.grid.dt, "n_steps": self.grid.n_steps},
            "ensemble": {"n_runs": self.n_runs, "seed": self.seed, "bridge_correction": self.bridge_correction,
                         "record_every": self.record_every, "checkpoints": list(self.checkpoints),
                         "pdf_bins": self.pdf_bins},
            "renormalize_rows": self.renormalize_rows,
        }
        if self.message.fixed_s0 is not None:
            d["message"]["fixed_s0"] = self.message.fixed_s0
        if self.network is not None:
            d["network"] = {"alpha": self.network.alpha, "W": [list(r) for r in self.raw_W],
                            "U": [list(r) for r in self.raw_U], "o0": list(self.o0)}
        if self.opinion_grid is not None:
            d["opinion_grid"] = {"dt": self.opinion_grid.dt, "n_steps": self.opinion_grid.n_steps}
        if self.output is not None:
            d["output"] = self.output
        return d

    def equivalent(self, other: "ExperimentConfig") -> bool:
        same_net = (self.network is None) == (other.network is None)
        if same_net and self.network is not None:
            same_net = (np.array_equal(self.network.W, other.network.W)
                        and np.array_equal(self.network.U, other.network.U)
                        and self.network.alpha == other.network.alpha and self.o0 == other.o0)
        return same_net and all(getattr(self, f) == getattr(other, f) for f in (
            "message", "grid", "opinion_grid", "n_runs", "seed", "bridge_correction", "record_every",
            "checkpoints", "pdf_bins", "output", "renormalize_rows"))


# --------------------------------------------------------------------------


def _plain(node, path, lines):
    """Convert a composed YAML node to Python data, recording each key path's line."""
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = str(yaml.safe_load(yaml.serialize(k)))
            out[key] = _plain(v, f"{path}.{key}" if path else key, lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_plain(v, f"{path}[{i}]", lines) for i, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


class _Ctx:
    def __init__(self, source, lines):
        self.source, self.lines = source, lines

    def fail(self, key, msg):
        probe = key
        while probe and probe not in self.lines:
            probe = probe.rpartition(".")[0]
        raise ConfigError(msg, self.source, self.lines.get(probe), key)

    def number(self, key, val, *, integer=False):
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self.fail(key, f"expected a number, got {val!r}")
        if integer:
            if isinstance(val, float) and not val.is_integer():
                self.fail(key, f"expected an integer, got {val!r}")
            return int(val)
        if not math.isfinite(val):
            self.fail(key, f"expected a finite number, got {val!r}")
        return float(val)

    def matrix(self, key, val):
        if not isinstance(val, list) or not val or not all(isinstance(r, list) for r in val):
            self.fail(key, "expected a list of rows")
        rows = [[self.number(f"{key}[{i}][{j}]", x) for j, x in enumerate(r)] for i, r in enumerate(val)]
        if len({len(r) for r in rows}) != 1:
            self.fail(key, "rows have different lengths")
        return tuple(tuple(r) for r in rows)


def load_config(path, renormalize_rows: Optional[bool] = None) -> ExperimentConfig:
    """Read and resolve a YAML config; ``renormalize_rows`` overrides the file's flag."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from exc
    return load_text(text, str(path), renormalize_rows)


def load_text(text: str, source: str = "<config>", renormalize_rows: Optional[bool] = None) -> ExperimentConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", source,
                          None if mark is None else mark.line + 1) from exc
    if node is None:
        raise ConfigError("empty config", source)
    lines: dict[str, int] = {}
    data = _plain(node, "", lines)
    return _resolve(data, _Ctx(source, lines), renormalize_rows)


def load_dict(data: dict, source: str = "<dict>", renormalize_rows: Optional[bool] = None) -> ExperimentConfig:
    return _resolve(data, _Ctx(source, {}), renormalize_rows)


def _grid(ctx, sec, g):
    if not isinstance(g, dict):
        ctx.fail(sec, "expected a mapping")
    if "dt" not in g:
        ctx.fail(sec, "missing key 'dt'")
    dt = ctx.number(f"{sec}.dt", g["dt"])
    if ("n_steps" in g) == ("horizon" in g):
        ctx.fail(sec, "give exactly one of 'n_steps' or 'horizon'")
    try:
        if "n_steps" in g:
            return TimeGrid(dt, ctx.number(f"{sec}.n_steps", g["n_steps"], integer=True))
        return TimeGrid.from_horizon(ctx.number(f"{sec}.horizon", g["horizon"]), dt)
    except ValidationError as exc:
        ctx.fail(sec, str(exc))


def _resolve(data, ctx: _Ctx, renormalize_override=None) -> ExperimentConfig:
    if not isinstance(data, dict):
        ctx.fail("", "top level must be a mapping")
    for key, val in data.items():
        if key not in _SCHEMA:
            ctx.fail(key, f"unknown section '{key}'")
        allowed = _SCHEMA[key]
        if allowed is not None:
            if not isinstance(val, dict):
                ctx.fail(key, "expected a mapping")
            for sub in val:
                if sub not in allowed:
                    ctx.fail(f"{key}.{sub}", f"unknown key '{sub}' (allowed: {', '.join(sorted(allowed))})")
    for key in _REQUIRED:
        if key not in data:
            ctx.fail(key, f"missing section '{key}'")

    renorm = data.get("renormalize_rows", False)
    if not isinstance(renorm, bool):
        ctx.fail("renormalize_rows", "expected true or false")
    if renormalize_override is not None:
        renorm = bool(renormalize_override)

    m = data["message"]
    s0 = None if m.get("fixed_s0") is None else ctx.number("message.fixed_s0", m["fixed_s0"])
    # a fixed start makes the uniform support optional
    for k in ("c",) if s0 is not None else ("c", "xi_low", "xi_high"):
        if k not in m:
            ctx.fail("message", f"missing key '{k}'")
    try:
        message = MessageModelParams(
            ctx.number("message.c", m["c"]), ctx.number("message.xi_low", m.get("xi_low", s0)),
            ctx.number("message.xi_high", m.get("xi_high", s0)), s0)
    except ValidationError as exc:
        ctx.fail("message", str(exc))

    grid = _grid(ctx, "grid", data["grid"])
    opinion_grid = _grid(ctx, "opinion_grid", data["opinion_grid"]) if "opinion_grid" in data else None

    network = o0 = raw_W = raw_U = None
    if "network" in data:
        n = data["network"]
        for k in ("alpha", "W", "U", "o0"):
            if k not in n:
                ctx.fail("network", f"missing key '{k}'")
        raw_W, raw_U = ctx.matrix("network.W", n["W"]), ctx.matrix("network.U", n["U"])
        if not isinstance(n["o0"], list):
            ctx.fail("network.o0", "expected a list")
        o0 = tuple(ctx.number(f"network.o0[{i}]", x) for i, x in enumerate(n["o0"]))
        # RowSumError and friends propagate unchanged so callers see the exact cause
        network = NetworkModel.build(raw_W, raw_U, ctx.number("network.alpha", n["alpha"]), renormalize=renorm)
        if len(o0) != network.n_agents:
            ctx.fail("network.o0", f"expected {network.n_agents} entries, got {len(o0)}")

    e = data.get("ensemble", {})
    n_runs = ctx.number("ensemble.n_runs", e.get("n_runs", 10000), integer=True)
    if n_runs < 2:
        ctx.fail("ensemble.n_runs", "need at least 2 runs")
    seed = ctx.number("ensemble.seed", e.get("seed", 0), integer=True)
    if seed < 0:
        ctx.fail("ensemble.seed", "seed must be non-negative")
    bridge = e.get("bridge_correction", True)
    if not isinstance(bridge, bool):
        ctx.fail("ensemble.bridge_correction", "expected true or false")
    record_every = e.get("record_every")
    if record_every is not None:
        record_every = ctx.number("ensemble.record_every", record_every, integer=True)
        if record_every < 1:
            ctx.fail("ensemble.record_every", "must be >= 1")
    cps = e.get("checkpoints", [])
    if not isinstance(cps, list):
        ctx.fail("ensemble.checkpoints", "expected a list of times")
    checkpoints = tuple(ctx.number(f"ensemble.checkpoints[{i}]", t) for i, t in enumerate(cps))
    for i, t in enumerate(checkpoints):
        try:
            grid.step_of(t)
        except BBMError as exc:
            ctx.fail(f"ensemble.checkpoints[{i}]", str(exc))
    pdf_bins = ctx.number("ensemble.pdf_bins", e.get("pdf_bins", 100), integer=True)
    if pdf_bins < 1:
        ctx.fail("ensemble.pdf_bins", "must be >= 1")

    output = data.get("output")
    if output is not None and not isinstance(output, str):
        ctx.fail("output", "expected a directory path")

    return ExperimentConfig(message=message, grid=grid, network=network, o0=o0, opinion_grid=opinion_grid,
                            n_runs=n_runs, seed=seed, bridge_correction=bridge, record_every=record_every,
                            checkpoints=checkpoints, pdf_bins=pdf_bins, output=output,
                            renormalize_rows=renorm, raw_W=raw_W, raw_U=raw_U)
