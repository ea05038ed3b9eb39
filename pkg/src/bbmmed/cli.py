"""Command-line entry point: ``bbmmed <subcommand> [options]``.

Exit codes: 0 success or validation pass, 1 validation failure,
2 usage, config or I/O error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, analytic, kernels
from .bbm import sample_path, write_paths_csv
from .config import ConfigError, ExperimentConfig, load_config, load_dict
from .core import BBMError, SeedSpec, TimeGrid, initial_law_stats, renormalize_rows
from .degroot import degroot_at, degroot_steady_state
from .ensemble import (
    MessageOracles,
    OpinionOracles,
    ValidationReport,
    default_record_every,
    empirical_interior_pdf,
    record_steps,
    run_message_ensemble,
    run_opinion_ensemble,
    validate,
)
from .med import MedSystem, SingularAError, opinion_mean, opinion_mean_limit, opinion_variance_limit

OUT_ENV = "BBMMED_OUT"
DEFAULT_OUT = "bbmmed-out"


# --------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _metadata(cfg: Optional[ExperimentConfig], command: str, **extra) -> dict:
    meta = {"command": command, "version": __version__, "backend": kernels.BACKEND,
            "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")}
    if cfg is not None:
        meta["config"] = cfg.to_dict()
    meta.update(extra)
    return meta


def _file_tag(t: float) -> str:
    return f"{t:.6g}".replace(".", "p")


# --------------------------------------------------------------------------
# shared steps


def _analytic_steps(grid: TimeGrid, cfg: ExperimentConfig) -> np.ndarray:
    # same time points as a simulation with the same config
    every = cfg.record_every or default_record_every(grid)
    return record_steps(grid, every, [t for t in cfg.checkpoints if t <= grid.horizon])


def _message_stats_rows(cfg: ExperimentConfig, times: np.ndarray):
    p = cfg.message
    st = initial_law_stats(p)
    if p.fixed_s0 is not None:
        p0 = analytic.hitting_curve_zero(p.fixed_s0, p.c, times)
        p1 = analytic.hitting_curve_one(p.fixed_s0, p.c, times)
    else:
        p0, p1 = analytic.averaged_hitting_curves(p, times)
    bound = analytic.variance_law_bound_curve(st, p.c, times)
    small = [analytic.small_t_variance(st, p.c, t) for t in times]
    return p0, p1, st, bound, small


def _require_network(cfg: ExperimentConfig) -> None:
    if cfg.network is None:
        raise ConfigError("this command needs a 'network' section")


def _opinion_setup(cfg: ExperimentConfig):
    _require_network(cfg)
    grid = cfg.opinion_time_grid
    return MedSystem.build(cfg.network, grid.dt), grid, initial_law_stats(cfg.message).mu


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate_message(cfg: ExperimentConfig, out: Path, threads: Optional[int], raw_paths: int = 0) -> int:
    stats = run_message_ensemble(cfg.message, cfg.grid, cfg.n_runs, cfg.seed,
                                 bridge_correction=cfg.bridge_correction, record_every=cfg.record_every or 1,
                                 checkpoints=cfg.checkpoints, threads=threads)
    with open(out / "message_stats.csv", "w", newline="") as fh:
        stats.write_csv(fh)
    for t in cfg.checkpoints:
        h = empirical_interior_pdf(stats, t, cfg.pdf_bins)
        write_csv(out / f"message_pdf_t{_file_tag(t)}.csv",
                  ["bin_left", "bin_right", "mass", "density", "se_mass"],
                  zip(h.edges[:-1], h.edges[1:], h.mass, h.density, h.se_mass))
    if raw_paths:
        # path i of the ensemble is a pure function of stream (i,), so this replays it
        seeds = SeedSpec(cfg.seed)
        paths = [sample_path(cfg.message, cfg.grid, seeds.stream(i), cfg.bridge_correction)
                 for i in range(min(raw_paths, cfg.n_runs))]
        with open(out / "message_paths.csv", "w", newline="") as fh:
            write_paths_csv(paths, fh)
    write_json(out / "metadata.json", _metadata(cfg, "simulate-message"))
    return 0


def cmd_message_stats(cfg: ExperimentConfig, out: Path) -> int:
    p = cfg.message
    times = _analytic_steps(cfg.grid, cfg) * cfg.grid.dt
    p0, p1, st, bound, small = _message_stats_rows(cfg, times)
    write_csv(out / "message_analytic.csv",
              ["time", "hit0", "hit1", "mean", "variance_bound", "small_t_variance"],
              zip(times, p0, p1, np.full(len(times), st.mu), bound, small))
    write_json(out / "message_limits.json", {"mean": st.mu, "steady_variance": analytic.steady_variance(st),
                                             "initial_variance": st.delta_sq})
    notes = []
    for t in cfg.checkpoints:
        if t <= 0:
            continue
        if p.fixed_s0 is None:
            notes.append(f"interior density at t={t} skipped: only defined for a fixed initial message")
            continue
        x = np.linspace(0.0, 1.0, 201)
        write_csv(out / f"message_pdf_analytic_t{_file_tag(t)}.csv", ["x", "density"],
                  zip(x, analytic.interior_density(x, t, p.fixed_s0, p.c)))
    write_json(out / "metadata.json", _metadata(cfg, "message-stats", notes=notes))
    return 0


def cmd_simulate_opinions(cfg: ExperimentConfig, out: Path, threads: Optional[int]) -> int:
    system, grid, _ = _opinion_setup(cfg)
    stats = run_opinion_ensemble(system, cfg.o0, cfg.message, grid, cfg.n_runs, cfg.seed,
                                 bridge_correction=cfg.bridge_correction, record_every=cfg.record_every,
                                 checkpoints=[t for t in cfg.checkpoints if t <= grid.horizon], threads=threads)
    with open(out / "opinion_stats.csv", "w", newline="") as fh:
        stats.write_csv(fh)
    write_json(out / "metadata.json", _metadata(cfg, "simulate-opinions"))
    return 0


def cmd_opinion_stats(cfg: ExperimentConfig, out: Path) -> int:
    system, grid, mu = _opinion_setup(cfg)
    times = _analytic_steps(grid, cfg) * grid.dt
    mean = opinion_mean(system, cfg.o0, mu, times)
    base = degroot_at(cfg.network.W, cfg.o0, times)
    n = system.n_agents
    agents = [f"o_{i + 1}" for i in range(n)]
    write_csv(out / "opinion_mean_analytic.csv", ["time"] + agents,
              ([t] + list(row) for t, row in zip(times, mean)))
    write_csv(out / "degroot_baseline.csv", ["time"] + agents, ([t] + list(row) for t, row in zip(times, base)))
    try:
        limits = {"mean_limit": opinion_mean_limit(mu, n), "variance_limit": opinion_variance_limit(system, mu)}
    except SingularAError:
        limits = {"mean_limit": degroot_steady_state(cfg.network.W, cfg.o0), "variance_limit": [0.0] * n,
                  "note": "alpha = 1: messages have no influence, opinions reach the DeGroot consensus"}
    write_json(out / "opinion_limits.json", limits)
    write_json(out / "metadata.json", _metadata(cfg, "opinion-stats"))
    return 0


def run_validation(cfg: ExperimentConfig, threads: Optional[int]) -> list[tuple[str, ValidationReport]]:
    reports = []
    cps = [t for t in cfg.checkpoints if t <= cfg.grid.horizon]
    ms = run_message_ensemble(cfg.message, cfg.grid, cfg.n_runs, cfg.seed,
                              bridge_correction=cfg.bridge_correction, record_every=cfg.record_every or 1,
                              checkpoints=cps, threads=threads)
    reports.append(("message", validate(ms, MessageOracles(cfg.message))))
    if cfg.network is not None:
        system, grid, mu = _opinion_setup(cfg)
        os_ = run_opinion_ensemble(system, cfg.o0, cfg.message, grid, cfg.n_runs, cfg.seed,
                                   bridge_correction=cfg.bridge_correction, record_every=cfg.record_every,
                                   threads=threads)
        reports.append(("opinion", validate(os_, OpinionOracles(system, cfg.o0, mu))))
    return reports


def cmd_validate(cfg: ExperimentConfig, out: Path, threads: Optional[int]) -> int:
    reports = run_validation(cfg, threads)
    passed = all(r.passed for _, r in reports)
    text = "".join(f"== {name} ensemble ==\n{r.to_text()}\n" for name, r in reports)
    text += f"VALIDATION {'PASSED' if passed else 'FAILED'}\n"
    (out / "validation_report.txt").write_text(text)
    write_json(out / "validation_report.json", {"passed": passed, **{n: r.to_dict() for n, r in reports}})
    write_json(out / "metadata.json", _metadata(cfg, "validate"))
    sys.stdout.write(text)
    return 0 if passed else 1


# --------------------------------------------------------------------------
# figure reproduction

PAPER_W = ((0.2, 0.3, 0.2), (0.7, 0.2, 0.1), (0.1, 0.1, 0.8))
PAPER_U = ((0.8, 0.2), (0.2, 0.2), (0.2, 0.8))


def paper_configs(seed: int, n_runs: int = 10000) -> dict[str, ExperimentConfig]:
    """Embedded configurations behind the three figure pairs."""
    ens = {"n_runs": n_runs, "seed": seed}
    fig1 = load_dict({
        "message": {"c": 1.0, "fixed_s0": 0.3},
        "grid": {"dt": 1e-4, "horizon": 5.0},
        "ensemble": {**ens, "checkpoints": [0.005, 0.01, 0.02], "record_every": 50},
    }, "fig1")
    fig2 = load_dict({
        "message": {"c": 1.0, "xi_low": 0.2, "xi_high": 0.8},
        "grid": {"dt": 1e-4, "horizon": 5.0},
        "ensemble": {**ens, "record_every": 50},
    }, "fig2")
    fig3 = load_dict({
        "message": {"c": 1.0, "xi_low": 0.2, "xi_high": 0.8},
        "network": {"alpha": 0.3, "W": [list(r) for r in PAPER_W], "U": [list(r) for r in PAPER_U],
                    "o0": [0.2, 0.2, 0.8]},
        "grid": {"dt": 1e-3, "horizon": 50.0},
        "ensemble": {**ens, "record_every": 50},
        "renormalize_rows": True,
    }, "fig3")
    return {"fig1": fig1, "fig2": fig2, "fig3": fig3}


def cmd_reproduce_paper(out: Path, seed: int, threads: Optional[int], n_runs: int = 10000) -> int:
    cfgs = paper_configs(seed, n_runs)
    validation = {}

    # hitting curves and interior densities for a fixed start
    c1 = cfgs["fig1"]
    p = c1.message
    ms = run_message_ensemble(p, c1.grid, c1.n_runs, c1.seed, record_every=c1.record_every,
                              checkpoints=c1.checkpoints, threads=threads)
    validation["fig1"] = validate(ms, MessageOracles(p)).to_dict()
    t = ms.times
    a0 = analytic.hitting_curve_zero(p.fixed_s0, p.c, t)
    a1 = analytic.hitting_curve_one(p.fixed_s0, p.c, t)
    write_csv(out / "fig1a_hitting.csv",
              ["time", "hit0_empirical", "hit1_empirical", "se_hit0", "se_hit1", "hit0_analytic", "hit1_analytic"],
              zip(t, ms.hit0_freq, ms.hit1_freq, ms.se_hit0, ms.se_hit1, a0, a1))
    rows = []
    for tc in c1.checkpoints:
        h = empirical_interior_pdf(ms, tc, c1.pdf_bins)
        exact = analytic.interior_bin_masses(h.edges, tc, p.fixed_s0, p.c) / np.diff(h.edges)
        at_center = analytic.interior_density(h.centers, tc, p.fixed_s0, p.c)
        width = np.diff(h.edges)
        rows += [(tc, lo, hi, d, se, e, f) for lo, hi, d, se, e, f in
                 zip(h.edges[:-1], h.edges[1:], h.density, h.se_mass / width, exact, at_center)]
    write_csv(out / "fig1b_interior_pdf.csv",
              ["time", "bin_left", "bin_right", "density_empirical", "se_density", "density_analytic_bin",
               "density_analytic_center"], rows)

    # message moments for a uniform start
    c2 = cfgs["fig2"]
    p2 = c2.message
    ms2 = run_message_ensemble(p2, c2.grid, c2.n_runs, c2.seed, record_every=c2.record_every, threads=threads)
    validation["fig2"] = validate(ms2, MessageOracles(p2)).to_dict()
    st = initial_law_stats(p2)
    t2 = ms2.times
    write_csv(out / "fig2a_message_mean.csv", ["time", "mean_empirical", "se_mean", "mean_analytic"],
              zip(t2, ms2.mean, ms2.se_mean, np.full(len(t2), st.mu)))
    write_csv(out / "fig2b_message_variance.csv",
              ["time", "variance_empirical", "se_variance", "variance_bound", "small_t_variance", "steady_variance"],
              zip(t2, ms2.variance, ms2.se_variance, analytic.variance_law_bound_curve(st, p2.c, t2),
                  [analytic.small_t_variance(st, p2.c, x) for x in t2],
                  np.full(len(t2), analytic.steady_variance(st))))

    # MED opinions
    c3 = cfgs["fig3"]
    system = MedSystem.build(c3.network, c3.grid.dt)
    mu = initial_law_stats(c3.message).mu
    os_ = run_opinion_ensemble(system, c3.o0, c3.message, c3.grid, c3.n_runs, c3.seed,
                               record_every=c3.record_every, threads=threads)
    validation["fig3"] = validate(os_, OpinionOracles(system, c3.o0, mu)).to_dict()
    t3 = os_.times
    mean_a = opinion_mean(system, c3.o0, mu, t3)
    base = degroot_at(c3.network.W, c3.o0, t3)
    vlim = opinion_variance_limit(system, mu)
    se_m, se_v = os_.se_mean, os_.se_variance
    n = system.n_agents
    write_csv(out / "fig3a_opinion_mean.csv",
              ["time", "agent", "mean_empirical", "se_mean", "mean_analytic", "degroot_baseline"],
              ((t3[i], a + 1, os_.mean[i, a], se_m[i, a], mean_a[i, a], base[i, a])
               for i in range(len(t3)) for a in range(n)))
    write_csv(out / "fig3b_opinion_variance.csv",
              ["time", "agent", "variance_empirical", "se_variance", "variance_limit"],
              ((t3[i], a + 1, os_.variance[i, a], se_v[i, a], vlim[a]) for i in range(len(t3)) for a in range(n)))

    write_json(out / "provenance.json", {
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "version": __version__,
        "backend": kernels.BACKEND,
        "seed": seed,
        "configs": {k: v.to_dict() for k, v in cfgs.items()},
        "renormalization": {
            "note": "the printed W and U are not row-stochastic; each row was divided by its sum",
            "W_printed": PAPER_W, "W_used": renormalize_rows(PAPER_W),
            "U_printed": PAPER_U, "U_used": renormalize_rows(PAPER_U),
        },
        "validation": {k: {"passed": v["passed"], "inconclusive": v["inconclusive"]} for k, v in validation.items()},
        "validation_detail": validation,
    })
    ok = all(v["passed"] for v in validation.values())
    sys.stdout.write(f"wrote 6 datasets and provenance.json to {out}; embedded validation "
                     f"{'passed' if ok else 'FAILED'}\n")
    return 0


# --------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV}, the config, or ./{DEFAULT_OUT})")
    common.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    common.add_argument("--n-runs", type=int, help="ensemble size (overrides the config)")
    with_cfg = argparse.ArgumentParser(add_help=False)
    with_cfg.add_argument("--config", required=True, help="YAML experiment config")
    with_cfg.add_argument("--renormalize-rows", action="store_true",
                          help="divide each row of W and U by its sum instead of rejecting them")

    parser = argparse.ArgumentParser(prog="bbmmed", description="Bounded Brownian messages and MED opinion dynamics")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sm = sub.add_parser("simulate-message", parents=[common, with_cfg], help="message path ensemble statistics")
    sm.add_argument("--raw-paths", type=int, default=0, metavar="K", help="also dump the first K full paths")
    sub.add_parser("message-stats", parents=[common, with_cfg], help="analytic message curves")
    sub.add_parser("simulate-opinions", parents=[common, with_cfg], help="MED opinion ensemble statistics")
    sub.add_parser("opinion-stats", parents=[common, with_cfg], help="analytic opinion curves and limits")
    sub.add_parser("validate", parents=[common, with_cfg], help="Monte Carlo vs analytic checks")
    sub.add_parser("reproduce-paper", parents=[common], help="regenerate every figure dataset")
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config, True if args.renormalize_rows else None)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.n_runs is not None:
        cfg = replace(cfg, n_runs=args.n_runs)
    return cfg


def _out_dir(args, cfg: Optional[ExperimentConfig]) -> Path:
    out = args.out or os.environ.get(OUT_ENV) or (cfg.output if cfg else None) or DEFAULT_OUT
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        sys.stderr.write("error: --threads must be >= 1\n")
        return 2
    if args.n_runs is not None and args.n_runs < 2:
        sys.stderr.write("error: --n-runs must be >= 2\n")
        return 2
    if args.seed is not None and args.seed < 0:
        sys.stderr.write("error: --seed must be non-negative\n")
        return 2
    try:
        if args.command == "reproduce-paper":
            out = _out_dir(args, None)
            return cmd_reproduce_paper(out, args.seed if args.seed is not None else 0, args.threads,
                                       args.n_runs or 10000)
        cfg = _load(args)
        out = _out_dir(args, cfg)
        if args.command == "simulate-message":
            return cmd_simulate_message(cfg, out, args.threads, args.raw_paths)
        if args.command == "message-stats":
            return cmd_message_stats(cfg, out)
        if args.command == "simulate-opinions":
            return cmd_simulate_opinions(cfg, out, args.threads)
        if args.command == "opinion-stats":
            return cmd_opinion_stats(cfg, out)
        return cmd_validate(cfg, out, args.threads)
    except (BBMError, OSError) as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
