"""Benchmark harness: config file in, trace and summary CSVs out.

The run configuration is a flat key-value text file (``key = value``, ``#``
comments, unknown keys rejected)::

    instance = bmc                # mc | bmc
    data = binomial               # binomial | truncnormal | csv:<path>
    seed = 0
    alpha = 10
    beta = 20
    mu = 2
    theta = 1, 0.1                # one run per value
    methods = IA, DA, ECG, AG
    rho_hat = 1e-6
    relative_residual = true
    time_budget_s = 1000
    checkpoints = 100, 200, 400, 800
    block_rows = 5                # synthetic data layout
    block_cols = 5
    block_shape = 50x100
    density = 0.25
    mode = practical              # practical | strict
    outer_cap = 1000000           # optional determinism aid
    output_dir = runs/out

Each (theta, method) pair produces ``trace_theta<theta>_<method>.csv`` with
columns (k, elapsed_s, phi, resid, min_resid, lambda, inner_iters); the
summary table has rows (theta, m, M, method, checkpoint_s, min_resid) with
empty cells where no residual existed yet.  Reruns with the same seed change
only the elapsed_s values.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import re
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import model, problems
from .baselines import BaselineConfig, ag_run, ecg_run
from .icg import IcgConfig, dynamic_icg

METHODS = ("IA", "DA", "ECG", "AG")

_KNOWN_KEYS = {
    "instance",
    "data",
    "seed",
    "alpha",
    "beta",
    "mu",
    "theta",
    "methods",
    "rho_hat",
    "relative_residual",
    "time_budget_s",
    "checkpoints",
    "block_rows",
    "block_cols",
    "block_shape",
    "density",
    "mode",
    "outer_cap",
    "output_dir",
}


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass
class RunConfig:
    instance: str = "bmc"
    data: str = "binomial"
    seed: int = 0
    alpha: float = 10.0
    beta: float = 20.0
    mu: float = 2.0
    thetas: tuple[float, ...] = (1.0,)
    methods: tuple[str, ...] = ("IA", "DA", "ECG", "AG")
    rho_hat: float = 1e-6
    relative_residual: bool = True
    time_budget_s: float = 1000.0
    checkpoints: tuple[float, ...] = (100.0, 200.0, 400.0, 800.0)
    block_rows: int = 5
    block_cols: int = 5
    block_shape: tuple[int, int] = (50, 100)
    density: float = 0.25
    mode: str = "practical"
    outer_cap: int | None = None
    output_dir: str = "bench_out"

    def validate(self):
        if self.instance not in ("mc", "bmc"):
            raise ConfigError(f"unknown instance {self.instance!r}")
        if not (self.data in ("binomial", "truncnormal") or self.data.startswith("csv:")):
            raise ConfigError(f"unknown data source {self.data!r}")
        if not self.methods:
            raise ConfigError("at least one method is required")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}, expected one of {METHODS}")
        if not self.thetas:
            raise ConfigError("at least one theta is required")
        if not self.time_budget_s > 0:
            raise ConfigError("time_budget_s must be positive")
        if any(c <= 0 for c in self.checkpoints):
            raise ConfigError("checkpoints must be positive")
        if self.mode not in ("practical", "strict"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not self.rho_hat > 0:
            raise ConfigError("rho_hat must be positive")


def _parse_bool(val: str) -> bool:
    low = val.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {val!r}")


def parse_config(path) -> RunConfig:
    cfg = RunConfig()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _KNOWN_KEYS:
                raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
            try:
                _assign(cfg, key, val)
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"{path}: line {lineno}: {exc}") from exc
    cfg.validate()
    return cfg


def _assign(cfg: RunConfig, key: str, val: str):
    if key == "theta":
        cfg.thetas = tuple(float(tok) for tok in val.split(","))
    elif key == "methods":
        cfg.methods = tuple(tok.strip().upper() for tok in val.split(","))
    elif key == "checkpoints":
        cfg.checkpoints = tuple(float(tok) for tok in val.split(","))
    elif key == "block_shape":
        p, _, q = val.lower().partition("x")
        cfg.block_shape = (int(p), int(q))
    elif key in ("alpha", "beta", "mu", "rho_hat", "density"):
        setattr(cfg, key, float(val))
    elif key == "time_budget_s":
        cfg.time_budget_s = float(val)
    elif key in ("seed", "block_rows", "block_cols"):
        setattr(cfg, key, int(val))
    elif key == "outer_cap":
        cfg.outer_cap = int(val) if val else None
    elif key == "relative_residual":
        cfg.relative_residual = _parse_bool(val)
    elif key == "rho_hat":
        cfg.rho_hat = float(val)
    else:
        setattr(cfg, key, val)


def _load_data(cfg: RunConfig):
    if cfg.data.startswith("csv:"):
        A, omega = problems.load_ratings_csv(cfg.data[4:])
        layout = problems.BlockLayout(1, 1, A.shape)
        return A, omega, layout
    layout = problems.BlockLayout(cfg.block_rows, cfg.block_cols, cfg.block_shape)
    A, omega = problems.synth_matrix(cfg.data, layout, density=cfg.density, seed=cfg.seed)
    if cfg.instance == "mc":
        layout = problems.BlockLayout(1, 1, A.shape)
    return A, omega, layout


def _build_instance(cfg: RunConfig, theta: float):
    A, omega, layout = _load_data(cfg)
    params = problems.McParams(cfg.alpha, cfg.beta, cfg.mu, theta, A, omega, seed=cfg.seed)
    p = problems.bmc_instance(params, layout)
    # the shifted-binomial draw generally violates the Frobenius-ball
    # constraint, and the solvers need a feasible start
    z0 = model.project_domain(p, problems.starting_point(A, omega, seed=cfg.seed))
    return p, z0


def _run_one(cfg: RunConfig, p, z0, method: str):
    if method in ("IA", "DA"):
        kw = dict(
            rho_hat=cfg.rho_hat,
            relative_residual=cfg.relative_residual,
            time_budget=cfg.time_budget_s,
        )
        if cfg.outer_cap is not None:
            kw["outer_cap"] = cfg.outer_cap
        if cfg.mode == "strict":
            M1 = p.curvature.M1
            lam = 0.9 * (0.5 - 0.25) / M1 if M1 > 0 else 1.0
            icfg = IcgConfig.strict(lam, **kw)
        else:
            icfg = IcgConfig.for_problem(p, **kw)
        return dynamic_icg(method, p, icfg, z0)
    bcfg = BaselineConfig(
        rho_hat=cfg.rho_hat,
        relative_residual=cfg.relative_residual,
        time_budget=cfg.time_budget_s,
        iteration_cap=cfg.outer_cap if cfg.outer_cap is not None else 10**8,
    )
    return ecg_run(p, bcfg, z0) if method == "ECG" else ag_run(p, bcfg, z0)


def _atomic_write_rows(path, header, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x)) if isinstance(x, float) else str(x)


TRACE_HEADER = ("k", "elapsed_s", "phi", "resid", "min_resid", "lambda", "inner_iters")


def trace_path(output_dir: str, theta: float, method: str) -> str:
    return os.path.join(output_dir, f"trace_theta{theta:g}_{method}.csv")


def run_benchmark(cfg: RunConfig, parallelism: int = 1):
    """Run every (theta, method) pair; returns (summary rows, trace paths)."""
    cfg.validate()
    jobs = []
    for theta in cfg.thetas:
        p, z0 = _build_instance(cfg, theta)
        for method in cfg.methods:
            jobs.append((theta, method, p, z0))

    def work(job):
        theta, method, p, z0 = job
        return theta, method, p, _run_one(cfg, p, z0, method)

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(job) for job in jobs]

    summary_rows = []
    paths = []
    for theta, method, p, outcome in results:
        rows = [
            (
                rec.k,
                _fmt(rec.wall_seconds),
                _fmt(rec.phi),
                _fmt(rec.resid),
                _fmt(rec.min_resid),
                _fmt(rec.lam),
                rec.inner_iterations,
            )
            for rec in outcome.trace
        ]
        path = trace_path(cfg.output_dir, theta, method)
        _atomic_write_rows(path, TRACE_HEADER, rows)
        paths.append(path)
        c = p.curvature
        for checkpoint in cfg.checkpoints:
            summary_rows.append(
                (
                    _fmt(theta),
                    _fmt(c.m1 + c.m2),
                    _fmt(c.M1 + c.M2),
                    method,
                    _fmt(checkpoint),
                    _fmt(outcome.trace.min_resid_before(checkpoint)),
                )
            )
    summary_path = os.path.join(cfg.output_dir, "summary.csv")
    _atomic_write_rows(
        summary_path, ("theta", "m", "M", "method", "checkpoint_s", "min_resid"), summary_rows
    )
    return summary_rows, paths


_TRACE_RE = re.compile(r"trace_theta(?P<theta>[^_]+)_(?P<method>[A-Z]+)\.csv$")


def emit_plotdata(trace_paths, output_dir: str):
    """Long-format plot CSVs: elapsed vs log10 phi and vs log10 min_resid.

    Rows with nonpositive values are dropped; returns the dropped count per
    output file.
    """
    if not trace_paths:
        raise ValueError("no trace files given")
    series = []
    for path in trace_paths:
        m = _TRACE_RE.search(os.path.basename(path))
        if m is None:
            raise ValueError(f"cannot infer theta/method from {path!r}")
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: empty trace")
        series.append((m.group("theta"), m.group("method"), rows))

    dropped = {}
    for column, fname in (("phi", "plot_phi.csv"), ("min_resid", "plot_min_resid.csv")):
        out_rows = []
        n_dropped = 0
        for theta, method, rows in series:
            for row in rows:
                raw = row[column]
                if raw == "":
                    n_dropped += 1
                    continue
                val = float(raw)
                if val <= 0:
                    n_dropped += 1
                    continue
                out_rows.append((theta, method, row["elapsed_s"], _fmt(math.log10(val))))
        path = os.path.join(output_dir, fname)
        _atomic_write_rows(path, ("theta", "method", "elapsed_s", "log10_value"), out_rows)
        dropped[fname] = n_dropped
    return dropped


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="icg-bench",
        description="Benchmark inexact composite gradient solvers on (B)MC instances.",
    )
    parser.add_argument("config", help="run configuration file (key = value lines)")
    parser.add_argument("--output-dir", help="override the configured output directory")
    parser.add_argument("--parallel", type=int, default=1, help="worker slots for independent runs")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--mode", choices=("strict", "practical"), help="override solver mode")
    parser.add_argument("--plots", action="store_true", help="also emit plot CSVs")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.output_dir is not None:
            cfg.output_dir = args.output_dir
        if args.seed is not None:
            cfg.seed = args.seed
        if args.mode is not None:
            cfg.mode = args.mode
        summary, paths = run_benchmark(cfg, parallelism=max(args.parallel, 1))
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.plots:
        emit_plotdata(paths, cfg.output_dir)
    print(f"wrote {len(paths)} trace file(s) and summary.csv under {cfg.output_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
