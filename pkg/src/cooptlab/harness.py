"""Experiment orchestration: plans, sweeps and file output.

CSV columns (stable order, numbers in %.17g so they parse back exactly):

    config_system, config_market, model, my, psi, fip, mu,
    demand_MWh, price_eur_MWh, gross_welfare_eur, net_welfare_eur,
    consumer_payment_eur, reserve_capacity_payment_eur,
    pct_demand, pct_price, pct_gross, pct_net, pct_consumer, pct_reserve,
    status, iterations, residual, wall_ms

Metric fields are empty for solves that produced no schedule.  ``wall_ms``
is empty unless timing is requested, which keeps repeated runs
byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .metrics import MetricsReport, compute_metrics
from .presets import MARKET_PRESETS, SYSTEM_PRESETS, ConfigError, apply_overrides, market_preset, system_preset
from .scenarios import build_scenarios
from .solvers.equilibrium import detect_jumps, primal_point, solve_com, solve_eqm

MODELS = ("COM", "EQM")
SOLVED = ("optimal", "iteration-limit")      # statuses that carry a schedule

METRIC_COLUMNS = (
    ("demand_MWh", "demand_da"),
    ("price_eur_MWh", "equil_price"),
    ("gross_welfare_eur", "gross_welfare"),
    ("net_welfare_eur", "net_welfare"),
    ("consumer_payment_eur", "consumer_payment"),
    ("reserve_capacity_payment_eur", "reserve_capacity_payment"),
    ("pct_demand", "pct_demand"),
    ("pct_price", "pct_price"),
    ("pct_gross", "pct_gross"),
    ("pct_net", "pct_net"),
    ("pct_consumer", "pct_consumer"),
    ("pct_reserve", "pct_reserve"),
)
CSV_COLUMNS = (("config_system", "config_market", "model", "my", "psi", "fip", "mu")
               + tuple(c for c, _ in METRIC_COLUMNS)
               + ("status", "iterations", "residual", "wall_ms"))


# ---------------------------------------------------------------------------
# plans


@dataclass(frozen=True)
class Task:
    system: str
    market: str
    model: str
    overrides: dict = field(default_factory=dict, hash=False, compare=False)


@dataclass
class ExperimentPlan:
    """Solves to run (in order), where to write results and how many worker
    processes to use (0: all available cores).

    ``config`` is a parsed config tree applied to every task before the
    task's own ``overrides``.
    """

    tasks: list[Task]
    csv_path: Path | None = None
    json_path: Path | None = None
    svg_dir: Path | None = None
    parallelism: int = 0
    config: dict = field(default_factory=dict)
    timing: bool = False

    def __post_init__(self):
        if self.parallelism < 0:
            raise ValueError("parallelism must be >= 0")
        for task in self.tasks:
            if task.system not in SYSTEM_PRESETS:
                raise ValueError(f"unknown system preset {task.system!r}")
            if task.market not in MARKET_PRESETS:
                raise ValueError(f"unknown market preset {task.market!r}")
            if task.model not in MODELS:
                raise ValueError(f"unknown model {task.model!r}; choose from {MODELS}")
            # type-checks the overrides; raises ConfigError
            resolve(task, self.config)

    @classmethod
    def full(cls, systems=None, markets=None, models=MODELS, **kwargs) -> "ExperimentPlan":
        """Every (system, market, model) triple, systems outermost."""
        systems = list(SYSTEM_PRESETS) if systems is None else list(systems)
        markets = list(MARKET_PRESETS) if markets is None else list(markets)
        tasks = [Task(s, m, k) for s in systems for m in markets for k in models]
        return cls(tasks=tasks, **kwargs)

    @property
    def workers(self) -> int:
        return self.parallelism or (os.cpu_count() or 1)


def _merge(base: dict, extra: dict) -> dict:
    out = {k: dict(v) if isinstance(v, dict) else v for k, v in base.items()}
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def resolve(task: Task, config: dict | None = None):
    """(system, market, normalization bases) for a task."""
    tree = _merge(config or {}, task.overrides)
    return apply_overrides(system_preset(task.system), market_preset(task.market), tree)


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class ResultRow:
    system: str
    market: str
    model: str
    my: float
    psi: float
    fip: float
    mu: float
    metrics: MetricsReport | None
    status: str
    iterations: int
    residual: float
    wall_ms: float | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def as_dict(self) -> dict:
        out = {"config_system": self.system, "config_market": self.market, "model": self.model,
               "my": self.my, "psi": self.psi, "fip": self.fip, "mu": self.mu}
        for col, attr in METRIC_COLUMNS:
            out[col] = None if self.metrics is None else getattr(self.metrics, attr)
        out.update(status=self.status, iterations=self.iterations, residual=self.residual,
                   wall_ms=self.wall_ms)
        return out


def _solve(sys, mkt, scen, model, **kwargs):
    if model == "COM":
        return solve_com(sys, mkt, scen)
    return solve_eqm(sys, mkt, scen, **kwargs)


def _row(task: Task, sys, mkt, base, sol, wall: float, timing: bool) -> ResultRow:
    metrics = None
    if sol.report.status in SOLVED:
        scen = build_scenarios(mkt.mu, n=mkt.n_scenarios)
        metrics = compute_metrics(sol, sys, mkt, scen, base)
    return ResultRow(system=task.system, market=task.market, model=task.model,
                     my=mkt.my, psi=mkt.psi, fip=mkt.fip, mu=mkt.mu, metrics=metrics,
                     status=sol.report.status, iterations=sol.report.iterations,
                     residual=sol.report.residual, wall_ms=1e3 * wall if timing else None,
                     message=sol.report.message)


def run_task(task: Task, config: dict | None = None, timing: bool = False) -> ResultRow:
    """One solve.  Solver failures come back as rows with a failure status."""
    sys, mkt, base = resolve(task, config)
    # one BLAS thread per solve: results must not depend on the worker layout
    with threadpool_limits(limits=1):
        t0 = time.perf_counter()
        scen = build_scenarios(mkt.mu, n=mkt.n_scenarios)
        sol = _solve(sys, mkt, scen, task.model)
        wall = time.perf_counter() - t0
    return _row(task, sys, mkt, base, sol, wall, timing)


def _run_task_args(args):
    return run_task(*args)


def run_sweep(plan: ExperimentPlan) -> list[ResultRow]:
    """Run every task of the plan; rows come back in plan order whatever the
    completion order, and outputs named in the plan are written."""
    args = [(task, plan.config, plan.timing) for task in plan.tasks]
    workers = min(plan.workers, max(len(args), 1))
    if workers <= 1:
        rows = [_run_task_args(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_task_args, args))
    if plan.csv_path is not None:
        emit(rows, "csv", plan.csv_path)
    if plan.json_path is not None:
        emit(rows, "json", plan.json_path)
    if plan.svg_dir is not None and rows:
        emit(rows, "svg", plan.svg_dir)
    return rows


# ---------------------------------------------------------------------------
# reserve-demand sweep


@dataclass(frozen=True)
class MySweepResult:
    grid: np.ndarray
    rows: list[ResultRow]
    steps: np.ndarray            # first-stage change (MW, max norm) between grid points
    median_step: float | None
    jumps: tuple[tuple[float, float, float], ...]   # (my from, my to, change)
    message: str = ""

    def report(self) -> str:
        lines = [f"{len(self.rows)} grid points, My {self.grid[0]:.6g} -> {self.grid[-1]:.6g}"]
        if self.median_step is None:
            lines.append(self.message or "insufficient data for jump statistics")
        else:
            lines.append(f"median step {self.median_step:.6g} MW")
            if not self.jumps:
                lines.append("no jumps flagged")
            for lo, hi, change in self.jumps:
                lines.append(f"jump between My = {lo:.6g} and {hi:.6g}: {change:.6g} MW")
        failed = [r for r in self.rows if r.status != "optimal"]
        if failed:
            lines.append(f"{len(failed)} grid points not optimal: "
                         + ", ".join(f"My = {r.my:.6g} ({r.status})" for r in failed))
        return "\n".join(lines)


def my_sweep(system: str, market: str, start: float, stop: float, steps: int,
             model: str = "EQM", config: dict | None = None, timing: bool = False) -> MySweepResult:
    """Solve along an evenly spaced grid of the wind reserve factor My.

    EQM solves are warm-started with the previous point's weights and
    basis.  A step is flagged as a jump when its first-stage change exceeds
    ten times the median step.  Failed points are reported and skipped by
    the jump statistics.
    """
    if not start < stop:
        raise ValueError("the My grid needs start < stop")
    if steps < 2:
        raise ValueError("the My grid needs at least two points")
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    grid = np.linspace(start, stop, steps)
    rows, points = [], []
    warm: dict = {}
    with threadpool_limits(limits=1):
        for my in grid:
            task = Task(system, market, model, {"market": {"my": float(my)}})
            sys, mkt, base = resolve(task, config)
            scen = build_scenarios(mkt.mu, n=mkt.n_scenarios)
            t0 = time.perf_counter()
            sol = _solve(sys, mkt, scen, model, **warm)
            wall = time.perf_counter() - t0
            rows.append(_row(task, sys, mkt, base, sol, wall, timing))
            if sol.report.ok:
                points.append((float(my), primal_point(sol)))
                if model == "EQM":
                    warm = {"weights": sol.weights, "basis": sol.basis}
    if len(points) < 2:
        return MySweepResult(grid, rows, np.zeros(0), None, (), "fewer than two solved points")
    found = detect_jumps([p for _, p in points])
    mys = [m for m, _ in points]
    jumps = tuple((mys[i], mys[i + 1], float(found.steps[i])) for i in found.jumps)
    return MySweepResult(grid, rows, found.steps, found.median, jumps, found.message)


# ---------------------------------------------------------------------------
# output


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return "%.17g" % float(value)


def to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        d = row.as_dict()
        w.writerow([_fmt(d[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def to_json(rows) -> str:
    data = [{k: _json_value(v) for k, v in row.as_dict().items()} for row in rows]
    return json.dumps(data, indent=1) + "\n"


def read_csv(path) -> list[dict]:
    """Rows of a results CSV as dicts; numeric fields as float (None if empty)."""
    text_fields = {"config_system", "config_market", "model", "status"}
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append({k: (v if k in text_fields else (float(v) if v != "" else None))
                        for k, v in rec.items()})
    return out


def emit(rows, fmt: str, path) -> list[Path]:
    """Write rows as csv or json to ``path``, or as svg charts (one file per
    system preset) into the directory ``path``.  Returns the files written."""
    path = Path(path)
    if fmt == "csv":
        path.write_text(to_csv(rows))
        return [path]
    if fmt == "json":
        path.write_text(to_json(rows))
        return [path]
    if fmt == "svg":
        from .plotting import write_charts
        records = [r.as_dict() if isinstance(r, ResultRow) else r for r in rows]
        if not records:
            raise ValueError("svg output needs at least one row")
        return write_charts(records, path)
    raise ValueError(f"unknown format {fmt!r}; choose csv, json or svg")


__all__ = [
    "CSV_COLUMNS", "ConfigError", "ExperimentPlan", "MODELS", "MySweepResult", "ResultRow", "Task",
    "emit", "my_sweep", "read_csv", "resolve", "run_sweep", "run_task", "to_csv", "to_json",
]
