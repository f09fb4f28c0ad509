"""Seeded Monte Carlo sweeps over confidence bound, population and ``b``.

Every run starts from expectations on the even grid over ``[5, 25]`` with
uniform random initial uncertainties, and is simulated until the network
convergence is confirmed (or ``max_steps`` is hit).  The metric is the
number of converged groups for the Local reference and the number of
steps to consensus otherwise.

Run ``k`` of every cell uses seed ``base_seed + k``.  Cells therefore share
random numbers (common random numbers), which keeps comparisons between
neighbouring cells tight, and any cell can be re-run on its own.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError
from .market import (
    DEFAULT_MAX_STEPS,
    MarketParams,
    RealPrice,
    TraderSpec,
    grid_centers,
    initial_state,
    rng_streams,
    run_simulation,
)
from .network import Global, Local

GROUP_COUNT = "group_count"
STEPS = "steps_to_consensus"

SCHEMES = {"local": Local(), "global": Global(), "realprice": RealPrice()}


@dataclass(frozen=True)
class GridPoint:
    d: float
    n: int
    b: float


@dataclass(frozen=True)
class ExperimentGrid:
    scheme: str
    d_values: tuple[float, ...]
    n_values: tuple[int, ...]
    b_values: tuple[float, ...]
    runs_per_cell: int = 100
    a: float = 0.002
    sigma_eps: float = 0.02
    p0: float = 10.0
    center_range: tuple[float, float] = (5.0, 25.0)
    sdv_range: tuple[float, float] = (0.0, 1.0)
    base_seed: int = 0
    max_steps: int = DEFAULT_MAX_STEPS

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidInputError(f"scheme must be one of {sorted(SCHEMES)}, got {self.scheme!r}")
        for name in ("d_values", "n_values", "b_values"):
            values = tuple(getattr(self, name))
            if not values:
                raise InvalidInputError(f"{name} must be non-empty")
            object.__setattr__(self, name, values)
        if any(not 0 <= d <= 1 for d in self.d_values):
            raise InvalidInputError("d values must lie in [0, 1]")
        if any(int(n) != n or n < 1 for n in self.n_values):
            raise InvalidInputError("n values must be positive integers")
        if any(not b > 0 for b in self.b_values):
            raise InvalidInputError("b values must be positive")
        if self.runs_per_cell < 1:
            raise InvalidInputError("runs_per_cell must be at least 1")
        lo, hi = self.sdv_range
        if not 0 <= lo < hi:
            raise InvalidInputError("sdv_range must satisfy 0 <= lo < hi")

    @property
    def metric(self) -> str:
        return GROUP_COUNT if self.scheme == "local" else STEPS

    def points(self) -> list[GridPoint]:
        return [GridPoint(d, int(n), b) for d, n, b in itertools.product(self.d_values, self.n_values, self.b_values)]


@dataclass(frozen=True)
class CellStats:
    metric: str
    mean: float
    std: float
    count: int
    shortfall: int
    values: tuple[float, ...] = field(default=(), repr=False)


def run_seed(grid: ExperimentGrid, run_index: int) -> int:
    return int(grid.base_seed) + int(run_index)


def run_once(grid: ExperimentGrid, point: GridPoint, seed: int) -> float | None:
    """Metric of one run, or ``None`` if it did not converge within ``max_steps``."""
    traders = [TraderSpec.plain(grid.a, point.d)] * point.n
    params = MarketParams(
        traders, grid.sigma_eps, SCHEMES[grid.scheme], point.b, seed=seed, max_steps=grid.max_steps
    )
    init_rng, _ = rng_streams(seed)
    sdvs = init_rng.uniform(grid.sdv_range[0], grid.sdv_range[1], point.n)
    state = initial_state(grid_centers(point.n, *grid.center_range), sdvs, grid.p0)
    trace = run_simulation(params, state, grid.max_steps, until_converged=True)
    record = trace.convergence
    if not record.converged:
        return None
    return float(record.partition.q) if grid.metric == GROUP_COUNT else float(record.t_N)


def summarize(metric: str, values: Sequence[float | None]) -> CellStats:
    done = [v for v in values if v is not None]
    shortfall = len(values) - len(done)
    if not done:
        return CellStats(metric, math.nan, math.nan, 0, shortfall, ())
    arr = np.asarray(done, dtype=float)
    return CellStats(metric, float(arr.mean()), float(arr.std()), arr.size, shortfall, tuple(done))


def run_cell(grid: ExperimentGrid, point: GridPoint, runs: int | None = None) -> CellStats:
    runs = grid.runs_per_cell if runs is None else runs
    return summarize(grid.metric, [run_once(grid, point, run_seed(grid, k)) for k in range(runs)])


def _cell_job(args):
    grid, point = args
    return point, run_cell(grid, point)


def run_grid(grid: ExperimentGrid, workers: int = 1) -> dict[GridPoint, CellStats]:
    """Statistics for every grid point, keyed by point in enumeration order."""
    points = grid.points()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(_cell_job, [(grid, p) for p in points]))
    else:
        results = dict(_cell_job((grid, p)) for p in points)
    return {p: results[p] for p in points}


CSV_COLUMNS = ["scheme", "d", "n", "b", "metric", "mean", "std", "runs", "shortfall"]


def table_rows(grid: ExperimentGrid, table: dict[GridPoint, CellStats]) -> list[dict]:
    return [
        {
            "scheme": grid.scheme,
            "d": p.d,
            "n": p.n,
            "b": p.b,
            "metric": s.metric,
            "mean": s.mean,
            "std": s.std,
            "runs": s.count,
            "shortfall": s.shortfall,
        }
        for p, s in table.items()
    ]


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def table_to_csv(grid: ExperimentGrid, table: dict[GridPoint, CellStats]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in table_rows(grid, table):
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def table_to_json(grid: ExperimentGrid, table: dict[GridPoint, CellStats]) -> str:
    rows = table_rows(grid, table)
    for row, stats in zip(rows, table.values()):
        row["values"] = list(stats.values)
    doc = {"grid": asdict(grid), "cells": rows}
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"


TABLE1 = dict(
    scheme="local",
    d_values=(0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0),
    n_values=(20, 40, 60, 80, 100),
    b_values=(1.0,),
    a=0.002,
    sdv_range=(0.0, 1.0),
)
TABLE2 = dict(
    scheme="global",
    d_values=(0.85, 0.9, 0.95, 0.99),
    n_values=(60,),
    b_values=(0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45),
    a=0.005,
    sdv_range=(0.0, 5.0),
)
TABLE3 = dict(TABLE2, scheme="realprice")

GRID_PRESETS = {"table1": TABLE1, "table2": TABLE2, "table3": TABLE3}


def preset_grid(name: str, **overrides) -> ExperimentGrid:
    try:
        base = GRID_PRESETS[name]
    except KeyError:
        raise InvalidInputError(f"unknown sweep preset {name!r}") from None
    return ExperimentGrid(**{**base, **overrides})
