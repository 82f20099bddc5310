"""Grid sweeps over problem and optimizer axes, with per-cell summaries.

A sweep is the product of its grid axes times its seeds. The dataset of a
run depends only on the problem coordinates and the seed, so every
optimizer variant in a cell sees the same data (paired comparisons).
"""
from __future__ import annotations

import csv
import io
import itertools
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from typing import Optional

import numpy as np

from .. import datagen
from .._io import atomic_open
from ..losses import InvalidInputError
from ..optimizer import OptimizerConfig, run
from ..sampling import SelectionScheme

SCHEMA_VERSION = 1
VARIANTS = ("sgd", "mkl", "median", "oracle", "batched")
OPTIMIZER_AXES = ("variant", "k")
PROBLEMS = {"regression": (datagen.RegressionSpec, datagen.gen_regression),
            "quadratic": (datagen.QuadraticEnsembleSpec, datagen.gen_quadratic_ensemble)}
RECORD_FIELDS = ("seed", "distance", "converged", "status", "steps", "loss_evals")


@dataclass(frozen=True)
class OptimizerDefaults:
    max_steps: int = 20_000
    step_size: Optional[float] = None
    ema_decay: float = 0.99
    stop_window: Optional[int] = 500
    stop_tol: float = 1e-9
    replacement: bool = True
    batch_fraction: float = 0.5
    record_every: int = 1


@dataclass(frozen=True)
class SweepConfig:
    """Problem family, base spec values, grid axes and seeds.

    ``grid`` maps axis names to value lists. Axes may be any field of the
    problem spec (except ``seed``) or ``variant`` / ``k``.
    """

    problem: str = "regression"
    base: dict = field(default_factory=dict)
    grid: dict = field(default_factory=lambda: {"variant": ["sgd", "mkl"], "k": [2]})
    seeds: tuple = tuple(range(21))
    optimizer: OptimizerDefaults = field(default_factory=OptimizerDefaults)
    out: Optional[str] = None
    workers: int = 1

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise InvalidInputError(f"unknown problem {self.problem!r}; expected one of {sorted(PROBLEMS)}")
        spec_cls = PROBLEMS[self.problem][0]
        names = {f.name for f in fields(spec_cls)} - {"seed"}
        for key in list(self.base) + list(self.grid):
            if key not in names and key not in OPTIMIZER_AXES:
                raise InvalidInputError(f"unknown {self.problem} field {key!r}")
        if not self.grid or any(len(v) == 0 for v in self.grid.values()):
            raise InvalidInputError("every grid axis needs at least one value")
        for v in self.grid.get("variant", ()):
            if v not in VARIANTS:
                raise InvalidInputError(f"unknown variant {v!r}; expected one of {VARIANTS}")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise InvalidInputError("seeds must be a non-empty list of distinct integers")
        if self.workers < 1:
            raise InvalidInputError("workers must be positive")

    @property
    def axes(self) -> list[str]:
        return list(self.grid)

    def cells(self) -> list[dict]:
        keys = self.axes
        return [dict(zip(keys, vals)) for vals in itertools.product(*(self.grid[k] for k in keys))]


@dataclass(frozen=True)
class RunRecord:
    coords: dict
    seed: int
    distance: float
    converged: bool
    status: str
    steps: int
    loss_evals: int
    wall_ms: float

    def row(self) -> list:
        return [self.coords[k] for k in self.coords] + [
            self.seed, _fmt(self.distance), int(self.converged), self.status, self.steps, self.loss_evals]


def _fmt(x: float) -> str:
    return repr(float(x))


def _stable_seed(*parts) -> int:
    return zlib.crc32("|".join(map(repr, parts)).encode())


def scheme_for(variant: str, k: int, opt: OptimizerDefaults) -> tuple[SelectionScheme, bool]:
    """Selection scheme and oracle flag of a named optimizer variant."""
    if variant in ("sgd", "oracle"):
        return SelectionScheme.sgd(), variant == "oracle"
    if variant == "mkl":
        return SelectionScheme.mkl(k, opt.replacement), False
    if variant == "median":
        return SelectionScheme.median(k, opt.replacement), False
    if variant == "batched":
        # batches are drawn without replacement within a step
        return SelectionScheme(k=k, replacement=False, batch_fraction=opt.batch_fraction, batched=True), False
    raise InvalidInputError(f"unknown variant {variant!r}")


def _run_cell(args):
    config, coords, seed = args
    spec_cls, gen = PROBLEMS[config.problem]
    problem = {k: v for k, v in coords.items() if k not in OPTIMIZER_AXES}
    spec_kwargs = {**config.base, **problem}
    for key in ("l_range", "radius_range"):
        if key in spec_kwargs:
            spec_kwargs[key] = tuple(spec_kwargs[key])
    # hash the full spec so that spelling out a default does not change the data
    full = asdict(spec_cls(**spec_kwargs))
    full.pop("seed")
    data_seed = _stable_seed(config.problem, sorted(full.items()), seed)
    dataset = gen(spec_cls(**spec_kwargs, seed=data_seed))
    opt = config.optimizer
    scheme, oracle = scheme_for(coords.get("variant", "mkl"), int(coords.get("k", 2)), opt)
    oc = OptimizerConfig(scheme=scheme, step_size=opt.step_size, max_steps=opt.max_steps,
                         seed=_stable_seed("opt", data_seed), ema_decay=opt.ema_decay,
                         record_every=opt.record_every, oracle_mode=oracle,
                         stop_window=opt.stop_window, stop_tol=opt.stop_tol)
    t0 = time.perf_counter()
    traj = run(dataset, oc)
    wall = (time.perf_counter() - t0) * 1e3
    dist = float(np.linalg.norm(traj.ema_w - dataset.target)) if not traj.diverged else math.nan
    return RunRecord(coords=dict(coords), seed=seed, distance=dist, converged=not traj.diverged,
                     status=traj.status, steps=traj.n_steps, loss_evals=traj.loss_evals, wall_ms=wall)


def run_sweep(config: SweepConfig) -> list[RunRecord]:
    """Run every grid cell for every seed; records come back in grid-major, seed-minor order.

    Diverged runs are recorded with ``converged=False`` and a NaN distance.
    """
    tasks = [(config, cell, seed) for cell in config.cells() for seed in config.seeds]
    if config.workers == 1:
        return [_run_cell(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(_run_cell, tasks, chunksize=max(1, len(tasks) // (4 * config.workers))))


@dataclass(frozen=True)
class CellSummary:
    coords: dict
    count: int
    n_diverged: int
    median: float
    mean: float
    std: float
    q1: float
    q3: float
    median_steps: float


def summarize(records) -> list[CellSummary]:
    """Per-cell distance statistics over seeds; diverged runs are counted, not averaged."""
    records = list(records)
    if not records:
        raise InvalidInputError("nothing to summarize")
    groups: dict = {}
    for r in records:
        groups.setdefault(tuple(r.coords.items()), []).append(r)
    out = []
    for key, rs in groups.items():
        ok = [r for r in rs if r.converged and math.isfinite(r.distance)]
        d = np.array([r.distance for r in ok], dtype=float)
        steps = np.array([r.steps for r in ok], dtype=float)
        if d.size:
            q1, med, q3 = np.percentile(d, [25, 50, 75])
            stats = dict(median=float(med), mean=float(d.mean()), std=float(d.std()), q1=float(q1),
                         q3=float(q3), median_steps=float(np.median(steps)))
        else:
            stats = dict(median=math.inf, mean=math.inf, std=0.0, q1=math.inf, q3=math.inf,
                         median_steps=math.nan)
        out.append(CellSummary(coords=dict(key), count=len(rs), n_diverged=len(rs) - len(ok), **stats))
    return out


def lookup(summaries, **coords) -> CellSummary:
    """The single summary whose coordinates include ``coords``."""
    hits = [s for s in summaries if all(s.coords.get(k) == v for k, v in coords.items())]
    if len(hits) != 1:
        raise KeyError(f"{len(hits)} cells match {coords}")
    return hits[0]


def header_line(kind: str) -> str:
    stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return f"# mklsgd-{kind} schema={SCHEMA_VERSION} generated={stamp}\n"


def records_csv(records, axes) -> str:
    """CSV payload (no header comment) for a list of records."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(axes) + list(RECORD_FIELDS))
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def timing_csv(records, axes) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(axes) + ["seed", "wall_ms"])
    for r in records:
        w.writerow([r.coords[k] for k in axes] + [r.seed, f"{r.wall_ms:.3f}"])
    return buf.getvalue()


def summary_csv(summaries, axes) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["count", "n_diverged", "median", "mean", "std", "q1", "q3", "median_steps"]
    w.writerow(list(axes) + cols)
    for s in summaries:
        w.writerow([s.coords[k] for k in axes] + [s.count, s.n_diverged] + [_fmt(getattr(s, c)) for c in cols[2:]])
    return buf.getvalue()


def write_sweep(records, config: SweepConfig, path) -> dict:
    """Write records, the per-cell summary and the timing sidecar next to ``path``.

    Returns the paths written. Wall times live only in the ``.timing.csv``
    sidecar so the record and summary payloads replay byte for byte.
    """
    path = str(path)
    stem = path[:-4] if path.endswith(".csv") else path
    paths = {"records": path, "summary": stem + ".summary.csv", "timing": stem + ".timing.csv"}
    axes = config.axes
    payloads = {"records": ("sweep", records_csv(records, axes)),
                "summary": ("summary", summary_csv(summarize(records), axes)),
                "timing": ("timing", timing_csv(records, axes))}
    for key, (kind, body) in payloads.items():
        with atomic_open(paths[key], newline="") as fh:
            fh.write(header_line(kind))
            fh.write(body)
    return paths


def with_overrides(config: SweepConfig, **kw) -> SweepConfig:
    return replace(config, **kw)
