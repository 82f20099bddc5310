"""Multiclass-logistic benchmark under directed or random label noise.

Each optimizer trains on the corrupted split and is scored on a clean
held-out split drawn from the same blobs. Loss series along training
compare how well each method fits the corrupted training data against how
well it generalizes.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .. import datagen
from ..optimizer import OptimizerConfig, StepSchedule, run
from ..sampling import SelectionScheme

DEFAULT_STEPS = 8000
DEFAULT_ETA = 0.1


def default_optimizers(k: int = 10, alpha: float = 0.5) -> dict:
    """``name -> (scheme, oracle_mode)``: minibatch SGD, batched MKL-SGD and the clean-only oracle.

    Each step draws its ``k`` samples without replacement.
    """
    sgd = SelectionScheme(k=k, replacement=False, batched=True)
    return {"sgd": (sgd, False),
            "mkl": (SelectionScheme(k=k, replacement=False, batch_fraction=alpha), False),
            "oracle": (sgd, True)}


@dataclass(frozen=True)
class BenchmarkTable:
    epsilon: float
    names: tuple
    seeds: tuple
    accuracy: np.ndarray  # (n_seeds, n_optimizers)
    train_loss: np.ndarray
    test_loss: np.ndarray
    series_steps: np.ndarray
    train_series: np.ndarray  # (n_optimizers, n_points), seed-averaged
    test_series: np.ndarray

    def mean(self, name: str) -> float:
        return float(self.accuracy[:, self.names.index(name)].mean())

    def std(self, name: str) -> float:
        return float(self.accuracy[:, self.names.index(name)].std())

    def final_loss(self, name: str, split: str = "train") -> float:
        arr = self.train_loss if split == "train" else self.test_loss
        return float(arr[:, self.names.index(name)].mean())

    def rows(self):
        for j, name in enumerate(self.names):
            yield (self.epsilon, name, self.accuracy[:, j].mean(), self.accuracy[:, j].std(),
                   self.train_loss[:, j].mean(), self.test_loss[:, j].mean())


TABLE_COLUMNS = ("epsilon", "optimizer", "accuracy_mean", "accuracy_std", "train_loss", "test_loss")
SERIES_COLUMNS = ("epsilon", "optimizer", "step", "train_loss", "test_loss")


def classification_benchmark(spec: datagen.ClassificationSpec, optimizers: Optional[dict] = None,
                             seeds: Sequence[int] = range(5), steps: int = DEFAULT_STEPS,
                             eta: float = DEFAULT_ETA, series_points: int = 20) -> BenchmarkTable:
    """Train every optimizer for every seed; the spec's own seed is replaced by each run seed.

    The step size starts at ``eta`` and drops by 5x after each 3/8 of the run.
    """
    optimizers = default_optimizers() if optimizers is None else optimizers
    names = tuple(optimizers)
    seeds = tuple(seeds)
    every = max(1, steps // series_points)
    acc = np.empty((len(seeds), len(names)))
    tr_loss = np.empty_like(acc)
    te_loss = np.empty_like(acc)
    tr_series, te_series, series_steps = None, None, None
    schedule = StepSchedule(eta, 5.0, max(1, steps * 3 // 8))
    for s, seed in enumerate(seeds):
        sp = replace(spec, seed=seed)
        train = datagen.gen_classification(sp)
        test = datagen.gen_classification_test(sp)
        for j, name in enumerate(names):
            scheme, oracle = optimizers[name]
            traj = run(train, OptimizerConfig(scheme, step_size=schedule, max_steps=steps, seed=seed,
                                              record_every=every, oracle_mode=oracle))
            acc[s, j] = datagen.accuracy(test, traj.final_w)
            tr = np.array([train.mean_loss(w) for w in traj.iterates])
            te = np.array([test.mean_loss(w) for w in traj.iterates])
            tr_loss[s, j], te_loss[s, j] = train.mean_loss(traj.final_w), test.mean_loss(traj.final_w)
            if tr_series is None:
                series_steps = traj.steps.copy()
                tr_series = np.zeros((len(names), tr.size))
                te_series = np.zeros_like(tr_series)
            tr_series[j] += tr / len(seeds)
            te_series[j] += te / len(seeds)
    return BenchmarkTable(spec.epsilon, names, seeds, acc, tr_loss, te_loss, series_steps, tr_series, te_series)


def table_csv(tables) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for t in tables:
        for eps, name, m, sd, trl, tel in t.rows():
            w.writerow([repr(float(eps)), name, repr(float(m)), repr(float(sd)), repr(float(trl)), repr(float(tel))])
    return buf.getvalue()


def series_csv(tables) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SERIES_COLUMNS)
    for t in tables:
        for j, name in enumerate(t.names):
            for i, step in enumerate(t.series_steps):
                w.writerow([repr(float(t.epsilon)), name, int(step), repr(float(t.train_series[j, i])),
                            repr(float(t.test_series[j, i]))])
    return buf.getvalue()
