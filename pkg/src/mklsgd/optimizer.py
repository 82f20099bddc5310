"""Min-k-loss SGD and its baselines as one configurable training loop.

Vanilla SGD is ``k=1``; median-loss SGD sets ``order_index=ceil(k/2)``;
oracle SGD samples only the clean components; ``batch_fraction < 1`` is the
batched variant that averages the gradients of the lowest-loss part of each
draw.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import _kernels
from .losses import Dataset, InvalidInputError, _as_vector
from .sampling import SelectionScheme, make_rng

_MAX_BLOCK = 1 << 16


@dataclass(frozen=True)
class StepSchedule:
    """Piecewise-constant step: ``initial / decay ** (t // period)``."""

    initial: float
    decay: float = 1.0
    period: int = 1 << 62

    def __post_init__(self):
        if not self.initial > 0 or not self.decay >= 1.0 or self.period < 1:
            raise InvalidInputError("schedule needs initial > 0, decay >= 1, period >= 1")

    def values(self, start: int, count: int) -> np.ndarray:
        t = np.arange(start, start + count)
        return self.initial / self.decay ** (t // self.period)


@dataclass(frozen=True)
class OptimizerConfig:
    scheme: SelectionScheme = field(default_factory=SelectionScheme)
    step_size: Union[float, StepSchedule, None] = None  # None: 1 / (2 sup_i L_i)
    max_steps: int = 10_000
    seed: int = 0
    ema_decay: float = 0.99
    record_every: int = 1
    oracle_mode: bool = False
    stop_window: Optional[int] = None  # plateau rule, needs the dataset target
    stop_tol: float = 1e-9

    def __post_init__(self):
        if self.max_steps < 0 or self.record_every < 1:
            raise InvalidInputError("max_steps must be >= 0 and record_every >= 1")
        if not 0.0 <= self.ema_decay < 1.0:
            raise InvalidInputError("ema_decay must lie in [0, 1)")
        if isinstance(self.step_size, (int, float)) and not self.step_size > 0:
            raise InvalidInputError("step size must be positive")
        if self.stop_window is not None and self.stop_window < 1:
            raise InvalidInputError("stop_window must be positive")


@dataclass(frozen=True)
class Trajectory:
    """Recorded iterates of one run.

    Row ``r`` holds the state after ``steps[r]`` updates; row 0 is ``w0``
    (selection ``-1``, loss NaN).
    """

    steps: np.ndarray
    iterates: np.ndarray
    selected: np.ndarray
    losses: np.ndarray
    final_w: np.ndarray
    ema_w: np.ndarray
    distances: Optional[np.ndarray]
    status: str  # "completed", "plateau" or "diverged"
    n_steps: int
    loss_evals: int
    step_sizes: np.ndarray
    diverged_at: Optional[int] = None

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"

    def __len__(self):
        return self.steps.shape[0]


def default_step_size(dataset: Dataset, oracle_mode: bool = False) -> float:
    Li = dataset.lipschitz()
    if oracle_mode:
        Li = Li[~dataset.outliers]
    return 1.0 / (2.0 * float(Li.max()))


def error_to_target(w, target) -> float:
    """Euclidean distance ``||w - target||``."""
    target = _as_vector(target)
    w = _as_vector(w, target.shape[0])
    return float(np.linalg.norm(w - target))


def ema_weights(count: int, decay: float) -> np.ndarray:
    """Normalized weights ``decay ** (T - t)`` over ``count`` iterates."""
    if count < 1:
        raise InvalidInputError("EMA needs at least one iterate")
    wts = decay ** np.arange(count - 1, -1, -1, dtype=float)
    return wts / wts.sum()


def ema_readout(trajectory, decay: float) -> np.ndarray:
    """Exponential moving average of recorded iterates; ``decay=0`` returns the last one.

    Accepts a :class:`Trajectory` or a ``(T, d)`` array of iterates.
    """
    its = trajectory.iterates if isinstance(trajectory, Trajectory) else np.asarray(trajectory, dtype=float)
    if its.ndim == 1:
        its = its[:, None]
    if decay == 0.0:
        return its[-1].copy()
    return ema_weights(its.shape[0], decay) @ its


class _Ema:
    """Running un-normalized EMA so the plateau rule needs no recomputation."""

    def __init__(self, decay, dim):
        self.decay = decay
        self.num = np.zeros(dim)
        self.den = 0.0

    def push(self, rows):
        m = rows.shape[0]
        if m == 0:
            return
        wts = self.decay ** np.arange(m - 1, -1, -1, dtype=float)
        self.num = self.decay ** m * self.num + wts @ rows
        self.den = self.decay ** m * self.den + wts.sum()

    @property
    def value(self):
        return self.num / self.den


def _step_sizes(config: OptimizerConfig, dataset: Dataset, start: int, count: int) -> np.ndarray:
    if isinstance(config.step_size, StepSchedule):
        return config.step_size.values(start, count)
    eta = config.step_size if config.step_size is not None else default_step_size(dataset, config.oracle_mode)
    return np.full(count, float(eta))


def run(dataset: Dataset, config: OptimizerConfig, w0=None) -> Trajectory:
    """Run ``config.max_steps`` selection-SGD updates from ``w0`` (zeros by default).

    Each step draws ``k`` indices from a uniform stream, sorts the drawn
    losses at the current iterate (ties by index) and steps along the
    gradient of the selected sample, or the mean gradient of the kept batch.
    A norm above 1e8 stops the run with status ``"diverged"``.
    """
    scheme = config.scheme
    w = np.array(_as_vector(np.zeros(dataset.dim) if w0 is None else w0, dataset.dim), dtype=float)
    if config.oracle_mode:
        draw_map = np.flatnonzero(~dataset.outliers).astype(np.int64)
    else:
        draw_map = np.arange(dataset.n, dtype=np.int64)
    if not scheme.replacement and scheme.k > draw_map.size:
        raise InvalidInputError(f"cannot draw k={scheme.k} of {draw_map.size} without replacement")

    rng = make_rng(config.seed)
    pool = np.arange(draw_map.size, dtype=np.int64)
    kind = _kernels.KIND_CODES[dataset.kind]
    X = np.ascontiguousarray(dataset.X)
    y = np.ascontiguousarray(dataset.y)
    curv = np.ascontiguousarray(dataset.curvature)
    width = max(scheme.keep, 1)

    T = config.max_steps
    R = T // config.record_every + 1
    rec_w = np.empty((R, dataset.dim))
    rec_sel = np.full((R, width), -1, dtype=np.int64)
    rec_loss = np.full(R, np.nan)
    rec_step = np.zeros(R, dtype=np.int64)
    rec_w[0] = w
    pos = 1
    ema = _Ema(config.ema_decay, dataset.dim)
    ema.push(rec_w[:1])

    block = min(config.stop_window or _MAX_BLOCK, _MAX_BLOCK)
    done = 0
    status = "completed"
    diverged_at = None
    etas_all = []
    prev_dist = error_to_target(ema.value, dataset.target) if config.stop_window else None
    while done < T:
        count = min(block, T - done)
        u = rng.random((count, scheme.k))
        etas = _step_sizes(config, dataset, done, count)
        start_pos = pos
        steps, code, pos = _kernels.run_block(
            kind, X, y, curv, dataset.n_classes, w, u, draw_map, scheme.replacement, pool,
            scheme.order_index, scheme.keep, etas, config.record_every, done,
            rec_w, rec_sel, rec_loss, rec_step, pos)
        etas_all.append(etas[: steps - done])
        ema.push(rec_w[start_pos:pos])
        if code == _kernels.DIVERGED:
            status, diverged_at, done = "diverged", int(steps), int(steps)
            break
        done = int(steps)
        if config.stop_window and done < T:
            dist = error_to_target(ema.value, dataset.target)
            if prev_dist - dist < config.stop_tol:
                status = "plateau"
                break
            prev_dist = dist

    iterates = rec_w[:pos].copy()
    distances = np.linalg.norm(iterates - dataset.target, axis=1)
    ema_w = ema.value if status != "diverged" else np.full(dataset.dim, np.nan)
    return Trajectory(steps=rec_step[:pos].copy(), iterates=iterates, selected=rec_sel[:pos].copy(),
                      losses=rec_loss[:pos].copy(), final_w=w.copy(), ema_w=ema_w,
                      distances=distances, status=status, n_steps=done,
                      loss_evals=done * scheme.k,
                      step_sizes=np.concatenate(etas_all) if etas_all else np.empty(0),
                      diverged_at=diverged_at)
