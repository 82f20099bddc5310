"""Rank selection probabilities and the stochastic min-k selection rules.

Ranks are 1-based in the maths and 0-based in arrays: ``probs[0]`` is the
probability of picking the sample with the smallest loss.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from . import _kernels
from .losses import InvalidInputError


class UnsupportedClosedFormError(ValueError):
    """No closed-form rank probabilities exist for the requested scheme."""


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Seeded generator; distinct ``keys`` give independent streams."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys)))


@dataclass(frozen=True)
class SelectionScheme:
    """Which of ``k`` drawn losses drives an update.

    ``order_index`` picks the j-th smallest drawn loss (1 is MKL-SGD).
    ``batch_fraction < 1`` keeps the ``ceil(alpha * k)`` smallest and averages
    their gradients. ``batched=True`` with ``batch_fraction=1`` gives plain
    minibatch SGD over all ``k`` draws.
    """

    k: int = 1
    replacement: bool = True
    order_index: int = 1
    batch_fraction: float = 1.0
    batched: Optional[bool] = None

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InvalidInputError(f"k must be a positive integer, got {self.k}")
        if not 1 <= self.order_index <= self.k:
            raise InvalidInputError(f"order_index must lie in [1, k={self.k}], got {self.order_index}")
        if not 0.0 < self.batch_fraction <= 1.0:
            raise InvalidInputError(f"batch_fraction must lie in (0, 1], got {self.batch_fraction}")
        if self.batch_fraction * self.k < 1.0 - 1e-12:
            raise InvalidInputError("batch_fraction * k must be at least 1")

    @classmethod
    def sgd(cls) -> "SelectionScheme":
        return cls(k=1)

    @classmethod
    def mkl(cls, k: int, replacement: bool = True) -> "SelectionScheme":
        return cls(k=k, replacement=replacement)

    @classmethod
    def median(cls, k: int, replacement: bool = True) -> "SelectionScheme":
        return cls(k=k, replacement=replacement, order_index=math.ceil(k / 2))

    @property
    def is_batched(self) -> bool:
        return self.batch_fraction < 1.0 if self.batched is None else bool(self.batched)

    @property
    def batch_size(self) -> int:
        """``ceil(alpha * k)``, guarded against float round-up (0.3 * 10)."""
        return max(1, math.ceil(self.batch_fraction * self.k - 1e-9))

    @property
    def keep(self) -> int:
        """Kernel encoding: 0 for single pick, else the kept batch size."""
        return self.batch_size if self.is_batched else 0


def _check_closed_form(n: int, scheme: SelectionScheme):
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    if scheme.order_index != 1 or scheme.is_batched:
        raise UnsupportedClosedFormError(
            "closed-form rank probabilities exist only for single-pick order_index=1; "
            "estimate other schemes from empirical pick frequencies")
    if not scheme.replacement and scheme.k > n:
        raise InvalidInputError(f"cannot draw k={scheme.k} of n={n} without replacement")


def rank_fractions(n: int, scheme: SelectionScheme) -> list[tuple[int, int]]:
    """Exact rank probabilities as unreduced ``(numerator, denominator)`` pairs."""
    _check_closed_form(n, scheme)
    k = scheme.k
    if scheme.replacement:
        den = n ** k
        return [((n - i + 1) ** k - (n - i) ** k, den) for i in range(1, n + 1)]
    den = math.comb(n, k)
    return [(math.comb(n - i, k - 1), den) for i in range(1, n + 1)]


@lru_cache(maxsize=256)
def _rank_probabilities(n: int, k: int, replacement: bool) -> np.ndarray:
    scheme = SelectionScheme(k=k, replacement=replacement)
    # int / int true division is correctly rounded
    p = np.array([a / b for a, b in rank_fractions(n, scheme)])
    p.flags.writeable = False
    return p


def rank_probabilities(n: int, scheme: SelectionScheme) -> np.ndarray:
    """Probability that the rank-i loss (i = 1 smallest) is the one selected.

    With replacement ``p_i = ((n-i+1)^k - (n-i)^k) / n^k``; without,
    ``p_i = C(n-i, k-1) / C(n, k)``. Each entry is the correctly rounded
    value of the exact rational.
    """
    _check_closed_form(n, scheme)
    return _rank_probabilities(int(n), int(scheme.k), bool(scheme.replacement))


def _prepare(losses, scheme: SelectionScheme):
    losses = np.ascontiguousarray(losses, dtype=float)
    if losses.ndim != 1 or losses.size == 0:
        raise InvalidInputError("losses must be a non-empty 1-D array")
    if not np.all(np.isfinite(losses)):
        raise InvalidInputError("losses must be finite")
    if not scheme.replacement and scheme.k > losses.size:
        raise InvalidInputError(f"cannot draw k={scheme.k} of n={losses.size} without replacement")
    return losses


def select_indices(losses, scheme: SelectionScheme, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` independent single-pick selections, shape ``(size,)``."""
    losses = _prepare(losses, scheme)
    u = rng.random((int(size), scheme.k))
    return _kernels.select_many(losses, u, scheme.replacement, scheme.order_index, 0)[:, 0]


def select_index(losses, scheme: SelectionScheme, rng: np.random.Generator) -> int:
    """Draw ``k`` indices and return the one holding the order_index-th smallest loss.

    Equal losses are ordered by original index.
    """
    return int(select_indices(losses, scheme, rng, 1)[0])


def select_batch(losses, scheme: SelectionScheme, rng: np.random.Generator) -> np.ndarray:
    """Indices of the ``ceil(alpha * k)`` smallest losses among ``k`` drawn, ascending by loss."""
    losses = _prepare(losses, scheme)
    u = rng.random((1, scheme.k))
    return _kernels.select_many(losses, u, scheme.replacement, 1, scheme.batch_size)[0]
