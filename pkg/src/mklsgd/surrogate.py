"""The expected MKL-SGD update and the landscape it induces.

At a point ``w`` the components are ranked by loss and the rank-i sample is
selected with probability ``p_i``; the expected step direction is
``sum_i p_i grad f_{m_i(w)}(w)``. The matching scalar quantity used for
landscape plots is the expected selected loss ``sum_i p_i f_{m_i(w)}(w)``,
whose gradient agrees with the expected direction wherever the ranking is
locally constant.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .losses import Dataset, InvalidInputError, _as_vector
from .sampling import SelectionScheme, UnsupportedClosedFormError, rank_probabilities


@dataclass(frozen=True)
class OrderedLossProfile:
    permutation: np.ndarray  # rank -> component index
    sorted_losses: np.ndarray
    outlier_by_rank: np.ndarray

    @property
    def signature(self) -> str:
        return ordering_signature(self.outlier_by_rank)

    def top_ranks_clean(self) -> bool:
        """True when every clean loss sits strictly below every outlier loss."""
        n_out = int(self.outlier_by_rank.sum())
        if n_out == 0:
            return True
        n_clean = self.outlier_by_rank.size - n_out
        if self.outlier_by_rank[:n_clean].any():
            return False
        return n_clean == 0 or self.sorted_losses[n_clean - 1] < self.sorted_losses[n_clean]


def ordering_signature(outlier_by_rank) -> str:
    """Short digest of the clean/outlier pattern along the ranking."""
    bits = np.packbits(np.asarray(outlier_by_rank, dtype=bool))
    return hashlib.blake2b(bits.tobytes() + len(outlier_by_rank).to_bytes(8, "little"),
                           digest_size=8).hexdigest()


def ordering(dataset: Dataset, w) -> OrderedLossProfile:
    """Stable sort of the component losses at ``w`` (ties keep index order)."""
    f = dataset.losses(w)
    if not np.all(np.isfinite(f)):
        raise InvalidInputError("losses must be finite to be ranked")
    perm = np.argsort(f, kind="stable")
    return OrderedLossProfile(perm, f[perm], dataset.outliers[perm])


def _weights(dataset: Dataset, scheme: SelectionScheme):
    if scheme.order_index != 1 or scheme.is_batched:
        raise UnsupportedClosedFormError("the expected update is only available for single-pick order_index=1")
    return rank_probabilities(dataset.n, scheme)


def component_probabilities(dataset: Dataset, w, scheme: SelectionScheme) -> np.ndarray:
    """Selection probability of each component at ``w``, indexed by component."""
    p = _weights(dataset, scheme)
    out = np.empty(dataset.n)
    out[ordering(dataset, w).permutation] = p
    return out


def surrogate_gradient(dataset: Dataset, w, scheme: SelectionScheme) -> np.ndarray:
    """Expected MKL-SGD step direction at ``w``."""
    p = _weights(dataset, scheme)
    perm = ordering(dataset, w).permutation
    return p @ dataset.gradients(w)[perm]


def surrogate_value(dataset: Dataset, w, scheme: SelectionScheme) -> float:
    """Expected selected loss at ``w``."""
    p = _weights(dataset, scheme)
    prof = ordering(dataset, w)
    return float(p @ prof.sorted_losses)


@dataclass(frozen=True)
class StationaryReport:
    point: np.ndarray
    surrogate_gradient_norm: float
    converged: bool
    ordering_at_point: OrderedLossProfile
    top_ranks_clean: bool
    iterations: int
    tol: float


def default_tol(dataset: Dataset) -> float:
    return 1e-7 if dataset.kind == "logistic" else 1e-10


def find_stationary_point(dataset: Dataset, w0, scheme: SelectionScheme, tol: Optional[float] = None,
                          max_iters: int = 10_000, step: Optional[float] = None) -> StationaryReport:
    """Deterministic descent ``w <- w - eta * expected_step(w)`` until the step norm is below ``tol``.

    ``eta`` defaults to ``1 / (2 sup_i L_i)``. Non-convergence (for example
    oscillation across a ranking change) is reported, not raised.
    """
    tol = default_tol(dataset) if tol is None else tol
    if not tol > 0:
        raise InvalidInputError("tol must be positive")
    eta = 1.0 / (2.0 * float(dataset.lipschitz().max())) if step is None else step
    w = np.array(_as_vector(w0, dataset.dim), dtype=float)
    g = surrogate_gradient(dataset, w, scheme)
    gnorm = float(np.linalg.norm(g))
    it = 0
    while gnorm > tol and it < max_iters:
        w -= eta * g
        g = surrogate_gradient(dataset, w, scheme)
        gnorm = float(np.linalg.norm(g))
        it += 1
    if gnorm <= tol and dataset.kind != "logistic":
        w, gnorm = _polish(dataset, w, scheme, gnorm)
    prof = ordering(dataset, w)
    return StationaryReport(point=w, surrogate_gradient_norm=gnorm, converged=gnorm <= tol,
                            ordering_at_point=prof, top_ranks_clean=prof.top_ranks_clean(),
                            iterations=it, tol=tol)


def _polish(dataset: Dataset, w, scheme, gnorm):
    # with the ranking frozen the expected step is affine in w; solve it exactly
    perm = ordering(dataset, w).permutation
    p = component_probabilities(dataset, w, scheme)
    if dataset.kind == "quadratic":
        wts = p * dataset.curvature
        cand = wts @ dataset.X / wts.sum()
    else:
        A = dataset.X * p[:, None]
        cand = np.linalg.lstsq(dataset.X.T @ A, A.T @ dataset.y, rcond=None)[0]
    if not np.array_equal(ordering(dataset, cand).permutation, perm):
        return w, gnorm
    cnorm = float(np.linalg.norm(surrogate_gradient(dataset, cand, scheme)))
    return (cand, cnorm) if cnorm <= gnorm else (w, gnorm)


@dataclass(frozen=True)
class ScanTable:
    t: np.ndarray
    value: np.ndarray
    derivative: np.ndarray
    signature: list

    COLUMNS = ("t", "surrogate_value", "directional_derivative", "ordering_signature")

    def rows(self):
        for row in zip(self.t, self.value, self.derivative, self.signature):
            yield row

    def flips(self) -> np.ndarray:
        """Indices ``i`` with a signature change between grid points ``i`` and ``i + 1``."""
        return np.array([i for i in range(len(self.signature) - 1)
                         if self.signature[i] != self.signature[i + 1]], dtype=int)


def scan_line(dataset: Dataset, a, b, grid_points: int, scheme: SelectionScheme) -> ScanTable:
    """Evaluate the landscape along ``w(t) = (1 - t) a + t b`` for ``t`` on a uniform grid of [0, 1]."""
    a = _as_vector(a, dataset.dim)
    b = _as_vector(b, dataset.dim)
    if grid_points < 2:
        raise InvalidInputError("grid_points must be at least 2")
    span = b - a
    length = float(np.linalg.norm(span))
    if length == 0.0:
        raise InvalidInputError("scan endpoints must differ")
    direction = span / length
    ts = np.linspace(0.0, 1.0, grid_points)
    vals, ders, sigs = [], [], []
    for t in ts:
        w = (1.0 - t) * a + t * b
        vals.append(surrogate_value(dataset, w, scheme))
        ders.append(float(surrogate_gradient(dataset, w, scheme) @ direction))
        sigs.append(ordering(dataset, w).signature)
    return ScanTable(ts, np.array(vals), np.array(ders), sigs)
