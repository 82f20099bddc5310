"""Convex loss components, datasets and the problem constants derived from them.

Three component families are supported, all evaluated with the quadratic
convention ``f = l * ||w - c||**2`` (no 1/2 factor):

``quadratic``
    ``f(w) = l * ||w - c||**2`` with curvature ``l > 0`` and center ``c``.
    A scalar quadratic is the ``d == 1`` case.
``regression``
    ``f(w) = (x . w - y)**2``.
``logistic``
    Multiclass cross-entropy of a linear softmax model. ``w`` is the
    row-major flattening of a ``(n_classes, p)`` weight matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp, softmax

KINDS = ("quadratic", "regression", "logistic")


class InvalidInputError(ValueError):
    """Raised when arguments violate an operation's preconditions."""


class DegenerateProblemError(ValueError):
    """Raised when a theory check needs strong convexity that is absent."""


def _as_vector(w, dim: Optional[int] = None) -> np.ndarray:
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if w.ndim != 1:
        raise InvalidInputError(f"parameter vector must be 1-D, got shape {w.shape}")
    if dim is not None and w.shape[0] != dim:
        raise InvalidInputError(f"dimension mismatch: expected {dim}, got {w.shape[0]}")
    return w


@dataclass(frozen=True)
class LossComponent:
    """One sample's loss ``f_i``.

    ``outlier`` is evaluation metadata: optimizers never look at it.
    """

    kind: str
    x: np.ndarray  # center (quadratic) or feature vector
    y: float = 0.0  # response (regression) or class label (logistic)
    curvature: float = 1.0
    n_classes: int = 0
    outlier: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown loss kind {self.kind!r}")
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        object.__setattr__(self, "x", x)
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("component parameters must be finite")
        if self.kind == "quadratic" and not self.curvature > 0:
            raise InvalidInputError("quadratic curvature must be positive")
        if self.kind == "logistic":
            if self.n_classes < 2:
                raise InvalidInputError("logistic components need n_classes >= 2")
            if not (0 <= int(self.y) < self.n_classes) or int(self.y) != self.y:
                raise InvalidInputError(f"label {self.y} outside [0, {self.n_classes})")

    @property
    def dim(self) -> int:
        if self.kind == "logistic":
            return self.n_classes * self.x.shape[0]
        return self.x.shape[0]

    @property
    def lipschitz(self) -> float:
        """Gradient Lipschitz constant ``L_i``."""
        if self.kind == "quadratic":
            return 2.0 * self.curvature
        if self.kind == "regression":
            return 2.0 * float(self.x @ self.x)
        # softmax Hessian block diag(s) - s s^T has spectral norm <= 1/2
        return 0.5 * float(self.x @ self.x)


def loss_value(component: LossComponent, w) -> float:
    """Value of ``component`` at ``w``."""
    w = _as_vector(w, component.dim)
    if component.kind == "quadratic":
        r = w - component.x
        return float(component.curvature * (r @ r))
    if component.kind == "regression":
        return float((component.x @ w - component.y) ** 2)
    z = w.reshape(component.n_classes, -1) @ component.x
    return float(logsumexp(z) - z[int(component.y)])


def loss_gradient(component: LossComponent, w) -> np.ndarray:
    """Analytic gradient of ``component`` at ``w``."""
    w = _as_vector(w, component.dim)
    if component.kind == "quadratic":
        return 2.0 * component.curvature * (w - component.x)
    if component.kind == "regression":
        return 2.0 * (component.x @ w - component.y) * component.x
    z = w.reshape(component.n_classes, -1) @ component.x
    s = softmax(z)
    s[int(component.y)] -= 1.0
    return np.outer(s, component.x).ravel()


@dataclass(frozen=True)
class Dataset:
    """A homogeneous collection of loss components with ground truth.

    Arrays are stored column-wise so whole-dataset losses and gradients are
    vectorized. For quadratics ``X`` holds the centers and ``curvature`` the
    ``l_i``; for regression ``X``/``y`` are features/responses; for logistic
    ``y`` holds integer labels stored as floats.
    """

    kind: str
    X: np.ndarray
    y: np.ndarray
    target: np.ndarray
    outliers: np.ndarray
    curvature: Optional[np.ndarray] = None
    n_classes: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown loss kind {self.kind!r}")
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        n = X.shape[0]
        if n < 1:
            raise InvalidInputError("dataset must contain at least one component")
        y = np.zeros(n) if self.y is None else np.asarray(self.y, dtype=float).reshape(n)
        curv = np.ones(n) if self.curvature is None else np.asarray(self.curvature, dtype=float).reshape(n)
        outliers = np.zeros(n, dtype=bool) if self.outliers is None else np.asarray(self.outliers, dtype=bool).reshape(n)
        for name, arr in (("X", X), ("y", y), ("curvature", curv)):
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"{name} must be finite")
        if self.kind == "quadratic" and np.any(curv <= 0):
            raise InvalidInputError("quadratic curvatures must be positive")
        if self.kind == "logistic":
            if self.n_classes < 2:
                raise InvalidInputError("logistic datasets need n_classes >= 2")
            if np.any((y < 0) | (y >= self.n_classes) | (y != np.round(y))):
                raise InvalidInputError("labels must be integers in [0, n_classes)")
        for name, arr in (("X", X), ("y", y), ("curvature", curv), ("outliers", outliers)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        dim = self.n_classes * X.shape[1] if self.kind == "logistic" else X.shape[1]
        object.__setattr__(self, "target", _as_vector(self.target, dim).copy())
        self.target.flags.writeable = False
        if outliers.all():
            raise InvalidInputError("at least one clean component is required")

    # -- shape ---------------------------------------------------------
    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.target.shape[0]

    @property
    def n_outliers(self) -> int:
        return int(self.outliers.sum())

    @property
    def epsilon(self) -> float:
        return self.n_outliers / self.n

    @property
    def labels(self) -> np.ndarray:
        return self.y.astype(np.int64)

    def component(self, i: int) -> LossComponent:
        return LossComponent(self.kind, self.X[i], float(self.y[i]), float(self.curvature[i]),
                             self.n_classes, bool(self.outliers[i]))

    def components(self) -> list[LossComponent]:
        return [self.component(i) for i in range(self.n)]

    @classmethod
    def from_components(cls, components: Sequence[LossComponent], target, **meta) -> "Dataset":
        kinds = {c.kind for c in components}
        if len(kinds) != 1:
            raise InvalidInputError("components must share a single kind")
        first = components[0]
        return cls(kind=first.kind,
                   X=np.array([c.x for c in components]),
                   y=np.array([c.y for c in components]),
                   target=target,
                   outliers=np.array([c.outlier for c in components]),
                   curvature=np.array([c.curvature for c in components]),
                   n_classes=first.n_classes,
                   meta=dict(meta))

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.kind, self.X[index], self.y[index], self.target, self.outliers[index],
                       self.curvature[index], self.n_classes, dict(self.meta))

    def clean(self) -> "Dataset":
        return self.subset(np.flatnonzero(~self.outliers))

    # -- vectorized evaluation -----------------------------------------
    def _logits(self, w):
        return self.X @ w.reshape(self.n_classes, -1).T

    def losses(self, w) -> np.ndarray:
        """Per-component losses at ``w``, shape ``(n,)``."""
        w = _as_vector(w, self.dim)
        if self.kind == "quadratic":
            r = w - self.X
            return self.curvature * np.einsum("ij,ij->i", r, r)
        if self.kind == "regression":
            return (self.X @ w - self.y) ** 2
        z = self._logits(w)
        return logsumexp(z, axis=1) - z[np.arange(self.n), self.labels]

    def gradients(self, w) -> np.ndarray:
        """Per-component gradients at ``w``, shape ``(n, dim)``."""
        w = _as_vector(w, self.dim)
        if self.kind == "quadratic":
            return 2.0 * self.curvature[:, None] * (w - self.X)
        if self.kind == "regression":
            return 2.0 * (self.X @ w - self.y)[:, None] * self.X
        s = softmax(self._logits(w), axis=1)
        s[np.arange(self.n), self.labels] -= 1.0
        return np.einsum("ic,ip->icp", s, self.X).reshape(self.n, -1)

    def mean_loss(self, w, mask=None) -> float:
        f = self.losses(w)
        return float(f.mean() if mask is None else f[mask].mean())

    def lipschitz(self) -> np.ndarray:
        """Per-component gradient Lipschitz constants ``L_i``."""
        if self.kind == "quadratic":
            return 2.0 * self.curvature
        sq = np.einsum("ij,ij->i", self.X, self.X)
        return 2.0 * sq if self.kind == "regression" else 0.5 * sq

    def hessian(self, w=None, mask=None) -> np.ndarray:
        """Average Hessian over the components selected by ``mask``."""
        mask = np.ones(self.n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        m = int(mask.sum())
        if self.kind == "quadratic":
            return 2.0 * self.curvature[mask].mean() * np.eye(self.dim)
        X = self.X[mask]
        if self.kind == "regression":
            return 2.0 * X.T @ X / m
        w = self.target if w is None else _as_vector(w, self.dim)
        s = softmax(X @ w.reshape(self.n_classes, -1).T, axis=1)
        A = np.einsum("ia,ab->iab", s, np.eye(self.n_classes)) - np.einsum("ia,ib->iab", s, s)
        H = np.einsum("iab,ip,iq->apbq", A, X, X).reshape(self.dim, self.dim)
        return H / m


@dataclass(frozen=True)
class ProblemConstants:
    L: float
    lambda_good: float
    lambda_F: float
    G: float
    kappa: float
    epsilon: float
    lipschitz: np.ndarray
    degenerate: bool = False


def _min_eig(H: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(H)[0])


def dataset_constants(dataset: Dataset) -> ProblemConstants:
    """Smoothness, strong convexity and outlier-gradient constants.

    Quadratic and regression constants are exact (Hessian based); logistic
    strong convexity is the local value at the stored target.
    """
    Li = dataset.lipschitz()
    clean = ~dataset.outliers
    H_good = dataset.hessian(mask=clean)
    H_full = dataset.hessian()
    scale = max(float(np.abs(H_good).max()), 1e-300)
    lam_good = _min_eig(H_good)
    lam_full = _min_eig(H_full)
    degenerate = lam_good <= 1e-12 * scale
    if degenerate:
        lam_good = 0.0
    lam_full = max(lam_full, 0.0) if lam_full > 1e-12 * scale else 0.0
    if dataset.n_outliers:
        g = dataset.gradients(dataset.target)[dataset.outliers]
        G = float(np.linalg.norm(g, axis=1).max())
    else:
        G = 0.0
    if dataset.kind == "quadratic":
        kappa = float(dataset.curvature.max() / dataset.curvature.min())
    else:
        kappa = float(Li.max() / Li.min()) if Li.min() > 0 else float("inf")
    return ProblemConstants(L=float(Li.max()), lambda_good=lam_good, lambda_F=lam_full, G=G,
                            kappa=kappa, epsilon=dataset.epsilon, lipschitz=Li,
                            degenerate=bool(degenerate))
