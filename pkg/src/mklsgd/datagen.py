"""Synthetic corruption benchmarks with full ground truth.

Each generator is a pure function of its spec: the same spec (seed
included) reproduces the dataset bit for bit. Outlier positions are drawn
uniformly among the ``n`` components, and the optimizer never sees the
flags.

File format written by :func:`save_dataset`::

    # mklsgd-dataset 1
    # {"kind": ..., "n": ..., "d": ..., "n_classes": ..., "target": [...], "meta": {...}}
    outlier,curvature,y,x0,x1,...
    0,1.0,0.0,0.25,...

Floats are written with ``repr`` so a load reproduces every bit.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from ._io import atomic_open
from .losses import Dataset, InvalidInputError
from .sampling import make_rng

FORMAT_TAG = "# mklsgd-dataset 1"

# stream keys so that generators never share draws
_REGRESSION, _QUADRATIC, _CLASSIFICATION, _CLASS_TEST = 11, 12, 13, 14


def _n_outliers(epsilon: float, n: int) -> int:
    if not 0.0 <= epsilon < 1.0:
        raise InvalidInputError(f"epsilon must lie in [0, 1), got {epsilon}")
    return int(math.floor(epsilon * n + 1e-9))


def _unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def _outlier_mask(rng, n, n_out):
    mask = np.zeros(n, dtype=bool)
    mask[rng.choice(n, size=n_out, replace=False)] = True
    return mask


# -- linear regression ------------------------------------------------------

@dataclass(frozen=True)
class RegressionSpec:
    """Squared-loss regression with features ``x ~ N(0, diag(kappa, 1, ..., 1))``.

    ``outlier_rule="shifted"`` draws outlier responses from a second model
    ``w_B = w_gen + outlier_shift * u``; ``"gaussian"`` replaces them with
    ``N(0, 1)`` draws. Only responses are corrupted.
    """

    d: int = 10
    n: int = 1000
    kappa: float = 1.0
    epsilon: float = 0.0
    noise_sigma: float = 0.0
    outlier_shift: float = 5.0
    outlier_rule: str = "shifted"
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise InvalidInputError("need d >= 1 and n >= 1")
        if self.kappa < 1.0 or self.noise_sigma < 0 or self.outlier_shift <= 0:
            raise InvalidInputError("need kappa >= 1, noise_sigma >= 0, outlier_shift > 0")
        if self.outlier_rule not in ("shifted", "gaussian"):
            raise InvalidInputError(f"unknown outlier_rule {self.outlier_rule!r}")
        _n_outliers(self.epsilon, self.n)


def gen_regression(spec: RegressionSpec) -> Dataset:
    """Regression instance whose target is the exact least-squares fit of the clean rows.

    In the noiseless case that fit equals the generating parameter up to
    rounding; with noise it is the optimum the clean samples actually define.
    """
    rng = make_rng(spec.seed, _REGRESSION)
    d, n = spec.d, spec.n
    w_gen = rng.standard_normal(d)
    scale = np.ones(d)
    scale[0] = math.sqrt(spec.kappa)
    X = rng.standard_normal((n, d)) * scale
    out = _outlier_mask(rng, n, _n_outliers(spec.epsilon, n))
    noise = spec.noise_sigma * rng.standard_normal(n)
    y = X @ w_gen + noise
    w_B = w_gen + spec.outlier_shift * _unit(rng, d)
    if spec.outlier_rule == "shifted":
        y[out] = X[out] @ w_B + noise[out]
    else:
        y[out] = rng.standard_normal(int(out.sum()))
    clean = ~out
    if spec.noise_sigma == 0.0 and clean.sum() < d:
        target = w_gen
    else:
        target = np.linalg.lstsq(X[clean], y[clean], rcond=None)[0]
    meta = {"generator": "regression", "spec": asdict(spec), "w_generating": w_gen,
            "w_B": w_B if spec.outlier_rule == "shifted" else None}
    return Dataset("regression", X, y, target, out, meta=meta)


# -- quadratic ensembles ----------------------------------------------------

@dataclass(frozen=True)
class QuadraticEnsembleSpec:
    """Components ``l_i ||w - c_i||^2`` with clean centers at (or near) ``w*``.

    Outlier centers come from ``outlier_centers`` (one row per outlier, or a
    single row shared by all) or are drawn at a uniform radius in
    ``radius_range`` along random directions (one shared direction when
    ``shared_center``). ``delta > 0`` scatters clean centers uniformly in a
    ball of that radius, giving the noisy setting.
    """

    d: int = 1
    n: int = 10
    epsilon: float = 0.0
    l_range: tuple = (1.0, 1.0)
    outlier_centers: Optional[Sequence] = None
    radius_range: tuple = (2.0, 4.0)
    shared_center: bool = False
    delta: float = 0.0
    w_star: Optional[Sequence] = None
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise InvalidInputError("need d >= 1 and n >= 1")
        lo, hi = self.l_range
        if not 0 < lo <= hi:
            raise InvalidInputError("l_range must satisfy 0 < l_min <= l_max")
        rlo, rhi = self.radius_range
        if not 0 < rlo <= rhi:
            raise InvalidInputError("radius_range must satisfy 0 < r_min <= r_max")
        if self.delta < 0:
            raise InvalidInputError("delta must be non-negative")
        _n_outliers(self.epsilon, self.n)


def _ball(rng, m, d, radius):
    dirs = rng.standard_normal((m, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs * (radius * rng.random(m) ** (1.0 / d))[:, None]


def gen_quadratic_ensemble(spec: QuadraticEnsembleSpec) -> Dataset:
    """Quadratic ensemble; ``meta["gamma"]`` is nearest over farthest outlier distance."""
    rng = make_rng(spec.seed, _QUADRATIC)
    d, n = spec.d, spec.n
    n_out = _n_outliers(spec.epsilon, n)
    w0 = rng.standard_normal(d) if spec.w_star is None else np.asarray(spec.w_star, dtype=float).reshape(d)
    lo, hi = spec.l_range
    curv = rng.uniform(lo, hi, n) if hi > lo else np.full(n, float(lo))
    out = _outlier_mask(rng, n, n_out)
    centers = np.tile(w0, (n, 1))
    clean = ~out
    if spec.delta > 0:
        centers[clean] = w0 + _ball(rng, int(clean.sum()), d, spec.delta)
    if spec.delta > 0:
        target = curv[clean] @ centers[clean] / curv[clean].sum()
    else:
        target = w0.copy()  # exact; a weighted mean of equal rows can round

    if n_out:
        if spec.outlier_centers is not None:
            oc = np.asarray(spec.outlier_centers, dtype=float).reshape(-1, d)
            if oc.shape[0] not in (1, n_out):
                raise InvalidInputError(f"need 1 or {n_out} outlier centers, got {oc.shape[0]}")
            oc = np.broadcast_to(oc, (n_out, d)).copy()
        else:
            m = 1 if spec.shared_center else n_out
            radii = rng.uniform(*spec.radius_range, m)
            dirs = np.array([_unit(rng, d) for _ in range(m)])
            oc = np.broadcast_to(target + radii[:, None] * dirs, (n_out, d)).copy()
        dist = np.linalg.norm(oc - target, axis=1)
        if np.any(dist <= 2.0 * spec.delta) or np.any(dist == 0.0):
            raise InvalidInputError("outlier centers must lie farther than 2*delta from w*")
        centers[out] = oc
        gamma = float(dist.min() / dist.max())
    else:
        gamma = None
    meta = {"generator": "quadratic", "spec": asdict(spec), "gamma": gamma, "delta": spec.delta}
    return Dataset("quadratic", centers, None, target, out, curvature=curv, meta=meta)


# -- multiclass classification ----------------------------------------------

@dataclass(frozen=True)
class ClassificationSpec:
    """Gaussian blobs with unit covariance; class means at distance ``separation`` from the origin."""

    d: int = 20
    n: int = 4000
    class_count: int = 4
    separation: float = 2.5
    epsilon: float = 0.0
    noise_model: str = "directed"
    n_test: int = 10000
    seed: int = 0

    def __post_init__(self):
        if self.class_count < 2 or self.d < 1 or self.n < 1 or self.n_test < 0:
            raise InvalidInputError("need class_count >= 2, d >= 1, n >= 1, n_test >= 0")
        if self.noise_model not in ("directed", "random"):
            raise InvalidInputError(f"unknown noise_model {self.noise_model!r}")
        if not self.separation >= 0:
            raise InvalidInputError("separation must be non-negative")
        _n_outliers(self.epsilon, self.n)


def _blob_means(spec: ClassificationSpec):
    # the means depend on the seed only, so train and test share them
    rng = make_rng(spec.seed, _CLASSIFICATION, 0)
    dirs = rng.standard_normal((spec.class_count, spec.d))
    return spec.separation * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def _blobs(spec, rng, m):
    labels = np.arange(m) % spec.class_count
    rng.shuffle(labels)
    X = _blob_means(spec)[labels] + rng.standard_normal((m, spec.d))
    return np.hstack([X, np.ones((m, 1))]), labels


def _fit_clean(X, y, n_classes, gtol=1e-7):
    ds = Dataset("logistic", X, y, np.zeros(n_classes * X.shape[1]), None, n_classes=n_classes)

    def fun(w):
        return ds.mean_loss(w), ds.gradients(w).mean(axis=0)

    res = optimize.minimize(fun, np.zeros(ds.dim), jac=True, method="L-BFGS-B",
                            options={"gtol": gtol * 1e-2, "ftol": 0.0, "maxiter": 5000})
    gnorm = float(np.linalg.norm(fun(res.x)[1]))
    return res.x, gnorm


def gen_classification(spec: ClassificationSpec) -> Dataset:
    """Corrupted training split of a multiclass-logistic benchmark.

    Directed noise relabels class ``c`` as ``(c + 1) mod C``; random noise
    picks a uniformly random wrong label. Exactly ``floor(epsilon * n)``
    labels change. The target is the numerical minimizer of the mean clean
    loss (``meta["target_numerical"]``, ``meta["target_grad_norm"]``).
    """
    rng = make_rng(spec.seed, _CLASSIFICATION, 1)
    X, labels = _blobs(spec, rng, spec.n)
    out = _outlier_mask(rng, spec.n, _n_outliers(spec.epsilon, spec.n))
    y = labels.copy()
    C = spec.class_count
    if spec.noise_model == "directed":
        y[out] = (labels[out] + 1) % C
    else:
        y[out] = (labels[out] + rng.integers(1, C, int(out.sum()))) % C
    w_star, gnorm = _fit_clean(X[~out], y[~out], C)
    meta = {"generator": "classification", "spec": asdict(spec), "original_labels": labels,
            "target_numerical": True, "target_grad_norm": gnorm}
    return Dataset("logistic", X, y, w_star, out, n_classes=C, meta=meta)


def gen_classification_test(spec: ClassificationSpec) -> Dataset:
    """Clean held-out split from the same blobs (independent stream)."""
    if spec.n_test < 1:
        raise InvalidInputError("spec.n_test must be positive for a test split")
    rng = make_rng(spec.seed, _CLASS_TEST)
    X, labels = _blobs(spec, rng, spec.n_test)
    return Dataset("logistic", X, labels, np.zeros(spec.class_count * X.shape[1]), None,
                   n_classes=spec.class_count, meta={"generator": "classification-test", "spec": asdict(spec)})


def accuracy(dataset: Dataset, w) -> float:
    """Fraction of components whose label has the largest logit."""
    logits = dataset.X @ np.asarray(w, dtype=float).reshape(dataset.n_classes, -1).T
    return float(np.mean(np.argmax(logits, axis=1) == dataset.labels))


# -- serialization ----------------------------------------------------------

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def save_dataset(dataset: Dataset, path):
    """Write ``dataset`` as CSV with a JSON header line (atomic)."""
    p = dataset.X.shape[1]
    header = {"kind": dataset.kind, "n": dataset.n, "d": p, "n_classes": dataset.n_classes,
              "target": dataset.target.tolist(), "meta": _plain(dataset.meta)}
    with atomic_open(path, newline="") as fh:
        fh.write(FORMAT_TAG + "\n")
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["outlier", "curvature", "y"] + [f"x{j}" for j in range(p)])
        for i in range(dataset.n):
            w.writerow([int(dataset.outliers[i]), repr(float(dataset.curvature[i])), repr(float(dataset.y[i]))]
                       + [repr(float(v)) for v in dataset.X[i]])


def load_dataset(path) -> Dataset:
    """Inverse of :func:`save_dataset`; array-valued metadata comes back as lists."""
    with open(path, newline="", encoding="utf-8") as fh:
        tag = fh.readline().rstrip("\n")
        if tag != FORMAT_TAG:
            raise InvalidInputError(f"{path}: line 1: not a dataset file")
        line = fh.readline()
        if not line.startswith("# "):
            raise InvalidInputError(f"{path}: line 2: missing JSON header")
        header = json.loads(line[2:])
        rows = list(csv.reader(fh))
    body = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, 3 + header["d"])
    if body.shape[0] != header["n"]:
        raise InvalidInputError(f"{path}: expected {header['n']} rows, found {body.shape[0]}")
    return Dataset(header["kind"], body[:, 3:], body[:, 2], np.array(header["target"]), body[:, 0] > 0,
                   curvature=body[:, 1], n_classes=header["n_classes"], meta=header["meta"])
