"""Robustness conditions and distance bounds evaluated on concrete instances.

Every check returns its inputs, both sides of the inequality and the slack,
so a failing bound can be inspected rather than just reported. Hypotheses
that the bounds only state existentially (small enough outlier fraction,
large enough ``k``) are tested through their concrete prerequisites and
reported as ``applicable`` flags.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from .losses import (Dataset, DegenerateProblemError, InvalidInputError, _as_vector, dataset_constants,
                     loss_gradient, loss_value)
from .sampling import SelectionScheme, rank_probabilities
from .surrogate import component_probabilities, ordering

TOL = 1e-9


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class _Report:
    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


# -- landscape conditions ---------------------------------------------------

def p_hat_max(n: int, n_outliers: int, scheme: SelectionScheme) -> float:
    """Largest total outlier selection probability: the top ``n_outliers`` rank probabilities."""
    if not 0 <= n_outliers <= n:
        raise InvalidInputError("n_outliers must lie in [0, n]")
    p = rank_probabilities(n, scheme)
    return float(math.fsum(p[:n_outliers]))


def condition1_threshold(kappa: float) -> float:
    return 1.0 / (1.0 + kappa * math.sqrt(kappa))


def condition1(kappa: float, p_hat: float) -> bool:
    """Scalar no-bad-minima condition ``p_hat < 1 / (1 + kappa^1.5)``."""
    if kappa < 1 or not 0.0 <= p_hat <= 1.0:
        raise InvalidInputError("need kappa >= 1 and p_hat in [0, 1]")
    return p_hat < condition1_threshold(kappa)


def w_tilde(l_m: float, l_M: float, w_star, w_B) -> np.ndarray:
    """Point on the segment from ``w_B`` to ``w_star`` where ``l_m ||w - w*||^2 = l_M ||w - w_B||^2``."""
    if not (l_m > 0 and l_M > 0):
        raise InvalidInputError("curvatures must be positive")
    w_star = _as_vector(w_star)
    w_B = _as_vector(w_B, w_star.shape[0])
    a, b = math.sqrt(l_m), math.sqrt(l_M)
    return (a * w_star + b * w_B) / (a + b)


@dataclass(frozen=True)
class LandscapeCondition(_Report):
    kappa: float
    gamma: float
    cos_theta_max: float
    p_hat_max: float
    q: float
    bound: float
    holds: bool


def vector_condition(kappa: float, gamma: float, cos_theta_max: float, p_hat: float) -> LandscapeCondition:
    """Vector-case condition: ``q > 0`` and ``p_hat <= 1 / (1 + kappa q)``.

    ``q = cos/gamma - 1 + sqrt(kappa) cos/gamma``. With ``gamma = cos = 1`` the
    bound equals the scalar threshold ``1 / (1 + kappa^1.5)``.
    """
    if not 0.0 < gamma <= 1.0 or kappa < 1 or not -1.0 <= cos_theta_max <= 1.0:
        raise InvalidInputError("need gamma in (0, 1], kappa >= 1, cos in [-1, 1]")
    q = cos_theta_max / gamma - 1.0 + math.sqrt(kappa) * cos_theta_max / gamma
    denom = 1.0 + kappa * q
    bound = 1.0 / denom if denom > 0 else float("-inf")
    return LandscapeCondition(kappa, gamma, cos_theta_max, p_hat, q, bound, bool(q > 0 and p_hat <= bound))


def outlier_geometry(dataset: Dataset, w_bar) -> tuple[float, float]:
    """``(gamma, cos_theta_max)`` of a quadratic ensemble relative to a candidate point.

    ``gamma`` is nearest over farthest outlier-center distance from ``w*``;
    ``theta_max`` is the largest angle between an outlier direction and
    ``w_bar - w*``.
    """
    if dataset.kind != "quadratic" or dataset.n_outliers == 0:
        raise InvalidInputError("outlier geometry needs a quadratic ensemble with outliers")
    offs = dataset.X[dataset.outliers] - dataset.target
    dist = np.linalg.norm(offs, axis=1)
    gamma = float(dist.min() / dist.max())
    v = _as_vector(w_bar, dataset.dim) - dataset.target
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return gamma, 1.0
    cos = offs @ v / (dist * nv)
    return gamma, float(np.clip(cos.min(), -1.0, 1.0))


# -- stationary-point bounds ------------------------------------------------

def theorem2_alpha(epsilon: float, L: float, k: int, lam: float) -> float:
    """Contraction factor ``(1 - eps) L eps^(k-1) / lambda`` between MKL and SGD distances."""
    if not lam > 0:
        raise DegenerateProblemError("lambda must be positive")
    if not 0.0 <= epsilon < 1.0:
        raise InvalidInputError("epsilon must lie in [0, 1)")
    return (1.0 - epsilon) * L * epsilon ** (k - 1) / lam


def sgd_stationary_point(dataset: Dataset) -> np.ndarray:
    """Minimizer of the full average loss, the point plain SGD settles around.

    Closed form for quadratics and regression; L-BFGS for logistic losses.
    """
    if dataset.kind == "quadratic":
        return dataset.curvature @ dataset.X / dataset.curvature.sum()
    if dataset.kind == "regression":
        return np.linalg.lstsq(dataset.X, dataset.y, rcond=None)[0]
    res = optimize.minimize(lambda w: (dataset.mean_loss(w), dataset.gradients(w).mean(axis=0)),
                            dataset.target.copy(), jac=True, method="L-BFGS-B",
                            options={"gtol": 1e-10, "ftol": 0.0, "maxiter": 5000})
    return res.x


def naive_lambda(dataset: Dataset, scheme: SelectionScheme) -> float:
    """``min_i p_i * lambda_F * n``: the restricted-secant constant from the smallest rank weight."""
    c = dataset_constants(dataset)
    return float(rank_probabilities(dataset.n, scheme).min() * c.lambda_F * dataset.n)


def _is_noiseless(dataset: Dataset) -> bool:
    g = dataset.gradients(dataset.target)[~dataset.outliers]
    scale = 1.0 + float(np.abs(dataset.X).max())
    return bool(np.linalg.norm(g, axis=1).max() <= 1e-8 * scale)


@dataclass(frozen=True)
class BoundReport(_Report):
    sgd_distance: float
    mkl_distance: float
    epsilon: float
    k: int
    L: float
    lambda_est: float
    lambda_at_mkl: float
    G_sgd: float
    G_mkl: float
    alpha: float
    noiseless: bool
    in_ball: bool
    sgd_lower_bound_ok: bool
    sgd_lower_bound_slack: float
    sgd_lower_bound_applicable: bool
    mkl_upper_bound_ok: bool
    mkl_upper_bound_slack: float
    mkl_upper_bound_applicable: bool
    lemma6_ok: bool
    lemma6_slack: float
    lemma6_applicable: bool
    theorem2_ok: bool
    theorem2_slack: float
    theorem2_applicable: bool

    NAMES = ("sgd_lower_bound", "mkl_upper_bound", "lemma6", "theorem2")

    @property
    def skipped(self) -> list[str]:
        return [n for n in self.NAMES if not getattr(self, n + "_applicable")]

    @property
    def violations(self) -> list[str]:
        return [n for n in self.NAMES
                if getattr(self, n + "_applicable") and not getattr(self, n + "_ok")]


def check_bounds(w_sgd, w_mkl, dataset: Dataset, k: int, lambda_est: Optional[float] = None,
                 scheme: Optional[SelectionScheme] = None, tol: float = TOL) -> BoundReport:
    """Evaluate the SGD lower bound, the MKL upper bounds and the relative bound.

    Both points must be stationary (for the full gradient and for the
    expected MKL update respectively). Outlier gradient bounds are taken at
    the point each argument uses: ``w_sgd`` for the lower bound,
    ``max(G(w*), G(w_mkl))`` for the MKL upper bound and ``G(w_mkl)`` for the
    min-form bound.
    """
    scheme = SelectionScheme.mkl(k) if scheme is None else scheme
    if scheme.k != k:
        raise InvalidInputError("scheme.k must equal k")
    c = dataset_constants(dataset)
    eps, L = c.epsilon, c.L
    w_star = dataset.target
    w_sgd = _as_vector(w_sgd, dataset.dim)
    w_mkl = _as_vector(w_mkl, dataset.dim)
    d_sgd = float(np.linalg.norm(w_sgd - w_star))
    d_mkl = float(np.linalg.norm(w_mkl - w_star))
    out = dataset.outliers
    n_out = int(out.sum())
    noiseless = _is_noiseless(dataset)

    # lower bound at the SGD fixed point; the outlier pull must be coherent
    g_sgd = dataset.gradients(w_sgd)[out]
    G_sgd = float(np.linalg.norm(g_sgd, axis=1).max()) if n_out else 0.0
    resultant = float(np.linalg.norm(g_sgd.sum(axis=0))) if n_out else 0.0
    coherent = resultant >= n_out * G_sgd - tol * (1.0 + n_out * G_sgd)
    sgd_lhs, sgd_rhs = eps * G_sgd, (1.0 - eps) * L * d_sgd

    if lambda_est is None:
        lambda_est = naive_lambda(dataset, scheme)
    prof = ordering(dataset, w_mkl)
    in_ball = prof.top_ranks_clean()
    p = component_probabilities(dataset, w_mkl, scheme)
    g_mkl = dataset.gradients(w_mkl)
    G_mkl_pt = float(np.linalg.norm(g_mkl[out], axis=1).max()) if n_out else 0.0
    G_up = max(c.G, G_mkl_pt)
    clean_pull = p[~out] @ g_mkl[~out]
    lam_here = float(clean_pull @ (w_mkl - w_star) / d_mkl ** 2) if d_mkl > 0 else math.inf
    mass = eps ** k

    up_rhs = mass * G_up / lambda_est if lambda_est > 0 else math.inf
    l6_lhs = float(np.linalg.norm(clean_pull))
    l6_rhs = min((1.0 - mass) * L * d_mkl, mass * G_mkl_pt)
    try:
        alpha = theorem2_alpha(eps, L, k, lambda_est)
    except DegenerateProblemError:
        alpha = math.inf
    t2_rhs = alpha * d_sgd

    sgd_app = noiseless and coherent
    mkl_app = (in_ball and noiseless and scheme.replacement and lambda_est > 0
               and lambda_est <= lam_here * (1 + 1e-12))
    l6_app = in_ball and noiseless and scheme.replacement
    t2_app = alpha < 1.0 and sgd_app and mkl_app
    return BoundReport(
        sgd_distance=d_sgd, mkl_distance=d_mkl, epsilon=eps, k=k, L=L, lambda_est=float(lambda_est),
        lambda_at_mkl=lam_here, G_sgd=G_sgd, G_mkl=G_up, alpha=alpha, noiseless=noiseless, in_ball=in_ball,
        sgd_lower_bound_ok=bool(sgd_lhs <= sgd_rhs + tol), sgd_lower_bound_slack=sgd_rhs - sgd_lhs,
        sgd_lower_bound_applicable=bool(sgd_app),
        mkl_upper_bound_ok=bool(d_mkl <= up_rhs + tol), mkl_upper_bound_slack=up_rhs - d_mkl,
        mkl_upper_bound_applicable=bool(mkl_app),
        lemma6_ok=bool(l6_lhs <= l6_rhs + tol), lemma6_slack=l6_rhs - l6_lhs,
        lemma6_applicable=bool(l6_app),
        theorem2_ok=bool(d_mkl < t2_rhs + tol), theorem2_slack=t2_rhs - d_mkl,
        theorem2_applicable=bool(t2_app),
    )


# -- one-step distance recursion --------------------------------------------

@dataclass(frozen=True)
class StepBoundReport(_Report):
    psi: float
    r_t: float
    r_t_outlier_only: float
    exact_expected_next_sq: float
    current_sq: float
    bound_value: float
    holds: bool
    applicable: bool


def step_residual(dataset: Dataset, w, eta: float, p: np.ndarray) -> float:
    """Residual ``R_t`` of the distance recursion for component probabilities ``p``.

    Clean terms: ``-2 <Delta, g_i(w*)> + 2 eta ||g_i(w*)||^2``; outlier terms:
    ``2 eta ||g_i(w*)||^2 + eta ||g_i(w)||^2 + 2 (f_i(w*) - f_i(w))``.
    """
    w_star = dataset.target
    delta = w - w_star
    g_star = dataset.gradients(w_star)
    g_now = dataset.gradients(w)
    f_star = dataset.losses(w_star)
    f_now = dataset.losses(w)
    clean = ~dataset.outliers
    gs2 = np.einsum("ij,ij->i", g_star, g_star)
    clean_terms = -2.0 * (g_star[clean] @ delta) + 2.0 * eta * gs2[clean]
    out = dataset.outliers
    out_terms = (2.0 * eta * gs2[out] + eta * np.einsum("ij,ij->i", g_now[out], g_now[out])
                 + 2.0 * (f_star[out] - f_now[out]))
    return float(p[clean] @ clean_terms + p[out] @ out_terms)


def outlier_residual(dataset: Dataset, w, eta: float, p: np.ndarray) -> float:
    """Outlier-only residual for noiseless clean samples, summed one outlier at a time."""
    total = 0.0
    for i in np.flatnonzero(dataset.outliers):
        comp = dataset.component(i)
        gs = loss_gradient(comp, dataset.target)
        gw = loss_gradient(comp, w)
        total += p[i] * (2.0 * eta * float(gs @ gs) + eta * float(gw @ gw)
                         + 2.0 * (loss_value(comp, dataset.target) - loss_value(comp, w)))
    return total


def exact_expected_step(dataset: Dataset, w, eta: float, scheme: SelectionScheme) -> StepBoundReport:
    """Exact ``E ||w_+ - w*||^2`` against ``(1 - psi) ||w - w*||^2 + eta R_t``.

    The expectation enumerates all components with their rank probabilities;
    ``psi = 2 eta lambda_good (1 - eta sup L) min_clean p_i``. Not applicable
    when ``eta > 1 / sup L`` or the clean part is not strongly convex.
    """
    w = np.array(_as_vector(w, dataset.dim), dtype=float)
    c = dataset_constants(dataset)
    p = component_probabilities(dataset, w, scheme)
    w_star = dataset.target
    nxt = w - eta * dataset.gradients(w)
    dist2 = np.einsum("ij,ij->i", nxt - w_star, nxt - w_star)
    expected = float(p @ dist2)
    cur = float((w - w_star) @ (w - w_star))
    clean = ~dataset.outliers
    psi = 2.0 * eta * c.lambda_good * (1.0 - eta * c.L) * float(p[clean].min())
    r_t = step_residual(dataset, w, eta, p)
    bound = (1.0 - psi) * cur + eta * r_t
    applicable = eta <= 1.0 / c.L * (1 + 1e-12) and not c.degenerate
    return StepBoundReport(psi=psi, r_t=r_t, r_t_outlier_only=outlier_residual(dataset, w, eta, p),
                           exact_expected_next_sq=expected, current_sq=cur, bound_value=bound,
                           holds=bool(expected <= bound + TOL), applicable=bool(applicable))


def corollary1_noise_thresholds(constants, eta: float, n: int, n_good: int, delta_norm: float) -> tuple[float, float]:
    """Noise levels under which MKL-SGD (k=2) has a residual no worse than SGD.

    Returns ``(per_sample, aggregate)``: the bound on each clean
    ``||grad f_i(w*)||`` and the bound on ``sum_clean ||grad f_i(w*)||^2``,
    scaled by ``delta_norm`` and ``delta_norm**2`` respectively.
    """
    L, lam = constants.L, constants.lambda_good
    if eta > 1.0 / L * (1 + 1e-12):
        raise InvalidInputError("thresholds need eta <= 1 / sup_i L_i")
    c = 1.0 - eta * L
    per = (lam * c / n) / (1.0 + math.sqrt(1.0 + eta * c * lam / n))
    ratio = n_good / n
    agg = ((lam * c * ratio) / (math.sqrt(n) + math.sqrt(math.sqrt(n) + eta * c * lam * ratio))) ** 2
    return per * delta_norm, agg * delta_norm ** 2
