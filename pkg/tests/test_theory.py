import json
import math
from decimal import Decimal, getcontext
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mklsgd import datagen
from mklsgd.losses import Dataset, DegenerateProblemError, InvalidInputError, ProblemConstants
from mklsgd.optimizer import OptimizerConfig, run
from mklsgd.sampling import SelectionScheme
from mklsgd.surrogate import component_probabilities, find_stationary_point
from mklsgd.theory import (check_bounds, condition1, condition1_threshold, corollary1_noise_thresholds,
                           exact_expected_step, naive_lambda, outlier_geometry, p_hat_max, sgd_stationary_point,
                           theorem2_alpha, vector_condition, w_tilde)


def fixture():
    return datagen.gen_quadratic_ensemble(datagen.QuadraticEnsembleSpec(
        d=1, n=2, epsilon=0.5, outlier_centers=[[2.0]], w_star=[0.0], seed=0))


def test_fixture_matches_hand_dataset():
    ds = fixture()
    np.testing.assert_array_equal(ds.X[:, 0][np.argsort(ds.outliers)], [0.0, 2.0])
    np.testing.assert_array_equal(ds.curvature, [1.0, 1.0])
    assert ds.n_outliers == 1 and ds.meta["gamma"] == 1.0


def test_p_hat_max_examples():
    assert p_hat_max(3, 1, SelectionScheme.mkl(2)) == pytest.approx(5 / 9, abs=1e-15)
    assert p_hat_max(7, 0, SelectionScheme.mkl(3)) == 0.0
    assert p_hat_max(7, 7, SelectionScheme.mkl(3)) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(InvalidInputError):
        p_hat_max(3, 4, SelectionScheme.mkl(2))


def test_condition1_examples():
    assert condition1(1.0, 0.4)
    assert not condition1(1.0, 0.5)
    assert not condition1(4.0, 0.2)
    assert condition1_threshold(4.0) == pytest.approx(1 / 9)
    with pytest.raises(InvalidInputError):
        condition1(0.5, 0.1)


def test_w_tilde_examples():
    assert w_tilde(2.0, 2.0, [0.0], [2.0])[0] == 1.0
    assert w_tilde(1.0, 4.0, [0.0], [3.0])[0] == pytest.approx(2.0, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(lm=st.floats(0.01, 100), lM=st.floats(0.01, 100), seed=st.integers(0, 2 ** 31))
def test_w_tilde_defining_equation(lm, lM, seed):
    rng = np.random.default_rng(seed)
    ws, wb = rng.normal(size=3), rng.normal(size=3)
    wt = w_tilde(lm, lM, ws, wb)
    lhs, rhs = lm * np.sum((wt - ws) ** 2), lM * np.sum((wt - wb) ** 2)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, lhs, rhs)


def test_vector_condition_examples():
    r = vector_condition(1.0, 1.0, 1.0, 0.3)
    assert r.q == 1.0 and r.bound == 0.5 and r.holds
    r = vector_condition(3.0, 0.7, 0.0, 0.0)
    assert r.q == -1.0 and not r.holds
    r = vector_condition(4.0, 0.5, 1.0, 0.01)
    assert r.q == pytest.approx(5.0) and r.bound == pytest.approx(1 / 21)
    assert json.loads(json.dumps(r.to_dict()))["holds"] is True


@pytest.mark.parametrize("kappa", np.linspace(1, 100, 34))
def test_vector_condition_reduces_to_condition1(kappa):
    assert vector_condition(kappa, 1.0, 1.0, 0.0).bound == pytest.approx(condition1_threshold(kappa), rel=1e-13)


def test_outlier_geometry():
    ds = fixture()
    assert outlier_geometry(ds, [1.0]) == (1.0, 1.0)
    assert outlier_geometry(ds, [-1.0])[1] == -1.0


def test_theorem2_alpha_examples():
    assert theorem2_alpha(0.0, 3.0, 2, 1.0) == 0.0
    assert theorem2_alpha(0.2, 3.0, 1, 0.5) == pytest.approx(0.8 * 3.0 / 0.5)
    assert theorem2_alpha(0.1, 1.0, 3, 0.5) == pytest.approx(0.018)
    with pytest.raises(DegenerateProblemError):
        theorem2_alpha(0.1, 1.0, 3, 0.0)


def test_check_bounds_hand_fixture():
    ds = fixture()
    s = SelectionScheme.mkl(2)
    w_sgd = sgd_stationary_point(ds)
    w_mkl = find_stationary_point(ds, [0.0], s).point
    assert w_sgd[0] == 1.0 and w_mkl[0] == 0.5
    assert naive_lambda(ds, s) == pytest.approx(1.0)
    rep = check_bounds(w_sgd, w_mkl, ds, 2)
    assert rep.sgd_lower_bound_slack == 0.0 and rep.sgd_lower_bound_ok
    assert rep.alpha == pytest.approx(0.5)
    assert rep.lemma6_slack == pytest.approx(0.0, abs=1e-15)
    assert rep.theorem2_slack == pytest.approx(0.0, abs=1e-15) and rep.theorem2_ok
    assert rep.mkl_upper_bound_ok and rep.in_ball and rep.noiseless
    assert rep.violations == [] and rep.skipped == []


def test_check_bounds_bad_basin_is_skipped():
    ds = fixture()
    rep = check_bounds([1.0], [1.5], ds, 2)
    assert not rep.in_ball
    assert {"mkl_upper_bound", "lemma6", "theorem2"} <= set(rep.skipped)


def test_check_bounds_no_outliers():
    ds = datagen.gen_quadratic_ensemble(datagen.QuadraticEnsembleSpec(d=2, n=6, seed=2, l_range=(1.0, 2.0)))
    w = find_stationary_point(ds, [3.0, 3.0], SelectionScheme.mkl(2)).point
    rep = check_bounds(sgd_stationary_point(ds), w, ds, 2)
    assert rep.mkl_distance <= 1e-9 and rep.mkl_upper_bound_ok
    assert rep.violations == []


def test_step_hand_example():
    ds = Dataset("quadratic", [[1.0]], None, [1.0], None)
    r = exact_expected_step(ds, [2.0], 0.25, SelectionScheme.mkl(2))
    assert r.exact_expected_next_sq == 0.25 and r.psi == 0.5 and r.r_t == 0.0
    assert r.bound_value == 0.5 and r.holds and r.applicable


def test_step_not_applicable_for_large_eta():
    ds = fixture()
    assert not exact_expected_step(ds, [0.3], 0.75, SelectionScheme.mkl(2)).applicable


def test_step_residual_two_codings_agree():
    ds = datagen.gen_quadratic_ensemble(datagen.QuadraticEnsembleSpec(d=3, n=10, epsilon=0.3, seed=8,
                                                                      l_range=(0.5, 2.0)))
    rng = np.random.default_rng(1)
    eta = 1 / (2 * ds.lipschitz().max())
    for _ in range(20):
        w = ds.target + rng.normal(scale=2, size=3)
        r = exact_expected_step(ds, w, eta, SelectionScheme.mkl(2))
        assert abs(r.r_t - r.r_t_outlier_only) <= 1e-12 * max(1.0, abs(r.r_t))


def test_step_inequality_along_trajectory():
    ds = datagen.gen_quadratic_ensemble(datagen.QuadraticEnsembleSpec(d=2, n=8, epsilon=0.25, seed=5, delta=0.3,
                                                                      l_range=(0.5, 2.0)))
    eta = 1 / (2 * ds.lipschitz().max())
    s = SelectionScheme.mkl(3)
    tr = run(ds, OptimizerConfig(s, step_size=eta, max_steps=100, seed=1), w0=ds.target + 3.0)
    for w in tr.iterates:
        r = exact_expected_step(ds, w, eta, s)
        assert r.applicable and r.holds


def _corollary_decimal(lam, L, eta, n, n_good, dn):
    getcontext().prec = 50
    lam, L, eta, dn = map(Decimal, (lam, L, eta, dn))
    n, g = Decimal(n), Decimal(n_good)
    c = 1 - eta * L
    per = (lam * c / n) / (1 + (1 + eta * c * lam / n).sqrt()) * dn
    inner = lam * c * g / n
    agg = (inner / (n.sqrt() + (n.sqrt() + eta * c * lam * g / n).sqrt())) ** 2 * dn * dn
    return float(per), float(agg)


def _consts(lam, L):
    return ProblemConstants(L=L, lambda_good=lam, lambda_F=lam, G=0.0, kappa=1.0, epsilon=0.0,
                            lipschitz=np.array([L]))


@pytest.mark.parametrize("lam,L,eta,n,g,dn", [(1.0, 2.0, 0.25, 4, 2, 1.0), (0.3, 5.0, 0.1, 50, 20, 2.5),
                                             (2.0, 2.0, 0.5, 10, 5, 0.7)])
def test_corollary_thresholds_dual_coding(lam, L, eta, n, g, dn):
    per, agg = corollary1_noise_thresholds(_consts(lam, L), eta, n, g, dn)
    rp, ra = _corollary_decimal(lam, L, eta, n, g, dn)
    assert per == pytest.approx(rp, rel=1e-12, abs=1e-15)
    assert agg == pytest.approx(ra, rel=1e-12, abs=1e-15)


def test_corollary_limits():
    assert corollary1_noise_thresholds(_consts(1e-300, 2.0), 0.25, 4, 2, 1.0)[0] < 1e-299
    assert corollary1_noise_thresholds(_consts(1.0, 2.0), 0.25, 4, 2, 0.0) == (0.0, 0.0)
    with pytest.raises(InvalidInputError):
        corollary1_noise_thresholds(_consts(1.0, 2.0), 0.6, 4, 2, 1.0)


def test_hand_fixture_bad_stationary_point():
    # the scalar no-bad-minima condition fails (p_hat = 3/4), so a second stationary point exists
    ds = fixture()
    s = SelectionScheme.mkl(2)
    assert not condition1(1.0, p_hat_max(2, 1, s))
    rep = find_stationary_point(ds, [1.7], s)
    assert rep.point[0] == pytest.approx(1.5) and not rep.top_ranks_clean
    assert Fraction(component_probabilities(ds, [1.6], s)[1]).limit_denominator(10) == Fraction(3, 4)
