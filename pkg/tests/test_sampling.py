import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mklsgd.losses import InvalidInputError
from mklsgd.sampling import (SelectionScheme, UnsupportedClosedFormError, make_rng, rank_fractions,
                             rank_probabilities, select_batch, select_index, select_indices)


def enumerate_ranks(n, k, replacement):
    """Exact rank distribution by listing every equally likely draw."""
    counts = [0] * n
    draws = (itertools.product(range(n), repeat=k) if replacement
             else itertools.combinations(range(n), k))
    total = 0
    for d in draws:
        counts[min(d)] += 1  # index == rank: losses 0 < 1 < ... < n-1
        total += 1
    return [Fraction(c, total) for c in counts]


def test_n3_k2_with_replacement():
    np.testing.assert_allclose(rank_probabilities(3, SelectionScheme.mkl(2)), [5 / 9, 3 / 9, 1 / 9], rtol=1e-15)
    assert rank_fractions(3, SelectionScheme.mkl(2)) == [(5, 9), (3, 9), (1, 9)]


def test_n3_k2_without_replacement():
    np.testing.assert_allclose(rank_probabilities(3, SelectionScheme.mkl(2, replacement=False)),
                               [2 / 3, 1 / 3, 0.0], rtol=1e-15)


@pytest.mark.parametrize("replacement", [True, False])
def test_k1_is_uniform(replacement):
    np.testing.assert_allclose(rank_probabilities(5, SelectionScheme(k=1, replacement=replacement)), [0.2] * 5)


@pytest.mark.parametrize("n,k", [(n, k) for n in range(1, 7) for k in range(1, 5)])
@pytest.mark.parametrize("replacement", [True, False])
def test_matches_enumeration(n, k, replacement):
    if not replacement and k > n:
        with pytest.raises(InvalidInputError):
            rank_probabilities(n, SelectionScheme.mkl(k, replacement))
        return
    exact = enumerate_ranks(n, k, replacement)
    fr = [Fraction(a, b) for a, b in rank_fractions(n, SelectionScheme.mkl(k, replacement))]
    assert fr == exact
    got = rank_probabilities(n, SelectionScheme.mkl(k, replacement))
    assert list(got) == [float(f) for f in exact]  # correctly rounded


def test_unsupported_schemes():
    with pytest.raises(UnsupportedClosedFormError):
        rank_probabilities(5, SelectionScheme.median(4))
    with pytest.raises(UnsupportedClosedFormError):
        rank_probabilities(5, SelectionScheme(k=4, batch_fraction=0.5))


def test_scheme_validation():
    with pytest.raises(InvalidInputError):
        SelectionScheme(k=0)
    with pytest.raises(InvalidInputError):
        SelectionScheme(k=3, order_index=4)
    with pytest.raises(InvalidInputError):
        SelectionScheme(k=2, batch_fraction=0.2)
    assert SelectionScheme(k=10, batch_fraction=0.3).batch_size == 3
    assert SelectionScheme.median(5).order_index == 3


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10_000), st.integers(1, 10), st.booleans())
def test_normalization(n, k, replacement):
    if not replacement and k > n:
        return
    p = rank_probabilities(n, SelectionScheme.mkl(k, replacement))
    assert abs(math.fsum(p) - 1.0) <= 1e-12
    assert np.all(p >= 0)
    assert np.all(np.diff(p) <= 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 200), st.integers(1, 9))
def test_p1_increases_with_k(n, k):
    a = rank_probabilities(n, SelectionScheme.mkl(k))[0]
    b = rank_probabilities(n, SelectionScheme.mkl(k + 1))[0]
    assert b > a


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 200), st.integers(1, 8), st.data())
def test_top_mass_grows_with_k(n, k, data):
    m = data.draw(st.integers(0, n))
    lo = rank_probabilities(n, SelectionScheme.mkl(k))
    hi = rank_probabilities(n, SelectionScheme.mkl(k + 1))
    # mass of the highest-loss ranks can only shrink, so the low ranks gain
    assert math.fsum(hi[:m]) >= math.fsum(lo[:m]) - 1e-15


def test_select_index_full_draw_picks_min():
    losses = [3.0, 1.0, 2.0]
    s = SelectionScheme(k=3, replacement=False)
    for seed in range(5):
        assert select_index(losses, s, make_rng(seed)) == 1


def test_tie_goes_to_lowest_index():
    s = SelectionScheme(k=3, replacement=False)
    for seed in range(5):
        assert select_index([1.0, 1.0, 2.0], s, make_rng(seed)) == 0


def test_rank1_frequency():
    picks = select_indices([1.0, 2.0, 3.0], SelectionScheme.mkl(2), make_rng(7), 90_000)
    freq = np.mean(picks == 0)
    p = 5 / 9
    assert abs(freq - p) <= 3 * math.sqrt(p * (1 - p) / 90_000)


def test_order_index_picks_jth_smallest():
    losses = np.array([5.0, 4.0, 3.0, 2.0, 1.0])
    s = SelectionScheme(k=5, replacement=False, order_index=3)
    assert select_index(losses, s, make_rng(0)) == 2


def test_select_batch():
    s = SelectionScheme(k=4, replacement=False, batch_fraction=0.5)
    np.testing.assert_array_equal(select_batch([4.0, 3.0, 2.0, 1.0], s, make_rng(1)), [3, 2])
    full = SelectionScheme(k=4, replacement=False, batched=True)
    assert sorted(select_batch([4.0, 3.0, 2.0, 1.0], full, make_rng(1))) == [0, 1, 2, 3]
    assert select_batch(np.arange(20.0), SelectionScheme(k=10, batch_fraction=0.3), make_rng(2)).size == 3


def test_selection_errors():
    with pytest.raises(InvalidInputError):
        select_index([], SelectionScheme.mkl(2), make_rng(0))
    with pytest.raises(InvalidInputError):
        select_index([1.0, np.nan], SelectionScheme.mkl(2), make_rng(0))
    with pytest.raises(InvalidInputError):
        select_index([1.0, 2.0], SelectionScheme.mkl(3, replacement=False), make_rng(0))


def test_rng_streams_are_reproducible_and_distinct():
    a = make_rng(5, 1).random(4)
    np.testing.assert_array_equal(a, make_rng(5, 1).random(4))
    assert not np.array_equal(a, make_rng(5, 2).random(4))


def test_without_replacement_draws_are_distinct():
    # every drawn subset must be a set; a k=n draw of distinct losses always returns all ranks
    losses = np.arange(6.0)
    s = SelectionScheme(k=6, replacement=False, batched=True)
    rng = make_rng(3)
    for _ in range(50):
        assert sorted(select_batch(losses, s, rng)) == list(range(6))
