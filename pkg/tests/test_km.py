from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from survaudit.km import at_risk_counts, km_estimate


def test_three_record_example():
    s = km_estimate([0, 1, 2], [1, 0, 1], T=3)
    assert s.tolist() == [1.0, 2 / 3, 2 / 3, 0.0]


def test_all_censored_is_flat():
    assert np.all(km_estimate([0, 2, 4, 4], [0, 0, 0, 0], T=5) == 1.0)


def test_all_events_in_first_bin():
    s = km_estimate([0, 0, 0], [1, 1, 1], T=4)
    assert s.tolist() == [1.0, 0.0, 0.0, 0.0, 0.0]


def test_censoring_target_flips_indicator():
    t, d = [0, 1, 2, 2], [1, 0, 1, 0]
    assert np.array_equal(km_estimate(t, d, 3, target="censoring"),
                          km_estimate(t, 1 - np.asarray(d), 3))


def test_events_precede_censorings_in_a_bin():
    # both at risk in bin 0: one event out of two
    assert km_estimate([0, 0], [1, 0], T=1).tolist() == [1.0, 0.5]


def test_errors():
    with pytest.raises(ValueError):
        km_estimate([], [], T=3)
    with pytest.raises(ValueError):
        km_estimate([3], [1], T=3)
    with pytest.raises(ValueError):
        km_estimate([0], [1], T=3, target="other")


def test_at_risk_counts():
    assert at_risk_counts([0, 1, 1, 3], 4).tolist() == [4, 3, 1, 1]


def _ecdf_oracle(t, T):
    n = len(t)
    return [1.0] + [float(Fraction(sum(1 for x in t if x > k), n)) for k in range(T)]


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 12).flatmap(lambda T: st.tuples(
    st.just(T), st.lists(st.integers(0, T - 1), min_size=1, max_size=200))))
def test_equals_one_minus_ecdf_without_censoring(args):
    T, t = args
    assert km_estimate(t, np.ones(len(t), int), T).tolist() == _ecdf_oracle(t, T)


def _product_limit_oracle(t, d, T):
    s, out = Fraction(1), [1.0]
    for k in range(T):
        n = sum(1 for x in t if x >= k)
        e = sum(1 for x, y in zip(t, d) if x == k and y == 1)
        if n:
            s *= Fraction(n - e, n)
        out.append(float(s))
    return out


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10).flatmap(lambda T: st.tuples(
    st.just(T), st.lists(st.tuples(st.integers(0, T - 1), st.integers(0, 1)), min_size=1, max_size=150))))
def test_matches_fraction_product_limit(args):
    T, rows = args
    t, d = zip(*rows)
    s = km_estimate(t, d, T)
    assert s.tolist() == _product_limit_oracle(t, d, T)
    assert s[0] == 1.0 and np.all(np.diff(s) <= 0) and s[-1] >= 0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 1)), min_size=1, max_size=60),
       st.lists(st.integers(1, 3), min_size=5, max_size=5))
def test_bin_relabelling_invariance(rows, gaps):
    # spread bins out with a strictly increasing map; curve at mapped bins is unchanged
    t, d = (np.array(x) for x in zip(*rows))
    new = np.concatenate([[0], np.cumsum(gaps)])[:5]
    T2 = int(new[-1]) + 1
    s = km_estimate(t, d, 5)
    s2 = km_estimate(new[t], d, T2)
    assert np.array_equal(s[1:], s2[new + 1])
