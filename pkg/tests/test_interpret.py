import numpy as np
import pytest

import oracles
from survaudit.interpret import parent_groups, permutation_importance
from survaudit.ndsm import init_network


def _setup(seed=0, n=80):
    rng = np.random.default_rng(seed)
    X = rng.random((n, 5))
    # columns 2-4 are one-hot siblings of one raw feature
    X[:, 2:] = np.eye(3)[rng.integers(0, 3, n)]
    _, d, t = oracles.random_cohort(rng, n, 4)
    net = init_network(5, 5, (8,), seed=seed, input_names=["a", "b", "c=1", "c=2", "c=3"])
    for p in net.params:
        p *= 4.0
    return net, X, d, t, ["a", "b", "c", "c", "c"]


def test_parent_groups():
    assert parent_groups(["a", "k", "k", "b"]) == {"a": [0], "k": [1, 2], "b": [3]}


def test_ignored_feature_has_zero_importance():
    net, X, d, t, parents = _setup()
    net.params[0][1] = 0.0
    r = permutation_importance(net.predict_pmf, X, d, t, parents, reps=10, seed=1)
    b = next(f for f in r.features if f.feature == "b")
    assert b.deltas == [0.0] * 10 and b.mean_delta == 0.0 and b.std == 0.0


def test_identity_permutation_changes_nothing():
    net, X, d, t, parents = _setup()
    r = permutation_importance(net.predict_pmf, X, d, t, parents, reps=3,
                               permute=lambda rng, n: np.arange(n))
    assert all(f.deltas == [0.0] * 3 for f in r.features)


def test_constant_column_is_exactly_zero():
    net, X, d, t, parents = _setup()
    X[:, 0] = 0.7
    r = permutation_importance(net.predict_pmf, X, d, t, parents, reps=5)
    assert next(f for f in r.features if f.feature == "a").deltas == [0.0] * 5


def test_one_hot_siblings_move_together():
    net, X, d, t, parents = _setup()
    seen = []

    def predict(Xp):
        seen.append(Xp.copy())
        return net.predict_pmf(Xp)

    permutation_importance(predict, X, d, t, parents, reps=4)
    for Xp in seen:
        assert np.all(Xp[:, 2:].sum(axis=1) == 1.0)


def test_report_sorted_deterministic_and_parallel_safe():
    net, X, d, t, parents = _setup(3)
    a = permutation_importance(net.predict_pmf, X, d, t, parents, reps=10, seed=5)
    b = permutation_importance(net.predict_pmf, X, d, t, parents, reps=10, seed=5, workers=4)
    assert a.to_dict() == b.to_dict()
    means = [f.mean_delta for f in a.features]
    assert means == sorted(means, reverse=True)
    assert a.repetitions == 10 and sorted(a.ranking()) == ["a", "b", "c"]
    f = a.features[0]
    assert f.std == pytest.approx(np.std(f.deltas, ddof=1))
