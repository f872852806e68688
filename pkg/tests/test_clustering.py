from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crsfl.clustering import kmeans_fit, normalise, order_clusters
from crsfl.resources import ResourceVector


def tiered_points(seed, n=60, jitter=0.03):
    """Three well separated capacity tiers with small multiplicative jitter."""
    g = np.random.default_rng(seed)
    centers = [(1536.0, 1.5, 4096.0), (2048.0, 2.0, 8192.0), (2560.0, 2.5, 16384.0)]
    pts, tier = [], []
    for i in range(n):
        t = i % 3
        c = np.array(centers[t]) * (1.0 + g.uniform(-jitter, jitter, 3))
        pts.append((i, ResourceVector(*c)))
        tier.append(t)
    return pts, tier


def recovers_tiers(assignment, tier) -> bool:
    groups: dict[int, set[int]] = {}
    for i, t in enumerate(tier):
        groups.setdefault(assignment.membership[i], set()).add(t)
    return len(groups) == 3 and all(len(v) == 1 for v in groups.values())


def random_points(g, n):
    return [(i, ResourceVector(*g.uniform([1000, 1, 1000], [3000, 3, 20000])))
            for i in range(n)]


def test_three_distinct_points_make_singletons():
    pts = [(i, ResourceVector(2048.0, p, 8192.0)) for i, p in enumerate((1.5, 2.0, 2.5))]
    a = kmeans_fit(pts, 3, seed=0)
    assert sorted(a.membership.values()) == [0, 1, 2]
    assert a.inertia_history[-1] == 0.0


def test_k1_centroid_is_normalised_mean():
    g = np.random.default_rng(0)
    pts = random_points(g, 25)
    a = kmeans_fit(pts, 1, seed=3)
    X = a.normalise(np.array([tuple(p) for _, p in pts]))
    np.testing.assert_allclose(a.centroids[0], X.mean(axis=0), rtol=0, atol=1e-15)
    assert a.order == (0,)


@pytest.mark.parametrize("k", [0, -1])
def test_bad_k_rejected(k):
    with pytest.raises(ValueError):
        kmeans_fit(random_points(np.random.default_rng(0), 5), k, 0)


def test_k_above_point_count_rejected():
    with pytest.raises(ValueError):
        kmeans_fit(random_points(np.random.default_rng(0), 2), 3, 0)


def test_k_above_distinct_points_rejected():
    pts = [(i, ResourceVector(1.0, 1.0, 1.0)) for i in range(5)]
    with pytest.raises(ValueError):
        kmeans_fit(pts, 2, 0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(3, 60), k=st.integers(1, 3))
def test_assignment_invariants(seed, n, k):
    g = np.random.default_rng(seed)
    pts = random_points(g, n)
    a = kmeans_fit(pts, k, seed)
    assert set(a.membership) == {i for i, _ in pts}
    assert sorted(set(a.membership.values())) == list(range(k))
    assert sorted(a.order) == list(range(k))
    X = a.normalise(np.array([tuple(p) for _, p in pts]))
    d2 = ((X[:, None, :] - a.centroids[None]) ** 2).sum(axis=2)
    for i, _ in pts:
        assert d2[i, a.membership[i]] <= d2[i].min() + 1e-12
    h = a.inertia_history
    assert all(b <= a_ + 1e-12 for a_, b in zip(h, h[1:]))


def test_same_seed_same_membership():
    pts = random_points(np.random.default_rng(7), 40)
    assert kmeans_fit(pts, 3, 11).membership == kmeans_fit(pts, 3, 11).membership


def test_order_puts_most_capable_tier_first():
    pts = [(0, ResourceVector(2048.0, 2.5, 8192.0)), (1, ResourceVector(2048.0, 2.5, 8192.0)),
           (2, ResourceVector(2048.0, 1.5, 8192.0)), (3, ResourceVector(2048.0, 1.5, 8192.0))]
    a = kmeans_fit(pts, 2, 0)
    first = a.order[0]
    assert a.members(first) == [0, 1]


def test_order_ties_keep_index_order():
    from crsfl.clustering import ClusterAssignment
    a = ClusterAssignment(2, np.zeros((2, 3)), {0: 0, 1: 1}, (0, 1), np.zeros(3), np.ones(3))
    assert order_clusters(a, X_by_id={0: np.ones(3), 1: np.ones(3)}) == (0, 1)


def test_normalise_constant_dimension_maps_to_zero():
    X = np.array([[1.0, 5.0, 2.0], [3.0, 5.0, 4.0]])
    lo, span = X.min(axis=0), X.max(axis=0) - X.min(axis=0)
    np.testing.assert_array_equal(normalise(X, lo, span), [[0, 0, 0], [1, 0, 1]])


def test_tier_recovery_rate():
    hits = sum(recovers_tiers(kmeans_fit(*[tiered_points(s)[0]], 3, s), tiered_points(s)[1])
               for s in range(100))
    assert hits >= 95
