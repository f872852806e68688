from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crsfl.selector import (MAX_BRUTE_FORCE, Candidate, GAConfig, ObjectiveWeights, SelectionHistory,
                            all_masks, brute_force_select, dump_instance, fitness, ga_search,
                            ga_select, load_instance, update_history)
from crsfl.verify import random_instance, reference_fitness

EQUAL = ObjectiveWeights()
ONLY_COUNT = ObjectiveWeights(1, 0, 0, 0, 0)
ONLY_VAR = ObjectiveWeights(0, 0, 0, 1, 0)
ONLY_SAMPLES = ObjectiveWeights(0, 0, 1, 0, 0)


def cands(pros, samples=None, labels=None, flags=None):
    n = len(pros)
    samples = samples or [100] * n
    labels = labels or list(range(n))
    flags = flags or [0] * n
    return [Candidate(i, labels[i], samples[i], pros[i], flags[i]) for i in range(n)]


def test_candidate_validation():
    with pytest.raises(ValueError):
        Candidate(0, 0, 0, 1.0)
    with pytest.raises(ValueError):
        Candidate(0, 0, 1, -1.0)
    with pytest.raises(ValueError):
        Candidate(0, 0, 1, 1.0, 2)


def test_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        ObjectiveWeights(0.5, 0.5, 0.5, 0, 0)
    with pytest.raises(ValueError):
        ObjectiveWeights(1.5, -0.5, 0, 0, 0)
    ObjectiveWeights(0.1, 0.2, 0.3, 0.4, 0.0)


def test_count_only_full_mask_is_one_and_unique_max():
    c = cands([1.0, 2.0, 3.0, 4.0])
    assert fitness([1, 1, 1, 1], c, ONLY_COUNT) == 1.0
    for m in all_masks(4)[:-1]:
        assert fitness(m, c, ONLY_COUNT) < 1.0


def test_identical_pro_gives_zero_variance_term():
    c = cands([2.0, 2.0, 2.0])
    assert all(fitness(m, c, ONLY_VAR) == 0.0 for m in all_masks(3))


def test_empty_mask_scores_zero():
    assert fitness([0, 0, 0], cands([1.0, 2.0, 3.0]), EQUAL) == 0.0


def test_mask_length_mismatch_raises():
    with pytest.raises(ValueError):
        fitness([1, 0], cands([1.0, 2.0, 3.0]), EQUAL)


def test_hand_computed_fitness():
    # 4 candidates, labels (0,0,1,2), samples (100,200,100,100), pro (1,2,3,4), flags (1,0,1,0)
    c = cands([1.0, 2.0, 3.0, 4.0], samples=[100, 200, 100, 100], labels=[0, 0, 1, 2],
              flags=[1, 0, 1, 0])
    # mask 1,1,0,0: n=2/4, u=1/3, s=300/500, v=var(1,2)/var(1..4)=0.25/1.25, h=1/2
    want = 0.2 * (0.5 + 1 / 3 + 0.6 - 0.2 + 0.5)
    assert fitness([1, 1, 0, 0], c, EQUAL) == pytest.approx(want, abs=1e-15)


def test_four_candidate_enumeration_oracle():
    c = cands([1.0, 2.0, 3.0, 4.0], samples=[100, 200, 100, 100], labels=[0, 0, 1, 2],
              flags=[1, 0, 1, 0])
    scores = {m: reference_fitness(m, c, EQUAL) for m in itertools.product((0, 1), repeat=4)}
    best = max(scores.values())
    first = min(m for m, v in scores.items() if v == best)
    mask, f = brute_force_select(c, EQUAL)
    assert tuple(mask) == first
    assert f == pytest.approx(best, abs=1e-15)


def test_brute_force_examples():
    assert list(brute_force_select(cands([1.0, 2.0, 3.0]), ONLY_COUNT)[0]) == [1, 1, 1]
    mask, f = brute_force_select(cands([1.0, 1.0, 9.0]), ONLY_VAR)
    assert mask[2] == 0 and f == 0.0
    mask, _ = brute_force_select(cands([1.0]), ONLY_COUNT)
    assert list(mask) == [1]


def test_brute_force_ties_pick_lexicographically_smallest():
    # variance-only objective: every mask with <= 1 selected scores 0 as well as [1,1] pairs of
    # equal values; the smallest maximiser is all zeros
    mask, f = brute_force_select(cands([5.0, 5.0]), ONLY_VAR)
    assert list(mask) == [0, 0] and f == 0.0


def test_brute_force_refuses_large_or_empty():
    with pytest.raises(ValueError):
        brute_force_select(cands([1.0] * (MAX_BRUTE_FORCE + 1)), EQUAL)
    with pytest.raises(ValueError):
        brute_force_select([], EQUAL)


def test_ga_single_candidate_and_samples_only():
    assert list(ga_select(cands([1.0]), ONLY_COUNT, seed=0)) == [1]
    c = cands([1.0, 1.0, 1.0], samples=[150, 100, 100])
    assert list(ga_select(c, ONLY_SAMPLES, seed=4)) == [1, 1, 1]


def test_ga_rejects_empty():
    with pytest.raises(ValueError):
        ga_select([], EQUAL)


def test_ga_is_deterministic_and_elitist():
    g = np.random.default_rng(3)
    c, w = random_instance(g, 25)
    a = ga_search(c, w, GAConfig(), seed=17)
    b = ga_search(c, w, GAConfig(), seed=17)
    assert np.array_equal(a.mask, b.mask) and a.best_history == b.best_history
    h = a.best_history
    assert all(y >= x for x, y in zip(h, h[1:]))
    assert a.fitness == pytest.approx(fitness(a.mask, c, w), abs=1e-15)


def test_ga_target_fitness_stops_early():
    c = cands([1.0, 2.0, 3.0])
    res = ga_search(c, ONLY_COUNT, GAConfig(target_fitness=1.0), seed=0)
    assert res.generations == 1 and res.fitness == 1.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 10))
def test_fitness_matches_reference_on_all_masks(seed, n):
    c, w = random_instance(np.random.default_rng(seed), n)
    for m in all_masks(n):
        assert fitness(m, c, w) == pytest.approx(reference_fitness(m, c, w), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 10))
def test_fitness_permutation_invariant(seed, n):
    g = np.random.default_rng(seed)
    c, w = random_instance(g, n)
    m = (g.random(n) < 0.5).astype(int)
    perm = g.permutation(n)
    f1 = fitness(m, c, w)
    f2 = fitness(m[perm], [c[i] for i in perm], w)
    assert f1 == pytest.approx(f2, abs=1e-12)
    assert fitness(m, c, w) == f1


def test_update_history_rules():
    c = cands([1.0, 2.0, 3.0])
    h = update_history(SelectionHistory({99: 1}), c, [0, 0, 0])
    assert h.flags == {0: 1, 1: 1, 2: 1, 99: 1}
    h = update_history(h, c, [1, 0, 1])
    assert h.flags == {0: 0, 1: 1, 2: 0, 99: 1}
    assert update_history(h, c, [1, 1, 1]).flags == {0: 0, 1: 0, 2: 0, 99: 1}
    with pytest.raises(ValueError):
        update_history(h, c, [1])


def test_instance_roundtrip(tmp_path):
    c, w = random_instance(np.random.default_rng(0), 6)
    path = tmp_path / "inst.json"
    dump_instance(c, w, 42, path)
    back = load_instance(path)
    assert back == (c, w, 42)
