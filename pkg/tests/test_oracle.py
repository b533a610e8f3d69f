import math

import numpy as np
import pytest

from helpers import small_city
from kcover import GreedyConfig, GridSpec, Weights, flat_environment, make_sensor
from kcover.errors import EnumerationTooLarge, TheoremViolation
from kcover.oracle import (
    approximation_ratio,
    brute_force_fk,
    local_search_placement,
    optimal_placement,
    verify_theorem_bound,
)


def few_candidates(env, n, seed=0):
    rng = np.random.default_rng(seed)
    streets = np.argwhere(env.h == 0)
    mask = np.zeros(env.shape, bool)
    for j, i in streets[rng.choice(len(streets), size=min(n, len(streets)), replace=False)]:
        mask[j, i] = True
    return mask


def test_constants():
    assert approximation_ratio(0.0) == pytest.approx(1 - math.exp(-1))
    assert round(approximation_ratio(0.01), 4) == 0.6284


def test_brute_force_trivial():
    env = flat_environment(GridSpec(5, 5, 1.0, 2.0))
    w = Weights.halving(2)
    assert brute_force_fk(env, [], w, 3) == 0.0
    assert brute_force_fk(env, [make_sensor(env, (1, 1))], w, 7) == env.free_volume()


def test_optimal_trivial():
    env = flat_environment(GridSpec(4, 4))
    mask = np.ones(env.shape, bool)
    poses, val = optimal_placement(env, 1, 1, Weights((1.0,)), mask)
    assert val == env.free_volume() and poses[0].cell == (0, 0)
    assert optimal_placement(env, 0, 1, Weights((1.0,)), mask) == ([], 0.0)


def test_enumeration_cap():
    env = flat_environment(GridSpec(8, 8))
    with pytest.raises(EnumerationTooLarge):
        optimal_placement(env, 4, 2, Weights.halving(2), np.ones(env.shape, bool), max_subsets=1000)


def test_optimal_dominates_local_search():
    env = small_city(10, 4)
    mask = few_candidates(env, 12, 4)
    w = Weights.halving(2)
    _, opt = optimal_placement(env, 3, 2, w, mask)
    _, ls = local_search_placement(env, 3, 2, w, mask, restarts=8, seed=1)
    assert ls <= opt
    assert ls >= 0.9 * opt


def test_verify_flat_passes():
    env = flat_environment(GridSpec(6, 6))
    rep = verify_theorem_bound(env, GreedyConfig(k=2, epsilon=0.0, max_sensors=4), 2,
                               candidates=few_candidates(env, 6))
    assert rep["all_pass"]


@pytest.mark.parametrize("eps", [0.0, 0.05])
def test_verify_random(eps):
    env = small_city(12, 2)
    rep = verify_theorem_bound(env, GreedyConfig(k=2, epsilon=eps, max_sensors=4, tau=0.95), 3,
                               candidates=few_candidates(env, 12, 2))
    assert rep["all_pass"]
    assert {c["l"] for c in rep["checks"]} == {1, 2, 3}


def test_verify_raises_on_violation(monkeypatch):
    import kcover.oracle as oracle

    env = small_city(10, 1)
    real = oracle.optimal_placement

    def inflated(*a, **kw):
        poses, v = real(*a, **kw)
        return poses, v * 10
    monkeypatch.setattr(oracle, "optimal_placement", inflated)
    with pytest.raises(TheoremViolation):
        verify_theorem_bound(env, GreedyConfig(k=1, max_sensors=2), 1, candidates=few_candidates(env, 5))
    rep = verify_theorem_bound(env, GreedyConfig(k=1, max_sensors=2), 1, candidates=few_candidates(env, 5),
                               strict=False)
    assert not rep["all_pass"]
