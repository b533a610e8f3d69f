import json

import numpy as np
import pytest

from helpers import small_city
from kcover import (
    GreedyConfig,
    GridSpec,
    PlacementRun,
    PsiStack,
    flat_environment,
    gain_field,
    greedy_place,
    make_environment,
    select_epsilon_band,
    street_mask,
)
from kcover.coverage import GainField
from kcover.errors import DegenerateFreeSpace, EmptyCandidateSet, ValidationError
from kcover.greedy import candidate_mask, epsilon_band, reached, replay
from kcover.oracle import approximation_ratio, optimal_placement


def field_of(values):
    values = np.asarray(values, dtype=float)
    cells = [(i, 0) for i in range(values.size)]
    return GainField(values[None], values[None, None], np.ones((1, values.size), bool), cells, values)


class TestBand:
    def test_threshold_arithmetic(self):
        assert list(epsilon_band(np.array([10.0, 9.6, 5.0]), 0.05)) == [0, 1]

    def test_unique_maximizer(self):
        rng = np.random.default_rng(0)
        f = field_of([1.0, 3.0, 2.0])
        assert {select_epsilon_band(f, 0.0, rng)[0] for _ in range(20)} == {(1, 0)}

    def test_constant_field_uniform(self):
        rng = np.random.default_rng(1)
        f = field_of(np.full(4, 2.0))
        picks = [select_epsilon_band(f, 0.01, rng)[0][0] for _ in range(4000)]
        counts = np.bincount(picks, minlength=4)
        assert counts.min() > 850

    def test_zero_field_band_is_everything(self):
        assert epsilon_band(np.array([0.0, 1e-13, 0.0]), 0.0).size == 3

    def test_one_draw_per_selection(self):
        a = np.random.default_rng(5)
        b = np.random.default_rng(5)
        select_epsilon_band(field_of([1.0, 1.0, 0.2]), 0.1, a)
        b.integers(2)
        assert a.integers(1 << 30) == b.integers(1 << 30)

    def test_empty(self):
        with pytest.raises(EmptyCandidateSet):
            epsilon_band(np.array([]), 0.1)


def test_flat_k1_single_sensor():
    env = flat_environment(GridSpec(8, 8))
    run = greedy_place(env, GreedyConfig(k=1, tau=0.9))
    assert len(run.sensors) == 1
    assert run.final_coverage() == [1.0]
    assert run.terminated_by == "threshold"


def test_flat_k3_three_sensors():
    env = flat_environment(GridSpec(8, 8))
    run = greedy_place(env, GreedyConfig(k=3, tau=0.9, epsilon=0.01))
    assert len(run.sensors) == 3
    assert run.final_coverage()[2] == 1.0


def test_trace_monotone_and_capped():
    env = small_city(24, 3)
    run = greedy_place(env, GreedyConfig(k=3, tau=0.95, max_sensors=15))
    cov = np.array([t.coverage for t in run.trace])
    assert (np.diff(cov, axis=0) >= -1e-15).all()
    assert len(run.sensors) <= 15
    assert [t.step for t in run.trace] == list(range(1, len(run.trace) + 1))


def test_cap_termination():
    env = small_city(24, 3)
    run = greedy_place(env, GreedyConfig(k=3, tau=0.99, max_sensors=2))
    assert run.terminated_by == "cap" and len(run.sensors) == 2


def test_zero_gain_termination():
    # a walled-off rooftop region that street sensors cannot see
    h = np.zeros((6, 6))
    h[:, 3:] = 1.0
    h[2, 4] = 0.2
    env = make_environment(GridSpec(6, 6), h)
    run = greedy_place(env, GreedyConfig(k=1, tau=0.999, stop_on_zero_gain=True, max_sensors=50))
    assert run.terminated_by == "zero-gain"
    assert len(run.sensors) < 50


def test_distinct_exhausts():
    h = np.ones((3, 3))
    h[0, 0] = 0.0
    h[0, 1] = 0.0
    env = make_environment(GridSpec(3, 3), h)
    run = greedy_place(env, GreedyConfig(k=3, tau=0.9, distinct=True))
    assert run.terminated_by == "exhausted"
    assert len({s.cell for s in run.sensors}) == len(run.sensors) == 2


def test_deterministic_given_seed():
    env = small_city(24, 8)
    a = greedy_place(env, GreedyConfig(seed=4, epsilon=0.2))
    b = greedy_place(env, GreedyConfig(seed=4, epsilon=0.2))
    assert a.to_json() == b.to_json()


def test_selected_sensor_is_in_band():
    env = small_city(20, 2)
    cfg = GreedyConfig(k=2, tau=0.9, epsilon=0.1, visibility_method="exact")
    run = greedy_place(env, cfg)
    stack = PsiStack.empty(env, 2)
    from kcover import occlusion_field_exact, psi_insert
    for s, rec in zip(run.sensors, run.trace):
        gf = gain_field(env, stack, cfg.weight_obj(), street_mask(env), "exact")
        assert rec.gain >= 0.9 * gf.max_gain()
        assert gf.G[s.cell[1], s.cell[0]] == rec.gain
        stack = psi_insert(stack, occlusion_field_exact(env, s))


def test_mean_order_termination():
    env = small_city(20, 2)
    run = greedy_place(env, GreedyConfig(k=3, tau=0.9, termination="mean-order"))
    fr = run.final_coverage()
    assert sum(fr) >= 0.9 * 3
    assert reached(fr, 0.9, 3, "mean-order")


def test_replay_reproduces_trace():
    env = small_city(20, 5)
    run = greedy_place(env, GreedyConfig(k=2, tau=0.9))
    from kcover import coverage_fractions
    assert coverage_fractions(replay(env, run.sensors, 2), env) == run.final_coverage()


def test_json_round_trip():
    env = small_city(16, 1)
    run = greedy_place(env, GreedyConfig(k=2))
    back = PlacementRun.from_dict(json.loads(run.to_json()))
    assert back.to_json() == run.to_json()


@pytest.mark.parametrize("kw", [dict(epsilon=1.0), dict(tau=1.0), dict(k=0), dict(max_sensors=0),
                                dict(visibility_method="fast"), dict(candidate_policy="roofs"),
                                dict(weights=(1.0, 0.5)), dict(weights=(0.2, 0.5, 0.1))])
def test_config_validation(kw):
    with pytest.raises(ValidationError):
        GreedyConfig(**kw)


def test_config_from_dict_rejects_unknown():
    with pytest.raises(ValidationError):
        GreedyConfig.from_dict({"k": 3, "gamma": 1})
    assert GreedyConfig.from_dict(GreedyConfig(k=2).to_dict()).k == 2


def test_no_streets_or_free_space():
    env = make_environment(GridSpec(3, 3), np.full(9, 0.5))
    with pytest.raises(EmptyCandidateSet):
        greedy_place(env, GreedyConfig())
    assert candidate_mask(env, "all-free-cells").all()
    full = make_environment(GridSpec(3, 3), np.ones(9))
    with pytest.raises(DegenerateFreeSpace):
        greedy_place(full, GreedyConfig())


def test_final_bound_against_optimum():
    env = small_city(12, 3)
    mask = np.zeros(env.shape, bool)
    streets = np.argwhere(env.h == 0)
    for j, i in streets[:: max(1, len(streets) // 10)][:10]:
        mask[j, i] = True
    cfg = GreedyConfig(k=2, tau=0.95, max_sensors=3, epsilon=0.0, visibility_method="exact")
    run = greedy_place(env, cfg, candidates=mask)
    from kcover import f_k
    n = len(run.sensors)
    val = f_k(replay(env, run.sensors, 2, "exact"), env, cfg.weight_obj())
    _, opt = optimal_placement(env, n, 2, cfg.weight_obj(), mask)
    assert val >= approximation_ratio(0.0) * opt
