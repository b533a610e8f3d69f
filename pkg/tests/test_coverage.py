import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_heights, small_city
from kcover import (
    GridSpec,
    PsiStack,
    Weights,
    coverage_fraction,
    coverage_fractions,
    coverage_volumes,
    f_k,
    flat_environment,
    gain,
    gain_closed_form,
    gain_field,
    make_sensor,
    nmin,
    occlusion_field_exact,
    order_of_visibility,
    psi_insert,
    street_mask,
    visibility_at_height,
)
from kcover.coverage import SENTINEL, CandidateFields
from kcover.errors import (
    DegenerateFreeSpace,
    EmptyCandidateSet,
    GridMismatch,
    NonMonotoneWeights,
    OrderExceedsCount,
    ValidationError,
    WeightCountMismatch,
)
from kcover.oracle import brute_force_bound, brute_force_fk

W3 = Weights((1.0, 0.5, 0.25))


def stack_of(env, sensors, k):
    st_ = PsiStack.empty(env, k)
    for s in sensors:
        st_ = psi_insert(st_, occlusion_field_exact(env, s))
    return st_


def random_sensors(env, rng, n):
    cells = np.argwhere(env.h < env.z_max)
    return [make_sensor(env, (int(c[1]), int(c[0]))) for c in cells[rng.integers(len(cells), size=n)]]


# --------------------------------------------------------------------- nmin


def test_nmin_worked_example():
    vals = [42, 4, 1337, 69]
    assert (nmin(vals, 1), nmin(vals, 2), nmin(vals, 3)) == (4, 42, 69)


def test_nmin_edge_cases():
    assert nmin([5], 1) == 5
    assert nmin([3, 3, 7], 2) == 3
    with pytest.raises(OrderExceedsCount):
        nmin([1, 2], 3)
    with pytest.raises(OrderExceedsCount):
        nmin([1, 2], 0)


@given(st.lists(st.floats(allow_nan=False), min_size=1, max_size=20), st.data())
def test_nmin_matches_sort(vals, data):
    n = data.draw(st.integers(1, len(vals)))
    assert nmin(vals, n) == sorted(vals)[n - 1]


# ---------------------------------------------------------------- Weights


def test_weights_validation():
    assert Weights.halving(3).w == (1.0, 0.5, 0.25)
    with pytest.raises(NonMonotoneWeights):
        Weights((0.5, 1.0))
    assert Weights((0.5, 1.0), allow_nonmonotone=True).k == 2
    with pytest.raises(ValidationError):
        Weights((1.0, -0.1))
    with pytest.raises(ValidationError):
        Weights(())


# ---------------------------------------------------------------- stack


def test_insert_into_empty():
    env = small_city(12, 1)
    f = occlusion_field_exact(env, make_sensor(env, tuple(np.argwhere(env.h == 0)[0][::-1])))
    st_ = psi_insert(PsiStack.empty(env, 3), f)
    assert np.array_equal(st_.psi[0], f.g)
    assert (st_.psi[1:] == env.z_max).all()
    st2 = psi_insert(st_, f)
    assert np.array_equal(st2.psi[1], f.g)
    assert (st_.psi[1] == env.z_max).all()  # original untouched
    assert st2.n_sensors == 2


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.integers(1, 4))
def test_insert_matches_full_sort(seed, k):
    env = random_heights(8, seed)
    rng = np.random.default_rng(seed)
    sensors = random_sensors(env, rng, k + 1 + int(rng.integers(3)))
    gs = np.stack([occlusion_field_exact(env, s).g for s in sensors])
    st_ = stack_of(env, sensors, k)
    ref = np.sort(np.concatenate([gs, np.full((k,) + env.shape, env.z_max)]), axis=0)[:k]
    assert np.array_equal(st_.psi, ref)


def test_grid_mismatch():
    a = flat_environment(GridSpec(4, 4))
    b = flat_environment(GridSpec(5, 4))
    f = occlusion_field_exact(b, make_sensor(b, (0, 0)))
    with pytest.raises(GridMismatch):
        psi_insert(PsiStack.empty(a, 2), f)
    with pytest.raises(GridMismatch):
        coverage_volumes(PsiStack.empty(a, 2), b)


def test_insert_beyond_k_never_raises_psi():
    env = small_city(12, 2)
    rng = np.random.default_rng(0)
    st_ = PsiStack.empty(env, 2)
    for s in random_sensors(env, rng, 6):
        nxt = psi_insert(st_, occlusion_field_exact(env, s))
        assert (nxt.psi <= st_.psi).all()
        st_ = nxt


# ------------------------------------------------------- order of visibility


def test_order_trivial_cases():
    env = flat_environment(GridSpec(5, 5))
    assert order_of_visibility(PsiStack.empty(env, 3), (2, 2), 0.3) == 0
    st_ = stack_of(env, [make_sensor(env, c) for c in [(0, 0), (4, 4), (2, 1), (3, 3)]], 3)
    assert all(order_of_visibility(st_, (i, j), 0.0) == 3 for i in range(5) for j in range(5))


def test_order_matches_direct_count():
    env = small_city(14, 7)
    rng = np.random.default_rng(7)
    sensors = random_sensors(env, rng, 5)
    k = 3
    st_ = stack_of(env, sensors, k)
    fields = [occlusion_field_exact(env, s) for s in sensors]
    for z in [0.0, 0.2, 0.55, 0.9]:
        direct = np.minimum(sum(visibility_at_height(f, z).astype(int) for f in fields), k)
        for j in range(14):
            for i in range(14):
                assert order_of_visibility(st_, (i, j), z) == direct[j, i]


def test_order_inside_obstacle_is_zero():
    env = random_heights(8, 3, frac=0.5)
    j, i = np.argwhere(env.h > 0.1)[0]
    st_ = stack_of(env, [make_sensor(env, (i, j))], 1)
    assert order_of_visibility(st_, (i, j), env.h[j, i] / 2) == 0


# ------------------------------------------------------- volumes and f_k


def test_volumes_trivial():
    env = small_city(10, 0)
    assert not coverage_volumes(PsiStack.empty(env, 3), env).any()
    flat = flat_environment(GridSpec(6, 6, 2.0, 1.5))
    st_ = stack_of(flat, [make_sensor(flat, (1, 1))], 3)
    v = coverage_volumes(st_, flat)
    assert v[0] == flat.free_volume() and not v[1:].any()
    assert f_k(st_, flat, W3) == flat.free_volume()
    assert f_k(PsiStack.empty(flat, 3), flat, W3) == 0.0


def test_fractions():
    flat = flat_environment(GridSpec(6, 6))
    st_ = stack_of(flat, [make_sensor(flat, (c, c)) for c in range(3)], 3)
    assert coverage_fraction(st_, flat, 3) == 1.0
    assert coverage_fraction(PsiStack.empty(flat, 3), flat, 1) == 0.0
    with pytest.raises(OrderExceedsCount):
        coverage_fraction(st_, flat, 4)
    from kcover import make_environment
    full = make_environment(GridSpec(2, 2), np.ones(4))
    with pytest.raises(DegenerateFreeSpace):
        coverage_fractions(PsiStack.empty(full, 1), full)


def test_weight_count_mismatch():
    env = flat_environment(GridSpec(3, 3))
    with pytest.raises(WeightCountMismatch):
        f_k(PsiStack.empty(env, 2), env, W3)


@pytest.mark.parametrize("seed", range(4))
def test_fk_matches_slab_oracle(seed):
    env = small_city(10, seed)
    rng = np.random.default_rng(seed)
    sensors = random_sensors(env, rng, 4)
    fast = f_k(stack_of(env, sensors, 3), env, W3)
    errs = []
    for L in (8, 64, 512):
        bf = brute_force_fk(env, sensors, W3, L)
        err = abs(bf - fast)
        assert err <= brute_force_bound(env, W3, L)
        errs.append(err)
    assert errs[-1] <= errs[0] + 1e-12


def test_slab_oracle_exact_on_aligned_breakpoints():
    # heights on the slab grid and a flat street: every breakpoint lies on a slab boundary
    from kcover import make_environment
    h = np.zeros((6, 6))
    h[2:4, 2:4] = 0.5
    env = make_environment(GridSpec(6, 6), h)
    sensors = [make_sensor(env, (2, 2)), make_sensor(env, (3, 3))]  # rooftop sensors see only the roof
    fast = f_k(stack_of(env, sensors, 2), env, Weights((1.0, 0.5)))
    assert np.isclose(brute_force_fk(env, sensors, Weights((1.0, 0.5)), 4), fast, rtol=0, atol=1e-12)
    assert brute_force_fk(env, [], W3, 5) == 0.0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_volumes_antitone(seed):
    env = random_heights(8, seed)
    rng = np.random.default_rng(seed)
    v = coverage_volumes(stack_of(env, random_sensors(env, rng, 5), 4), env)
    assert all(v[i] >= v[i + 1] for i in range(3))
    assert (v >= 0).all()


# ---------------------------------------------------------------- gains


def test_gain_flat_empty():
    env = flat_environment(GridSpec(5, 5, 1.0, 2.0))
    f = occlusion_field_exact(env, make_sensor(env, (2, 2)))
    G, V = gain(PsiStack.empty(env, 3), env, W3, f)
    assert G == env.free_volume()
    assert list(V) == [env.free_volume(), 0.0, 0.0]
    assert gain_closed_form(PsiStack.empty(env, 3), env, W3, f) == env.free_volume()


def test_gain_saturated():
    env = flat_environment(GridSpec(5, 5))
    f = occlusion_field_exact(env, make_sensor(env, (1, 2)))
    st_ = stack_of(env, [f.sensor] * 3, 3)
    G, V = gain(st_, env, W3, f)
    assert G == 0.0 and not V.any()
    assert gain_closed_form(st_, env, W3, f) == 0.0


def test_closed_form_empty_is_visible_volume():
    env = small_city(12, 4)
    s = make_sensor(env, tuple(np.argwhere(env.h == 0)[3][::-1]))
    f = occlusion_field_exact(env, s)
    vis = math.fsum((env.z_max - np.maximum(f.g, env.h)).ravel())
    assert np.isclose(gain_closed_form(PsiStack.empty(env, 3), env, W3, f), vis, rtol=1e-14)


def test_gain_does_not_mutate():
    env = small_city(12, 5)
    rng = np.random.default_rng(5)
    st_ = stack_of(env, random_sensors(env, rng, 2), 3)
    before = st_.psi.copy()
    gain(st_, env, W3, occlusion_field_exact(env, random_sensors(env, rng, 1)[0]))
    assert np.array_equal(before, st_.psi)


def three_paths(env, sensors, x, weights):
    k = weights.k
    st_ = stack_of(env, sensors, k)
    f = occlusion_field_exact(env, x)
    G, V = gain(st_, env, weights, f)
    diff = f_k(psi_insert(st_, f), env, weights) - f_k(st_, env, weights)
    cf = gain_closed_form(st_, env, weights, f)
    return G, V, diff, cf


def test_three_paths_agree():
    rng = np.random.default_rng(11)
    for trial in range(25):
        env = random_heights(9, trial, frac=0.4)
        k = int(rng.integers(1, 4))
        weights = Weights(tuple(sorted(rng.random(k), reverse=True)))
        sensors = random_sensors(env, rng, int(rng.integers(0, 6)))
        x = random_sensors(env, rng, 1)[0]
        G, V, diff, cf = three_paths(env, sensors, x, weights)
        scale = max(abs(G), weights.w[0] * env.free_volume())
        assert abs(G - diff) <= 1e-12 * scale
        assert abs(G - cf) <= 1e-12 * scale
        assert (V >= 0).all() and G >= 0


# ------------------------------------------------------------- gain field


def test_gain_field_flat_constant():
    env = flat_environment(GridSpec(6, 5))
    gf = gain_field(env, PsiStack.empty(env, 3), W3, street_mask(env), "exact")
    assert (gf.G == env.free_volume()).all()


def test_gain_field_single_candidate_matches_gain():
    env = small_city(12, 6)
    rng = np.random.default_rng(6)
    st_ = stack_of(env, random_sensors(env, rng, 2), 3)
    mask = np.zeros(env.shape, bool)
    j, i = np.argwhere(env.h == 0)[5]
    mask[j, i] = True
    gf = gain_field(env, st_, W3, mask, "exact")
    G, V = gain(st_, env, W3, occlusion_field_exact(env, make_sensor(env, (i, j))))
    assert gf.G[j, i] == G
    assert np.array_equal(gf.V[:, j, i], V)
    assert (gf.G[~mask] == SENTINEL).all()


def test_gain_field_argmax_matches_loop():
    env = small_city(16, 9)
    rng = np.random.default_rng(9)
    st_ = stack_of(env, random_sensors(env, rng, 3), 3)
    mask = street_mask(env)
    gf = gain_field(env, st_, W3, mask, "exact")
    loop = {}
    for j, i in np.argwhere(mask):
        loop[(int(i), int(j))] = gain(st_, env, W3, occlusion_field_exact(env, make_sensor(env, (i, j))))[0]
    best = max(loop.values())
    first = next(c for c in sorted(loop, key=lambda c: (c[1], c[0])) if loop[c] == best)
    assert gf.argmax() == first
    assert gf.max_gain() == best


def test_gain_field_cached_and_streamed_agree():
    env = small_city(16, 10)
    rng = np.random.default_rng(10)
    st_ = stack_of(env, random_sensors(env, rng, 2), 3)
    a = CandidateFields(env, street_mask(env), "sweep")
    b = CandidateFields(env, street_mask(env), "sweep", max_bytes=0)
    ga = gain_field(env, st_, W3, None, fields=a)
    gb = gain_field(env, st_, W3, None, fields=b)
    assert np.array_equal(ga.G, gb.G) and np.array_equal(ga.V, gb.V)


def test_gain_field_empty_candidates():
    env = flat_environment(GridSpec(4, 4))
    with pytest.raises(EmptyCandidateSet):
        gain_field(env, PsiStack.empty(env, 1), Weights((1.0,)), np.zeros((4, 4), bool))


# ---------------------------------------------- monotonicity / submodularity


def nested_sets(env, rng):
    a = random_sensors(env, rng, int(rng.integers(0, 4)))
    b = a + random_sensors(env, rng, int(rng.integers(0, 4)))
    return a, b


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_monotone_and_submodular(seed):
    rng = np.random.default_rng(seed)
    env = random_heights(8, seed, frac=float(rng.uniform(0.1, 0.6)))
    k = int(rng.integers(1, 4))
    weights = Weights(tuple(sorted(rng.random(k), reverse=True)))
    a, b = nested_sets(env, rng)
    sa, sb = stack_of(env, a, k), stack_of(env, b, k)
    assert f_k(sa, env, weights) <= f_k(sb, env, weights) + 1e-12
    z = occlusion_field_exact(env, random_sensors(env, rng, 1)[0])
    ga, _ = gain(sa, env, weights, z)
    gb, _ = gain(sb, env, weights, z)
    assert ga >= gb - 1e-12 * max(1.0, env.free_volume())
