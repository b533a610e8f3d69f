"""Brute-force references used to validate the fast paths.

Nothing here shares code with the column-analytic volumes in ``coverage``
except where noted: ``brute_force_fk`` counts visibility slab by slab from
exact fields, and ``optimal_placement`` enumerates every multiset of
candidates.
"""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .coverage import PsiStack, Weights, f_k, psi_insert
from .env import Environment
from .errors import EnumerationTooLarge, GridMismatch, TheoremViolation, ValidationError
from .greedy import GreedyConfig, candidate_mask, greedy_place
from .visibility import make_sensor, occlusion_field_exact


def brute_force_fk(env: Environment, sensors, weights: Weights, z_levels: int) -> float:
    """Weighted k-coverage volume by midpoint slabs.

    Each column's free interval [h, z_max] is cut into ``z_levels`` equal
    slabs; the order of visibility at each slab midpoint is the number of
    sensors whose exact occlusion height lies at or below it.
    """
    if z_levels < 1:
        raise ValidationError("z_levels must be >= 1")
    k = weights.k
    h = env.h
    width = (env.z_max - h) / z_levels
    mids = h[None] + (np.arange(z_levels)[:, None, None] + 0.5) * width[None]
    count = np.zeros(mids.shape, dtype=np.int64)
    for s in sensors:
        i, j = s.cell
        if not (0 <= i < env.spec.nx and 0 <= j < env.spec.ny):
            raise GridMismatch(f"sensor {s.cell} not on this grid")
        g = occlusion_field_exact(env, s).g
        count += g[None] <= mids
    total = []
    ca = env.spec.cell_area
    for i in range(1, k + 1):
        slab_vol = np.where(count >= i, width[None], 0.0)
        total.append(weights.w[i - 1] * math.fsum(slab_vol.ravel()) * ca)
    return math.fsum(total)


def brute_force_bound(env: Environment, weights: Weights, z_levels: int) -> float:
    """Worst-case |brute_force_fk - f_k|: one misplaced slab per column per order."""
    return math.fsum(weights.w) * math.fsum(((env.z_max - env.h) / z_levels).ravel()) * env.spec.cell_area


def _candidate_poses(env, candidates):
    jj, ii = np.nonzero(np.asarray(candidates, dtype=bool))
    return [make_sensor(env, (int(i), int(j))) for j, i in sorted(zip(jj, ii))]


def optimal_placement(env: Environment, l: int, k: int, weights: Weights, candidates,
                      max_subsets: int = 2_000_000):
    """Exhaustive maximizer of f_k over multisets of ``l`` candidate poses.

    Poses are ordered row-major; among equal values the lexicographically
    first multiset wins. Returns ``(poses, value)``.
    """
    if weights.k != k:
        raise ValidationError(f"{weights.k} weights for k = {k}")
    poses = _candidate_poses(env, candidates)
    n = len(poses)
    if l < 0:
        raise ValidationError("budget l must be >= 0")
    if l == 0:
        return [], 0.0
    if n == 0:
        raise ValidationError("no candidates")
    count = math.comb(n + l - 1, l)
    if count > max_subsets:
        raise EnumerationTooLarge(f"{count} multisets exceeds cap {max_subsets}")
    fields = [occlusion_field_exact(env, p) for p in poses]
    best = [-1.0, None]

    def visit(start, depth, stack, chosen):
        if depth == l:
            v = f_k(stack, env, weights)
            if v > best[0]:
                best[0] = v
                best[1] = list(chosen)
            return
        for idx in range(start, n):
            chosen.append(idx)
            visit(idx, depth + 1, psi_insert(stack, fields[idx]), chosen)
            chosen.pop()

    visit(0, 0, PsiStack.empty(env, k), [])
    return [poses[i] for i in best[1]], best[0]


def local_search_placement(env: Environment, l: int, k: int, weights: Weights, candidates,
                           restarts: int = 10, seed: int = 0):
    """Randomized restarts of single-swap hill climbing; a lower bound on the optimum."""
    poses = _candidate_poses(env, candidates)
    fields = [occlusion_field_exact(env, p) for p in poses]
    n = len(poses)
    rng = np.random.default_rng(seed)

    def value(sel):
        st = PsiStack.empty(env, k)
        for i in sel:
            st = psi_insert(st, fields[i])
        return f_k(st, env, weights)

    best_val, best_sel = -1.0, None
    for _ in range(restarts):
        sel = sorted(int(x) for x in rng.integers(n, size=l))
        cur = value(sel)
        improved = True
        while improved:
            improved = False
            for pos in range(l):
                for cand in range(n):
                    if cand == sel[pos]:
                        continue
                    trial = sorted(sel[:pos] + [cand] + sel[pos + 1:])
                    v = value(trial)
                    if v > cur:
                        sel, cur, improved = trial, v, True
                        break
                if improved:
                    break
        if cur > best_val:
            best_val, best_sel = cur, sel
    return [poses[i] for i in best_sel], best_val


def approximation_ratio(epsilon: float, n: int = 1, l: int = 1) -> float:
    """Guaranteed fraction 1 - exp(-(1 - epsilon) n / l) of the best l-sensor coverage."""
    return 1.0 - math.exp(-(1.0 - epsilon) * n / l)


def verify_theorem_bound(env: Environment, config: GreedyConfig, l_max: int, candidates=None,
                         strict: bool = True) -> dict:
    """Check f_k(P_n) >= (1 - e^{-(1-eps) n/l}) f_k(P*_l) for every greedy prefix n and l <= l_max.

    Greedy runs with exact visibility so both sides use the same fields and
    the same f_k arithmetic.
    """
    cfg = replace(config, visibility_method="exact")
    weights = cfg.weight_obj()
    mask = candidate_mask(env, cfg.candidate_policy) if candidates is None else np.asarray(candidates, bool)
    run = greedy_place(env, cfg, candidates=mask)
    optima = {}
    for l in range(1, l_max + 1):
        _, optima[l] = optimal_placement(env, l, cfg.k, weights, mask)
    prefix_vals = []
    stack = PsiStack.empty(env, cfg.k)
    for s in run.sensors:
        stack = psi_insert(stack, occlusion_field_exact(env, s))
        prefix_vals.append(f_k(stack, env, weights))
    checks = []
    for n, lhs in enumerate(prefix_vals, start=1):
        for l in range(1, l_max + 1):
            rhs = approximation_ratio(cfg.epsilon, n, l) * optima[l]
            checks.append({"n": n, "l": l, "lhs": lhs, "rhs": rhs, "pass": bool(lhs >= rhs)})
    report = {
        "config": cfg.to_dict(),
        "candidates": [[int(i), int(j)] for j, i in zip(*np.nonzero(mask))],
        "sensors": [s.to_list() for s in run.sensors],
        "optimal_values": {str(l): v for l, v in optima.items()},
        "checks": checks,
        "all_pass": all(c["pass"] for c in checks),
    }
    if strict and not report["all_pass"]:
        bad = next(c for c in checks if not c["pass"])
        raise TheoremViolation(f"bound violated at n={bad['n']}, l={bad['l']}: {bad['lhs']} < {bad['rhs']}")
    return report
