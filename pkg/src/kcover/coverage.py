"""Multi-sensor coverage state and the weighted coverage objective.

The state is a stack ``psi`` of shape ``(k, ny, nx)``: per column the k
smallest occlusion heights among the placed sensors, sorted ascending and
padded with the ``z_max`` sentinel. A point ``(c, z)`` in free space is seen
by at least ``i`` sensors iff ``psi[i-1, c] <= z``, so every volume below is
an exact per-column integral; no z discretization is involved.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .env import Environment
from .errors import (
    DegenerateFreeSpace,
    EmptyCandidateSet,
    GridMismatch,
    NonMonotoneWeights,
    OrderExceedsCount,
    ValidationError,
    WeightCountMismatch,
)
from .visibility import OcclusionField, SensorPose, method_code

SENTINEL = -1.0  # gain-field value at non-candidate cells


@dataclass(frozen=True)
class Weights:
    w: tuple[float, ...]
    allow_nonmonotone: bool = False

    def __post_init__(self):
        w = tuple(float(x) for x in self.w)
        object.__setattr__(self, "w", w)
        if len(w) < 1:
            raise ValidationError("need at least one weight")
        if any(not (x >= 0 and math.isfinite(x)) for x in w):
            raise ValidationError(f"weights must be finite and non-negative, got {w}")
        if not self.allow_nonmonotone and any(w[i + 1] > w[i] for i in range(len(w) - 1)):
            raise NonMonotoneWeights(
                f"weights must be non-increasing for the submodularity guarantee, got {w}"
            )

    @property
    def k(self) -> int:
        return len(self.w)

    @classmethod
    def halving(cls, k: int) -> "Weights":
        """1, 1/2, 1/4, ... (the defaults used for k = 3)."""
        return cls(tuple(0.5 ** i for i in range(k)))


def nmin(values, n: int) -> float:
    """n-th smallest element of ``values``, counted with multiplicity."""
    vals = sorted(values)
    if not 1 <= n <= len(vals):
        raise OrderExceedsCount(f"order {n} outside 1..{len(vals)}")
    return vals[n - 1]


@dataclass(frozen=True, eq=False)
class PsiStack:
    psi: np.ndarray  # (k, ny, nx), ascending along axis 0
    h: np.ndarray
    z_max: float
    n_sensors: int = 0

    @property
    def k(self) -> int:
        return self.psi.shape[0]

    @classmethod
    def empty(cls, env: Environment, k: int) -> "PsiStack":
        if k < 1:
            raise ValidationError("order k must be >= 1")
        psi = np.full((k,) + env.shape, env.z_max)
        psi.setflags(write=False)
        return cls(psi, env.h, env.z_max)


def _check_grid(stack: PsiStack, env: Environment):
    if stack.psi.shape[1:] != env.shape or stack.z_max != env.z_max:
        raise GridMismatch(f"stack grid {stack.psi.shape[1:]} does not match environment {env.shape}")


def _check_field(stack: PsiStack, fld: OcclusionField):
    if fld.g.shape != stack.psi.shape[1:]:
        raise GridMismatch(f"field grid {fld.g.shape} does not match stack {stack.psi.shape[1:]}")


def psi_insert(stack: PsiStack, fld: OcclusionField) -> PsiStack:
    """New stack with ``fld.g`` inserted per column; the largest value drops off."""
    _check_field(stack, fld)
    out = np.empty_like(stack.psi)
    _kernels.psi_insert_into(stack.psi, fld.g, out)
    out.setflags(write=False)
    return PsiStack(out, stack.h, stack.z_max, stack.n_sensors + 1)


def order_of_visibility(stack: PsiStack, column, z: float) -> int:
    """Number of placed sensors (capped at k) seeing the point at height z above ``column``.

    Points inside an obstacle report 0. At ``z == z_max`` sentinel slots also
    compare equal, a zero-volume boundary artifact.
    """
    i, j = column
    if z < stack.h[j, i]:
        return 0
    col = stack.psi[:, j, i]
    return bisect.bisect_right(col.tolist(), z)


def coverage_volumes(stack: PsiStack, env: Environment) -> np.ndarray:
    """Vol_i = volume of free space seen by at least i sensors, i = 1..k."""
    _check_grid(stack, env)
    ca = env.spec.cell_area
    raised = np.maximum(stack.psi, env.h[None])
    return np.array([math.fsum((env.z_max - raised[i]).ravel()) * ca for i in range(stack.k)])


def _check_weights(stack: PsiStack, weights: Weights):
    if weights.k != stack.k:
        raise WeightCountMismatch(f"{weights.k} weights for order {stack.k}")


def f_k(stack: PsiStack, env: Environment, weights: Weights) -> float:
    _check_weights(stack, weights)
    vols = coverage_volumes(stack, env)
    return math.fsum(w * v for w, v in zip(weights.w, vols))


def coverage_fraction(stack: PsiStack, env: Environment, order: int) -> float:
    if not 1 <= order <= stack.k:
        raise OrderExceedsCount(f"order {order} outside 1..{stack.k}")
    free = env.free_volume()
    if free <= 0:
        raise DegenerateFreeSpace("environment has no free volume")
    return float(coverage_volumes(stack, env)[order - 1] / free)


def coverage_fractions(stack: PsiStack, env: Environment) -> list[float]:
    free = env.free_volume()
    if free <= 0:
        raise DegenerateFreeSpace("environment has no free volume")
    return [float(v / free) for v in coverage_volumes(stack, env)]


def gain(stack: PsiStack, env: Environment, weights: Weights, fld: OcclusionField):
    """Coverage gain of adding the sensor behind ``fld``; returns ``(G, V)``.

    ``V[i-1]`` is the volume promoted to order >= i. The stack is not modified.
    """
    _check_grid(stack, env)
    _check_field(stack, fld)
    _check_weights(stack, weights)
    v = np.empty(stack.k)
    _kernels.gain_kernel(fld.g, stack.psi, env.h, v)
    v *= env.spec.cell_area
    return math.fsum(w * x for w, x in zip(weights.w, v)), v


def gain_closed_form(stack: PsiStack, env: Environment, weights: Weights, fld: OcclusionField) -> float:
    """Gain from the integrand w1 - wk*1{O>=k} + sum_i (w_{i+1} - w_i)*1{O>=i}.

    The integrand is integrated over the part of each column seen by the new
    sensor, split at the breakpoints psi_1..psi_k where O changes.
    """
    _check_grid(stack, env)
    _check_field(stack, fld)
    _check_weights(stack, weights)
    w = weights.w
    k = stack.k
    zm = env.z_max
    psi = stack.psi.reshape(k, -1)
    lo = np.maximum(fld.g, env.h).ravel()
    brk = np.vstack([lo[None], np.clip(psi, lo, zm), np.full((1, lo.size), zm)])
    brk.sort(axis=0)
    terms = []
    for q in range(k + 1):
        a, b = brk[q], brk[q + 1]
        order = (psi <= a[None]).sum(axis=0)
        integrand = np.full(lo.size, w[0]) - w[k - 1] * (order >= k)
        for i in range(1, k):
            integrand += (w[i] - w[i - 1]) * (order >= i)
        terms.append(integrand * (b - a))
    return math.fsum(np.concatenate(terms)) * env.spec.cell_area


class CandidateFields:
    """Occlusion fields of every candidate cell on one environment.

    Fields are precomputed when they fit in ``max_bytes`` and recomputed on
    demand otherwise; both paths run the same kernel, so results are
    identical either way.
    """

    def __init__(self, env: Environment, candidates: np.ndarray, method: str = "sweep",
                 mount_offset: float = 0.0, max_bytes: int = 768 * 2**20):
        candidates = np.asarray(candidates, dtype=bool)
        if candidates.shape != env.shape:
            raise GridMismatch(f"candidate mask shape {candidates.shape} does not match {env.shape}")
        jj, ii = np.nonzero(candidates)  # row-major order
        if ii.size == 0:
            raise EmptyCandidateSet("no candidate cells")
        if np.any(env.h[jj, ii] + mount_offset > env.z_max):
            raise ValidationError("mount offset puts a candidate sensor above z_max")
        self.env = env
        self.mask = candidates
        self.method = method
        self.code = method_code(method)
        self.mount_offset = float(mount_offset)
        self.cand_i = ii.astype(np.int64)
        self.cand_j = jj.astype(np.int64)
        self._fields = None
        if ii.size * env.h.size * 8 <= max_bytes:
            self._fields = np.empty((ii.size,) + env.shape)
            _kernels.fields_kernel(self.code, env.h, self.mount_offset, env.z_max,
                                   self.cand_i, self.cand_j, self._fields)
            self._fields.setflags(write=False)

    def __len__(self):
        return self.cand_i.size

    def cell(self, idx: int) -> tuple[int, int]:
        return int(self.cand_i[idx]), int(self.cand_j[idx])

    def index_of(self, cell) -> int:
        hits = np.nonzero((self.cand_i == cell[0]) & (self.cand_j == cell[1]))[0]
        if hits.size == 0:
            raise ValidationError(f"cell {tuple(cell)} is not a candidate")
        return int(hits[0])

    def pose(self, idx: int) -> SensorPose:
        i, j = self.cell(idx)
        return SensorPose((i, j), float(self.env.h[j, i]) + self.mount_offset)

    def field(self, idx: int) -> OcclusionField:
        if self._fields is not None:
            g = self._fields[idx]
        else:
            g = np.empty(self.env.shape)
            si, sj = self.cell(idx)
            _kernels.field_into(self.code, self.env.h, si, sj,
                                float(self.env.h[sj, si]) + self.mount_offset, self.env.z_max, g)
            g.setflags(write=False)
        return OcclusionField(self.pose(idx), g, self.env.h)

    def raw_gains(self, stack: PsiStack) -> np.ndarray:
        """Per-candidate, per-order volume gains, shape (n, k), cell-area scaled."""
        out = np.empty((len(self), stack.k))
        if self._fields is not None:
            _kernels.gains_from_fields_kernel(self._fields, stack.psi, self.env.h, out)
        else:
            _kernels.gain_field_kernel(self.code, self.env.h, self.mount_offset, self.env.z_max,
                                       stack.psi, self.cand_i, self.cand_j, out)
        out *= self.env.spec.cell_area
        return out


@dataclass(eq=False)
class GainField:
    G: np.ndarray  # (ny, nx); SENTINEL off-candidate
    V: np.ndarray  # (k, ny, nx); SENTINEL off-candidate
    candidates: np.ndarray
    cells: list = field(default_factory=list)  # candidate (i, j) in row-major order
    values: np.ndarray = None  # G at ``cells``

    def max_gain(self) -> float:
        return float(self.values.max())

    def argmax(self) -> tuple[int, int]:
        return self.cells[int(np.argmax(self.values))]


def gain_field(env: Environment, stack: PsiStack, weights: Weights, candidates,
               visibility_method: str = "sweep", fields: CandidateFields | None = None) -> GainField:
    """Gain and per-order gains for every candidate cell."""
    _check_grid(stack, env)
    _check_weights(stack, weights)
    if fields is None:
        fields = CandidateFields(env, candidates, visibility_method, max_bytes=0)
    elif candidates is not None and not np.array_equal(np.asarray(candidates, dtype=bool), fields.mask):
        raise ValidationError("candidate mask differs from the precomputed fields")
    raw = fields.raw_gains(stack)
    w = np.asarray(weights.w)
    # fixed-order weighted sum per candidate; same order as gain()'s fsum of k terms
    vals = np.array([math.fsum(w * row) for row in raw]) if stack.k > 1 else raw[:, 0] * w[0]
    G = np.full(env.shape, SENTINEL)
    V = np.full((stack.k,) + env.shape, SENTINEL)
    G[fields.cand_j, fields.cand_i] = vals
    V[:, fields.cand_j, fields.cand_i] = raw.T
    cells = list(zip(fields.cand_i.tolist(), fields.cand_j.tolist()))
    return GainField(G, V, fields.mask, cells, vals)
