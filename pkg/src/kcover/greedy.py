"""Sequential epsilon-greedy sensor placement.

Each step evaluates the gain of every candidate cell, draws the next sensor
uniformly from the band of candidates within a factor (1 - epsilon) of the
best gain, and inserts its occlusion field into the coverage stack.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields as dc_fields

import numpy as np

from .coverage import (
    CandidateFields,
    GainField,
    PsiStack,
    Weights,
    coverage_fractions,
    gain,
    gain_field,
    psi_insert,
)
from .env import Environment, free_cell_mask, street_mask
from .errors import DegenerateFreeSpace, EmptyCandidateSet, ValidationError
from .visibility import METHODS, SensorPose

ZERO_GAIN = 1e-12
CANDIDATE_POLICIES = ("streets", "all-free-cells")
TERMINATIONS = ("k-coverage", "mean-order")


@dataclass
class GreedyConfig:
    k: int = 3
    weights: tuple[float, ...] | None = None  # None -> 1, 1/2, 1/4, ...
    epsilon: float = 0.01
    tau: float = 0.9
    max_sensors: int = 200
    stop_on_zero_gain: bool = False
    visibility_method: str = "sweep"
    candidate_policy: str = "streets"
    seed: int = 0
    mount_offset: float = 0.0
    termination: str = "k-coverage"
    distinct: bool = False
    allow_nonmonotone_weights: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if not 0 <= self.epsilon < 1:
            raise ValidationError(f"epsilon must be in [0, 1), got {self.epsilon}")
        if not 0 < self.tau < 1:
            raise ValidationError(f"tau must be in (0, 1), got {self.tau}")
        if self.max_sensors < 1:
            raise ValidationError("max_sensors must be >= 1")
        if self.visibility_method not in METHODS:
            raise ValidationError(f"unknown visibility method {self.visibility_method!r}")
        if self.candidate_policy not in CANDIDATE_POLICIES:
            raise ValidationError(f"unknown candidate policy {self.candidate_policy!r}")
        if self.termination not in TERMINATIONS:
            raise ValidationError(f"unknown termination {self.termination!r}")
        if self.weights is not None:
            self.weights = tuple(float(w) for w in self.weights)
        self.weight_obj()

    def weight_obj(self) -> Weights:
        if self.weights is None:
            return Weights(tuple(0.5 ** i for i in range(self.k)), self.allow_nonmonotone_weights)
        w = Weights(self.weights, self.allow_nonmonotone_weights)
        if w.k != self.k:
            raise ValidationError(f"{w.k} weights given for k = {self.k}")
        return w

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = list(self.weight_obj().w)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GreedyConfig":
        names = {f.name for f in dc_fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValidationError(f"unknown greedy config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class StepRecord:
    step: int
    cell: tuple[int, int]
    gain: float
    band_size: int
    coverage: list[float]  # fraction of free volume at orders 1..k after this step

    def to_dict(self) -> dict:
        return {"step": self.step, "cell": list(self.cell), "gain": self.gain,
                "band_size": self.band_size, "coverage": list(self.coverage)}


@dataclass
class PlacementRun:
    method: str
    sensors: list[SensorPose]
    trace: list[StepRecord]
    terminated_by: str  # threshold | cap | zero-gain | exhausted
    seed: int
    config: dict
    runs: list["PlacementRun"] = field(default_factory=list)

    def final_coverage(self) -> list[float]:
        return list(self.trace[-1].coverage) if self.trace else [0.0] * self.config["k"]

    def to_dict(self) -> dict:
        d = {
            "method": self.method,
            "seed": self.seed,
            "config": self.config,
            "sensors": [s.to_list() for s in self.sensors],
            "trace": [t.to_dict() for t in self.trace],
            "terminated_by": self.terminated_by,
        }
        if self.runs:
            d["runs"] = [r.to_dict() for r in self.runs]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "PlacementRun":
        return cls(
            method=d["method"],
            sensors=[SensorPose((int(s[0]), int(s[1])), float(s[2])) for s in d["sensors"]],
            trace=[StepRecord(t["step"], tuple(t["cell"]), t["gain"], t["band_size"], t["coverage"])
                   for t in d["trace"]],
            terminated_by=d["terminated_by"],
            seed=d["seed"],
            config=d["config"],
            runs=[cls.from_dict(r) for r in d.get("runs", [])],
        )


def candidate_mask(env: Environment, policy: str) -> np.ndarray:
    if policy == "streets":
        mask = street_mask(env)
    elif policy == "all-free-cells":
        mask = free_cell_mask(env)
    else:
        raise ValidationError(f"unknown candidate policy {policy!r}")
    if not mask.any():
        raise EmptyCandidateSet(f"policy {policy!r} leaves no candidate cells")
    return mask


def epsilon_band(values: np.ndarray, epsilon: float) -> np.ndarray:
    """Indices (ascending) of values within (1 - epsilon) of the maximum."""
    if values.size == 0:
        raise EmptyCandidateSet("no candidates to choose from")
    m = float(values.max())
    if m <= ZERO_GAIN:
        return np.arange(values.size)
    return np.nonzero(values >= (1.0 - epsilon) * m)[0]


def select_epsilon_band(field: GainField, epsilon: float, rng: np.random.Generator):
    """Uniform draw from the epsilon band of ``field``; returns ``(cell, band_size)``.

    Consumes exactly one integer draw from ``rng``.
    """
    band = epsilon_band(field.values, epsilon)
    pick = band[int(rng.integers(band.size))]
    return field.cells[pick], int(band.size)


def _require_free(env: Environment) -> float:
    free = env.free_volume()
    if free <= 0:
        raise DegenerateFreeSpace("environment has no free volume")
    return free


def reached(fracs, tau: float, k: int, termination: str = "k-coverage") -> bool:
    if termination == "mean-order":
        return math.fsum(fracs) >= tau * k
    return fracs[k - 1] >= tau


def greedy_steps(env: Environment, stack: PsiStack, weights: Weights, fields: CandidateFields,
                 rng: np.random.Generator, *, epsilon: float, tau: float, max_sensors: int,
                 termination: str = "k-coverage", stop_on_zero_gain: bool = False,
                 distinct: bool = False, sensors=None, trace=None, on_step=None):
    """Run epsilon-greedy steps from ``stack`` until a stopping rule fires.

    ``sensors`` and ``trace`` are extended in place. ``on_step(stack, gf)`` is
    called with the gain field before each selection. Returns
    ``(stack, terminated_by)``.
    """
    k = stack.k
    sensors = [] if sensors is None else sensors
    trace = [] if trace is None else trace
    available = np.ones(len(fields), dtype=bool)
    used = {s.cell for s in sensors}
    if distinct and used:
        for idx in range(len(fields)):
            if fields.cell(idx) in used:
                available[idx] = False
    fracs = coverage_fractions(stack, env)
    while True:
        if reached(fracs, tau, k, termination):
            return stack, "threshold"
        if len(sensors) >= max_sensors:
            return stack, "cap"
        if distinct and not available.any():
            return stack, "exhausted"
        gf = gain_field(env, stack, weights, None, fields=fields)
        if on_step is not None:
            on_step(stack, gf)
        if distinct:
            idx_map = np.nonzero(available)[0]
            band = idx_map[epsilon_band(gf.values[idx_map], epsilon)]
            m = float(gf.values[idx_map].max())
        else:
            band = epsilon_band(gf.values, epsilon)
            m = gf.max_gain()
        if stop_on_zero_gain and m <= ZERO_GAIN:
            return stack, "zero-gain"
        idx = int(band[int(rng.integers(band.size))])
        available[idx] = False
        fld = fields.field(idx)
        stack = psi_insert(stack, fld)
        fracs = coverage_fractions(stack, env)
        sensors.append(fld.sensor)
        trace.append(StepRecord(len(sensors), fields.cell(idx), float(gf.values[idx]), int(band.size), fracs))


def greedy_place(env: Environment, config: GreedyConfig, fields: CandidateFields | None = None,
                 candidates: np.ndarray | None = None) -> PlacementRun:
    """Epsilon-greedy placement on the weighted coverage gain.

    ``candidates`` overrides the config's candidate policy with an explicit mask.
    """
    _require_free(env)
    weights = config.weight_obj()
    if fields is None:
        if candidates is None:
            candidates = candidate_mask(env, config.candidate_policy)
        fields = CandidateFields(env, candidates, config.visibility_method, config.mount_offset)
    rng = np.random.default_rng(config.seed)
    sensors, trace = [], []
    _, why = greedy_steps(env, PsiStack.empty(env, config.k), weights, fields, rng,
                          epsilon=config.epsilon, tau=config.tau, max_sensors=config.max_sensors,
                          termination=config.termination, stop_on_zero_gain=config.stop_on_zero_gain,
                          distinct=config.distinct, sensors=sensors, trace=trace)
    return PlacementRun("greedy", sensors, trace, why, config.seed, config.to_dict())


def replay(env: Environment, sensors, k: int, method: str = "sweep") -> PsiStack:
    """Coverage stack of an explicit sensor list."""
    from .visibility import occlusion_field

    stack = PsiStack.empty(env, k)
    for s in sensors:
        stack = psi_insert(stack, occlusion_field(env, s, method))
    return stack


def step_record(env, stack, weights, fld, step, band_size):
    g, _ = gain(stack, env, weights, fld)
    stack = psi_insert(stack, fld)
    return stack, StepRecord(step, fld.sensor.cell, float(g), band_size, coverage_fractions(stack, env))
