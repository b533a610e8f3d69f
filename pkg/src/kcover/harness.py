"""Experiment campaigns: sensors needed to reach coverage thresholds.

A campaign samples ``n_envs`` synthetic cities and runs each requested
method on each one. Every (env, method) cell gets its own seed derived from
the master seed, so results do not depend on execution order or ``jobs``.
"""
from __future__ import annotations

import csv
import hashlib
import io
import multiprocessing
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields as dc_fields

import numpy as np

from .coverage import CandidateFields, PsiStack, coverage_fractions, psi_insert
from .env import CityGenParams, Environment, GridSpec, generate_random_city
from .errors import KCoverError, ValidationError
from .greedy import (
    GreedyConfig,
    PlacementRun,
    _require_free,
    candidate_mask,
    greedy_place,
    reached,
    step_record,
)
from .parallel import ParallelConfig, interleaved, parallel_greedy_place

METHODS = ("greedy-exact", "greedy-sweep", "parallel", "random")
RESULT_COLUMNS = ["env_id", "method", "seed", "threshold", "sensors_needed", "censored", "wall_time_ms", "status"]


def random_baseline(env: Environment, config: GreedyConfig, fields: CandidateFields | None = None) -> PlacementRun:
    """Sensors drawn uniformly, with replacement, from the candidates."""
    _require_free(env)
    if fields is None:
        fields = CandidateFields(env, candidate_mask(env, config.candidate_policy),
                                 config.visibility_method, config.mount_offset)
    weights = config.weight_obj()
    rng = np.random.default_rng(config.seed)
    stack = PsiStack.empty(env, config.k)
    sensors, trace = [], []
    fracs = coverage_fractions(stack, env)
    why = "threshold"
    while not reached(fracs, config.tau, config.k, config.termination):
        if len(sensors) >= config.max_sensors:
            why = "cap"
            break
        idx = int(rng.integers(len(fields)))
        stack, rec = step_record(env, stack, weights, fields.field(idx), len(sensors) + 1, len(fields))
        sensors.append(fields.pose(idx))
        trace.append(rec)
        fracs = rec.coverage
    return PlacementRun("random", sensors, trace, why, config.seed, config.to_dict())


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 63-bit seed from the master seed and a cell identity."""
    key = ":".join(str(p) for p in (master_seed,) + parts).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little") >> 1


@dataclass
class ExperimentConfig:
    n_envs: int = 20
    grid: dict = field(default_factory=lambda: {"nx": 64, "ny": 64, "cell_size": 1.0, "z_max": 1.0})
    city: dict | None = None  # None -> CityGenParams.urban(grid)
    methods: list = field(default_factory=lambda: ["greedy-sweep", "parallel", "random"])
    thresholds: list = field(default_factory=lambda: [0.7, 0.9])
    k: int = 3
    epsilon: float = 0.01
    max_sensors: int = 200
    master_seed: int = 0
    candidate_policy: str = "streets"
    record_timing: bool = False

    def __post_init__(self):
        if self.n_envs < 1:
            raise ValidationError("n_envs must be >= 1")
        if not self.thresholds or any(not 0 < t < 1 for t in self.thresholds):
            raise ValidationError(f"thresholds must lie in (0, 1), got {self.thresholds}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ValidationError(f"unknown methods {bad}; choose from {METHODS}")
        self.thresholds = sorted(float(t) for t in self.thresholds)
        if self.city is None:
            self.city = CityGenParams.urban(self.grid_spec()).to_dict()
        CityGenParams.from_dict(self.city).validate(self.grid_spec())

    def grid_spec(self) -> GridSpec:
        return GridSpec(**self.grid)

    def city_params(self) -> CityGenParams:
        return CityGenParams.from_dict(self.city)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dc_fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValidationError(f"unknown experiment config keys: {sorted(unknown)}")
        return cls(**d)


def campaign_env(config: ExperimentConfig, env_index: int) -> Environment:
    return generate_random_city(config.grid_spec(), config.city_params(),
                                derive_seed(config.master_seed, env_index, "env"))


def curve_of(env: Environment, sensors, k: int, fields: CandidateFields) -> list[list[float]]:
    """Coverage fractions at orders 1..k after each prefix, starting from zero sensors."""
    stack = PsiStack.empty(env, k)
    out = [coverage_fractions(stack, env)]
    for s in sensors:
        stack = psi_insert(stack, fields.field(fields.index_of(s.cell)))
        out.append(coverage_fractions(stack, env))
    return out


def sensors_to_threshold(curve, k: int, threshold: float):
    for n, fr in enumerate(curve):
        if fr[k - 1] >= threshold:
            return n
    return None


def run_method(env: Environment, method: str, config: ExperimentConfig, seed: int,
               fields_by_method: dict) -> tuple[PlacementRun, list]:
    vis = "exact" if method == "greedy-exact" else "sweep"
    if vis not in fields_by_method:
        fields_by_method[vis] = CandidateFields(env, candidate_mask(env, config.candidate_policy), vis)
    fields = fields_by_method[vis]
    tau = max(config.thresholds)
    if method == "parallel":
        pc = ParallelConfig(k=config.k, epsilon=config.epsilon, tau=tau,
                            max_sensors_per_run=max(1, config.max_sensors // config.k),
                            visibility_method=vis, candidate_policy=config.candidate_policy, seed=seed)
        run = parallel_greedy_place(env, pc, fields=fields)
        return run, curve_of(env, interleaved(run), config.k, fields)
    gc = GreedyConfig(k=config.k, epsilon=config.epsilon, tau=tau, max_sensors=config.max_sensors,
                      visibility_method=vis, candidate_policy=config.candidate_policy, seed=seed)
    run = random_baseline(env, gc, fields) if method == "random" else greedy_place(env, gc, fields)
    return run, [[0.0] * config.k] + [t.coverage for t in run.trace]


def _env_cells(config: ExperimentConfig, env_index: int):
    """All method cells of one environment (they share candidate fields)."""
    rows, curves = [], []
    fields_by_method = {}
    try:
        env = campaign_env(config, env_index)
    except KCoverError as exc:
        env, env_error = None, f"error: {type(exc).__name__}: {exc}"
    else:
        env_error = None
    for method in config.methods:
        seed = derive_seed(config.master_seed, env_index, method)
        t0 = time.perf_counter()
        status = "ok"
        curve = None
        if env_error:
            status = env_error
        else:
            try:
                _, curve = run_method(env, method, config, seed, fields_by_method)
            except KCoverError as exc:
                status = f"error: {type(exc).__name__}: {exc}"
        wall = (time.perf_counter() - t0) * 1000.0
        for thr in config.thresholds:
            n = sensors_to_threshold(curve, config.k, thr) if curve else None
            rows.append({
                "env_id": env_index,
                "method": method,
                "seed": seed,
                "threshold": thr,
                "sensors_needed": n,
                "censored": n is None and status == "ok",
                "wall_time_ms": round(wall, 3) if config.record_timing else None,
                "status": status,
            })
        for step, fr in enumerate(curve or []):
            curves.append({"env_id": env_index, "method": method, "step": step, "fracs": fr})
    return rows, curves


def _worker_init():
    try:
        import numba

        numba.set_num_threads(1)
    except Exception:  # pragma: no cover - thread control is best effort
        pass


def run_experiment(config: ExperimentConfig, jobs: int = 1):
    """Run a campaign; returns ``(rows, curves)`` sorted by env, method, threshold/step."""
    idx = list(range(config.n_envs))
    if jobs > 1:
        # spawn: forking after the OpenMP runtime has started is unsafe
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx, initializer=_worker_init) as pool:
            parts = list(pool.map(_env_cells, [config] * len(idx), idx))
    else:
        parts = [_env_cells(config, i) for i in idx]
    rows = [r for p in parts for r in p[0]]
    curves = [c for p in parts for c in p[1]]
    order = {m: n for n, m in enumerate(METHODS)}
    rows.sort(key=lambda r: (r["env_id"], order[r["method"]], r["threshold"]))
    curves.sort(key=lambda c: (c["env_id"], order[c["method"]], c["step"]))
    return rows, curves


def censored_value(row, max_sensors: int):
    return max_sensors + 1 if row["censored"] or row["sensors_needed"] is None else row["sensors_needed"]


def summarize(rows, max_sensors: int) -> dict:
    """Median and quartiles of sensors-to-threshold per (method, threshold); censored count as cap+1."""
    groups = {}
    for r in rows:
        groups.setdefault((r["method"], r["threshold"]), []).append(censored_value(r, max_sensors))
    out = {}
    for (m, t), vals in sorted(groups.items()):
        q = statistics.quantiles(vals, n=4, method="inclusive") if len(vals) > 1 else [vals[0]] * 3
        out.setdefault(m, {})[t] = {"median": statistics.median(vals), "q25": q[0], "q75": q[2],
                                    "censored": sum(v > max_sensors for v in vals), "n": len(vals)}
    return out


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def results_csv(rows, max_sensors: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in rows:
        needed = f">{max_sensors}" if r["censored"] else _fmt(r["sensors_needed"])
        w.writerow([_fmt(r["env_id"]), r["method"], _fmt(r["seed"]), _fmt(r["threshold"]), needed,
                    _fmt(r["censored"]), _fmt(r["wall_time_ms"]), r["status"]])
    return buf.getvalue()


def curves_csv(curves, k: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["env_id", "method", "step"] + [f"frac_order_{i}" for i in range(1, k + 1)])
    for c in curves:
        w.writerow([c["env_id"], c["method"], c["step"]] + [_fmt(float(x)) for x in c["fracs"]])
    return buf.getvalue()


def write_campaign(rows, curves, config: ExperimentConfig, out_dir) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    paths = {"results": os.path.join(out_dir, "results.csv"), "curves": os.path.join(out_dir, "curves.csv")}
    with open(paths["results"], "w") as fh:
        fh.write(results_csv(rows, config.max_sensors))
    with open(paths["curves"], "w") as fh:
        fh.write(curves_csv(curves, config.k))
    return paths


def default_jobs() -> int:
    return os.cpu_count() or 1
