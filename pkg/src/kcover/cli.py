"""Command-line entry point: ``kcover <subcommand> ...``.

Exit codes: 0 success, 1 validation or usage error, 2 I/O error. Outputs are
written only once a command has fully succeeded.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from .coverage import PsiStack, Weights, gain_field, psi_insert
from .dataset import DatasetConfig, DatasetManifest, dataset_spectrum, export_training_dataset
from .env import CityGenParams, GridSpec, generate_random_city, load_environment, load_pgm, save_environment
from .errors import KCoverError, ValidationError
from .greedy import CANDIDATE_POLICIES, GreedyConfig, PlacementRun, candidate_mask, greedy_place
from .harness import ExperimentConfig, derive_seed, random_baseline, run_experiment, summarize, write_campaign
from .oracle import verify_theorem_bound
from .parallel import ParallelConfig, parallel_greedy_place
from .visibility import METHODS, occlusion_field


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


# ------------------------------------------------------------------ helpers


def _read_json(path) -> dict:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(d, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    return d


def _build(cls, d: dict):
    try:
        return cls.from_dict(d)
    except TypeError as exc:
        raise ValidationError(f"bad {cls.__name__} value: {exc}") from None


def _write_text(path, text: str) -> None:
    """Write via a temporary file so a failed command leaves nothing behind."""
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".kcover-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _load_env(path):
    if str(path).lower().endswith(".pgm"):
        return load_pgm(path)
    return load_environment(path)


def _overlay(base: dict, **flags) -> dict:
    out = dict(base)
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


# ------------------------------------------------------------------ commands


def cmd_gen_env(a) -> int:
    params = dict(CityGenParams().to_dict())
    if a.params:
        params.update(_read_json(a.params))
    spec = GridSpec(a.nx, a.ny, a.cell_size, a.z_max)
    if a.from_pgm:
        env = load_pgm(a.from_pgm, a.cell_size, a.z_max)
    else:
        env = generate_random_city(spec, _build(CityGenParams, params), a.seed)
    if a.out in (None, "-"):
        d = tempfile.mkdtemp()
        p = os.path.join(d, "env.txt")
        save_environment(env, p)
        with open(p) as fh:
            sys.stdout.write(fh.read())
        os.unlink(p)
        os.rmdir(d)
    else:
        save_environment(env, a.out)
    return 0


def _run_config(a) -> tuple[str, dict]:
    base = _read_json(a.config) if a.config else {}
    method = a.method or base.pop("method", "greedy")
    base.pop("method", None)
    d = _overlay(base, k=a.k, epsilon=a.epsilon, tau=a.tau, visibility_method=a.visibility,
                 candidate_policy=a.candidates, seed=a.seed)
    if method == "parallel":
        if a.max_sensors is not None:
            d["max_sensors"] = a.max_sensors
        if "max_sensors_per_run" not in base and "max_sensors" in d:
            d["max_sensors_per_run"] = max(1, d["max_sensors"] // d.get("k", 3))
    elif a.max_sensors is not None:
        d["max_sensors"] = a.max_sensors
    return method, d


def cmd_run(a) -> int:
    method, d = _run_config(a)
    env = _load_env(a.env)
    if method == "greedy":
        run = greedy_place(env, _build(GreedyConfig, d))
    elif method == "random":
        run = random_baseline(env, _build(GreedyConfig, d))
    elif method == "parallel":
        run = parallel_greedy_place(env, _build(ParallelConfig, d), jobs=a.jobs or 1)
    else:
        raise ValidationError(f"unknown method {method!r}")
    _write_text(a.out, run.to_json() + "\n")
    return 0


def cmd_gain_field(a) -> int:
    env = _load_env(a.env)
    run = PlacementRun.from_dict(_read_json(a.run))
    cfg = run.config
    k = a.k or cfg.get("k", 3)
    if k == cfg.get("k") and cfg.get("weights") and len(cfg["weights"]) == k:
        weights = Weights(tuple(cfg["weights"]))
    else:
        weights = Weights.halving(k)
    method = a.visibility or cfg.get("visibility_method", "sweep")
    policy = a.candidates or cfg.get("candidate_policy", "streets")
    n = len(run.sensors) if a.prefix is None else a.prefix
    if not 0 <= n <= len(run.sensors):
        raise ValidationError(f"prefix {n} outside 0..{len(run.sensors)}")
    stack = PsiStack.empty(env, k)
    for s in run.sensors[:n]:
        stack = psi_insert(stack, occlusion_field(env, s, method))
    gf = gain_field(env, stack, weights, candidate_mask(env, policy), method)
    planes = np.concatenate([gf.G[None], gf.V]).astype("<f4")
    meta = {
        "shape": list(env.shape),
        "planes": ["G"] + [f"V{i}" for i in range(1, k + 1)],
        "dtype": "float32-le",
        "sentinel": -1.0,
        "k": k,
        "weights": list(weights.w),
        "visibility_method": method,
        "candidate_policy": policy,
        "prefix": n,
        "max_gain": gf.max_gain(),
        "argmax": list(gf.argmax()),
    }
    d = os.path.dirname(os.path.abspath(a.out_prefix))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".kcover-")
    with os.fdopen(fd, "wb") as fh:
        fh.write(planes.tobytes())
    os.replace(tmp, a.out_prefix + ".f32")
    _write_text(a.out_prefix + ".json", _dump(meta))
    return 0


def cmd_verify(a) -> int:
    env = _load_env(a.env)
    cfg = GreedyConfig(k=a.k, epsilon=a.epsilon, tau=a.tau, max_sensors=a.max_sensors, seed=a.seed,
                       candidate_policy=a.candidates, visibility_method="exact")
    report = verify_theorem_bound(env, cfg, a.l_max, strict=False)
    _write_text(a.out, _dump(report))
    return 0 if report["all_pass"] else 1


def cmd_bench(a) -> int:
    base = _read_json(a.config) if a.config else {}
    if a.n_envs is not None:
        base["n_envs"] = a.n_envs
    if a.seed is not None:
        base["master_seed"] = a.seed
    if a.timing:
        base["record_timing"] = True
    cfg = _build(ExperimentConfig, base)
    rows, curves = run_experiment(cfg, jobs=a.jobs)
    write_campaign(rows, curves, cfg, a.out_dir)
    summary = summarize([r for r in rows if r["status"] == "ok"], cfg.max_sensors)
    _write_text(os.path.join(a.out_dir, "summary.json"),
                _dump({"config": cfg.to_dict(), "summary": {m: {repr(t): v for t, v in s.items()}
                                                             for m, s in summary.items()}}))
    return 0


def cmd_export_dataset(a) -> int:
    base = _read_json(a.config) if a.config else {}
    d = _overlay(base, k=a.k, epsilon=a.epsilon, tau=a.tau, visibility_method=a.visibility, seed=a.seed)
    cfg = _build(DatasetConfig, d)
    if a.env:
        envs = [_load_env(p) for p in a.env]
    else:
        spec = GridSpec(a.nx, a.ny)
        params = CityGenParams()
        envs = [generate_random_city(spec, params, derive_seed(cfg.seed, i, "env")) for i in range(a.n_envs)]
    if os.path.exists(a.out_dir) and os.listdir(a.out_dir):
        raise ValidationError(f"output directory {a.out_dir} is not empty")
    m = export_training_dataset(envs, cfg, a.out_dir)
    sys.stderr.write(f"wrote {m.count} records to {a.out_dir}\n")
    return 0


def cmd_spectrum(a) -> int:
    m = DatasetManifest.load(a.dataset)
    sig = dataset_spectrum(m, a.max_records)
    _write_text(a.out, _dump({"records": int(min(m.count, a.max_records or m.count)),
                              "singular_values": [float(s) for s in sig]}))
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> Parser:
    p = Parser(prog="kcover", description="k-coverage sensor placement on 2.5-D grids")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    g = sub.add_parser("gen-env", help="generate a synthetic city (or convert a PGM)")
    g.add_argument("--nx", type=int, default=64)
    g.add_argument("--ny", type=int, default=64)
    g.add_argument("--cell-size", type=float, default=1.0)
    g.add_argument("--z-max", type=float, default=1.0)
    g.add_argument("--params", help="JSON file with city generator parameters")
    g.add_argument("--from-pgm", help="import a grayscale PGM heightmap instead")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", "-o")
    g.set_defaults(func=cmd_gen_env)

    r = sub.add_parser("run", help="place sensors on an environment")
    r.add_argument("env")
    r.add_argument("--method", choices=["greedy", "parallel", "random"])
    r.add_argument("--k", type=int)
    r.add_argument("--epsilon", type=float)
    r.add_argument("--tau", type=float)
    r.add_argument("--max-sensors", type=int)
    r.add_argument("--visibility", choices=METHODS)
    r.add_argument("--candidates", choices=CANDIDATE_POLICIES)
    r.add_argument("--seed", type=int)
    r.add_argument("--config", help="JSON config; flags override its values")
    r.add_argument("--jobs", type=int, default=1, help="threads for the parallel method's runs")
    r.add_argument("--out", "-o")
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("gain-field", help="per-cell G and V planes for a run prefix")
    f.add_argument("env")
    f.add_argument("--run", required=True, help="run JSON produced by `run`")
    f.add_argument("--prefix", type=int, help="number of run sensors to place first (default all)")
    f.add_argument("--k", type=int)
    f.add_argument("--visibility", choices=METHODS)
    f.add_argument("--candidates", choices=CANDIDATE_POLICIES)
    f.add_argument("--out-prefix", required=True, help="writes <prefix>.f32 and <prefix>.json")
    f.set_defaults(func=cmd_gain_field)

    v = sub.add_parser("verify", help="check the greedy approximation bound against exhaustive optima")
    v.add_argument("env")
    v.add_argument("--k", type=int, default=2)
    v.add_argument("--epsilon", type=float, default=0.0)
    v.add_argument("--tau", type=float, default=0.9)
    v.add_argument("--max-sensors", type=int, default=6)
    v.add_argument("--l-max", type=int, default=3)
    v.add_argument("--candidates", choices=CANDIDATE_POLICIES, default="streets")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", "-o")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="run an experiment campaign")
    b.add_argument("config", nargs="?", help="ExperimentConfig JSON")
    b.add_argument("--out-dir", required=True)
    b.add_argument("--n-envs", type=int)
    b.add_argument("--seed", type=int, help="master seed")
    b.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    b.add_argument("--timing", action="store_true", help="record wall_time_ms (output no longer reproducible)")
    b.set_defaults(func=cmd_bench)

    e = sub.add_parser("export-dataset", help="write surrogate-training records")
    e.add_argument("env", nargs="*", help="environment files (default: generate cities)")
    e.add_argument("--out-dir", required=True)
    e.add_argument("--n-envs", type=int, default=1)
    e.add_argument("--nx", type=int, default=64)
    e.add_argument("--ny", type=int, default=64)
    e.add_argument("--k", type=int)
    e.add_argument("--epsilon", type=float)
    e.add_argument("--tau", type=float)
    e.add_argument("--visibility", choices=METHODS)
    e.add_argument("--seed", type=int)
    e.add_argument("--config", help="JSON dataset config; flags override")
    e.set_defaults(func=cmd_export_dataset)

    s = sub.add_parser("spectrum", help="singular values of a dataset's input planes")
    s.add_argument("dataset", help="dataset directory or manifest.json")
    s.add_argument("--max-records", type=int)
    s.add_argument("--out", "-o")
    s.set_defaults(func=cmd_spectrum)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        return a.func(a)
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return 1
    except KCoverError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"I/O error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
