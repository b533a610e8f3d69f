"""Surrogate-training dataset export and its singular-value geometry.

Each greedy step becomes one record: input planes ``(h, Psi_1..Psi_k)`` and
label planes ``(G, V_1..V_k)``, stored as little-endian float32, row-major,
one file per record. Labels are computed from the float32-rounded inputs, so
they can be regenerated from a stored record bit for bit.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields as dc_fields

import numpy as np

from .coverage import SENTINEL, CandidateFields, PsiStack, Weights, gain_field
from .env import Environment, GridSpec, make_environment
from .errors import GridMismatch, TooFewRecords, ValidationError
from .greedy import CANDIDATE_POLICIES, _require_free, candidate_mask, greedy_steps
from .visibility import METHODS

FORMAT_VERSION = 1
DTYPE = np.dtype("<f4")


@dataclass
class DatasetConfig:
    k: int = 3
    epsilon: float = 0.01
    tau: float = 0.99
    max_sensors: int = 200
    visibility_method: str = "sweep"
    candidate_policy: str = "streets"
    mount_offset: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if not 0 <= self.epsilon < 1:
            raise ValidationError(f"epsilon must be in [0, 1), got {self.epsilon}")
        if not 0 < self.tau < 1:
            raise ValidationError(f"tau must be in (0, 1), got {self.tau}")
        if self.visibility_method not in METHODS:
            raise ValidationError(f"unknown visibility method {self.visibility_method!r}")
        if self.candidate_policy not in CANDIDATE_POLICIES:
            raise ValidationError(f"unknown candidate policy {self.candidate_policy!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        unknown = set(d) - {f.name for f in dc_fields(cls)}
        if unknown:
            raise ValidationError(f"unknown dataset config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class DatasetManifest:
    count: int
    shape: tuple[int, int]
    k: int
    weights: list
    cell_size: float
    z_max: float
    records: list  # dicts: file, env_index, step, epsilon, seed
    config: dict
    version: int = FORMAT_VERSION
    root: str = ""

    @property
    def n_planes(self) -> int:
        return 2 * (1 + self.k)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("root")
        d["shape"] = list(self.shape)
        return d

    def save(self, out_dir) -> str:
        path = os.path.join(out_dir, "manifest.json")
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
        return path

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        if os.path.isdir(path):
            path = os.path.join(path, "manifest.json")
        with open(path) as fh:
            d = json.load(fh)
        if d.get("version") != FORMAT_VERSION:
            raise ValidationError(f"unsupported dataset version {d.get('version')!r}")
        d["shape"] = tuple(d["shape"])
        return cls(root=os.path.dirname(os.path.abspath(path)), **d)


def _round32(a: np.ndarray) -> np.ndarray:
    return a.astype(DTYPE).astype(np.float64)


def record_labels(env: Environment, psi: np.ndarray, weights: Weights, fields: CandidateFields) -> np.ndarray:
    """Label planes ``(G, V_1..V_k)`` for a stack, sentinel off-candidate."""
    stack = PsiStack(psi, env.h, env.z_max)
    gf = gain_field(env, stack, weights, None, fields=fields)
    return np.concatenate([gf.G[None], gf.V])


def export_training_dataset(envs, config: DatasetConfig, out_dir) -> DatasetManifest:
    """Run greedy on every environment and write one record per step."""
    envs = list(envs)
    if not envs:
        raise ValidationError("no environments to export")
    spec = envs[0].spec
    for e in envs:
        if e.spec != spec:
            raise GridMismatch("all dataset environments must share one grid")
        if not np.array_equal(_round32(e.h), e.h):
            raise ValidationError("heights must be exactly representable as float32")
    os.makedirs(out_dir, exist_ok=True)
    weights = Weights.halving(config.k)
    records = []
    for env_index, env in enumerate(envs):
        _require_free(env)
        seed = int(np.random.SeedSequence([config.seed, env_index]).generate_state(1, np.uint64)[0] >> 1)
        fields = CandidateFields(env, candidate_mask(env, config.candidate_policy),
                                 config.visibility_method, config.mount_offset)

        def write(stack, _gf, env=env, env_index=env_index, fields=fields, seed=seed):
            psi = _round32(stack.psi)
            labels = record_labels(env, psi, weights, fields)
            planes = np.concatenate([env.h[None], psi, labels]).astype(DTYPE)
            name = f"record_{env_index:04d}_{stack.n_sensors:04d}.f32"
            with open(os.path.join(out_dir, name), "wb") as fh:
                fh.write(planes.tobytes(order="C"))
            records.append({"file": name, "env_index": env_index, "step": stack.n_sensors,
                            "epsilon": config.epsilon, "seed": seed})

        greedy_steps(env, PsiStack.empty(env, config.k), weights, fields, np.random.default_rng(seed),
                     epsilon=config.epsilon, tau=config.tau, max_sensors=config.max_sensors, on_step=write)
    manifest = DatasetManifest(len(records), spec.shape, config.k, list(weights.w), spec.cell_size,
                               spec.z_max, records, asdict(config), root=os.path.abspath(out_dir))
    manifest.save(out_dir)
    return manifest


def load_record(manifest: DatasetManifest, index: int):
    """``(inputs, labels)`` of one record as float64 arrays of shape (1 + k, ny, nx)."""
    rec = manifest.records[index]
    path = os.path.join(manifest.root, rec["file"])
    ny, nx = manifest.shape
    raw = np.fromfile(path, dtype=DTYPE)
    if raw.size != manifest.n_planes * ny * nx:
        raise ValidationError(f"{rec['file']}: expected {manifest.n_planes * ny * nx} values, got {raw.size}")
    planes = raw.reshape(manifest.n_planes, ny, nx).astype(np.float64)
    return planes[:1 + manifest.k], planes[1 + manifest.k:]


def regenerate_labels(manifest: DatasetManifest, index: int) -> np.ndarray:
    """Recompute a record's label planes from its stored inputs (float32, like the file)."""
    inputs, _ = load_record(manifest, index)
    ny, nx = manifest.shape
    env = make_environment(GridSpec(nx, ny, manifest.cell_size, manifest.z_max), inputs[0])
    cfg = manifest.config
    fields = CandidateFields(env, candidate_mask(env, cfg["candidate_policy"]),
                             cfg["visibility_method"], cfg["mount_offset"], max_bytes=0)
    labels = record_labels(env, inputs[1:], Weights(tuple(manifest.weights)), fields)
    return labels.astype(DTYPE)


def dataset_spectrum(manifest: DatasetManifest, max_records: int | None = None) -> np.ndarray:
    """Singular values of the centred record matrix (input planes only), non-increasing.

    Values below the numerical-rank tolerance ``max(N, D) * eps * ||X||_F``
    are reported as exactly zero.
    """
    n = manifest.count if max_records is None else min(manifest.count, max_records)
    if n < 2:
        raise TooFewRecords(f"need at least 2 records, have {n}")
    X = np.stack([load_record(manifest, i)[0].ravel() for i in range(n)])
    return centered_singular_values(X)


def centered_singular_values(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if n < 2:
        raise TooFewRecords(f"need at least 2 rows, have {n}")
    Xc = X - X.mean(axis=0)
    if n < d:
        lam = np.linalg.eigvalsh(Xc @ Xc.T)[::-1]
        sig = np.sqrt(np.clip(lam, 0.0, None))
    else:
        sig = np.linalg.svd(Xc, compute_uv=False)
    tol = max(n, d) * np.finfo(np.float64).eps * np.linalg.norm(X)
    sig[sig <= tol] = 0.0
    return sig


__all__ = [
    "DatasetConfig",
    "DatasetManifest",
    "SENTINEL",
    "centered_singular_values",
    "dataset_spectrum",
    "export_training_dataset",
    "load_record",
    "regenerate_labels",
]
