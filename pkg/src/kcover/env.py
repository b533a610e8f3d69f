"""2.5-D building environments on a uniform grid.

An environment is a heightmap ``h`` of shape ``(ny, nx)`` (row = y index,
column = x index) plus an evaluation ceiling ``z_max``. Free space is the
region above the surface and below the ceiling.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import HeightOutOfRange, LengthMismatch, NoFreeCells, ParseError, ValidationError

HEADER_TAG = "KCOVER-ENV"
HEADER_VERSION = "v1"


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    cell_size: float = 1.0
    z_max: float = 1.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny or self.nx < 2 or self.ny < 2:
            raise ValidationError(f"grid must be at least 2x2 integer cells, got {self.nx}x{self.ny}")
        if not (self.cell_size > 0 and math.isfinite(self.cell_size)):
            raise ValidationError(f"cell_size must be positive, got {self.cell_size}")
        if not (self.z_max > 0 and math.isfinite(self.z_max)):
            raise ValidationError(f"z_max must be positive, got {self.z_max}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def cell_area(self) -> float:
        return self.cell_size * self.cell_size


@dataclass(frozen=True, eq=False)
class Environment:
    spec: GridSpec
    h: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.spec.shape

    @property
    def z_max(self) -> float:
        return self.spec.z_max

    def free_volume(self) -> float:
        return math.fsum((self.spec.z_max - self.h).ravel()) * self.spec.cell_area

    def same_grid(self, other: "Environment") -> bool:
        return self.spec == other.spec

    def __eq__(self, other):
        if not isinstance(other, Environment):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.h, other.h)

    __hash__ = None


def make_environment(spec: GridSpec, h_obs) -> Environment:
    """Validate a heightmap against ``spec`` and freeze it.

    ``h_obs`` may be flat (row-major, length ``nx*ny``) or shaped ``(ny, nx)``.
    Out-of-range heights are rejected, never clamped.
    """
    arr = np.asarray(h_obs, dtype=np.float64)
    if arr.size != spec.nx * spec.ny:
        raise LengthMismatch(f"expected {spec.nx * spec.ny} heights, got {arr.size}")
    if arr.ndim == 2 and arr.shape != spec.shape:
        raise LengthMismatch(f"expected shape {spec.shape}, got {arr.shape}")
    arr = np.array(arr.reshape(spec.shape), dtype=np.float64, copy=True)
    bad = ~((arr >= 0.0) & (arr <= spec.z_max))
    if bad.any():
        j, i = np.argwhere(bad)[0]
        raise HeightOutOfRange((int(i), int(j)), float(arr[j, i]))
    arr.setflags(write=False)
    return Environment(spec, arr)


def flat_environment(spec: GridSpec) -> Environment:
    return make_environment(spec, np.zeros(spec.shape))


def street_mask(env: Environment) -> np.ndarray:
    """Cells at ground level, where street sensors may stand."""
    return env.h == 0.0


def free_cell_mask(env: Environment) -> np.ndarray:
    """Cells whose column has any free space below the ceiling."""
    return env.h < env.z_max


@dataclass(frozen=True)
class CityGenParams:
    n_rect_range: tuple[int, int] = (8, 16)
    rect_w_range: tuple[int, int] = (3, 10)
    rect_h_range: tuple[int, int] = (3, 10)
    height_range: tuple[float, float] = (0.0, 1.0)

    @classmethod
    def urban(cls, spec: GridSpec) -> "CityGenParams":
        """Dense preset with roughly one third of the ground built over.

        Rectangle counts scale with grid area: 30 to 50 rectangles of 3 to 10
        cells per side on a 64x64 grid.
        """
        scale = spec.nx * spec.ny / 4096.0
        side = (3, max(3, min(10, spec.nx, spec.ny)))
        return cls((max(1, round(30 * scale)), max(1, round(50 * scale))), side, side)

    def validate(self, spec: GridSpec) -> None:
        for name in ("n_rect_range", "rect_w_range", "rect_h_range"):
            lo, hi = getattr(self, name)
            if int(lo) != lo or int(hi) != hi or lo > hi:
                raise ValidationError(f"{name} must be a non-empty integer interval, got {(lo, hi)}")
        if self.n_rect_range[0] < 0:
            raise ValidationError("rectangle count cannot be negative")
        if self.rect_w_range[0] < 1 or self.rect_h_range[0] < 1:
            raise ValidationError("rectangles must be at least one cell wide")
        if self.rect_w_range[1] > spec.nx or self.rect_h_range[1] > spec.ny:
            raise ValidationError("rectangle sizes must fit in the grid")
        lo, hi = self.height_range
        if not (0.0 <= lo < hi <= spec.z_max):
            raise ValidationError(f"height_range must satisfy 0 <= lo < hi <= z_max, got {(lo, hi)}")

    @classmethod
    def from_dict(cls, d: dict) -> "CityGenParams":
        return cls(**{k: tuple(v) for k, v in d.items()})

    def to_dict(self) -> dict:
        return {
            "n_rect_range": list(self.n_rect_range),
            "rect_w_range": list(self.rect_w_range),
            "rect_h_range": list(self.rect_h_range),
            "height_range": list(self.height_range),
        }


def city_occupancy(spec: GridSpec, params: CityGenParams, seed: int):
    """Rasterize the random rectangles and label buildings.

    Returns ``(occupancy, labels, heights)`` where ``labels`` numbers the
    4-connected building components from 1 and ``heights[label - 1]`` is the
    height assigned to that component. Heights are rounded to float32 so that
    exported float32 planes reproduce them exactly.
    """
    params.validate(spec)
    rng = np.random.default_rng(seed)
    occ = np.zeros(spec.shape, dtype=bool)
    n_rect = int(rng.integers(params.n_rect_range[0], params.n_rect_range[1] + 1))
    for _ in range(n_rect):
        w = int(rng.integers(params.rect_w_range[0], params.rect_w_range[1] + 1))
        hgt = int(rng.integers(params.rect_h_range[0], params.rect_h_range[1] + 1))
        x0 = int(rng.integers(0, spec.nx - w + 1))
        y0 = int(rng.integers(0, spec.ny - hgt + 1))
        occ[y0:y0 + hgt, x0:x0 + w] = True
    # default structuring element is the 4-neighbourhood
    labels, n_comp = ndimage.label(occ)
    lo, hi = params.height_range
    heights = []
    for _ in range(n_comp):
        # (lo, hi]: a building is never zero height
        z = float(np.float32(hi - rng.random() * (hi - lo)))
        if z > hi:
            z = float(np.nextafter(np.float32(hi), np.float32(lo)))
        if z <= lo:
            z = float(np.nextafter(np.float32(lo), np.float32(hi)))
        heights.append(z)
    return occ, labels, np.asarray(heights, dtype=np.float64)


def generate_random_city(spec: GridSpec, params: CityGenParams, seed: int) -> Environment:
    occ, labels, heights = city_occupancy(spec, params, seed)
    if occ.all():
        raise NoFreeCells("every cell is covered by a building")
    h = np.zeros(spec.shape)
    if heights.size:
        h[occ] = heights[labels[occ] - 1]
    return make_environment(spec, h)


# ---------------------------------------------------------------- file I/O


def save_environment(env: Environment, path) -> None:
    s = env.spec
    lines = [f"{HEADER_TAG} {HEADER_VERSION} {s.nx} {s.ny} {s.cell_size!r} {s.z_max!r}"]
    for row in env.h:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


_TOKEN = re.compile(r"\S+")


def parse_environment(text: str) -> Environment:
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty file", line=1, offset=0)
    head = lines[0].split()
    if len(head) != 6 or head[0] != HEADER_TAG or head[1] != HEADER_VERSION:
        raise ParseError(f"expected header '{HEADER_TAG} {HEADER_VERSION} nx ny cell_size z_max'", line=1, offset=0)
    try:
        nx, ny = int(head[2]), int(head[3])
        cell_size, z_max = float(head[4]), float(head[5])
    except ValueError as exc:
        raise ParseError(f"bad header field: {exc}", line=1, offset=0) from None
    spec = GridSpec(nx, ny, cell_size, z_max)
    values = []
    for lineno, line in enumerate(lines[1:], start=2):
        for m in _TOKEN.finditer(line):
            try:
                values.append(float(m.group()))
            except ValueError:
                raise ParseError(f"not a number: {m.group()!r}", line=lineno, offset=m.start()) from None
    return make_environment(spec, np.asarray(values))


def load_environment(path) -> Environment:
    return parse_environment(Path(path).read_text())


def load_pgm(path, cell_size: float = 1.0, z_max: float = 1.0) -> Environment:
    """Import an 8/16-bit grayscale PGM (P2 or P5); pixel values map linearly onto [0, z_max]."""
    data = Path(path).read_bytes()
    pos = 0
    tokens = []

    def next_token():
        nonlocal pos
        while pos < len(data):
            c = data[pos:pos + 1]
            if c == b"#":
                while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ParseError("truncated PGM header", offset=start)
        return data[start:pos]

    magic = next_token()
    if magic not in (b"P2", b"P5"):
        raise ParseError("not a PGM file (expected P2 or P5)", line=1, offset=0)
    try:
        for _ in range(3):
            tokens.append(int(next_token()))
    except ValueError:
        raise ParseError("bad PGM header", offset=pos) from None
    width, height, maxval = tokens
    if not (0 < maxval < 65536):
        raise ParseError(f"unsupported PGM maxval {maxval}", offset=pos)
    spec = GridSpec(width, height, cell_size, z_max)
    if magic == b"P5":
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        n = width * height
        raw = data[pos:pos + n * dtype.itemsize]
        if len(raw) != n * dtype.itemsize:
            raise LengthMismatch(f"expected {n} pixels in PGM body")
        pix = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    else:
        try:
            pix = np.array([int(t) for t in data[pos:].split()], dtype=np.float64)
        except ValueError:
            raise ParseError("bad PGM pixel value", offset=pos) from None
    if pix.size != width * height:
        raise LengthMismatch(f"expected {width * height} pixels, got {pix.size}")
    if (pix > maxval).any():
        raise ParseError("pixel value exceeds maxval")
    h = np.minimum(pix / maxval * z_max, z_max)
    return make_environment(spec, h)
