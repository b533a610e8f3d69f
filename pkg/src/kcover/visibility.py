"""Per-sensor occlusion surfaces on the heightmap grid.

For a sensor ``x`` the occlusion field ``g`` holds, per column, the lowest
height at which a point in that column is seen by ``x``. A point ``(c, z)``
is visible iff ``g[c] <= z`` (and ``h[c] <= z``). Columns never visible below
the ceiling store exactly ``z_max``.

Two routes compute ``g``: ``occlusion_field_exact`` (DDA, the reference,
O(M^3) per sensor) and ``occlusion_field_sweep`` (O(M^2) perimeter ray
casting, the default for experiments). A third, ``ring``, is the classic
ring-interpolation sweep; it smears shadow edges and is only kept for
comparison.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .env import Environment
from .errors import OutOfBounds, ValidationError

EXACT = "exact"
SWEEP = "sweep"
RING = "ring"
METHODS = (EXACT, SWEEP, RING)


def method_code(method: str) -> int:
    if method == EXACT:
        return _kernels.METHOD_EXACT
    if method == SWEEP:
        return _kernels.METHOD_SWEEP
    if method == RING:
        return _kernels.METHOD_RING
    raise ValidationError(f"unknown visibility method {method!r}; expected one of {METHODS}")


@dataclass(frozen=True)
class SensorPose:
    cell: tuple[int, int]  # (i, j) = (x index, y index)
    z_s: float

    def to_list(self):
        return [int(self.cell[0]), int(self.cell[1]), float(self.z_s)]


def make_sensor(env: Environment, cell, mount_offset: float = 0.0) -> SensorPose:
    i, j = int(cell[0]), int(cell[1])
    if not (0 <= i < env.spec.nx and 0 <= j < env.spec.ny):
        raise OutOfBounds(f"sensor cell {(i, j)} outside {env.spec.nx}x{env.spec.ny} grid")
    z_s = float(env.h[j, i]) + mount_offset
    if z_s > env.z_max:
        raise ValidationError(f"sensor height {z_s} exceeds z_max {env.z_max}")
    return SensorPose((i, j), z_s)


@dataclass(frozen=True, eq=False)
class OcclusionField:
    sensor: SensorPose
    g: np.ndarray
    h: np.ndarray  # heightmap the field was computed on (shared, read-only)


def _check_sensor(env: Environment, sensor: SensorPose):
    i, j = sensor.cell
    if not (0 <= i < env.spec.nx and 0 <= j < env.spec.ny):
        raise OutOfBounds(f"sensor cell {(i, j)} outside {env.spec.nx}x{env.spec.ny} grid")
    if sensor.z_s > env.z_max:
        raise ValidationError(f"sensor height {sensor.z_s} exceeds z_max {env.z_max}")
    return int(i), int(j)


def _field(env, sensor, code):
    i, j = _check_sensor(env, sensor)
    out = np.empty(env.shape)
    _kernels.field_into(code, env.h, i, j, float(sensor.z_s), float(env.z_max), out)
    out.setflags(write=False)
    return OcclusionField(sensor, out, env.h)


def occlusion_field_exact(env: Environment, sensor: SensorPose) -> OcclusionField:
    return _field(env, sensor, _kernels.METHOD_EXACT)


def occlusion_field_sweep(env: Environment, sensor: SensorPose) -> OcclusionField:
    return _field(env, sensor, _kernels.METHOD_SWEEP)


def occlusion_field(env: Environment, sensor: SensorPose, method: str = SWEEP) -> OcclusionField:
    return _field(env, sensor, method_code(method))


def visibility_at_height(field: OcclusionField, z: float) -> np.ndarray:
    """Columns whose point at height ``z`` is free and seen by the sensor.

    At ``z == z_max`` the comparison still uses ``<=``, so columns carrying the
    ``z_max`` sentinel count as visible there; this boundary slice has zero
    volume and does not affect any integral.
    """
    return (field.g <= z) & (field.h <= z)
