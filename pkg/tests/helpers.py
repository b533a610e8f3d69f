"""Shared builders and independent reference checks for the test suite."""
import numpy as np

from kcover import CityGenParams, GridSpec, generate_random_city, make_environment


def small_city(n=16, seed=0, n_rect=(3, 6), size=(2, 5), z_max=1.0):
    spec = GridSpec(n, n, 1.0, z_max)
    params = CityGenParams(n_rect_range=n_rect, rect_w_range=size, rect_h_range=size,
                           height_range=(0.0, z_max))
    return generate_random_city(spec, params, seed)


def random_heights(n=12, seed=0, frac=0.3, z_max=1.0):
    """Independent per-cell heights; roughly ``frac`` of cells are raised."""
    rng = np.random.default_rng(seed)
    h = np.where(rng.random((n, n)) < frac, rng.random((n, n)) * z_max, 0.0)
    return make_environment(GridSpec(n, n, 1.0, z_max), h)


def segment_blocked(env, sensor, target, z, w=5e-5, n_samples=400_000):
    """Dense 3-D line-of-sight test against thin walls.

    Every cell's obstacle is modelled as a "+" of two vertical walls through
    its centre (x = i over |y - j| <= 1/2 and y = j over |x - i| <= 1/2),
    thickened to half-width ``w``. The segment from the sensor at ``z_s`` to
    the target centre at height ``z`` is sampled uniformly; it is blocked if
    any sample lies inside a wall strictly below the wall top. Walls on the
    grid lines through the sensor or the target centre are ignored, which is
    where the sensor sees its own column and a target sees along its own row.
    """
    h = env.h
    ny, nx = h.shape
    si, sj = sensor.cell
    ti, tj = target
    t = (np.arange(n_samples) + 0.5) / n_samples
    x = si + t * (ti - si)
    y = sj + t * (tj - sj)
    zt = sensor.z_s + t * (z - sensor.z_s)

    def arm(u, v, skip, heights_of):
        ru = np.rint(u)
        near = (np.abs(u - ru) <= w) & (ru != skip[0]) & (ru != skip[1])
        if not near.any():
            return False
        ru = ru[near].astype(int)
        vv = v[near]
        zz = zt[near]
        lo = np.clip(np.ceil(vv - 0.5).astype(int), 0, None)
        hi = np.floor(vv + 0.5).astype(int)
        return bool(np.any(zz < heights_of(ru, lo)) or np.any(zz < heights_of(ru, hi)))

    vertical = arm(x, y, (si, ti), lambda col, row: h[np.clip(row, 0, ny - 1), col])
    if vertical:
        return True
    return arm(y, x, (sj, tj), lambda row, col: h[row, np.clip(col, 0, nx - 1)])
