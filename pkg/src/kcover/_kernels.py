"""Compiled inner loops: occlusion fields and per-candidate gains.

Arrays are indexed ``[j, i]`` (row = y, column = x). All kernels are pure
functions of their inputs; ``gain_field_kernel`` writes each candidate's
result to its own slot so the output does not depend on thread scheduling.
"""
import numpy as np
from numba import njit, prange

METHOD_EXACT = 0
METHOD_SWEEP = 1
METHOD_RING = 2


@njit(cache=True)
def _nearest(num, den):
    # round(num / den) for den > 0; returns (index, is_tie) where a tie means
    # num / den == index - 0.5 exactly
    t = 2 * num + den
    q = t // (2 * den)
    return q, (t - q * 2 * den) == 0


@njit(cache=True)
def _exact_slope(h, si, sj, zs, ti, tj):
    """Steepest occluder slope (h_c - zs) / d(p) over crossings strictly
    between the sensor and target centres; -inf when there are none."""
    di = ti - si
    dj = tj - sj
    adi = abs(di)
    adj = abs(dj)
    sgi = 1 if di > 0 else -1
    sgj = 1 if dj > 0 else -1
    best = -np.inf
    # distance from the sensor per unit step along each axis
    ca = np.hypot(1.0, adj / adi) if adi > 0 else 0.0
    cb = np.hypot(adi / adj, 1.0) if adj > 0 else 0.0
    # vertical lines x = si + a*sgi
    for a in range(1, adi):
        col = si + a * sgi
        q, tie = _nearest(a * dj, adi)
        hc = h[sj + q, col]
        if tie:
            hc2 = h[sj + q - 1, col]
            if hc2 > hc:
                hc = hc2
        s = (hc - zs) / (a * ca)
        if s > best:
            best = s
    # horizontal lines y = sj + b*sgj
    for b in range(1, adj):
        row = sj + b * sgj
        q, tie = _nearest(b * di, adj)
        hc = h[row, si + q]
        if tie:
            hc2 = h[row, si + q - 1]
            if hc2 > hc:
                hc = hc2
        s = (hc - zs) / (b * cb)
        if s > best:
            best = s
    return best


@njit(cache=True)
def _finish(h, si, sj, zs, z_max, slope, out):
    ny, nx = h.shape
    for tj in range(ny):
        for ti in range(nx):
            hv = h[tj, ti]
            s = slope[tj, ti]
            v = hv
            if s > -np.inf:
                w = zs + s * np.hypot(ti - si, tj - sj)
                if w > v:
                    v = w
            out[tj, ti] = v if v < z_max else z_max
    out[sj, si] = h[sj, si]


@njit(cache=True)
def exact_field_into(h, si, sj, zs, z_max, out):
    """Line-of-sight occlusion heights by DDA over cell-centre grid lines.

    The segment from the sensor's cell centre to each target cell centre is
    cut at every crossing with the lines x = i and y = j through cell centres.
    Each crossing p is charged the height h_c of the cell containing it (the
    higher of the two cells when p lies exactly on their shared edge) and
    forces g >= zs + (h_c - zs) * d(target) / d(p).
    """
    ny, nx = h.shape
    slope = np.empty((ny, nx))
    for tj in range(ny):
        for ti in range(nx):
            slope[tj, ti] = _exact_slope(h, si, sj, zs, ti, tj)
    _finish(h, si, sj, zs, z_max, slope, out)


@njit(cache=True)
def sweep_field_into(h, si, sj, zs, z_max, out, over=2):
    """O(nx*ny) approximation of the exact field by perimeter ray casting.

    Rays run from the sensor centre to points spaced ``1/over`` cells apart
    along the grid perimeter. Each ray walks its centre-line crossings in
    order, keeping the steepest occluder slope seen so far; a cell takes the
    slope recorded by the ray whose crossing passes nearest its centre.
    Crossings inside one cell only start occluding once the ray has left
    that cell, mirroring the exact route's exclusion of the target column.
    """
    ny, nx = h.shape
    slope = np.full((ny, nx), -np.inf)
    best_off = np.full((ny, nx), 2.0)
    npx = (nx - 1) * over + 1
    npy = (ny - 1) * over + 1
    nrays = 2 * npx + 2 * npy
    for r in range(nrays):
        if r < npx:
            px = r / over
            py = 0.0
        elif r < 2 * npx:
            px = (r - npx) / over
            py = ny - 1.0
        elif r < 2 * npx + npy:
            px = 0.0
            py = (r - 2 * npx) / over
        else:
            px = nx - 1.0
            py = (r - 2 * npx - npy) / over
        dx = px - si
        dy = py - sj
        adx = abs(dx)
        ady = abs(dy)
        if adx == 0.0 and ady == 0.0:
            continue
        sgx = 1 if dx > 0 else -1
        sgy = 1 if dy > 0 else -1
        na = int(adx)
        nb = int(ady)
        ry = ady / adx if adx > 0 else 0.0
        rx = adx / ady if ady > 0 else 0.0
        ca = np.hypot(1.0, ry)
        cb = np.hypot(rx, 1.0)
        a = 1
        b = 1
        smax = -np.inf
        pending = -np.inf
        cur = -1
        step = 0
        while a <= na or b <= nb:
            step += 1
            if a <= na and (b > nb or a * ady <= b * adx):
                node = b <= nb and a * ady == b * adx
                ci = si + a * sgx
                yo = a * ry
                dp = a * ca
                y = sj + sgy * yo
                cj = int(y + 0.5)  # y >= 0 inside the grid
                off = abs(y - cj)
                tie = off == 0.5
                if tie:
                    ci2 = ci
                    cj2 = cj - 1
                a += 1
                if node:
                    b += 1
            else:
                cj = sj + b * sgy
                xo = b * rx
                dp = b * cb
                x = si + sgx * xo
                ci = int(x + 0.5)
                off = abs(x - ci)
                tie = off == 0.5
                if tie:
                    ci2 = ci - 1
                    cj2 = cj
                b += 1
            cid = cj * nx + ci if not tie else -1 - step
            if cid != cur:
                if pending > smax:
                    smax = pending
                pending = -np.inf
                cur = cid
            hc = h[cj, ci]
            if off < best_off[cj, ci]:
                best_off[cj, ci] = off
                slope[cj, ci] = smax
            if tie:
                if h[cj2, ci2] > hc:
                    hc = h[cj2, ci2]
                if off < best_off[cj2, ci2]:
                    best_off[cj2, ci2] = off
                    slope[cj2, ci2] = smax
            s = (hc - zs) / dp
            if s > pending:
                pending = s
    for tj in range(max(0, sj - 1), min(ny, sj + 2)):
        for ti in range(max(0, si - 1), min(nx, si + 2)):
            slope[tj, ti] = -np.inf
            best_off[tj, ti] = 0.0
    for tj in range(ny):
        for ti in range(nx):
            if best_off[tj, ti] > 1.0:
                slope[tj, ti] = _exact_slope(h, si, sj, zs, ti, tj)
    _finish(h, si, sj, zs, z_max, slope, out)


@njit(cache=True)
def ring_field_into(h, si, sj, zs, z_max, out):
    """Ring-by-ring propagation with linear interpolation (diffusive).

    Kept for comparison: cells at Chebyshev ring r take the value linearly
    interpolated where their ray meets ring r-1, extrapolated by r/(r-1).
    Shadow edges smear outward ring after ring.
    """
    ny, nx = h.shape
    out[sj, si] = h[sj, si]
    rmax = max(si, nx - 1 - si, sj, ny - 1 - sj)
    for r in range(1, rmax + 1):
        ratio = r / (r - 1.0) if r > 1 else 0.0
        for tj in range(max(0, sj - r), min(ny - 1, sj + r) + 1):
            dj = tj - sj
            for ti in range(max(0, si - r), min(nx - 1, si + r) + 1):
                di = ti - si
                if max(abs(di), abs(dj)) != r:
                    continue
                hv = h[tj, ti]
                if r == 1:
                    out[tj, ti] = hv
                    continue
                if abs(di) == r:
                    col = si + (r - 1) * (1 if di > 0 else -1)
                    num = dj * (r - 1)
                    base = num // r
                    rem = num - base * r
                    lo = out[sj + base, col]
                    hi = out[sj + base + 1, col] if rem else lo
                else:
                    row = sj + (r - 1) * (1 if dj > 0 else -1)
                    num = di * (r - 1)
                    base = num // r
                    rem = num - base * r
                    lo = out[row, si + base]
                    hi = out[row, si + base + 1] if rem else lo
                f = rem / r
                v = zs + ((1.0 - f) * lo + f * hi - zs) * ratio
                out[tj, ti] = v if v > hv else hv
    for tj in range(ny):
        for ti in range(nx):
            if out[tj, ti] > z_max:
                out[tj, ti] = z_max


@njit(cache=True)
def field_into(method, h, si, sj, zs, z_max, out):
    if method == METHOD_EXACT:
        exact_field_into(h, si, sj, zs, z_max, out)
    elif method == METHOD_SWEEP:
        sweep_field_into(h, si, sj, zs, z_max, out, 2)
    else:
        ring_field_into(h, si, sj, zs, z_max, out)


@njit(cache=True)
def gain_kernel(g, psi, h, vout):
    """Per-order volume increase (before cell-area scaling) from inserting ``g``.

    ``vout[i]`` receives sum over columns of max(Psi_i, h) - max(Psi'_i, h),
    where Psi' is the stack with g inserted. Neumaier-compensated sums.
    """
    k, ny, nx = psi.shape
    for o in range(k):
        s = 0.0
        c = 0.0
        for j in range(ny):
            for i in range(nx):
                gv = g[j, i]
                p = psi[o, j, i]
                if gv >= p:
                    continue
                prev = psi[o - 1, j, i] if o > 0 else -np.inf
                new = gv if gv > prev else prev
                hv = h[j, i]
                before = p if p > hv else hv
                after = new if new > hv else hv
                x = before - after
                t = s + x
                if abs(s) >= abs(x):
                    c += (s - t) + x
                else:
                    c += (x - t) + s
                s = t
        vout[o] = s + c


@njit(cache=True, parallel=True)
def gain_field_kernel(method, h, zs_offset, z_max, psi, cand_i, cand_j, vout):
    """Gains for every candidate cell; ``vout`` has shape (n_candidates, k)."""
    ny, nx = h.shape
    n = cand_i.shape[0]
    for c in prange(n):
        buf = np.empty((ny, nx))
        si = cand_i[c]
        sj = cand_j[c]
        field_into(method, h, si, sj, h[sj, si] + zs_offset, z_max, buf)
        gain_kernel(buf, psi, h, vout[c])


@njit(cache=True)
def psi_insert_into(psi, g, out):
    k, ny, nx = psi.shape
    for j in range(ny):
        for i in range(nx):
            gv = g[j, i]
            placed = False
            for o in range(k):
                p = psi[o, j, i]
                if not placed and gv < p:
                    out[o, j, i] = gv
                    placed = True
                    gv = p
                elif placed:
                    out[o, j, i] = gv
                    gv = p
                else:
                    out[o, j, i] = p


@njit(cache=True, parallel=True)
def fields_kernel(method, h, zs_offset, z_max, cand_i, cand_j, out):
    """Occlusion fields for all candidates; ``out`` has shape (n, ny, nx)."""
    for c in prange(cand_i.shape[0]):
        si = cand_i[c]
        sj = cand_j[c]
        field_into(method, h, si, sj, h[sj, si] + zs_offset, z_max, out[c])


@njit(cache=True, parallel=True)
def gains_from_fields_kernel(fields, psi, h, vout):
    for c in prange(fields.shape[0]):
        gain_kernel(fields[c], psi, h, vout[c])
