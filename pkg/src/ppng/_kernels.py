"""Numba kernels for the trilinear gather/scatter hot path.

These loops fuse the sinusoidal-coordinate-to-lattice mapping
(u = (s+1)/2*(Q-1), clamped; lower corner capped at Q-2) and the corner
weights with the lattice reads/writes, so no per-sample index or weight
tensors are materialized. Each kernel is the exact counterpart of the
algebra documented in ``field``: gather trilinearly blends the 8
surrounding lattice values, scatter is its transpose. Gradients
accumulate in float64.
"""

from __future__ import annotations

from numba import njit


@njit(inline="always")
def _lattice(s, Q):
    u = (s + 1.0) * 0.5 * (Q - 1)
    if u < 0.0:
        u = 0.0
    elif u > Q - 1:
        u = float(Q - 1)
    i = int(u)
    if i > Q - 2:
        i = Q - 2
    if i < 0:
        i = 0
    return i, u - i


@njit(cache=True)
def dense_gather(flat, Q, coords, out):
    # flat (n_cubes*Q^3, D), coords (M, C, 3), out (M, C, D) zero-initialized
    M, C, _ = coords.shape
    D = flat.shape[1]
    for m in range(M):
        for c in range(C):
            ix, wx = _lattice(coords[m, c, 0], Q)
            iy, wy = _lattice(coords[m, c, 1], Q)
            iz, wz = _lattice(coords[m, c, 2], Q)
            base = ((c * Q + ix) * Q + iy) * Q + iz
            for a in range(2):
                wa = wx if a else 1.0 - wx
                for b in range(2):
                    wab = wa * (wy if b else 1.0 - wy)
                    for cc in range(2):
                        wgt = wab * (wz if cc else 1.0 - wz)
                        row = base + (a * Q + b) * Q + cc
                        for d in range(D):
                            out[m, c, d] += wgt * flat[row, d]


@njit(cache=True)
def dense_scatter(grad, Q, coords, dz):
    # grad (n_cubes*Q^3, D) float64 accumulator, dz (M, C, D)
    M, C, D = dz.shape
    for m in range(M):
        for c in range(C):
            ix, wx = _lattice(coords[m, c, 0], Q)
            iy, wy = _lattice(coords[m, c, 1], Q)
            iz, wz = _lattice(coords[m, c, 2], Q)
            base = ((c * Q + ix) * Q + iy) * Q + iz
            for a in range(2):
                wa = wx if a else 1.0 - wx
                for b in range(2):
                    wab = wa * (wy if b else 1.0 - wy)
                    for cc in range(2):
                        wgt = wab * (wz if cc else 1.0 - wz)
                        row = base + (a * Q + b) * Q + cc
                        for d in range(D):
                            grad[row, d] += wgt * dz[m, c, d]


@njit(cache=True)
def cp_gather(vx, vy, vz, coords, out):
    # vx/vy/vz (C, R, Q, D), coords (M, C, 3), out (M, C, D) zero-initialized
    M, C, _ = coords.shape
    R, Q, D = vx.shape[1], vx.shape[2], vx.shape[3]
    for m in range(M):
        for c in range(C):
            ix, wx = _lattice(coords[m, c, 0], Q)
            iy, wy = _lattice(coords[m, c, 1], Q)
            iz, wz = _lattice(coords[m, c, 2], Q)
            for r in range(R):
                for d in range(D):
                    ax = vx[c, r, ix, d] * (1.0 - wx) + vx[c, r, ix + 1, d] * wx
                    ay = vy[c, r, iy, d] * (1.0 - wy) + vy[c, r, iy + 1, d] * wy
                    az = vz[c, r, iz, d] * (1.0 - wz) + vz[c, r, iz + 1, d] * wz
                    out[m, c, d] += ax * ay * az


@njit(cache=True)
def cp_scatter(vx, vy, vz, coords, dz, gx, gy, gz):
    # gx/gy/gz (C, R, Q, D) float64 accumulators, dz (M, C, D)
    M, C, D = dz.shape
    R, Q = vx.shape[1], vx.shape[2]
    for m in range(M):
        for c in range(C):
            ix, wx = _lattice(coords[m, c, 0], Q)
            iy, wy = _lattice(coords[m, c, 1], Q)
            iz, wz = _lattice(coords[m, c, 2], Q)
            for r in range(R):
                for d in range(D):
                    ax = vx[c, r, ix, d] * (1.0 - wx) + vx[c, r, ix + 1, d] * wx
                    ay = vy[c, r, iy, d] * (1.0 - wy) + vy[c, r, iy + 1, d] * wy
                    az = vz[c, r, iz, d] * (1.0 - wz) + vz[c, r, iz + 1, d] * wz
                    g = dz[m, c, d]
                    dax = g * ay * az
                    day = g * ax * az
                    daz = g * ax * ay
                    gx[c, r, ix, d] += (1.0 - wx) * dax
                    gx[c, r, ix + 1, d] += wx * dax
                    gy[c, r, iy, d] += (1.0 - wy) * day
                    gy[c, r, iy + 1, d] += wy * day
                    gz[c, r, iz, d] += (1.0 - wz) * daz
                    gz[c, r, iz + 1, d] += wz * daz


@njit(cache=True)
def triplane_gather(pxy, pyz, pxz, coords, out):
    # planes (C, R, Q, Q, D), coords (M, C, 3), out (M, C, D) zero-initialized.
    # The corner index of each axis is shared by the two planes that use it:
    # trilinear of the composed cube, not a product of per-plane bilinears.
    M, C, _ = coords.shape
    R, Q, D = pxy.shape[1], pxy.shape[2], pxy.shape[4]
    for m in range(M):
        for c in range(C):
            ix, wx = _lattice(coords[m, c, 0], Q)
            iy, wy = _lattice(coords[m, c, 1], Q)
            iz, wz = _lattice(coords[m, c, 2], Q)
            for a in range(2):
                wa = wx if a else 1.0 - wx
                for b in range(2):
                    wab = wa * (wy if b else 1.0 - wy)
                    for cc in range(2):
                        wgt = wab * (wz if cc else 1.0 - wz)
                        for r in range(R):
                            for d in range(D):
                                out[m, c, d] += wgt * (
                                    pxy[c, r, ix + a, iy + b, d]
                                    * pyz[c, r, iy + b, iz + cc, d]
                                    * pxz[c, r, ix + a, iz + cc, d]
                                )


@njit(cache=True)
def triplane_scatter(pxy, pyz, pxz, coords, dz, gxy, gyz, gxz):
    # gxy/gyz/gxz (C, R, Q, Q, D) float64 accumulators, dz (M, C, D)
    M, C, D = dz.shape
    R, Q = pxy.shape[1], pxy.shape[2]
    for m in range(M):
        for c in range(C):
            ix, wx = _lattice(coords[m, c, 0], Q)
            iy, wy = _lattice(coords[m, c, 1], Q)
            iz, wz = _lattice(coords[m, c, 2], Q)
            for a in range(2):
                wa = wx if a else 1.0 - wx
                for b in range(2):
                    wab = wa * (wy if b else 1.0 - wy)
                    for cc in range(2):
                        wgt = wab * (wz if cc else 1.0 - wz)
                        for r in range(R):
                            for d in range(D):
                                vxy = pxy[c, r, ix + a, iy + b, d]
                                vyz = pyz[c, r, iy + b, iz + cc, d]
                                vxz = pxz[c, r, ix + a, iz + cc, d]
                                g = wgt * dz[m, c, d]
                                gxy[c, r, ix + a, iy + b, d] += g * vyz * vxz
                                gyz[c, r, iy + b, iz + cc, d] += g * vxy * vxz
                                gxz[c, r, ix + a, iz + cc, d] += g * vxy * vyz
