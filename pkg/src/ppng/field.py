"""Fourier-indexed feature fields: dense cubes and their factorized forms.

Three storage variants share one query interface:

* ``FourierVolumeSet``   -- 2L dense cubes of shape Q^3 x D (type 3)
* ``CpFactorSet``        -- rank-R triplets of 1D axis vectors (type 1)
* ``TriplaneFactorSet``  -- rank-R triplets of 2D planes (type 2)

Queries map each sinusoidal triple s in [-1,1]^3 to the continuous grid
coordinate u = (s+1)/2*(Q-1) and trilinearly blend the 8 surrounding
lattice cells. Factorized fields evaluate the needed lattice values on
the fly, which matches composing the dense cube first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ppng import _kernels

# touches = output cells written per rank term; tests divide by Q^3*D to
# recover the rank (composition is O(Q^3 * R)).
compose_touch_counter = 0


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")


@dataclass
class FourierVolumeSet:
    """Dense cubes, shape (2L, Q, Q, Q, D) with axes (cube, x, y, z, channel)."""

    volumes: np.ndarray

    def __post_init__(self):
        v = self.volumes
        if v.ndim != 5 or v.shape[1] != v.shape[2] or v.shape[1] != v.shape[3]:
            raise ValueError(f"expected (2L, Q, Q, Q, D) volumes, got {v.shape}")
        if v.shape[0] % 2 != 0:
            raise ValueError("number of cubes must be even (sin/cos pairs)")
        _check_finite("volumes", v)

    @property
    def levels(self):
        return self.volumes.shape[0] // 2

    @property
    def resolution(self):
        return self.volumes.shape[1]

    @property
    def channels(self):
        return self.volumes.shape[4]

    @property
    def param_count(self):
        return self.volumes.size

    def params(self):
        return {"volumes": self.volumes}

    @classmethod
    def zeros(cls, levels, resolution, channels, dtype=np.float32):
        shape = (2 * levels, resolution, resolution, resolution, channels)
        return cls(np.zeros(shape, dtype=dtype))


@dataclass
class CpFactorSet:
    """Per-cube axis factors v_x, v_y, v_z, each of shape (2L, R, Q, D)."""

    vx: np.ndarray
    vy: np.ndarray
    vz: np.ndarray

    def __post_init__(self):
        for name, a in (("vx", self.vx), ("vy", self.vy), ("vz", self.vz)):
            if a.ndim != 4:
                raise ValueError(f"expected (2L, R, Q, D) {name}, got {a.shape}")
            if a.shape != self.vx.shape:
                raise ValueError("factor banks must share one shape")
            _check_finite(name, a)
        if self.vx.shape[0] % 2 != 0:
            raise ValueError("number of cubes must be even (sin/cos pairs)")

    @property
    def levels(self):
        return self.vx.shape[0] // 2

    @property
    def rank(self):
        return self.vx.shape[1]

    @property
    def resolution(self):
        return self.vx.shape[2]

    @property
    def channels(self):
        return self.vx.shape[3]

    @property
    def param_count(self):
        return self.vx.size + self.vy.size + self.vz.size

    def params(self):
        return {"vx": self.vx, "vy": self.vy, "vz": self.vz}


@dataclass
class TriplaneFactorSet:
    """Per-cube planes P_xy, P_xz, P_yz, each of shape (2L, R, Q, Q, D).

    Plane axes follow the name: P_xy is indexed [cube, r, x, y, d].
    """

    pxy: np.ndarray
    pxz: np.ndarray
    pyz: np.ndarray

    def __post_init__(self):
        for name, a in (("pxy", self.pxy), ("pxz", self.pxz), ("pyz", self.pyz)):
            if a.ndim != 5 or a.shape[2] != a.shape[3]:
                raise ValueError(f"expected (2L, R, Q, Q, D) {name}, got {a.shape}")
            if a.shape != self.pxy.shape:
                raise ValueError("plane banks must share one shape")
            _check_finite(name, a)
        if self.pxy.shape[0] % 2 != 0:
            raise ValueError("number of cubes must be even (sin/cos pairs)")

    @property
    def levels(self):
        return self.pxy.shape[0] // 2

    @property
    def rank(self):
        return self.pxy.shape[1]

    @property
    def resolution(self):
        return self.pxy.shape[2]

    @property
    def channels(self):
        return self.pxy.shape[4]

    @property
    def param_count(self):
        return self.pxy.size + self.pxz.size + self.pyz.size

    def params(self):
        return {"pxy": self.pxy, "pxz": self.pxz, "pyz": self.pyz}


def compose_cp(factors: CpFactorSet, cube_index: int) -> np.ndarray:
    """Dense cube[x,y,z,d] = sum_r vx[r,x,d] * vy[r,y,d] * vz[r,z,d]."""
    global compose_touch_counter
    n = factors.vx.shape[0]
    if not 0 <= cube_index < n:
        raise IndexError(f"cube_index {cube_index} out of range [0, {n})")
    vx = factors.vx[cube_index]
    vy = factors.vy[cube_index]
    vz = factors.vz[cube_index]
    Q, D = vx.shape[1], vx.shape[2]
    cube = np.zeros((Q, Q, Q, D), dtype=vx.dtype)
    for r in range(factors.rank):
        cube += np.einsum("xd,yd,zd->xyzd", vx[r], vy[r], vz[r])
        compose_touch_counter += cube.size
    return cube


def compose_triplane(factors: TriplaneFactorSet, cube_index: int) -> np.ndarray:
    """Dense cube[x,y,z,d] = sum_r pxy[r,x,y,d] * pyz[r,y,z,d] * pxz[r,x,z,d]."""
    global compose_touch_counter
    n = factors.pxy.shape[0]
    if not 0 <= cube_index < n:
        raise IndexError(f"cube_index {cube_index} out of range [0, {n})")
    pxy = factors.pxy[cube_index]
    pxz = factors.pxz[cube_index]
    pyz = factors.pyz[cube_index]
    Q, D = pxy.shape[1], pxy.shape[3]
    cube = np.zeros((Q, Q, Q, D), dtype=pxy.dtype)
    for r in range(factors.rank):
        cube += np.einsum("xyd,yzd,xzd->xyzd", pxy[r], pyz[r], pxz[r])
        compose_touch_counter += cube.size
    return cube


def compose_all(factors) -> FourierVolumeSet:
    """Compose every cube of a factor set into a dense FourierVolumeSet."""
    if isinstance(factors, CpFactorSet):
        compose = compose_cp
        n = factors.vx.shape[0]
    elif isinstance(factors, TriplaneFactorSet):
        compose = compose_triplane
        n = factors.pxy.shape[0]
    else:
        raise TypeError(f"cannot compose {type(factors).__name__}")
    return FourierVolumeSet(np.stack([compose(factors, i) for i in range(n)]))


def _lattice_coords(coords: np.ndarray, Q: int):
    """Sinusoidal triples (..., 2L, 3) -> lower corner indices and weights."""
    s = np.asarray(coords)
    u = (s + 1.0) / 2.0 * (Q - 1)
    u = np.clip(u, 0.0, Q - 1)
    i0 = np.minimum(np.floor(u).astype(np.int64), Q - 2) if Q > 1 else np.zeros_like(u, dtype=np.int64)
    w = u - i0
    return i0, w


def _check_coords(coords, field):
    coords = np.asarray(coords)
    if coords.ndim < 2 or coords.shape[-1] != 3 or coords.shape[-2] != 2 * field.levels:
        raise ValueError(
            f"coords shape {coords.shape} does not match field with L={field.levels}"
        )
    return coords


def query_feature(coords: np.ndarray, field) -> np.ndarray:
    """Trilinear feature lookup. coords (..., 2L, 3) -> features (..., 2L*D)."""
    coords = _check_coords(coords, field)
    if isinstance(field, FourierVolumeSet):
        z = _dense_gather(field, coords)
    elif isinstance(field, CpFactorSet):
        z = _cp_gather(field, coords)
    elif isinstance(field, TriplaneFactorSet):
        z = _triplane_gather(field, coords)
    else:
        raise TypeError(f"unsupported field type {type(field).__name__}")
    return z.reshape(coords.shape[:-2] + (-1,))


def query_feature_backward(coords: np.ndarray, field, upstream: np.ndarray) -> dict:
    """Scatter feature gradients back to field parameters.

    upstream has the shape of query_feature's output; returns a dict of
    gradient arrays keyed like ``field.params()``. No gradient w.r.t.
    coords is produced.
    """
    coords = _check_coords(coords, field)
    n_cubes = 2 * field.levels
    D = field.channels
    upstream = np.asarray(upstream)
    if upstream.shape != coords.shape[:-2] + (n_cubes * D,):
        raise ValueError(f"upstream shape {upstream.shape} does not match field output")
    dz = np.ascontiguousarray(upstream.reshape(-1, n_cubes, D))
    if isinstance(field, FourierVolumeSet):
        return _dense_scatter(field, coords, dz)
    if isinstance(field, CpFactorSet):
        return _cp_scatter(field, coords, dz)
    if isinstance(field, TriplaneFactorSet):
        return _triplane_scatter(field, coords, dz)
    raise TypeError(f"unsupported field type {type(field).__name__}")


def _flat_coords(coords, n_cubes):
    """Reshape sinusoidal triples to the (M, 2L, 3) layout kernels use."""
    return np.ascontiguousarray(coords.reshape(-1, n_cubes, 3))


def _dense_gather(field, coords):
    lead = coords.shape[:-2]
    s = _flat_coords(coords, field.volumes.shape[0])
    flat = np.ascontiguousarray(field.volumes.reshape(-1, field.channels))
    out = np.zeros(s.shape[:2] + (field.channels,), dtype=np.result_type(flat, s))
    _kernels.dense_gather(flat, field.resolution, s, out)
    return out.reshape(lead + out.shape[1:])


def _dense_scatter(field, coords, dz):
    s = _flat_coords(coords, field.volumes.shape[0])
    grad = np.zeros((field.volumes.size // field.channels, field.channels))
    _kernels.dense_scatter(grad, field.resolution, s, dz)
    return {"volumes": grad.reshape(field.volumes.shape).astype(field.volumes.dtype)}


def _cp_gather(field, coords):
    # trilinear interp of a CP tensor separates into per-axis linear interps
    lead = coords.shape[:-2]
    s = _flat_coords(coords, field.vx.shape[0])
    banks = [np.ascontiguousarray(b) for b in (field.vx, field.vy, field.vz)]
    out = np.zeros(s.shape[:2] + (field.channels,), dtype=np.result_type(banks[0], s))
    _kernels.cp_gather(*banks, s, out)
    return out.reshape(lead + out.shape[1:])


def _cp_scatter(field, coords, dz):
    s = _flat_coords(coords, field.vx.shape[0])
    banks = [np.ascontiguousarray(b) for b in (field.vx, field.vy, field.vz)]
    grads = [np.zeros(field.vx.shape) for _ in range(3)]
    _kernels.cp_scatter(*banks, s, dz, *grads)
    return {
        name: g.astype(bank.dtype)
        for name, bank, g in zip(("vx", "vy", "vz"), banks, grads)
    }


def _triplane_gather(field, coords):
    lead = coords.shape[:-2]
    s = _flat_coords(coords, field.pxy.shape[0])
    banks = [np.ascontiguousarray(b) for b in (field.pxy, field.pyz, field.pxz)]
    out = np.zeros(s.shape[:2] + (field.channels,), dtype=np.result_type(banks[0], s))
    _kernels.triplane_gather(*banks, s, out)
    return out.reshape(lead + out.shape[1:])


def _triplane_scatter(field, coords, dz):
    s = _flat_coords(coords, field.pxy.shape[0])
    banks = [np.ascontiguousarray(b) for b in (field.pxy, field.pyz, field.pxz)]
    grads = [np.zeros(field.pxy.shape) for _ in range(3)]
    _kernels.triplane_scatter(*banks, s, dz, *grads)
    return {
        name: g.astype(bank.dtype)
        for name, bank, g in zip(("pxy", "pyz", "pxz"), banks, grads)
    }
