"""Sinusoidal position encoding and spherical-harmonic direction encoding.

Positions in the unit cube are mapped to sin/cos activations at L
frequencies per axis; view directions are mapped to the 16 real spherical
harmonics of bands 0..3. Both are pure functions over numpy arrays and
broadcast over leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

POSITION_SLACK = 1e-9
UNIT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class FrequencySchedule:
    """Multiples of pi used as per-level frequencies, strictly increasing."""

    freqs: tuple[float, ...] = field(default=(1.0, 2.0, 4.0, 8.0))

    def __post_init__(self):
        f = tuple(float(v) for v in self.freqs)
        if len(f) == 0:
            raise ValueError("frequency schedule must have at least one level")
        if any(v <= 0 for v in f):
            raise ValueError("frequencies must be positive")
        if any(b <= a for a, b in zip(f, f[1:])):
            raise ValueError("frequencies must be strictly increasing")
        object.__setattr__(self, "freqs", f)

    @property
    def levels(self) -> int:
        return len(self.freqs)

    @classmethod
    def default(cls, levels: int = 4) -> "FrequencySchedule":
        return cls(tuple(float(2**i) for i in range(levels)))


def positional_encode(p: np.ndarray, sched: FrequencySchedule) -> np.ndarray:
    """Encode positions in [0,1]^3 into sinusoidal triples.

    Returns an array of shape (..., 2L, 3): for each level i, the pair
    (sin(f_i*pi*p), cos(f_i*pi*p)) in the fixed order sin0, cos0, sin1, ...
    """
    p = np.asarray(p)
    if p.dtype != np.float32:  # float32 stays; everything else computes in double
        p = p.astype(np.float64)
    if p.shape[-1] != 3:
        raise ValueError(f"positions must have a trailing dimension of 3, got {p.shape}")
    if np.any(p < -POSITION_SLACK) or np.any(p > 1.0 + POSITION_SLACK):
        raise ValueError("position coordinates must lie in [0, 1]")
    freqs = np.asarray(sched.freqs, dtype=p.dtype)  # (L,)
    phase = np.pi * freqs[:, None] * p[..., None, :]  # (..., L, 3)
    out = np.empty(p.shape[:-1] + (2 * sched.levels, 3), dtype=p.dtype)
    out[..., 0::2, :] = np.sin(phase)
    out[..., 1::2, :] = np.cos(phase)
    return out


def sh_encode(d: np.ndarray) -> np.ndarray:
    """Real spherical harmonics of bands l=0..3 at unit directions.

    Band-major order (0,0), (1,-1), (1,0), (1,1), (2,-2) ... (3,3) with
    standard orthonormal normalization. Shape (..., 3) -> (..., 16).
    """
    d = np.asarray(d)
    if d.dtype != np.float32:
        d = d.astype(np.float64)
    if d.shape[-1] != 3:
        raise ValueError(f"directions must have a trailing dimension of 3, got {d.shape}")
    norm = np.linalg.norm(d, axis=-1)
    if np.any(np.abs(norm - 1.0) > UNIT_NORM_TOL):
        raise ValueError("directions must be unit-norm")
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    xx, yy, zz = x * x, y * y, z * z
    out = np.empty(d.shape[:-1] + (16,), dtype=d.dtype)
    out[..., 0] = 0.28209479177387814
    out[..., 1] = 0.4886025119029199 * y
    out[..., 2] = 0.4886025119029199 * z
    out[..., 3] = 0.4886025119029199 * x
    out[..., 4] = 1.0925484305920792 * x * y
    out[..., 5] = 1.0925484305920792 * y * z
    out[..., 6] = 0.9461746957575601 * zz - 0.31539156525252005
    out[..., 7] = 1.0925484305920792 * x * z
    out[..., 8] = 0.5462742152960396 * (xx - yy)
    out[..., 9] = 0.5900435899266435 * y * (3.0 * xx - yy)
    out[..., 10] = 2.890611442640554 * x * y * z
    out[..., 11] = 0.4570457994644658 * y * (5.0 * zz - 1.0)
    out[..., 12] = 0.3731763325901154 * z * (5.0 * zz - 3.0)
    out[..., 13] = 0.4570457994644658 * x * (5.0 * zz - 1.0)
    out[..., 14] = 1.445305721320277 * z * (xx - yy)
    out[..., 15] = 0.5900435899266435 * x * (xx - 3.0 * yy)
    return out
