"""Bias-free shallow decoder from (grid feature, SH direction) to (color, density).

Architecture (default feature length F=32):

    h = W1 @ z                 # 16 outputs: raw density logit + 15 features
    sigma = exp(clamp(h[0], -15, 15))
    u = concat[sh, h]          # 32 values
    g = relu(W2 @ u)           # hidden 16
    c = sigmoid(W3 @ g)        # rgb

With F=32 the parameter count is 16*32 + 16*32 + 3*16 = 1,072. An optional
second density-branch layer (16 -> 16, relu between) is exposed as an
ablation knob and changes the count by 256.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

DENSITY_LOGIT_CLAMP = 15.0
SH_DIM = 16
HIDDEN = 16


def _glorot(rng, rows, cols, dtype):
    a = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-a, a, size=(rows, cols)).astype(dtype)


@dataclass
class ShallowMlp:
    w1: np.ndarray  # (16, F)
    w2: np.ndarray  # (16, 32)
    w3: np.ndarray  # (3, 16)
    w1b: np.ndarray | None = None  # optional second density layer (16, 16)

    def __post_init__(self):
        if self.w1.shape[0] != HIDDEN:
            raise ValueError(f"w1 must have {HIDDEN} rows, got {self.w1.shape}")
        if self.w2.shape != (HIDDEN, SH_DIM + HIDDEN):
            raise ValueError(f"w2 must be {(HIDDEN, SH_DIM + HIDDEN)}, got {self.w2.shape}")
        if self.w3.shape != (3, HIDDEN):
            raise ValueError(f"w3 must be (3, {HIDDEN}), got {self.w3.shape}")
        if self.w1b is not None and self.w1b.shape != (HIDDEN, HIDDEN):
            raise ValueError(f"w1b must be {(HIDDEN, HIDDEN)}, got {self.w1b.shape}")
        for name, w in self.params().items():
            if not np.all(np.isfinite(w)):
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def feature_dim(self):
        return self.w1.shape[1]

    @property
    def param_count(self):
        return sum(w.size for w in self.params().values())

    def params(self):
        p = {"w1": self.w1, "w2": self.w2, "w3": self.w3}
        if self.w1b is not None:
            p["w1b"] = self.w1b
        return p

    @classmethod
    def init(cls, feature_dim=32, density_layers=1, seed=0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        w1 = _glorot(rng, HIDDEN, feature_dim, dtype)
        w1b = _glorot(rng, HIDDEN, HIDDEN, dtype) if density_layers == 2 else None
        if density_layers not in (1, 2):
            raise ValueError("density_layers must be 1 or 2")
        w2 = _glorot(rng, HIDDEN, SH_DIM + HIDDEN, dtype)
        w3 = _glorot(rng, 3, HIDDEN, dtype)
        return cls(w1, w2, w3, w1b)


def mlp_forward(z: np.ndarray, sh: np.ndarray, mlp: ShallowMlp):
    """Batched forward pass. z (M, F), sh (M, 16) -> (color (M, 3), sigma (M,), cache)."""
    z = np.atleast_2d(np.asarray(z))
    sh = np.atleast_2d(np.asarray(sh))
    if z.shape[-1] != mlp.feature_dim:
        raise ValueError(f"feature length {z.shape[-1]} != mlp input {mlp.feature_dim}")
    if sh.shape[-1] != SH_DIM or sh.shape[0] != z.shape[0]:
        raise ValueError(f"sh shape {sh.shape} does not match features {z.shape}")
    h0 = z @ mlp.w1.T
    if mlp.w1b is not None:
        h = np.maximum(h0, 0.0) @ mlp.w1b.T
    else:
        h = h0
    raw = np.clip(h[:, 0], -DENSITY_LOGIT_CLAMP, DENSITY_LOGIT_CLAMP)
    sigma = np.exp(raw)
    u = np.concatenate([sh, h], axis=1)
    g_pre = u @ mlp.w2.T
    g = np.maximum(g_pre, 0.0)
    c_pre = g @ mlp.w3.T
    color = 0.5 * (1.0 + np.tanh(0.5 * c_pre))  # sigmoid, overflow-safe
    cache = (z, sh, h0, h, u, g, color, sigma)
    return color, sigma, cache


def density_forward(z: np.ndarray, mlp: ShallowMlp) -> np.ndarray:
    """Density only (skips the color branch); used for occupancy refreshes."""
    z = np.atleast_2d(np.asarray(z))
    h0 = z @ mlp.w1.T
    if mlp.w1b is not None:
        h0 = np.maximum(h0, 0.0) @ mlp.w1b.T
    return np.exp(np.clip(h0[:, 0], -DENSITY_LOGIT_CLAMP, DENSITY_LOGIT_CLAMP))


def mlp_backward(cache, d_color: np.ndarray, d_sigma: np.ndarray, mlp: ShallowMlp):
    """Chain-rule gradients. Returns (grads dict matching mlp.params(), dz)."""
    z, sh, h0, h, u, g, color, sigma = cache
    d_color = np.atleast_2d(np.asarray(d_color))
    d_sigma = np.atleast_1d(np.asarray(d_sigma))
    if d_color.shape != color.shape or d_sigma.shape != sigma.shape:
        raise ValueError("upstream gradient shapes do not match the cached forward")
    dc_pre = d_color * color * (1.0 - color)
    dw3 = dc_pre.T @ g
    dg = dc_pre @ mlp.w3
    dg_pre = dg * (g > 0.0)
    dw2 = dg_pre.T @ u
    du = dg_pre @ mlp.w2
    dh = du[:, SH_DIM:].copy()
    # exp-with-clamp: zero gradient where the raw logit was clipped
    inside = np.abs(h[:, 0]) < DENSITY_LOGIT_CLAMP
    dh[:, 0] += d_sigma * sigma * inside
    grads = {}
    if mlp.w1b is not None:
        a = np.maximum(h0, 0.0)
        grads["w1b"] = dh.T @ a
        dh0 = (dh @ mlp.w1b) * (h0 > 0.0)
    else:
        dh0 = dh
    grads["w1"] = dh0.T @ z
    grads["w2"] = dw2
    grads["w3"] = dw3
    dz = dh0 @ mlp.w1
    return grads, dz
