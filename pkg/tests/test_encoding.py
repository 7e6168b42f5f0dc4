"""Position and direction encoders against independent references."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ppng.encoding import FrequencySchedule, positional_encode, sh_encode

try:
    from scipy.special import sph_harm_y

    def _sph_harm(m, l, phi, theta):
        return sph_harm_y(l, m, theta, phi)

except ImportError:  # older scipy
    from scipy.special import sph_harm as _sph_harm


def reference_positional(p, freqs):
    """Loop-based sinusoidal encoding, written independently of the module."""
    out = np.zeros((2 * len(freqs), 3))
    for i, f in enumerate(freqs):
        for axis in range(3):
            out[2 * i, axis] = math.sin(f * math.pi * p[axis])
            out[2 * i + 1, axis] = math.cos(f * math.pi * p[axis])
    return out


def reference_sh(d):
    """Real spherical harmonics from scipy's complex ones (Condon-Shortley)."""
    x, y, z = d
    theta = math.acos(z)
    phi = math.atan2(y, x)
    vals = []
    for l in range(4):
        for m in range(-l, l + 1):
            if m == 0:
                vals.append(float(np.real(_sph_harm(0, l, phi, theta))))
            elif m > 0:
                vals.append(float(np.sqrt(2) * (-1) ** m * np.real(_sph_harm(m, l, phi, theta))))
            else:
                vals.append(float(np.sqrt(2) * (-1) ** m * np.imag(_sph_harm(-m, l, phi, theta))))
    return np.array(vals)


class TestFrequencySchedule:
    def test_default_is_powers_of_two(self):
        assert FrequencySchedule.default(4).freqs == (1.0, 2.0, 4.0, 8.0)
        assert FrequencySchedule.default(1).freqs == (1.0,)

    def test_levels(self):
        assert FrequencySchedule((1.0, 3.0, 9.0)).levels == 3

    @pytest.mark.parametrize("freqs", [(), (0.0, 1.0), (-1.0,), (1.0, 1.0), (2.0, 1.0)])
    def test_invalid_schedules_rejected(self, freqs):
        with pytest.raises(ValueError):
            FrequencySchedule(freqs)


class TestPositionalEncode:
    def test_matches_loop_reference(self, rng):
        sched = FrequencySchedule.default(4)
        pts = rng.random((20, 3))
        enc = positional_encode(pts, sched)
        assert enc.shape == (20, 8, 3)
        for p, e in zip(pts, enc):
            np.testing.assert_allclose(e, reference_positional(p, sched.freqs), atol=1e-12)

    def test_known_values(self):
        # p=(0, 1/2, 1), one frequency: sin(pi*p) and cos(pi*p) exactly
        enc = positional_encode(np.array([0.0, 0.5, 1.0]), FrequencySchedule((1.0,)))
        np.testing.assert_allclose(enc[0], [0.0, 1.0, 0.0], atol=1e-15)  # sin row
        np.testing.assert_allclose(enc[1], [1.0, 0.0, -1.0], atol=1e-15)  # cos row

    def test_interleaving_order(self, rng):
        # rows alternate sin, cos per level
        p = rng.random(3)
        enc = positional_encode(p, FrequencySchedule((1.0, 2.0)))
        np.testing.assert_allclose(enc[2], np.sin(2 * np.pi * p), atol=1e-12)
        np.testing.assert_allclose(enc[3], np.cos(2 * np.pi * p), atol=1e-12)

    def test_domain_checked(self):
        sched = FrequencySchedule.default(2)
        with pytest.raises(ValueError):
            positional_encode(np.array([0.5, 0.5, 1.1]), sched)
        with pytest.raises(ValueError):
            positional_encode(np.array([-0.1, 0.5, 0.5]), sched)
        # tiny numeric slack is tolerated
        positional_encode(np.array([0.0, 1.0 + 1e-10, 1.0]), sched)

    def test_trailing_dimension_checked(self):
        with pytest.raises(ValueError):
            positional_encode(np.zeros((4, 2)), FrequencySchedule.default(2))

    def test_dtype_preserved(self):
        sched = FrequencySchedule.default(2)
        assert positional_encode(np.zeros(3, dtype=np.float32), sched).dtype == np.float32
        assert positional_encode(np.zeros(3), sched).dtype == np.float64

    @given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3))
    @settings(max_examples=50, deadline=None)
    def test_outputs_bounded(self, p):
        enc = positional_encode(np.array(p), FrequencySchedule.default(3))
        assert np.all(np.abs(enc) <= 1.0 + 1e-12)


class TestShEncode:
    def test_matches_scipy_reference(self, rng):
        d = rng.normal(size=(1000, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        enc = sh_encode(d)
        assert enc.shape == (1000, 16)
        ref = np.stack([reference_sh(v) for v in d])
        np.testing.assert_allclose(enc, ref, atol=1e-12)

    def test_orthonormality_monte_carlo(self, rng):
        # E[Y_i Y_j] over the sphere = delta_ij / (4 pi)
        d = rng.normal(size=(200_000, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        y = sh_encode(d)
        gram = y.T @ y / len(d)
        np.testing.assert_allclose(gram, np.eye(16) / (4 * np.pi), atol=4e-3)

    def test_band_zero_constant(self):
        enc = sh_encode(np.array([0.0, 0.0, 1.0]))
        assert enc[0] == pytest.approx(0.5 / math.sqrt(math.pi), abs=1e-12)

    def test_degree_one_is_scaled_yzx(self, rng):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        enc = sh_encode(d)
        c = math.sqrt(3.0 / (4.0 * math.pi))
        np.testing.assert_allclose(enc[1:4], c * d[[1, 2, 0]], atol=1e-12)

    def test_non_unit_rejected(self):
        with pytest.raises(ValueError):
            sh_encode(np.array([1.0, 1.0, 1.0]))
        with pytest.raises(ValueError):
            sh_encode(np.zeros(3))
