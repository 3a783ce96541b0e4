import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import trapezoid

from asimm.spectral import SpectralCurve, l2_inner, shift_phase, synthesize


def random_curve(rng, ell0=5, T=2.5):
    pos = rng.normal(size=ell0) + 1j * rng.normal(size=ell0)
    return SpectralCurve.from_positive(rng.normal(), pos, T)


class TestShiftPhase:
    def test_zero_and_period(self, rng):
        c = random_curve(rng)
        np.testing.assert_allclose(shift_phase(c, 0.0).coefficients, c.coefficients)
        np.testing.assert_allclose(shift_phase(c, c.T).coefficients, c.coefficients, atol=1e-12)

    def test_half_period_flips_first_harmonic(self, rng):
        c = random_curve(rng)
        s = shift_phase(c, c.T / 2)
        assert abs(s.coefficients[c.ell0 + 1] + c.coefficients[c.ell0 + 1]) < 1e-12
        assert s.coefficients[c.ell0] == c.coefficients[c.ell0]

    def test_composition(self, rng):
        c = random_curve(rng)
        a = shift_phase(shift_phase(c, 0.3), 0.45).coefficients
        b = shift_phase(c, 0.75).coefficients
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_time_domain_translation(self, rng):
        c = random_curve(rng)
        t = np.linspace(0, c.T, 37)
        np.testing.assert_allclose(shift_phase(c, 0.4)(t), c(t - 0.4), atol=1e-10)

    def test_grid_roll(self, rng):
        c = random_curve(rng)
        G = 256
        step = c.T / G
        rolled = np.roll(synthesize(c, G), 7)
        np.testing.assert_allclose(synthesize(shift_phase(c, 7 * step), G), rolled, atol=1e-9)


class TestSynthesize:
    def test_zero(self):
        assert np.all(synthesize(SpectralCurve.zeros(3, 1.0), 16) == 0)

    def test_constant(self):
        c = SpectralCurve(np.array([0, 0, 0.7, 0, 0]), 2.0)
        np.testing.assert_allclose(synthesize(c, 32), 0.7)

    def test_cosine(self):
        T = 2.0
        c = SpectralCurve(np.array([0.5, 0, 0.5]), T)
        G = 40
        x = synthesize(c, G)
        t = np.arange(G) * T / G
        for g in (0, 3, 11, 20, 33):
            assert x[g] == pytest.approx(np.cos(2 * np.pi * t[g] / T), abs=1e-12)

    def test_grid_too_small(self):
        with pytest.raises(ValueError):
            synthesize(SpectralCurve.zeros(5, 1.0), 10)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            SpectralCurve(np.array([1.0, 0, 0.5]), 1.0)

    def test_matches_direct_evaluation(self, rng):
        c = random_curve(rng)
        G = 64
        np.testing.assert_allclose(synthesize(c, G), c(np.arange(G) * c.T / G), atol=1e-10)


class TestInner:
    def test_zero(self):
        z = SpectralCurve.zeros(3, 2.5)
        assert l2_inner(z, z) == 0

    def test_dc(self):
        T = 2.5
        c = SpectralCurve(np.array([0, 1 / T, 0]), T)
        assert l2_inner(c, c) == pytest.approx(1 / T)

    def test_trapezoid_oracle(self, rng):
        a, b = random_curve(rng), random_curve(rng)
        G = 2048
        t = np.linspace(0, a.T, G + 1)
        direct = trapezoid(a(t) * b(t), t)
        assert l2_inner(a, b) == pytest.approx(direct, rel=1e-6)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_nonnegative_norm(self, seed):
        c = random_curve(np.random.default_rng(seed))
        assert l2_inner(c, c) >= 0

    def test_mismatch(self, rng):
        with pytest.raises(ValueError):
            l2_inner(random_curve(rng, 3), random_curve(rng, 4))


def test_json_roundtrip(rng):
    c = random_curve(rng)
    back = SpectralCurve.from_json(c.to_json())
    np.testing.assert_array_equal(back.coefficients, c.coefficients)
