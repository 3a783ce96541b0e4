import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import lstsq

from asimm.centering import (CenteringReport, EmptyClusterError, FrequencySystem, centering_step,
                             dc_constraint, solve_component_coeffs, solve_component_coeffs_flagged,
                             update_baseline, update_lambda)
from asimm.events import build_spectral
from asimm.model import objective
from asimm.spectral import SpectralCurve, synthesize

from conftest import random_dataset, random_params


def dense_oracle(data, z, v, K):
    """Joint weighted least squares over every (k, m, l > 0) at once."""
    ell0, T, M = data.ell0, data.T, data.M
    cols = [(k, m, l) for k in range(K) for m in range(M) for l in range(1, ell0 + 1)]
    index = {c: j for j, c in enumerate(cols)}
    rows, rhs = [], []
    for i in range(data.n):
        for r in range(data.R):
            b = data.weights[i, r]
            if b == 0:
                continue
            for l in range(1, ell0 + 1):
                row = np.zeros(len(cols), dtype=complex)
                for m in range(M):
                    u = v[i, m] + data.shifts[r, m]
                    row[index[(z[i], m, l)]] = np.exp(-2j * np.pi * l * u / T)
                rows.append(np.sqrt(b) * row)
                rhs.append(np.sqrt(b) * data.h[i, r, ell0 + l])
    x = lstsq(np.array(rows), np.array(rhs))[0]
    out = np.zeros((K, M, ell0), dtype=complex)
    for (k, m, l), j in index.items():
        out[k, m, l - 1] = x[j]
    return out


class TestSolve:
    def test_scalar_weighted_mean(self, rng):
        e = np.exp(1j * rng.uniform(0, 6, 9))[:, None]
        b = rng.uniform(1, 5, 9)
        h = rng.normal(size=9) + 1j * rng.normal(size=9)
        x = solve_component_coeffs(FrequencySystem(e, b, h))
        assert x[0] == pytest.approx(np.sum(b * np.conj(e[:, 0]) * h) / b.sum(), abs=1e-13)

    def test_exact_recovery(self, rng):
        u = rng.uniform(0, 2.5, size=(12, 2))
        E = np.exp(-2j * np.pi * 3 * u / 2.5)
        truth = np.array([0.3 - 0.1j, -0.2 + 0.05j])
        x = solve_component_coeffs(FrequencySystem(E, rng.uniform(1, 3, 12), E @ truth))
        np.testing.assert_allclose(x, truth, atol=1e-10)

    def test_zero_weight_rows_dropped(self, rng):
        E = np.exp(1j * rng.uniform(0, 6, (5, 2)))
        s = FrequencySystem(E, [1, 0, 2, 0, 3], np.ones(5))
        assert s.design.shape == (3, 2)

    def test_constant_gap_takes_ridge(self):
        T = 2.5
        w1 = 0.3
        u = np.tile([w1, w1 + 0.8], (20, 1))
        E = np.exp(-2j * np.pi * u / T)
        gram = E.conj().T @ E
        assert np.linalg.svd(gram, compute_uv=False).min() < 1e-10
        x, ridge = solve_component_coeffs_flagged(FrequencySystem(E, np.ones(20), np.ones(20)))
        assert ridge and np.all(np.isfinite(x))

    def test_empty_system(self):
        with pytest.raises(EmptyClusterError, match="empty cluster at centering"):
            solve_component_coeffs(FrequencySystem(np.ones((2, 1)), [0, 0], [1, 1]))


class TestDcAndBaseline:
    def test_zero(self):
        assert dc_constraint(np.zeros(4)) == 0

    def test_cosine(self):
        T = 2.0
        dc = dc_constraint(np.array([0.5]))
        assert dc == -1
        c = SpectralCurve(np.array([0.5, dc, 0.5]), T)
        assert abs(synthesize(c, 16)[0]) < 1e-15

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.integers(1, 12))
    def test_vanishes_at_zero(self, seed, ell0):
        r = np.random.default_rng(seed)
        pos = r.normal(size=ell0) + 1j * r.normal(size=ell0)
        c = SpectralCurve.from_positive(dc_constraint(pos), pos, 2.5)
        assert abs(synthesize(c, 4 * ell0 + 4)[0]) < 1e-10

    def test_baseline(self):
        assert update_baseline(np.zeros((1, 2, 5)), 2.5)[0] == pytest.approx(0.4)
        phi = np.zeros((1, 2, 5), dtype=complex)
        phi[0, 0, 2], phi[0, 1, 2] = 0.04, 0.06
        assert update_baseline(phi, 2.5)[0] == pytest.approx(0.3)


class TestLambda:
    def test_mean(self):
        assert update_lambda(np.array([[10, 12, 14]]), [0], 1)[0] == 12

    def test_single(self):
        assert update_lambda(np.array([[7]]), [0], 1)[0] == 7

    def test_two_clusters(self, rng):
        counts = rng.integers(0, 40, (6, 3))
        z = np.array([1, 0, 1, 1, 0, 0])
        lam = update_lambda(counts, z, 2)
        np.testing.assert_allclose(lam, [counts[z == 0].mean(), counts[z == 1].mean()])

    def test_empty(self):
        with pytest.raises(EmptyClusterError):
            update_lambda(np.array([[1], [2]]), [0, 0], 2)


class TestCenteringStep:
    def instance(self, seed=7):
        r = np.random.default_rng(seed)
        d = random_dataset(r, n=6, R=3, M=2)
        data = build_spectral(d, 4)
        z = np.array([0, 1, 0, 1, 0, 1])
        v = r.uniform(0, 0.3, size=(6, 2))
        return data, z, v

    def test_dense_oracle(self):
        data, z, v = self.instance()
        p = centering_step(data, z, v, 2)
        ref = dense_oracle(data, z, v, 2)
        assert np.abs(p.phi_prime[..., 5:] - ref).max() < 1e-9

    def test_symmetry_and_normalization(self):
        data, z, v = self.instance()
        p = centering_step(data, z, v, 2)
        np.testing.assert_allclose(p.phi_prime[..., ::-1], np.conj(p.phi_prime), atol=1e-10)
        np.testing.assert_allclose(p.normalization_error(), 0, atol=1e-12)
        for k in range(2):
            for m in range(2):
                assert abs(p.curve(k, m)(0.0)) < 1e-10

    def test_not_worse_than_other_params(self, rng):
        for seed in range(20):
            data, z, v = self.instance(seed)
            best = centering_step(data, z, v, 2)
            other = random_params(np.random.default_rng(seed), 6, 2, 2, 4, data.T, z=z)
            other.v = v
            assert objective(data, best, 0.3) <= objective(data, other, 0.3) + 1e-12

    def test_order_invariance(self):
        data, z, v = self.instance()
        perm = np.array([3, 0, 5, 1, 4, 2])
        a = centering_step(data, z, v, 2)
        b = centering_step(data.subset(perm), z[perm], v[perm], 2)
        np.testing.assert_allclose(a.phi_prime, b.phi_prime, atol=1e-12)
        np.testing.assert_allclose(a.Lambda, b.Lambda)

    def test_homogeneous_data_gives_flat_density(self):
        from asimm.simgen import sample_poisson, stream
        from asimm.events import Dataset, EventTimes
        T, n, R = 2.5, 60, 4
        ev = tuple(tuple(EventTimes(sample_poisson(lambda t: np.full(t.shape, 40.0), T, 40.0,
                                                   stream(3, 0, i, r)), T) for r in range(R))
                   for i in range(n))
        w = np.random.default_rng(1).uniform(0, 1, (R, 2))
        data = build_spectral(Dataset(ev, w, T), 5)
        p = centering_step(data, np.zeros(n, int), np.random.default_rng(2).uniform(0, .1, (n, 2)))
        # noise level of a coefficient is about 1/(T sqrt(total events))
        se = 1 / (T * np.sqrt(data.counts.sum()))
        assert np.abs(p.phi_prime[..., 6:]).max() < 6 * se
        assert p.a_prime[0] == pytest.approx(1 / T, abs=0.1 / T)

    def test_empty_cluster(self):
        data, z, v = self.instance()
        with pytest.raises(EmptyClusterError):
            centering_step(data, np.zeros(6, int), v, 2)

    def test_report_flags_ridge(self):
        from asimm.events import Dataset, EventTimes
        T = 2.5
        r = np.random.default_rng(0)
        ev = tuple(tuple(EventTimes(np.sort(r.uniform(0, T, 30)), T) for _ in range(5))
                   for _ in range(3))
        w = np.tile([0.3, 1.1], (5, 1))
        data = build_spectral(Dataset(ev, w, T), 3)
        rep = CenteringReport()
        p = centering_step(data, np.zeros(3, int), np.zeros((3, 2)), 1, rep)
        assert len(rep.ridge) == 3 and np.all(np.isfinite(p.phi_prime))
