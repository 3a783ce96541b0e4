import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asimm.events import (Dataset, EventTimes, build_spectral, dataset_from_json,
                          dataset_to_json, empirical_fourier, load_dataset, read_csv,
                          validate, write_csv, write_json)


def direct_coefficient(times, l, T):
    """Scalar loop oracle for the point-measure coefficient."""
    total = 0j
    for t in times:
        total += complex(np.cos(2 * np.pi * l * t / T), -np.sin(2 * np.pi * l * t / T))
    return total / T


class TestEmpiricalFourier:
    def test_event_at_origin_gives_unit_coefficients(self):
        eta = empirical_fourier([1e-300], 2, T=1.0)
        np.testing.assert_allclose(eta, np.ones(5), atol=1e-12)

    def test_empty_is_zero(self):
        eta = empirical_fourier(EventTimes([], 2.5), 3)
        assert np.all(eta == 0)

    def test_two_events_cancel_at_first_harmonic(self):
        eta = empirical_fourier([0.5, 1.5], 1, T=2.0)
        assert abs(eta[2]) < 1e-15

    def test_matches_scalar_loop(self, rng):
        t = np.sort(rng.uniform(0, 3.0, 17))
        eta = empirical_fourier(t, 5, T=3.0)
        for l in range(-5, 6):
            assert abs(eta[l + 5] - direct_coefficient(t, l, 3.0)) < 1e-13

    def test_ell0_must_be_positive(self):
        with pytest.raises(ValueError):
            empirical_fourier([0.1], 0, T=1.0)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(1e-3, 2.499), max_size=40), st.integers(1, 12))
    def test_symmetry_bound_and_count(self, times, ell0):
        T = 2.5
        eta = empirical_fourier(sorted(times), ell0, T=T)
        np.testing.assert_allclose(eta[::-1], np.conj(eta), atol=1e-13)
        assert np.all(np.abs(eta) <= len(times) / T + 1e-12)
        assert eta[ell0].real * T == pytest.approx(len(times), abs=1e-9)
        assert round(eta[ell0].real * T) == len(times)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0.1, 1.0), min_size=1, max_size=20), st.floats(0.0, 1.0))
    def test_shift_covariance(self, times, s):
        T = 2.5
        ell0 = 6
        base = empirical_fourier(sorted(times), ell0, T=T)
        moved = empirical_fourier(sorted(np.add(times, s)), ell0, T=T)
        phase = np.exp(-2j * np.pi * np.arange(-ell0, ell0 + 1) * s / T)
        np.testing.assert_allclose(moved, base * phase, atol=1e-12)


class TestBuildSpectral:
    def make(self):
        ev = ((EventTimes([0.1, 0.5, 0.9], 2.0), EventTimes([0.2, 0.3, 0.4, 1.0, 1.5], 2.0),
               EventTimes([], 2.0)),)
        return Dataset(ev, [[0.1], [0.2], [0.3]], 2.0)

    def test_count_weights(self):
        d = build_spectral(self.make(), 3, "count")
        np.testing.assert_array_equal(d.weights[0], [3, 5, 0])

    def test_uniform_weights(self):
        d = build_spectral(self.make(), 3, "uniform")
        np.testing.assert_array_equal(d.weights[0], [1, 1, 0])

    def test_empty_flagged_and_h_zero(self):
        d = build_spectral(self.make(), 3)
        np.testing.assert_array_equal(d.empty[0], [False, False, True])
        assert np.all(d.h[0, 2] == 0)
        np.testing.assert_allclose(d.h[0, 0, 3], 1 / 2.0)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            build_spectral(self.make(), 3, "bogus")


class TestValidate:
    def good(self):
        return Dataset(((EventTimes([0.5, 1.0], 2.0),),), [[0.2]], 2.0)

    def test_well_formed(self):
        assert validate(self.good()) == []

    def test_time_at_horizon(self):
        d = Dataset(((EventTimes([0.5, 2.0], 2.0),),), [[0.2]], 2.0)
        assert [i.kind for i in validate(d)] == ["time at horizon"]

    def test_shift_out_of_range(self):
        d = Dataset(((EventTimes([0.5], 2.0),),), [[3.0]], 2.0)
        assert [i.kind for i in validate(d)] == ["shift out of range"]

    def test_other_issues(self):
        d = Dataset(((EventTimes([0.0, 0.7, 0.3, 2.5], 2.0), EventTimes([0.4], 2.0)),
                     (EventTimes([], 2.0), EventTimes([], 2.0))), [[0.2], [0.4]], 2.0)
        kinds = {i.kind for i in validate(d)}
        assert {"time at origin", "unsorted", "time out of range", "tie with stimulus onset",
                "all-empty subject"} <= kinds

    def test_nudged_moves_boundary_events(self):
        d = Dataset(((EventTimes([0.0, 1.0, 2.0], 2.0),),), [[0.2]], 2.0)
        t = d.nudged().events[0][0].times
        assert 0 < t[0] < 1e-8 and 2.0 - 1e-8 < t[-1] < 2.0


class TestDatasetInvariants:
    def test_shape_checks(self):
        with pytest.raises(ValueError):
            Dataset(((EventTimes([0.1], 1.0),),), [[0.1], [0.2]], 1.0)
        with pytest.raises(ValueError):
            Dataset(((EventTimes([0.1], 1.0),), (EventTimes([0.1], 1.0), EventTimes([0.1], 1.0))),
                    [[0.1]], 1.0)
        with pytest.raises(ValueError):
            Dataset(((EventTimes([0.1], 2.0),),), [[0.1]], 1.0)


class TestFileFormats:
    def test_csv_roundtrip(self, tmp_path, rng):
        from conftest import random_dataset
        d = random_dataset(rng, n=3, R=2, M=2)
        write_csv(d, tmp_path / "e.csv", tmp_path / "s.csv")
        back = read_csv(tmp_path / "e.csv", tmp_path / "s.csv", d.T)
        np.testing.assert_array_equal(back.shifts, d.shifts)
        for a, b in zip(back.events, d.events):
            for x, y in zip(a, b):
                np.testing.assert_array_equal(x.times, y.times)

    def test_json_roundtrip(self, tmp_path, rng):
        from conftest import random_dataset
        d = random_dataset(rng, n=3, R=2, M=2)
        write_json(d, tmp_path / "d.json")
        back = load_dataset(tmp_path / "d.json")
        assert json.dumps(dataset_to_json(back)) == json.dumps(dataset_to_json(d))

    def test_json_layout(self):
        doc = {"T": 2.0, "M": 1, "trials": [
            {"id": "a", "shifts": [0.3], "subjects": [{"id": "s1", "events": [0.5]},
                                                     {"id": "s2", "events": []}]}]}
        d = dataset_from_json(doc)
        assert (d.n, d.R, d.M) == (2, 1, 1)
        assert d.counts().tolist() == [[1], [0]]

    def test_csv_needs_shifts(self, tmp_path):
        (tmp_path / "e.csv").write_text("subject_id,trial_id,event_time\n1,1,0.5\n")
        with pytest.raises(ValueError):
            load_dataset(tmp_path / "e.csv")
