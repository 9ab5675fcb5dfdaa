import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pfapf.grid import BOUNDARY, StateIndex, VoxelObservation, build_grid_spec
from pfapf.models import (
    ObservationParams,
    boundary_distance,
    build_transition_model,
    observation_log_weights,
    observation_weight,
    sample_next_state,
)


def oracle_transition(spec, sigma_s, sigma_z):
    """Dense table written out state by state, straight from the weight rule."""
    n = spec.n_states
    cells = [(i, j, k) for k in range(spec.n_d) for j in range(spec.n_h) for i in range(spec.n_w)]

    def g(x, s):
        return math.exp(-x * x / (2 * s * s))

    def to_boundary(c):
        i, j, k = c
        return min(i, spec.n_w - 1 - i, j, spec.n_h - 1 - j, k, spec.n_d - 1 - k) + 1

    t = np.zeros((n, n))
    for a, ca in enumerate(cells):
        for b, cb in enumerate(cells):
            d = sum(abs(x - y) for x, y in zip(ca, cb))
            t[a, b] = g(d, sigma_s) * g((cb[2] + 0.5) * spec.k_d, sigma_z)
        t[a, n - 1] = g(to_boundary(ca), sigma_s)
    for b, cb in enumerate(cells):
        t[n - 1, b] = g(to_boundary(cb), sigma_s) * g((cb[2] + 0.5) * spec.k_d, sigma_z)
    t[n - 1, n - 1] = 1.0
    return t / t.sum(axis=1, keepdims=True)


class TestTransition:
    @pytest.mark.parametrize("sigma_s,sigma_z", [(8.0, 0.4), (1.0, 0.2), (0.7, 5.0)])
    def test_matches_oracle(self, small_spec, sigma_s, sigma_z):
        model = build_transition_model(small_spec, sigma_s, sigma_z, truncation=0.0)
        np.testing.assert_allclose(model.dense(), oracle_transition(small_spec, sigma_s, sigma_z),
                                   rtol=1e-12, atol=1e-300)

    def test_rows_stochastic_up_to_10_cubed(self):
        spec = build_grid_spec(500, 500, 50, 50, 0.1, 10)
        model = build_transition_model(spec, 2.0, 0.4)
        t = model.dense()
        assert (t >= 0).all()
        np.testing.assert_allclose(t.sum(axis=1), 1.0, atol=1e-9)

    def test_boundary_reachable_both_ways(self, full_spec):
        model = build_transition_model(full_spec, 8.0, 0.4)
        b = full_spec.boundary
        for s in range(full_spec.n_states):
            cols = model.indices[model.indptr[s]:model.indptr[s + 1]]
            assert b in cols
        assert model.row(b)[: full_spec.n_voxels].sum() > 0
        untruncated = build_transition_model(build_grid_spec(150, 150, 50, 50, 0.1, 40), 8.0, 0.4, truncation=0.0)
        assert untruncated.row(untruncated.spec.boundary).min() > 0

    def test_truncation_changes_little(self):
        spec = build_grid_spec(320, 240, 50, 50, 0.1, 40)
        full = build_transition_model(spec, 8.0, 0.4, truncation=0.0)
        cut = build_transition_model(spec, 8.0, 0.4, truncation=1e-8)
        assert cut.nnz < full.nnz
        tv = 0.5 * np.abs(full.dense() - cut.dense()).sum(axis=1)
        assert tv.max() < 1e-6

    def test_equal_distance_equal_depth_symmetric(self, small_spec):
        t = build_transition_model(small_spec, 8.0, 0.4, truncation=0.0).dense()
        s = small_spec.linearize(1, 1, 1)
        assert t[s, small_spec.linearize(0, 1, 1)] == pytest.approx(t[s, small_spec.linearize(2, 1, 1)], rel=1e-14)
        assert t[s, small_spec.linearize(1, 0, 1)] == pytest.approx(t[s, small_spec.linearize(1, 2, 1)], rel=1e-14)

    def test_toward_vehicle_bias(self, small_spec):
        t = build_transition_model(small_spec, 8.0, 0.4, truncation=0.0).dense()
        s = small_spec.linearize(1, 1, 1)
        # both one step away, one nearer the camera
        assert t[s, small_spec.linearize(1, 1, 0)] > t[s, small_spec.linearize(1, 1, 2)]

    def test_monotone_in_manhattan_distance(self):
        spec = build_grid_spec(300, 250, 50, 50, 0.1, 5)
        t = build_transition_model(spec, 3.0, 0.4, truncation=0.0).dense()
        i, j, k = spec.delinearize(np.arange(spec.n_voxels))
        for s in range(spec.n_voxels):
            d = np.abs(i - i[s]) + np.abs(j - j[s]) + np.abs(k - k[s])
            for kk in range(spec.n_d):
                sel = k == kk
                order = np.argsort(d[sel], kind="stable")
                assert np.all(np.diff(t[s, :spec.n_voxels][sel][order]) <= 1e-15)

    def test_boundary_distance(self, small_spec):
        assert boundary_distance(small_spec, [small_spec.linearize(1, 1, 1)])[0] == 2
        assert boundary_distance(small_spec, [small_spec.linearize(0, 1, 2)])[0] == 1

    def test_rejects_bad_parameters(self, small_spec):
        with pytest.raises(ValueError):
            build_transition_model(small_spec, 0.0, 0.4)
        with pytest.raises(ValueError):
            build_transition_model(small_spec, 8.0, -1.0)
        with pytest.raises(ValueError):
            build_transition_model(small_spec, 8.0, 0.4, truncation=0.01)

    def test_disk_cache(self, small_spec, tmp_path):
        a = build_transition_model(small_spec, 8.0, 0.4, cache_dir=tmp_path)
        assert len(list(tmp_path.iterdir())) == 1
        b = build_transition_model(small_spec, 8.0, 0.4, cache_dir=tmp_path)
        np.testing.assert_array_equal(a.cdf, b.cdf)
        np.testing.assert_array_equal(a.indices, b.indices)
        c = build_transition_model(small_spec, 7.0, 0.4, cache_dir=tmp_path)
        assert len(list(tmp_path.iterdir())) == 2
        assert not np.array_equal(c.cdf, a.cdf)


class TestSampling:
    def test_cdf_matches_row(self, small_spec):
        model = build_transition_model(small_spec, 8.0, 0.4)
        for s in range(small_spec.n_states):
            lo, hi = model.indptr[s], model.indptr[s + 1]
            cols = model.indices[lo:hi]
            np.testing.assert_allclose(model.cdf[lo:hi], np.cumsum(model.row(s)[cols]), atol=1e-14)
            assert model.cdf[hi - 1] == 1.0

    def test_empirical_row(self):
        spec = build_grid_spec(150, 150, 50, 50, 0.1, 3)
        model = build_transition_model(spec, 1.5, 0.2)
        gen = np.random.default_rng(7)
        for s in (0, spec.linearize(1, 1, 1), spec.boundary):
            draws = model.sample(np.full(100_000, s), gen)
            freq = np.bincount(draws, minlength=spec.n_states) / draws.size
            assert 0.5 * np.abs(freq - model.row(s)).sum() < 0.01

    def test_tiny_spread_stays_local(self, small_spec):
        model = build_transition_model(small_spec, 1e-6, 0.4)
        gen = np.random.default_rng(3)
        s = StateIndex(1, 1, 1)
        for _ in range(200):
            nxt = sample_next_state(model, s, gen)
            assert not nxt.is_boundary
            assert abs(nxt.i - 1) + abs(nxt.j - 1) + abs(nxt.k - 1) <= 1

    def test_seeded(self, small_spec):
        model = build_transition_model(small_spec, 8.0, 0.4)
        states = np.arange(small_spec.n_states).repeat(50)
        a = model.sample(states, np.random.default_rng(11))
        b = model.sample(states, np.random.default_rng(11))
        np.testing.assert_array_equal(a, b)

    def test_linear_and_state_forms(self, small_spec):
        model = build_transition_model(small_spec, 8.0, 0.4)
        a = sample_next_state(model, BOUNDARY, np.random.default_rng(5))
        b = sample_next_state(model, small_spec.boundary, np.random.default_rng(5))
        assert a.linear(small_spec) == b


class TestObservation:
    def _obs(self, spec, counts):
        c = np.zeros(spec.n_voxels, dtype=np.int64)
        for s, n in counts.items():
            c[s] = n
        return VoxelObservation(c, spec)

    def test_default_sigma_o_ratio(self, full_spec):
        p = ObservationParams(300.0, 1.0, 2500)
        obs = self._obs(full_spec, {0: 1900, 1: 2500})
        assert observation_weight(p, 0, obs) / observation_weight(p, 1, obs) == pytest.approx(math.exp(-2), rel=1e-12)
        assert observation_weight(p, 1, obs) == 1.0

    def test_boundary_mode(self, full_spec):
        p = ObservationParams(300.0, 1.0, 2500)
        assert observation_weight(p, BOUNDARY, self._obs(full_spec, {})) == 1.0

    def test_state_index_form(self, full_spec):
        p = ObservationParams(300.0, 1.0, 2500)
        obs = self._obs(full_spec, {full_spec.linearize(2, 3, 4): 2000})
        assert observation_weight(p, StateIndex(2, 3, 4), obs) == observation_weight(
            p, full_spec.linearize(2, 3, 4), obs)

    def test_log_weights_agree(self, small_spec, rng):
        p = ObservationParams(170.0, 60.0, 2500)
        obs = VoxelObservation(rng.integers(0, 2500, small_spec.n_voxels), small_spec)
        lw = observation_log_weights(p, obs)
        w = [observation_weight(p, s, obs) for s in range(small_spec.n_states)]
        np.testing.assert_allclose(np.exp(lw), w, rtol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2499), st.floats(1.0, 1000.0))
    def test_in_grid_increasing(self, n, sigma_o):
        spec = build_grid_spec(100, 50, 50, 50, 1.0, 1)
        p = ObservationParams(sigma_o, 1.0, 2500)
        lo = observation_log_weights(p, VoxelObservation(np.array([n, 0]), spec))[0]
        hi = observation_log_weights(p, VoxelObservation(np.array([n + 1, 0]), spec))[0]
        assert hi > lo

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2499), st.floats(1.0, 100.0))
    def test_boundary_decreasing(self, n, sigma_n):
        spec = build_grid_spec(100, 50, 50, 50, 1.0, 1)
        p = ObservationParams(300.0, sigma_n, 2500)
        a = observation_log_weights(p, VoxelObservation(np.array([n, 0]), spec))[-1]
        b = observation_log_weights(p, VoxelObservation(np.array([n + 1, 0]), spec))[-1]
        assert b < a

    def test_outlier_suppression_ordering(self, full_spec):
        one = self._obs(full_spec, {123: 1})
        empty = self._obs(full_spec, {})
        tight = ObservationParams(300.0, 1.0, 2500)
        loose = ObservationParams(170.0, 60.0, 2500)
        f_tight = observation_weight(tight, BOUNDARY, one) / observation_weight(tight, BOUNDARY, empty)
        f_loose = observation_weight(loose, BOUNDARY, one) / observation_weight(loose, BOUNDARY, empty)
        assert f_tight == pytest.approx(math.exp(-0.5), rel=1e-12)
        assert f_loose == pytest.approx(math.exp(-1 / 7200), rel=1e-12)
        assert f_tight < f_loose < 1.0

    @pytest.mark.parametrize("args", [(0.0, 1.0, 1), (1.0, -1.0, 1), (1.0, 1.0, 0)])
    def test_params_validated(self, args):
        with pytest.raises(ValueError):
            ObservationParams(*args)
