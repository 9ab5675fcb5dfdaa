import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pfapf.camera import CameraIntrinsics
from pfapf.grid import (
    BOUNDARY,
    NO_RETURN,
    DepthImage,
    StateIndex,
    build_grid_spec,
    decode_raw,
    discretize,
    encode_raw,
    project_state_to_3d,
    read_depth_image,
    read_pfm,
    read_raw,
    voxel_centers,
    write_pfm,
    write_raw,
)


class TestGridSpec:
    def test_full_grid(self, full_spec):
        s = full_spec
        assert (s.n_w, s.n_h, s.n_d) == (13, 10, 40)
        assert s.max_depth == pytest.approx(4.0)
        assert s.n_voxels == 5200 and s.n_states == 5201 and s.boundary == 5200
        assert s.n_max == 2500

    def test_single_bin(self):
        s = build_grid_spec(640, 480, 640, 480, 1.0, 4)
        assert (s.n_w, s.n_h) == (1, 1)

    @pytest.mark.parametrize("args", [
        (640, 480, 50, 50, 0.1, 0),
        (640, 480, 0, 50, 0.1, 40),
        (640, 480, 50, 50, 0.0, 40),
        (640, 480, 50, 50, -0.1, 40),
        (640, 480, 700, 50, 0.1, 40),
        (640, 480, 50, 500, 0.1, 40),
        (640, 480, 50.5, 50, 0.1, 40),
    ])
    def test_rejects(self, args):
        with pytest.raises(ValueError):
            build_grid_spec(*args)

    def test_linearize_bijection(self):
        s = build_grid_spec(200, 150, 50, 50, 0.5, 3)
        seen = set()
        for k in range(s.n_d):
            for j in range(s.n_h):
                for i in range(s.n_w):
                    lin = StateIndex(i, j, k).linear(s)
                    assert StateIndex.from_linear(lin, s) == StateIndex(i, j, k)
                    seen.add(lin)
        assert seen == set(range(s.n_voxels))
        assert BOUNDARY.linear(s) == s.n_voxels
        assert StateIndex.from_linear(s.n_voxels, s).is_boundary

    def test_out_of_grid_index(self, small_spec):
        with pytest.raises(IndexError):
            StateIndex(3, 0, 0).linear(small_spec)
        with pytest.raises(IndexError):
            StateIndex.from_linear(small_spec.n_states, small_spec)


class TestDiscretize:
    def test_single_pixel(self, full_spec):
        d = np.zeros((480, 640), np.float32)
        d[25, 75] = 1.23
        obs = discretize(DepthImage(d), full_spec)
        assert obs.counts.sum() == 1
        assert obs.counts[full_spec.linearize(1, 0, 12)] == 1

    def test_all_invalid(self, full_spec):
        obs = discretize(DepthImage.empty(640, 480), full_spec)
        assert obs.counts.sum() == 0 and obs.max_count == 0

    def test_saturated_block(self, full_spec):
        d = np.zeros((480, 640), np.float32)
        d[:50, :50] = 0.05
        obs = discretize(DepthImage(d), full_spec)
        assert obs.counts[full_spec.linearize(0, 0, 0)] == 2500 == obs.max_count

    def test_invalid_encodings_and_horizon(self, full_spec):
        d = np.full((480, 640), 1.0, np.float32)
        d[0, :4] = [np.nan, np.inf, -1.0, 0.0]
        d[1, :3] = [4.0, 4.5, 3.999]
        obs = discretize(DepthImage(d), full_spec)
        assert obs.counts.sum() == 640 * 480 - 4 - 2

    def test_dimension_mismatch(self, full_spec):
        with pytest.raises(ValueError):
            discretize(DepthImage.empty(320, 240), full_spec)

    def test_partial_edge_voxels(self):
        s = build_grid_spec(120, 70, 50, 50, 0.5, 2)
        assert (s.n_w, s.n_h) == (3, 2)
        obs = discretize(DepthImage(np.full((70, 120), 0.2, np.float32)), s)
        assert obs.counts[s.linearize(2, 1, 0)] == 20 * 20
        assert obs.counts[s.linearize(0, 0, 0)] == 2500

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_every_pixel_accounted_for(self, seed):
        r = np.random.default_rng(seed)
        s = build_grid_spec(37, 23, 8, 5, 0.25, 6)
        d = r.uniform(-1.0, 2.0, (23, 37)).astype(np.float32)
        d[r.random(d.shape) < 0.1] = np.nan
        obs = discretize(DepthImage(d), s)
        invalid = int((~np.isfinite(d) | (d <= 0)).sum())
        beyond = int((np.isfinite(d) & (d >= s.max_depth)).sum())
        assert obs.counts.sum() + invalid + beyond == d.size
        assert obs.max_count <= s.n_max

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_shuffle_within_block(self, seed):
        r = np.random.default_rng(seed)
        s = build_grid_spec(40, 30, 10, 10, 0.5, 4)
        d = r.uniform(0.0, 2.5, (30, 40)).astype(np.float32)
        shuffled = d.copy()
        block = shuffled[10:20, 20:30].ravel()
        r.shuffle(block)
        shuffled[10:20, 20:30] = block.reshape(10, 10)
        a = discretize(DepthImage(d), s).counts
        b = discretize(DepthImage(shuffled), s).counts
        np.testing.assert_array_equal(a, b)


class TestProjection:
    def test_optical_axis(self):
        s = build_grid_spec(640, 480, 64, 48, 0.25, 8)
        intr = CameraIntrinsics(380, 380, 5 * 64 + 32, 5 * 48 + 24)
        p = project_state_to_3d(StateIndex(5, 5, 3), s, intr)
        np.testing.assert_allclose(p, [0.0, 0.0, 0.875], atol=1e-15)

    def test_off_axis_example(self):
        # voxel center at pixel (420, 240) and depth 1.9
        s = build_grid_spec(640, 480, 40, 32, 0.2, 20)
        intr = CameraIntrinsics(380, 380, 320, 240)
        assert s.voxel_pixel_center(10, 7) == (420.0, 240.0)
        assert s.voxel_depth(9) == pytest.approx(1.9)
        p = project_state_to_3d(StateIndex(10, 7, 9), s, intr)
        np.testing.assert_allclose(p, [0.5, 0.0, 1.9], rtol=1e-12, atol=1e-15)
        # substituting back into the projection
        assert 380 * p[0] / p[2] + 320 == pytest.approx(420.0)

    def test_boundary_not_projectable(self, full_spec):
        with pytest.raises(ValueError):
            project_state_to_3d(BOUNDARY, full_spec, CameraIntrinsics())
        with pytest.raises(ValueError):
            project_state_to_3d(full_spec.boundary, full_spec, CameraIntrinsics())

    def test_forward_projection_recovers_center(self, full_spec):
        intr = CameraIntrinsics()
        pts = voxel_centers(full_spec, intr)
        uv, z = intr.project(pts)
        i, j, k = full_spec.delinearize(np.arange(full_spec.n_voxels))
        u, v = full_spec.voxel_pixel_center(i, j)
        np.testing.assert_allclose(uv[:, 0], u, rtol=1e-9)
        np.testing.assert_allclose(uv[:, 1], v, rtol=1e-9)
        np.testing.assert_allclose(z, full_spec.voxel_depth(k), rtol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 639.99), st.floats(0, 479.99), st.floats(0.01, 3.99))
    def test_round_trip_within_half_voxel(self, u, v, depth):
        s = build_grid_spec(640, 480, 50, 50, 0.1, 40)
        intr = CameraIntrinsics()
        p = intr.deproject(u, v, depth)
        (pu, pv), pz = intr.project(p)
        i, j, k = int(pu // s.k_w), int(pv // s.k_h), int(pz // s.k_d)
        q = project_state_to_3d(StateIndex(i, j, k), s, intr)
        (qu, qv), qz = intr.project(q)
        assert abs(qu - u) <= s.k_w / 2 + 1e-9
        assert abs(qv - v) <= s.k_h / 2 + 1e-9
        assert abs(qz - depth) <= s.k_d / 2 + 1e-9


class TestFiles:
    def _image(self, rng):
        d = rng.uniform(0.1, 5.0, (7, 11)).astype(np.float32)
        d[0, 0] = NO_RETURN
        d[3, 4] = np.nan
        return DepthImage(d)

    def test_raw_layout(self, tmp_path, rng):
        img = self._image(rng)
        write_raw(tmp_path / "a.raw", img)
        blob = (tmp_path / "a.raw").read_bytes()
        assert struct.unpack("<4I", blob[:16]) == (11, 7, 0, 0)
        assert struct.unpack("<f", blob[16:20])[0] == 0.0
        assert struct.unpack("<f", blob[20:24])[0] == img.depths[0, 1]
        assert read_raw(tmp_path / "a.raw") == img

    def test_raw_bytes_round_trip(self, rng):
        img = self._image(rng)
        assert decode_raw(encode_raw(img)) == img

    def test_raw_truncated(self, tmp_path, rng):
        blob = encode_raw(self._image(rng))
        (tmp_path / "t.raw").write_bytes(blob[:-4])
        with pytest.raises(ValueError, match="t.raw"):
            read_raw(tmp_path / "t.raw")
        with pytest.raises(ValueError):
            decode_raw(blob[:10])

    def test_pfm_round_trip(self, tmp_path, rng):
        img = self._image(rng)
        write_pfm(tmp_path / "a.pfm", img)
        assert read_pfm(tmp_path / "a.pfm") == img
        assert read_depth_image(tmp_path / "a.pfm") == img

    def test_pfm_rows_bottom_to_top(self, tmp_path):
        # hand-written file: first stored row is the bottom image row
        body = struct.pack("<4f", 1.0, 2.0, 3.0, 4.0)
        (tmp_path / "h.pfm").write_bytes(b"Pf\n2 2\n-1.0\n" + body)
        np.testing.assert_array_equal(read_pfm(tmp_path / "h.pfm").depths, [[3.0, 4.0], [1.0, 2.0]])
        big = struct.pack(">4f", 1.0, 2.0, 3.0, 4.0)
        (tmp_path / "b.pfm").write_bytes(b"Pf\n2 2\n1.0\n" + big)
        np.testing.assert_array_equal(read_pfm(tmp_path / "b.pfm").depths, [[3.0, 4.0], [1.0, 2.0]])

    def test_pfm_rejects_color(self, tmp_path):
        (tmp_path / "c.pfm").write_bytes(b"PF\n1 1\n-1.0\n" + b"\0" * 12)
        with pytest.raises(ValueError, match="c.pfm"):
            read_pfm(tmp_path / "c.pfm")


class TestDepthImage:
    def test_read_only(self):
        img = DepthImage.empty(4, 3)
        with pytest.raises(ValueError):
            img.depths[0, 0] = 1.0

    def test_from_flat_size(self):
        with pytest.raises(ValueError):
            DepthImage.from_flat(4, 3, np.zeros(11))

    def test_closest_depth(self):
        img = DepthImage(np.array([[0.0, 2.0], [np.nan, 1.5]]))
        assert img.closest_depth() == 1.5
        assert math.isnan(DepthImage.empty(2, 2).closest_depth())
