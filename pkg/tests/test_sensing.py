import math

import numpy as np
import pytest

from voxelray.errors import DomainError, FormatError
from voxelray.sensing import (
    INVALID_LABEL,
    CameraIntrinsics,
    CameraPose,
    SemanticPointCloud,
    SensedFrame,
    back_project_frame,
    fuse,
    project_points,
    read_frames,
    to_world,
    write_frames,
)


def make_frame(depth, semantic=None, fx=500.0, fy=500.0, cx=None, cy=None, pose=None):
    depth = np.asarray(depth, dtype=np.float64)
    h, w = depth.shape
    k = CameraIntrinsics(
        fx=fx, fy=fy,
        cx=(w - 1) / 2 if cx is None else cx,
        cy=(h - 1) / 2 if cy is None else cy,
        width=w, height=h,
    )
    if semantic is None:
        semantic = np.zeros((h, w), dtype=np.uint16)
    if pose is None:
        pose = CameraPose(np.eye(3), np.zeros(3))
    return SensedFrame(depth, semantic, k, pose, {0: "wall"})


def rot_z(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


class TestBackProjection:
    def test_principal_point_pixel(self):
        depth = np.zeros((5, 5))
        depth[2, 2] = 2.0
        frame = make_frame(depth, cx=2.0, cy=2.0)
        pts, labels, n_invalid = back_project_frame(frame)
        assert pts.shape == (1, 3)
        np.testing.assert_allclose(pts[0], [0.0, 0.0, 2.0], atol=1e-12)
        assert n_invalid == 24

    def test_offset_pixel(self):
        # u = cx + 100 at fx = 500 and z = 2.5 lands at x = 0.5.
        depth = np.zeros((3, 301))
        depth[1, 250] = 2.5
        frame = make_frame(depth, fx=500.0, fy=500.0, cx=150.0, cy=1.0)
        pts, _, _ = back_project_frame(frame)
        np.testing.assert_allclose(pts[0], [0.5, 0.0, 2.5], atol=1e-12)

    def test_invalid_depth_skipped(self):
        depth = np.array([[0.0, 1.0], [np.nan, 2.0]])
        frame = make_frame(depth)
        pts, labels, n_invalid = back_project_frame(frame)
        assert len(pts) == 2
        assert n_invalid == 2

    def test_projection_round_trip(self, rng):
        k = CameraIntrinsics(fx=480.0, fy=500.0, cx=159.5, cy=119.5, width=320, height=240)
        depth = rng.uniform(0.5, 8.0, size=(240, 320))
        frame = SensedFrame(depth, np.zeros((240, 320), np.uint16), k,
                            CameraPose(np.eye(3), np.zeros(3)))
        pts, _, _ = back_project_frame(frame)
        uvz = project_points(pts, k)
        vs, us = np.nonzero(depth > 0)
        np.testing.assert_allclose(uvz[:, 0], us, rtol=1e-6, atol=1e-6)
        np.testing.assert_allclose(uvz[:, 1], vs, rtol=1e-6, atol=1e-6)
        np.testing.assert_allclose(uvz[:, 2], depth[vs, us], rtol=1e-12)

    def test_negative_depth_rejected(self):
        with pytest.raises(DomainError):
            make_frame(np.array([[-1.0]]))


class TestPose:
    def test_identity(self):
        pose = CameraPose(np.eye(3), np.zeros(3))
        pts = np.array([[1.0, 2.0, 3.0]])
        np.testing.assert_array_equal(to_world(pts, pose), pts)

    def test_pure_translation(self):
        pose = CameraPose(np.eye(3), [1.0, 2.0, 3.0])
        np.testing.assert_allclose(to_world(np.zeros((1, 3)), pose), [[1.0, 2.0, 3.0]])

    def test_rotation_90_about_z(self):
        pose = CameraPose(rot_z(math.pi / 2), np.zeros(3))
        out = to_world(np.array([[1.0, 0.0, 0.0]]), pose)
        np.testing.assert_allclose(out, [[0.0, 1.0, 0.0]], atol=1e-12)

    def test_non_orthonormal_rejected(self):
        with pytest.raises(DomainError):
            CameraPose(np.eye(3) * 1.01, np.zeros(3))
        with pytest.raises(DomainError):
            CameraPose(-np.eye(3), np.zeros(3))  # det = -1

    def test_inverse_round_trip(self, rng):
        pose = CameraPose(rot_z(0.7) @ np.array(
            [[1, 0, 0], [0, 0, -1], [0, 1, 0]], dtype=float), [0.3, -1.2, 2.5])
        pts = rng.uniform(-5, 5, size=(50, 3))
        back = pose.inverse().apply(pose.apply(pts))
        assert np.abs(back - pts).max() < 1e-9


class TestFuse:
    def test_single_frame_count(self):
        depth = np.full((4, 4), 2.0)
        cloud = fuse([make_frame(depth)])
        assert len(cloud) == 16

    def test_disjoint_frames_concatenate(self):
        f1 = make_frame(np.full((2, 2), 1.0), pose=CameraPose(np.eye(3), [0, 0, 0]))
        f2 = make_frame(np.full((3, 3), 1.0), pose=CameraPose(np.eye(3), [10, 0, 0]))
        cloud = fuse([f1, f2])
        assert len(cloud) == 4 + 9

    def test_budget_subsampling(self):
        frame = make_frame(np.full((4, 4), 2.0))
        cloud = fuse([frame, frame], max_points=16)
        assert len(cloud) == 16

    def test_order_independent_point_set(self):
        f1 = make_frame(np.full((2, 3), 1.5), pose=CameraPose(np.eye(3), [0, 0, 0]))
        f2 = make_frame(np.full((2, 3), 2.5), pose=CameraPose(rot_z(0.5), [1, 2, 0]))
        a = fuse([f1, f2]).points
        b = fuse([f2, f1]).points
        key = lambda p: np.lexsort((p[:, 2], p[:, 1], p[:, 0]))
        np.testing.assert_allclose(a[key(a)], b[key(b)])

    def test_empty_frame_list_rejected(self):
        with pytest.raises(DomainError):
            fuse([])

    def test_conflicting_label_names_rejected(self):
        f1 = make_frame(np.full((2, 2), 1.0))
        f2 = make_frame(np.full((2, 2), 1.0))
        f2.label_names = {0: "floor"}
        with pytest.raises(FormatError):
            fuse([f1, f2])


class TestFrameIO:
    def _frames(self, rng):
        frames = []
        for i in range(3):
            depth = rng.uniform(0.5, 6.0, size=(12, 16)).astype(np.float32)
            depth[0, i] = 0.0
            semantic = rng.integers(0, 3, size=(12, 16)).astype(np.uint16)
            pose = CameraPose(rot_z(0.3 * i), [i * 0.5, -i, 1.5])
            k = CameraIntrinsics(fx=20.0, fy=21.0, cx=7.5, cy=5.5, width=16, height=12)
            frames.append(SensedFrame(depth, semantic, k, pose,
                                      {0: "wall", 1: "floor", 2: "bed"}))
        return frames

    def test_round_trip(self, tmp_path, rng):
        frames = self._frames(rng)
        write_frames(tmp_path / "scan", frames)
        loaded = read_frames(tmp_path / "scan")
        assert len(loaded) == len(frames)
        for a, b in zip(frames, loaded):
            np.testing.assert_array_equal(a.depth.astype(np.float32), b.depth)
            np.testing.assert_array_equal(a.semantic, b.semantic)
            assert a.intrinsics == b.intrinsics
            np.testing.assert_allclose(a.pose.rotation, b.pose.rotation)
            np.testing.assert_allclose(a.pose.translation, b.pose.translation)
            assert b.label_names == {0: "wall", 1: "floor", 2: "bed"}

    def test_missing_directory_rejected(self, tmp_path):
        with pytest.raises(FormatError):
            read_frames(tmp_path / "nope")

    def test_truncated_raster_rejected(self, tmp_path, rng):
        frames = self._frames(rng)
        write_frames(tmp_path / "scan", frames)
        raster = tmp_path / "scan" / "view_0001_depth.f32"
        raster.write_bytes(raster.read_bytes()[:-8])
        with pytest.raises(FormatError):
            read_frames(tmp_path / "scan")

    def test_bad_sidecar_rejected(self, tmp_path, rng):
        frames = self._frames(rng)
        write_frames(tmp_path / "scan", frames)
        (tmp_path / "scan" / "view_0000.json").write_text('{"width": 16}')
        with pytest.raises(FormatError):
            read_frames(tmp_path / "scan")


class TestCloudValidation:
    def test_nonfinite_points_rejected(self):
        with pytest.raises(DomainError):
            SemanticPointCloud(np.array([[np.inf, 0, 0]]), np.array([0]))

    def test_length_mismatch_rejected(self):
        with pytest.raises(DomainError):
            SemanticPointCloud(np.zeros((2, 3)), np.array([0]))
