import numpy as np
import pytest

from anms_vo.core import (
    CameraRig,
    FeatureSet,
    Keypoint,
    PoseSE3,
    Trajectory,
    TrajectoryEntry,
    axis_angle_from_rotation,
    compose,
    inverse,
    path_length,
    rotation_angle,
    rotation_from_axis_angle,
)
from anms_vo.errors import ValidationError

from oracles import compose_matrices, invert_matrix, random_rotation


def random_pose(rng):
    return PoseSE3(random_rotation(rng), rng.normal(scale=5.0, size=3))


class TestPoseSE3:
    def test_identity_compose_identity(self):
        result = compose(PoseSE3.identity(), PoseSE3.identity())
        np.testing.assert_allclose(result.matrix(), np.eye(4), atol=0)

    def test_compose_with_inverse_is_identity(self, rng):
        for _ in range(20):
            t = random_pose(rng)
            r = compose(t, inverse(t))
            np.testing.assert_allclose(r.matrix(), np.eye(4), atol=1e-12)

    def test_compose_matches_matrix_oracle(self, rng):
        for _ in range(50):
            a, b = random_pose(rng), random_pose(rng)
            expected = compose_matrices(a.matrix(), b.matrix())
            np.testing.assert_allclose(compose(a, b).matrix(), expected, atol=1e-12)

    def test_inverse_identity(self):
        np.testing.assert_array_equal(inverse(PoseSE3.identity()).matrix(), np.eye(4))

    def test_inverse_is_involution(self, rng):
        for _ in range(20):
            t = random_pose(rng)
            np.testing.assert_allclose(inverse(inverse(t)).matrix(), t.matrix(), atol=1e-12)

    def test_inverse_matches_matrix_oracle(self, rng):
        for _ in range(50):
            t = random_pose(rng)
            np.testing.assert_allclose(inverse(t).matrix(), invert_matrix(t.matrix()), atol=1e-12)

    def test_composition_associative(self, rng):
        for _ in range(50):
            a, b, c = (random_pose(rng) for _ in range(3))
            left = compose(compose(a, b), c).matrix()
            right = compose(a, compose(b, c)).matrix()
            np.testing.assert_allclose(left, right, atol=1e-10)

    def test_rejects_non_orthonormal_rotation(self):
        bad = np.eye(3)
        bad[0, 0] = 1.0 + 1e-6
        with pytest.raises(ValidationError):
            PoseSE3(bad, np.zeros(3))

    def test_rejects_reflection(self):
        with pytest.raises(ValidationError):
            PoseSE3(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_compose_reorthonormalizes_drift(self, rng):
        # accumulate many products; the result must still pass validation
        t = PoseSE3.identity()
        step = PoseSE3(rotation_from_axis_angle([1e-3, 2e-3, -1e-3]), np.r_[0.01, 0, 0.02])
        for _ in range(2000):
            t = compose(t, step)
        drift = np.abs(t.rotation.T @ t.rotation - np.eye(3)).max()
        assert drift <= 1e-9

    def test_transform_points(self, rng):
        t = random_pose(rng)
        pts = rng.normal(size=(7, 3))
        expected = (t.rotation @ pts.T).T + t.translation
        np.testing.assert_allclose(t.transform(pts), expected, atol=1e-14)

    def test_pose_arrays_read_only(self, rng):
        t = random_pose(rng)
        with pytest.raises(ValueError):
            t.rotation[0, 0] = 2.0


class TestRotationConversions:
    def test_axis_angle_round_trip(self, rng):
        for _ in range(100):
            w = rng.normal(size=3)
            w = w / np.linalg.norm(w) * rng.uniform(1e-8, np.pi - 1e-6)
            r = rotation_from_axis_angle(w)
            np.testing.assert_allclose(axis_angle_from_rotation(r), w, atol=1e-9)

    def test_zero_angle(self):
        np.testing.assert_array_equal(rotation_from_axis_angle(np.zeros(3)), np.eye(3))
        np.testing.assert_array_equal(axis_angle_from_rotation(np.eye(3)), np.zeros(3))

    def test_angle_near_pi(self, rng):
        for _ in range(20):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            w = axis * (np.pi - 1e-9)
            r = rotation_from_axis_angle(w)
            w2 = axis_angle_from_rotation(r)
            np.testing.assert_allclose(rotation_from_axis_angle(w2), r, atol=1e-7)

    def test_rotation_angle_small(self):
        r = rotation_from_axis_angle([1e-7, 0, 0])
        assert rotation_angle(r) == pytest.approx(1e-7, rel=1e-6)


class TestKeypoint:
    def test_valid(self):
        kp = Keypoint(3.5, 7.25, 0.9)
        assert (kp.x, kp.y, kp.score) == (3.5, 7.25, 0.9)

    def test_rejects_nan(self):
        with pytest.raises(ValidationError):
            Keypoint(np.nan, 0.0, 1.0)

    def test_rejects_negative(self):
        with pytest.raises(ValidationError):
            Keypoint(-1.0, 0.0, 1.0)


class TestFeatureSet:
    def make(self, n=4, width=100, height=80, dim=8, **kw):
        rng = np.random.default_rng(0)
        xy = np.c_[rng.uniform(0, width - 1, n), rng.uniform(0, height - 1, n)]
        return FeatureSet(
            image_id="img", width=width, height=height,
            xy=xy, scores=rng.uniform(size=n),
            descriptors=rng.normal(size=(n, dim)).astype(np.float32), **kw,
        )

    def test_len_and_dim(self):
        fs = self.make(n=5, dim=16)
        assert len(fs) == 5
        assert fs.descriptor_dim == 16

    def test_rejects_out_of_bounds(self):
        with pytest.raises(ValidationError):
            FeatureSet("i", 10, 10, xy=[[10.0, 3.0]], scores=[1.0],
                       descriptors=np.zeros((1, 4), np.float32))

    def test_rejects_count_mismatch(self):
        with pytest.raises(ValidationError):
            FeatureSet("i", 10, 10, xy=[[1.0, 1.0]], scores=[1.0, 2.0],
                       descriptors=np.zeros((1, 4), np.float32))

    def test_normalized_flag_checked(self):
        with pytest.raises(ValidationError):
            FeatureSet("i", 10, 10, xy=[[1.0, 1.0]], scores=[1.0],
                       descriptors=2 * np.ones((1, 4), np.float32), normalized=True)

    def test_normalized_accepts_unit_rows(self):
        d = np.ones((1, 4), np.float32) / 2.0
        fs = FeatureSet("i", 10, 10, xy=[[1.0, 1.0]], scores=[1.0],
                        descriptors=d, normalized=True)
        assert fs.normalized

    def test_subset_preserves_order(self):
        fs = self.make(n=6)
        sub = fs.subset([4, 1, 3])
        np.testing.assert_array_equal(sub.xy, fs.xy[[4, 1, 3]])
        np.testing.assert_array_equal(sub.descriptors, fs.descriptors[[4, 1, 3]])

    def test_empty_allowed(self):
        fs = FeatureSet("i", 10, 10, xy=np.zeros((0, 2)), scores=np.zeros(0),
                        descriptors=np.zeros((0, 4), np.float32))
        assert len(fs) == 0


class TestCameraRig:
    def test_rejects_zero_baseline(self):
        with pytest.raises(ValidationError):
            CameraRig(fx=700, fy=700, cx=320, cy=240, baseline=0.0, width=640, height=480)

    def test_rejects_principal_point_outside(self):
        with pytest.raises(ValidationError):
            CameraRig(fx=700, fy=700, cx=700, cy=240, baseline=0.5, width=640, height=480)


class TestTrajectory:
    def test_strictly_increasing_enforced(self):
        e = TrajectoryEntry(0, PoseSE3.identity())
        with pytest.raises(ValidationError):
            Trajectory(entries=(e, TrajectoryEntry(0, PoseSE3.identity())))

    def test_positions_and_lookup(self, rng):
        poses = [random_pose(rng) for _ in range(4)]
        traj = Trajectory(tuple(TrajectoryEntry(i * 2, p) for i, p in enumerate(poses)))
        assert len(traj) == 4
        assert 4 in traj and 3 not in traj
        np.testing.assert_array_equal(traj.pose_at(2).matrix(), poses[1].matrix())
        assert traj.positions().shape == (4, 3)

    def test_path_length_straight_line(self):
        entries = tuple(
            TrajectoryEntry(i, PoseSE3(np.eye(3), np.r_[0.0, 0.0, 1.5 * i]))
            for i in range(5)
        )
        assert path_length(Trajectory(entries)) == pytest.approx(6.0, abs=1e-12)

    def test_timestamps(self):
        entries = (
            TrajectoryEntry(0, PoseSE3.identity(), 0.0),
            TrajectoryEntry(1, PoseSE3.identity(), 0.1),
        )
        assert Trajectory(entries).has_timestamps
        assert not Trajectory((TrajectoryEntry(0, PoseSE3.identity()),)).has_timestamps
