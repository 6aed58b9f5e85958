import base64

import numpy as np
import pytest
from fastapi.testclient import TestClient

from anms_vo.anms import select_top_n
from anms_vo.core import PoseSE3, Trajectory, TrajectoryEntry
from anms_vo.dataio import format_trajectory_text, parse_trajectory_text
from anms_vo.detector import decode_features, encode_features
from anms_vo.evalkit import ate_rmse
from anms_vo.odometry import run_sequence
from anms_vo.service import create_app
from anms_vo.synth import generate_scene, render_all, render_frame


@pytest.fixture()
def client():
    with TestClient(create_app()) as c:
        yield c


@pytest.fixture(scope="module")
def scene():
    return generate_scene(220, "circle", seed=51, n_frames=12, descriptor_dim=32)


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def rig_payload(rig) -> dict:
    return dict(fx=rig.fx, fy=rig.fy, cx=rig.cx, cy=rig.cy,
                baseline=rig.baseline, width=rig.width, height=rig.height)


def session_config(**kw) -> dict:
    cfg = {"anms_n": 200, "keyframe_min_tracked": 40, "keyframe_max_gap": 8,
           "ransac": {"min_inliers": 12}}
    cfg.update(kw)
    return cfg


class TestHealth:
    def test_health(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"


class TestAnmsEndpoint:
    def test_select_matches_library(self, client, scene):
        left, _, _ = render_frame(scene, 0)
        encoded = encode_features(left)
        payload = {"spft_b64": b64(encoded), "n": 50}
        body = client.post("/anms/select", json=payload).json()
        subset = decode_features(base64.b64decode(body["spft_b64"]))
        # the oracle selection runs on the same f32 payload the server saw
        as_sent = decode_features(encoded)
        expected = as_sent.subset(select_top_n(as_sent, 50).selected)
        np.testing.assert_array_equal(subset.xy, expected.xy)
        np.testing.assert_array_equal(subset.descriptors, expected.descriptors)
        assert body["stats"]["count"] == 50
        assert body["stats"]["min_pairwise_distance"] > 0

    def test_bad_base64_rejected(self, client):
        r = client.post("/anms/select", json={"spft_b64": "@@@", "n": 5})
        assert r.status_code == 400

    def test_bad_magic_rejected(self, client):
        r = client.post(
            "/anms/select", json={"spft_b64": b64(b"NOPE" + bytes(64)), "n": 5}
        )
        assert r.status_code == 400
        assert "magic" in r.json()["detail"]


class TestEvalEndpoint:
    def make_texts(self, rng, n=40):
        entries = []
        pos = np.zeros(3)
        for i in range(n):
            pos = pos + [0.0, 0.0, 1.0]
            entries.append(TrajectoryEntry(i, PoseSE3(np.eye(3), pos.copy())))
        gt = Trajectory(tuple(entries))
        noisy = Trajectory(
            tuple(
                TrajectoryEntry(
                    e.frame_index,
                    PoseSE3(e.pose.rotation, e.pose.translation + rng.normal(scale=0.05, size=3)),
                )
                for e in gt
            )
        )
        return format_trajectory_text(noisy, "kitti"), format_trajectory_text(gt, "kitti")

    def test_ate(self, client, rng):
        est, gt = self.make_texts(rng)
        body = client.post(
            "/eval", json={"est_text": est, "gt_text": gt, "mode": "ate"}
        ).json()
        expected = ate_rmse(
            parse_trajectory_text(est, "kitti"), parse_trajectory_text(gt, "kitti"), "rigid"
        )
        assert body["ate"]["rmse"] == pytest.approx(expected.rmse, rel=1e-9)

    def test_rpe(self, client, rng):
        est, gt = self.make_texts(rng)
        body = client.post(
            "/eval", json={"est_text": est, "gt_text": gt, "mode": "rpe", "delta": 2}
        ).json()
        assert body["rpe"]["delta"] == 2
        assert body["rpe"]["rmse"] > 0

    def test_kitti_identical_zero(self, client):
        entries = tuple(
            TrajectoryEntry(i, PoseSE3(np.eye(3), np.array([0.0, 0.0, float(i)])))
            for i in range(300)
        )
        text = format_trajectory_text(Trajectory(entries), "kitti")
        body = client.post(
            "/eval", json={"est_text": text, "gt_text": text, "mode": "kitti"}
        ).json()
        assert body["kitti"]["status"] == "ok"
        assert body["kitti"]["avg_translational_pct"] == pytest.approx(0.0, abs=1e-12)
        assert "start_frame" in body["kitti"]["csv"].splitlines()[0]

    def test_plot_svg_returned(self, client, rng):
        est, gt = self.make_texts(rng)
        body = client.post(
            "/eval",
            json={"est_text": est, "gt_text": gt, "mode": "ate", "plot": True},
        ).json()
        assert body["plot_svg"].startswith("<svg")
        assert body["plot_svg"].count("<polyline") == 2

    def test_malformed_trajectory_rejected(self, client):
        r = client.post(
            "/eval", json={"est_text": "1 2 3\n", "gt_text": "1 2 3\n", "mode": "ate"}
        )
        assert r.status_code == 400
        assert "12 values" in r.json()["detail"]

    def test_disjoint_association_rejected(self, client):
        a = format_trajectory_text(
            Trajectory((TrajectoryEntry(0, PoseSE3.identity()),)), "kitti"
        )
        r = client.post(
            "/eval",
            json={"est_text": a, "gt_text": a, "mode": "ate", "align": "rigid"},
        )
        assert r.status_code == 422


class TestSessions:
    def test_lifecycle_matches_run_sequence(self, client, scene):
        body = client.post(
            "/sessions",
            json={"config": session_config(), "rig": rig_payload(scene.rig), "seed": 3},
        ).json()
        sid = body["session_id"]
        # keep the exact f32 payloads so the library-side oracle can replay them
        sent = []
        for i, (left, right) in enumerate(render_all(scene)):
            left_bytes, right_bytes = encode_features(left), encode_features(right)
            sent.append((decode_features(left_bytes), decode_features(right_bytes)))
            r = client.post(
                f"/sessions/{sid}/frames",
                json={
                    "frame_index": i,
                    "left_spft_b64": b64(left_bytes),
                    "right_spft_b64": b64(right_bytes),
                },
            )
            assert r.status_code == 200
            assert r.json()["status"] == "OK"
        traj_body = client.get(f"/sessions/{sid}/trajectory").json()

        from anms_vo.config import PipelineConfig, RansacConfig

        cfg = PipelineConfig(anms_n=200, keyframe_min_tracked=40, keyframe_max_gap=8,
                             ransac=RansacConfig(min_inliers=12))
        expected = run_sequence(iter(sent), scene.rig, cfg, seed=3)
        got = parse_trajectory_text(traj_body["text"], "kitti")
        for a, b in zip(got, expected.trajectory):
            np.testing.assert_allclose(a.pose.matrix(), b.pose.matrix(), atol=1e-6)
        summary = client.get(f"/sessions/{sid}").json()
        assert summary["n_frames"] == len(scene.trajectory)
        assert summary["n_lost"] == 0
        assert client.delete(f"/sessions/{sid}").json()["deleted"]
        assert client.get(f"/sessions/{sid}").status_code == 404

    def test_calib_text_rig(self, client, scene, tmp_path):
        from anms_vo.dataio import write_kitti_calib

        path = tmp_path / "calib.txt"
        write_kitti_calib(scene.rig, path)
        body = client.post(
            "/sessions", json={"calib_text": path.read_text(), "seed": 0}
        )
        assert body.status_code == 200

    def test_requires_exactly_one_rig_source(self, client, scene):
        r = client.post("/sessions", json={"seed": 0})
        assert r.status_code == 400
        r = client.post(
            "/sessions",
            json={"rig": rig_payload(scene.rig), "calib_text": "x", "seed": 0},
        )
        assert r.status_code == 400

    def test_out_of_order_frame_rejected(self, client, scene):
        sid = client.post(
            "/sessions", json={"config": session_config(), "rig": rig_payload(scene.rig)}
        ).json()["session_id"]
        left, right, _ = render_frame(scene, 0)
        r = client.post(
            f"/sessions/{sid}/frames",
            json={
                "frame_index": 5,
                "left_spft_b64": b64(encode_features(left)),
                "right_spft_b64": b64(encode_features(right)),
            },
        )
        assert r.status_code == 409

    def test_empty_first_frame_is_422(self, client, scene):
        from anms_vo.core import FeatureSet

        sid = client.post(
            "/sessions", json={"config": session_config(), "rig": rig_payload(scene.rig)}
        ).json()["session_id"]
        empty = FeatureSet("e", scene.rig.width, scene.rig.height,
                           np.zeros((0, 2)), np.zeros(0), np.zeros((0, 32), np.float32))
        r = client.post(
            f"/sessions/{sid}/frames",
            json={
                "frame_index": 0,
                "left_spft_b64": b64(encode_features(empty)),
                "right_spft_b64": b64(encode_features(empty)),
            },
        )
        assert r.status_code == 422

    def test_unknown_session_404(self, client, scene):
        left, right, _ = render_frame(scene, 0)
        r = client.post(
            "/sessions/deadbeef/frames",
            json={
                "frame_index": 0,
                "left_spft_b64": b64(encode_features(left)),
                "right_spft_b64": b64(encode_features(right)),
            },
        )
        assert r.status_code == 404

    def test_invalid_config_rejected(self, client, scene):
        r = client.post(
            "/sessions",
            json={"config": {"ratio": 5.0}, "rig": rig_payload(scene.rig)},
        )
        assert r.status_code == 400
