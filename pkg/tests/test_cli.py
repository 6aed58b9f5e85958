import xml.etree.ElementTree as ET

import numpy as np
import pytest

from anms_vo.anms import select_top_n
from anms_vo.cli import main
from anms_vo.config import PipelineConfig, load_config_file, parse_config_text
from anms_vo.core import path_length
from anms_vo.dataio import read_kitti_poses, write_trajectory
from anms_vo.detector import load_features, save_features
from anms_vo.errors import FormatError
from anms_vo.evalkit import ate_rmse
from anms_vo.synth import dump_scene, generate_scene, render_frame

CFG_TEXT = """
# tracking parameters for the synthetic fixtures
anms_n = 200
keyframe_min_tracked = 40
keyframe_max_gap = 8
min_inliers = 12
seed = 3
"""


@pytest.fixture(scope="module")
def scene():
    return generate_scene(220, "circle", seed=61, n_frames=10, descriptor_dim=32)


@pytest.fixture(scope="module")
def dataset(scene, tmp_path_factory):
    return dump_scene(scene, tmp_path_factory.mktemp("ds"))


class TestConfigFile:
    def test_parse_round_trip(self):
        cfg, seed = parse_config_text(CFG_TEXT)
        assert cfg.anms_n == 200
        assert cfg.ransac.min_inliers == 12
        assert cfg.keyframe_max_gap == 8
        assert seed == 3

    def test_defaults_from_empty(self):
        cfg, seed = parse_config_text("")
        assert cfg == PipelineConfig()
        assert seed == 0

    def test_unknown_key_rejected_with_line(self):
        with pytest.raises(FormatError) as exc:
            parse_config_text("anms_n = 10\nanms_m = 7\n")
        assert exc.value.line == 2

    def test_bad_value_rejected(self):
        with pytest.raises(FormatError):
            parse_config_text("ratio = high\n")

    def test_load_file(self, tmp_path):
        p = tmp_path / "cfg.txt"
        p.write_text("ratio = 0.6\nseed = 9\n")
        cfg, seed = load_config_file(p)
        assert cfg.ratio == 0.6 and seed == 9


class TestCmdAnms:
    def test_selection_matches_library(self, scene, tmp_path, capsys):
        left, _, _ = render_frame(scene, 0)
        src = tmp_path / "in.spft"
        out = tmp_path / "out.spft"
        save_features(left, src)
        assert main(["anms", "--features", str(src), "--n", "25", "--out", str(out)]) == 0
        stdout = capsys.readouterr().out
        assert "selected 25 keypoints" in stdout
        assert "radius quantiles" in stdout
        loaded_in = load_features(src)
        expected = loaded_in.subset(select_top_n(loaded_in, 25).selected)
        got = load_features(out)
        np.testing.assert_array_equal(got.xy, expected.xy)
        np.testing.assert_array_equal(got.descriptors, expected.descriptors)

    def test_n_zero_valid_empty_file(self, scene, tmp_path):
        left, _, _ = render_frame(scene, 0)
        src, out = tmp_path / "in.spft", tmp_path / "out.spft"
        save_features(left, src)
        assert main(["anms", "--features", str(src), "--n", "0", "--out", str(out)]) == 0
        assert len(load_features(out)) == 0

    def test_n_larger_than_count_returns_all(self, scene, tmp_path):
        left, _, _ = render_frame(scene, 0)
        src, out = tmp_path / "in.spft", tmp_path / "out.spft"
        save_features(left, src)
        assert main(["anms", "--features", str(src), "--n", "99999", "--out", str(out)]) == 0
        assert len(load_features(out)) == len(load_features(src))

    def test_missing_file_nonzero_exit(self, tmp_path, capsys):
        rc = main(["anms", "--features", str(tmp_path / "nope.spft"), "--n", "5",
                   "--out", str(tmp_path / "o.spft")])
        assert rc == 1
        assert "error" in capsys.readouterr().err

    def test_corrupt_file_nonzero_exit(self, tmp_path, capsys):
        bad = tmp_path / "bad.spft"
        bad.write_bytes(b"garbage")
        rc = main(["anms", "--features", str(bad), "--n", "5",
                   "--out", str(tmp_path / "o.spft")])
        assert rc == 1


class TestCmdRun:
    def test_spft_run_end_to_end(self, scene, dataset, tmp_path, capsys):
        cfg_file = tmp_path / "cfg.txt"
        cfg_file.write_text(CFG_TEXT)
        out = tmp_path / "traj.txt"
        rc = main([
            "run", "--dataset", str(dataset), "--source", "spft",
            "--config", str(cfg_file), "--out-traj", str(out),
        ])
        assert rc == 0
        stdout = capsys.readouterr().out
        assert "10 OK" in stdout and "LOST" in stdout
        est = read_kitti_poses(out)
        assert len(est) == 10
        gt = read_kitti_poses(dataset / "poses.txt")
        report = ate_rmse(est, gt, align="rigid")
        assert report.rmse < 0.001 * path_length(gt)

    def test_single_frame_dataset(self, scene, tmp_path):
        single = tmp_path / "one"
        single.mkdir()
        ds = dump_scene(generate_scene(200, "circle", seed=67, n_frames=1,
                                       descriptor_dim=32), single)
        out = tmp_path / "traj.txt"
        cfg_file = tmp_path / "cfg.txt"
        cfg_file.write_text(CFG_TEXT)
        rc = main(["run", "--dataset", str(ds), "--source", "spft",
                   "--config", str(cfg_file), "--out-traj", str(out)])
        assert rc == 0
        traj = read_kitti_poses(out)
        assert len(traj) == 1
        np.testing.assert_array_equal(traj.entries[0].pose.matrix(), np.eye(4))

    def test_missing_counterpart_fails_with_frame(self, scene, tmp_path, capsys):
        broken = tmp_path / "broken"
        broken.mkdir()
        left, right, _ = render_frame(scene, 0)
        save_features(left, broken / "000000_left.spft")
        save_features(right, broken / "000000_right.spft")
        save_features(left, broken / "000001_left.spft")
        import shutil

        shutil.copy(generate_calib(scene, tmp_path), broken / "calib.txt")
        rc = main(["run", "--dataset", str(broken), "--source", "spft",
                   "--out-traj", str(tmp_path / "t.txt")])
        assert rc == 1
        assert "000001" in capsys.readouterr().err

    def test_mismatched_descriptor_dims_clear_error(self, scene, tmp_path, capsys):
        mixed = tmp_path / "mixed"
        mixed.mkdir()
        import shutil

        shutil.copy(generate_calib(scene, tmp_path), mixed / "calib.txt")
        left, right, _ = render_frame(scene, 0)
        save_features(left, mixed / "000000_left.spft")
        save_features(right, mixed / "000000_right.spft")
        other = generate_scene(220, "circle", seed=61, n_frames=2, descriptor_dim=16)
        l2, r2, _ = render_frame(other, 1)
        save_features(l2, mixed / "000001_left.spft")
        save_features(r2, mixed / "000001_right.spft")
        cfg_file = tmp_path / "cfg.txt"
        cfg_file.write_text(CFG_TEXT)
        rc = main(["run", "--dataset", str(mixed), "--source", "spft",
                   "--config", str(cfg_file), "--out-traj", str(tmp_path / "t.txt")])
        assert rc == 1
        assert "dimension" in capsys.readouterr().err

    def test_classical_source_on_rendered_images(self, tmp_path):
        # tiny image dataset: textured random images; tracking will not be
        # stable but extraction and the full plumbing must run
        rng = np.random.default_rng(0)
        from PIL import Image

        from anms_vo.core import CameraRig
        from anms_vo.dataio import write_kitti_calib

        ds = tmp_path / "imgds"
        (ds / "image_0").mkdir(parents=True)
        (ds / "image_1").mkdir()
        rig = CameraRig(fx=120.0, fy=120.0, cx=80.0, cy=60.0, baseline=0.3,
                        width=160, height=120)
        write_kitti_calib(rig, ds / "calib.txt")
        # right view = scene shifted 8 px left => uniform +8 px disparity
        base = (rng.uniform(0, 255, (120, 160 + 16))).astype(np.uint8)
        for i in range(2):
            Image.fromarray(base[:, 8:168]).save(ds / "image_0" / f"{i:06d}.png")
            Image.fromarray(base[:, 16:176]).save(ds / "image_1" / f"{i:06d}.png")
        cfg_file = tmp_path / "cfg.txt"
        cfg_file.write_text("anms_n = 150\nmin_inliers = 8\nkeyframe_min_tracked = 20\n")
        out = tmp_path / "t.txt"
        rc = main(["run", "--dataset", str(ds), "--source", "classical",
                   "--config", str(cfg_file), "--out-traj", str(out)])
        assert rc == 0
        assert len(read_kitti_poses(out)) == 2


def generate_calib(scene, tmp_path):
    from anms_vo.dataio import write_kitti_calib

    path = tmp_path / "calib_src.txt"
    write_kitti_calib(scene.rig, path)
    return path


class TestCmdEval:
    @pytest.fixture()
    def traj_files(self, scene, tmp_path):
        from anms_vo.core import PoseSE3, Trajectory, TrajectoryEntry

        entries = tuple(
            TrajectoryEntry(i, PoseSE3(np.eye(3), np.array([0.0, 0.0, float(i)])))
            for i in range(300)
        )
        gt = Trajectory(entries)
        est_path, gt_path = tmp_path / "est.txt", tmp_path / "gt.txt"
        write_trajectory(gt, est_path, "kitti")
        write_trajectory(gt, gt_path, "kitti")
        return est_path, gt_path

    def test_kitti_mode_identical_zero(self, traj_files, capsys):
        est, gt = traj_files
        rc = main(["eval", "--est", str(est), "--gt", str(gt), "--mode", "kitti"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "average" in out
        assert "0.0000" in out

    def test_ate_mode(self, traj_files, capsys):
        est, gt = traj_files
        rc = main(["eval", "--est", str(est), "--gt", str(gt), "--mode", "ate"])
        assert rc == 0
        assert "ATE RMSE: 0.000000" in capsys.readouterr().out

    def test_rpe_mode(self, traj_files, capsys):
        est, gt = traj_files
        rc = main(["eval", "--est", str(est), "--gt", str(gt), "--mode", "rpe",
                   "--delta", "2"])
        assert rc == 0
        assert "RPE RMSE" in capsys.readouterr().out

    def test_plot_is_wellformed_svg_with_two_polylines(self, traj_files, tmp_path):
        est, gt = traj_files
        svg = tmp_path / "plot.svg"
        rc = main(["eval", "--est", str(est), "--gt", str(gt), "--mode", "ate",
                   "--plot", str(svg)])
        assert rc == 0
        root = ET.parse(svg).getroot()
        polylines = root.findall(".//{http://www.w3.org/2000/svg}polyline")
        assert len(polylines) == 2

    def test_csv_output(self, traj_files, tmp_path):
        est, gt = traj_files
        csv = tmp_path / "seg.csv"
        rc = main(["eval", "--est", str(est), "--gt", str(gt), "--mode", "kitti",
                   "--csv", str(csv)])
        assert rc == 0
        assert csv.read_text().startswith("start_frame,")

    def test_association_failure_diagnostic(self, tmp_path, capsys):
        a = tmp_path / "a.txt"
        a.write_text("1 0 0 0 0 1 0 0 0 0 1 0\n")
        rc = main(["eval", "--est", str(a), "--gt", str(a), "--mode", "ate"])
        assert rc == 1
        assert "error" in capsys.readouterr().err


class TestDriftFixture:
    def test_cli_matches_closed_form_yaw_drift(self, tmp_path, capsys):
        # 0.001 rad/m of yaw drift must read 0.0573 deg/m through the CLI too
        from anms_vo.core import PoseSE3, Trajectory, TrajectoryEntry
        from anms_vo.evalkit import yaw_rotation

        n = 900
        gt = Trajectory(
            tuple(
                TrajectoryEntry(i, PoseSE3(np.eye(3), np.array([0.0, 0.0, float(i)])))
                for i in range(n)
            )
        )
        est = Trajectory(
            tuple(
                TrajectoryEntry(
                    i, PoseSE3(yaw_rotation(0.001 * i), np.array([0.0, 0.0, float(i)]))
                )
                for i in range(n)
            )
        )
        est_path, gt_path = tmp_path / "est.txt", tmp_path / "gt.txt"
        write_trajectory(est, est_path, "kitti")
        write_trajectory(gt, gt_path, "kitti")
        rc = main(["eval", "--est", str(est_path), "--gt", str(gt_path), "--mode", "kitti"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "0.057296" in out
