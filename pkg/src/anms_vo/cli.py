"""Command-line interface: a thin client over the tracking/evaluation service.

Every subcommand speaks to the service API; by default the app is mounted
in-process (no server required), while --server points the same calls at a
running instance. Data goes to stdout and output files; diagnostics go to
stderr; the exit code is 0 only when the command succeeded.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .client import ServiceClient
from .config import POOL_FACTOR, load_config_file
from .errors import AnmsVoError
from .utils import worker_count


def _client(args) -> ServiceClient:
    return ServiceClient(base_url=args.server)


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def _fmt_stat(value) -> str:
    return "inf" if value is None else f"{value:.3f}"


# ---------------------------------------------------------------------------
# anms


def cmd_anms(args) -> int:
    data = Path(args.features).read_bytes()
    with _client(args) as client:
        selected, stats = client.anms_select(data, args.n)
    Path(args.out).write_bytes(selected)
    print(f"selected {stats['count']} keypoints -> {args.out}")
    if stats["min_pairwise_distance"] is not None:
        print(f"min pairwise distance: {stats['min_pairwise_distance']:.3f} px")
    if stats["radius_quantiles"]:
        q = stats["radius_quantiles"]
        print(
            "radius quantiles (px): "
            + " ".join(f"{k}={_fmt_stat(q[k])}" for k in ("min", "p25", "p50", "p75", "max"))
        )
    return 0


# ---------------------------------------------------------------------------
# run


def _load_config(args):
    if args.config:
        cfg, seed = load_config_file(args.config)
    else:
        from .config import PipelineConfig

        cfg, seed = PipelineConfig(), 0
    if args.seed is not None:
        seed = args.seed
    return cfg, seed


def _config_payload(cfg) -> dict:
    return {
        "anms_n": cfg.anms_n,
        "ratio": cfg.ratio,
        "mutual": cfg.mutual,
        "max_depth": cfg.max_depth,
        "epipolar_tolerance": cfg.epipolar_tolerance,
        "ransac": {
            "reproj_threshold": cfg.ransac.reproj_threshold,
            "confidence": cfg.ransac.confidence,
            "max_iterations": cfg.ransac.max_iterations,
            "min_inliers": cfg.ransac.min_inliers,
        },
        "keyframe_min_tracked": cfg.keyframe_min_tracked,
        "keyframe_max_gap": cfg.keyframe_max_gap,
    }


def _spft_frames(dataset: Path):
    from .dataio import scan_feature_dir

    for _, left, right in scan_feature_dir(dataset):
        yield left.read_bytes(), right.read_bytes()


def _classical_frames(dataset: Path, pool_size: int):
    import numpy as np
    from PIL import Image

    from .detector import detect_classical, encode_features

    left_dir, right_dir = dataset / "image_0", dataset / "image_1"
    for d in (left_dir, right_dir):
        if not d.is_dir():
            raise AnmsVoError(f"classical source needs {d} (KITTI image layout)")
    exts = {".png", ".jpg", ".jpeg", ".pgm", ".bmp"}
    lefts = sorted(p for p in left_dir.iterdir() if p.suffix.lower() in exts)
    for left_path in lefts:
        right_path = right_dir / left_path.name
        if not right_path.exists():
            raise AnmsVoError(f"missing right image for frame {left_path.stem}")
        frames = []
        for path, side in ((left_path, "left"), (right_path, "right")):
            img = np.asarray(Image.open(path).convert("L"), dtype=np.float64)
            features = detect_classical(img, pool_size, image_id=f"{path.stem}_{side}")
            frames.append(encode_features(features))
        yield frames[0], frames[1]


def cmd_run(args) -> int:
    dataset = Path(args.dataset)
    calib_path = dataset / "calib.txt"
    if not calib_path.exists():
        return _fail(f"no calib.txt in {dataset}")
    cfg, seed = _load_config(args)
    if args.source == "spft":
        frames = _spft_frames(dataset)
    else:
        frames = _classical_frames(dataset, POOL_FACTOR * cfg.anms_n)

    with _client(args) as client:
        session = client.create_session(
            config=_config_payload(cfg),
            calib_text=calib_path.read_text(encoding="utf-8"),
            seed=seed,
        )
        n = 0
        elapsed = []
        try:
            import time

            for i, (left_bytes, right_bytes) in enumerate(frames):
                start = time.perf_counter()
                client.push_frame(session, i, left_bytes, right_bytes)
                elapsed.append(time.perf_counter() - start)
                n += 1
            if n == 0:
                return _fail(f"no stereo frames found in {dataset}")
            summary = client.session_summary(session)
            body = client.session_trajectory(session, args.format)
        finally:
            client.delete_session(session)

    Path(args.out_traj).write_text(body["text"], encoding="utf-8")
    statuses = body["statuses"]
    ok = sum(1 for s in statuses if s == "OK")
    mean_ms = 1000.0 * sum(elapsed) / len(elapsed)
    print(f"tracked {n} frames: {ok} OK, {summary['n_lost']} LOST")
    print(f"mean inliers: {summary['mean_inliers']:.1f}")
    print(f"mean track time: {mean_ms:.1f} ms/frame (workers <= {worker_count()})")
    print(f"trajectory ({args.format}) -> {args.out_traj}")
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    est_text = Path(args.est).read_text(encoding="utf-8")
    gt_text = Path(args.gt).read_text(encoding="utf-8")
    with _client(args) as client:
        body = client.evaluate(
            est_text,
            gt_text,
            mode=args.mode,
            est_format=args.est_format,
            gt_format=args.gt_format,
            align=args.align,
            delta=args.delta,
            plot=args.plot is not None,
        )
    if args.mode == "ate":
        ate = body["ate"]
        print(f"ATE RMSE: {ate['rmse']:.6f} m over {ate['n_pairs']} poses (align={ate['align']})")
    elif args.mode == "rpe":
        r = body["rpe"]
        print(f"RPE RMSE: {r['rmse']:.6f} m over {r['n_pairs']} pairs (delta={r['delta']})")
    else:
        k = body["kitti"]
        if k["status"] != "ok":
            print(f"status: {k['status']}")
        else:
            print(f"{'length [m]':>10}  {'trans [%]':>10}  {'rot [deg/m]':>12}")
            for length in sorted(k["by_length"], key=float):
                t, r = k["by_length"][length]
                print(f"{float(length):>10.0f}  {t:>10.4f}  {r:>12.6f}")
            print(
                f"{'average':>10}  {k['avg_translational_pct']:>10.4f}  "
                f"{k['avg_rotational_deg_per_m']:>12.6f}"
            )
        if args.csv:
            Path(args.csv).write_text(k["csv"], encoding="utf-8")
            print(f"per-segment csv -> {args.csv}", file=sys.stderr)
    if args.plot is not None:
        Path(args.plot).write_text(body["plot_svg"], encoding="utf-8")
        print(f"plot -> {args.plot}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# serve


def cmd_serve(args) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anms-vo",
        description="Stereo visual odometry with adaptive keypoint suppression",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("anms", help="spatially uniform top-N keypoint selection")
    p.add_argument("--features", required=True, help="input SPFT feature file")
    p.add_argument("--n", type=int, required=True, help="number of keypoints to keep")
    p.add_argument("--out", required=True, help="output SPFT file")
    p.add_argument("--server", default=None, help="service URL (default: in-process)")
    p.set_defaults(func=cmd_anms)

    p = sub.add_parser("run", help="track a stereo sequence")
    p.add_argument("--dataset", required=True, help="dataset directory with calib.txt")
    p.add_argument("--source", choices=("classical", "spft"), default="spft")
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--out-traj", required=True, help="output trajectory file")
    p.add_argument("--format", choices=("kitti", "tum"), default="kitti")
    p.add_argument("--seed", type=int, default=None, help="overrides the config file seed")
    p.add_argument("--server", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="compare an estimated trajectory to ground truth")
    p.add_argument("--est", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--mode", choices=("ate", "rpe", "kitti"), required=True)
    p.add_argument("--est-format", choices=("kitti", "tum"), default="kitti")
    p.add_argument("--gt-format", choices=("kitti", "tum"), default="kitti")
    p.add_argument("--align", choices=("rigid", "none"), default="rigid")
    p.add_argument("--delta", type=int, default=1)
    p.add_argument("--csv", default=None, help="write per-segment errors as CSV")
    p.add_argument("--plot", default=None, help="write an XZ trajectory SVG")
    p.add_argument("--server", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AnmsVoError as exc:
        return _fail(str(exc))
    except FileNotFoundError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
