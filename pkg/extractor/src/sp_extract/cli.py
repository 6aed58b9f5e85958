"""sp-extract: run a pretrained network over an image directory and write
one SPFT feature file per image."""

from __future__ import annotations

import argparse
import logging
import sys

from .extract import (
    DEFAULT_BORDER,
    DEFAULT_NMS_RADIUS,
    DEFAULT_POOL,
    DEFAULT_THRESHOLD,
    ExtractorConfig,
    ExtractorError,
    extract_directory,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sp-extract",
        description="Extract neural keypoints/descriptors to SPFT feature files",
    )
    parser.add_argument("--images", required=True, help="directory of input images")
    parser.add_argument("--weights", required=True, help="pretrained checkpoint (.pth)")
    parser.add_argument("--out", required=True, help="output directory for .spft files")
    parser.add_argument("--pool", type=int, default=DEFAULT_POOL,
                        help="keep at most this many keypoints per image")
    parser.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD,
                        help="heatmap detection threshold")
    parser.add_argument("--nms-radius", type=int, default=DEFAULT_NMS_RADIUS,
                        help="internal non-maximum suppression radius (px)")
    parser.add_argument("--border", type=int, default=DEFAULT_BORDER,
                        help="discard keypoints within this many px of the border")
    parser.add_argument("--suffix", default="",
                        help="appended to output stems (e.g. _left)")
    parser.add_argument("--device", default=None, help="torch device (default: auto)")
    parser.add_argument("--deterministic", action="store_true",
                        help="force reproducible output (CPU, single thread)")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    cfg = ExtractorConfig(
        pool=args.pool,
        threshold=args.threshold,
        nms_radius=args.nms_radius,
        border=args.border,
        device=args.device,
        deterministic=args.deterministic,
    )
    try:
        written, skipped = extract_directory(
            args.images, args.weights, args.out, cfg, suffix=args.suffix
        )
    except ExtractorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {written} feature files to {args.out}" +
          (f" ({skipped} images skipped)" if skipped else ""))
    return 1 if skipped else 0


if __name__ == "__main__":
    sys.exit(main())
