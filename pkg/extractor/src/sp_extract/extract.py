"""Batch feature extraction: images in, one SPFT file per image out.

Keypoints are the strongest heatmap peaks surviving the network's internal
non-maximum suppression, capped at an oversized candidate pool (spatial
selection is the downstream consumer's job). Descriptors are sampled
bilinearly from the coarse descriptor map at the keypoint locations and
L2-normalized. Images whose sides are not divisible by the network stride
are resized for inference only; coordinates are reported in original pixel
space so calibration stays valid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import spft
from .network import CELL, SuperPointNet, heatmap_from_semi, sample_descriptors, simple_nms

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".pgm", ".ppm", ".bmp", ".tif", ".tiff"}

# reference-implementation defaults
DEFAULT_POOL = 4000
DEFAULT_THRESHOLD = 0.015
DEFAULT_NMS_RADIUS = 4
DEFAULT_BORDER = 4


class ExtractorError(Exception):
    pass


@dataclass
class ExtractorConfig:
    pool: int = DEFAULT_POOL
    threshold: float = DEFAULT_THRESHOLD
    nms_radius: int = DEFAULT_NMS_RADIUS
    border: int = DEFAULT_BORDER
    device: str | None = None  # None = auto
    deterministic: bool = False


def load_network(weights_path, device: torch.device) -> SuperPointNet:
    """Load published-architecture weights; any mismatch is fatal."""
    net = SuperPointNet()
    try:
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise ExtractorError(f"cannot read weights {weights_path}: {exc}") from exc
    if not isinstance(state, dict):
        raise ExtractorError(f"{weights_path} does not contain a state dict")
    try:
        net.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise ExtractorError(
            f"weights {weights_path} do not match the SuperPoint architecture: {exc}"
        ) from exc
    net.eval()
    return net.to(device)


def pick_device(cfg: ExtractorConfig) -> torch.device:
    if cfg.deterministic:
        return torch.device("cpu")
    if cfg.device:
        return torch.device(cfg.device)
    return torch.device("cuda" if torch.cuda.is_available() else "cpu")


def load_grayscale(path) -> np.ndarray:
    """Image as float32 grayscale in [0, 1]."""
    with Image.open(path) as img:
        gray = img.convert("L")
        return np.asarray(gray, dtype=np.float32) / 255.0


def extract_image(net: SuperPointNet, image: np.ndarray, cfg: ExtractorConfig,
                  device: torch.device):
    """(xy (n, 2), scores (n,), descriptors (n, 256)) in original pixel space."""
    h, w = image.shape
    nh, nw = (h // CELL) * CELL, (w // CELL) * CELL
    if nh == 0 or nw == 0:
        raise ExtractorError(f"image {w}x{h} smaller than the network stride {CELL}")
    tensor = torch.from_numpy(image)[None, None].to(device)
    if (nh, nw) != (h, w):
        tensor = torch.nn.functional.interpolate(
            tensor, size=(nh, nw), mode="bilinear", align_corners=False
        )
    with torch.no_grad():
        semi, desc_map = net(tensor)
        heat = heatmap_from_semi(semi)
        nms = simple_nms(heat[:, None], cfg.nms_radius)[0, 0]

        keep = nms > cfg.threshold
        if cfg.border > 0:
            mask = torch.zeros_like(keep)
            mask[cfg.border : nh - cfg.border, cfg.border : nw - cfg.border] = True
            keep &= mask
        ys, xs = torch.nonzero(keep, as_tuple=True)
        scores = nms[ys, xs]
        if len(scores) > cfg.pool:
            scores, order = torch.topk(scores, cfg.pool)
            ys, xs = ys[order], xs[order]
        pts = torch.stack([xs, ys], dim=1).float()
        descriptors = (
            sample_descriptors(pts, desc_map)
            if len(pts)
            else torch.zeros((0, desc_map.shape[1]))
        )

    xy = pts.cpu().numpy().astype(np.float64)
    scores = scores.cpu().numpy().astype(np.float64)
    descriptors = descriptors.cpu().numpy().astype(np.float32)
    # map back to original pixel space when inference ran on a resized image
    if (nh, nw) != (h, w):
        xy[:, 0] *= w / nw
        xy[:, 1] *= h / nh
        xy[:, 0] = np.clip(xy[:, 0], 0.0, w - 1e-3)
        xy[:, 1] = np.clip(xy[:, 1], 0.0, h - 1e-3)
    # stable output order: score desc, then y, x
    order = np.lexsort((xy[:, 0], xy[:, 1], -scores))
    return xy[order], scores[order], descriptors[order]


def extract_directory(images_dir, weights_path, out_dir, cfg: ExtractorConfig,
                      suffix: str = "") -> tuple[int, int]:
    """Run extraction over every image in a directory.

    Returns (written, skipped); unreadable images are skipped with a
    warning, a weights/architecture mismatch aborts immediately.
    """
    images_dir = Path(images_dir)
    out_dir = Path(out_dir)
    if not images_dir.is_dir():
        raise ExtractorError(f"{images_dir} is not a directory")
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.deterministic:
        torch.manual_seed(0)
        torch.set_num_threads(1)
    device = pick_device(cfg)
    net = load_network(weights_path, device)

    paths = sorted(p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    written = skipped = 0
    for path in paths:
        try:
            image = load_grayscale(path)
            xy, scores, descriptors = extract_image(net, image, cfg, device)
        except ExtractorError:
            raise
        except Exception as exc:
            log.warning("skipping %s: %s", path, exc)
            skipped += 1
            continue
        h, w = image.shape
        spft.write(
            out_dir / f"{path.stem}{suffix}.spft", w, h, xy, scores, descriptors,
            normalized=True,
        )
        written += 1
    return written, skipped
