"""Feature sources: the pluggable interface, a classical Harris detector used
as a neural-free stand-in, and the SPFT binary feature-file format.

SPFT layout (little-endian):
  header  magic "SPFT" (4 bytes), version u32 = 1, width u32, height u32,
          count u32, dim u32, normalized u8, 3 pad bytes
  body    count records of (x f32, y f32, score f32), then
          count x dim f32 descriptors, row-major
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np
from scipy import ndimage

from .core import FeatureSet
from .errors import FormatError, ValidationError

MAGIC = b"SPFT"
VERSION = 1
PATCH = 16  # descriptor patch side; 16*16 = 256 matches the neural descriptor dim

_HEADER = struct.Struct("<4sIIIIIB3x")


@runtime_checkable
class FeatureSource(Protocol):
    """Anything that turns an image (or its id) into a FeatureSet."""

    def extract(self, image: np.ndarray, image_id: str) -> FeatureSet: ...


def harris_response(image: np.ndarray, k: float = 0.04, sigma: float = 1.0) -> np.ndarray:
    """Harris corner response map of a grayscale image."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValidationError(f"expected a single-channel 2D image, got shape {img.shape}")
    if img.size and img.max() > 1.0:
        img = img / 255.0
    ix = ndimage.sobel(img, axis=1, mode="nearest")
    iy = ndimage.sobel(img, axis=0, mode="nearest")
    sxx = ndimage.gaussian_filter(ix * ix, sigma, mode="nearest")
    syy = ndimage.gaussian_filter(iy * iy, sigma, mode="nearest")
    sxy = ndimage.gaussian_filter(ix * iy, sigma, mode="nearest")
    det = sxx * syy - sxy * sxy
    trace = sxx + syy
    return det - k * trace * trace


def _local_maxima(response: np.ndarray):
    """(ys, xs) of 3x3 local maxima with positive response.

    Adjacent maxima are necessarily exactly equal (each must dominate the
    other's neighborhood), so connected plateaus collapse to their first
    scan-order cell.
    """
    footprint_max = ndimage.maximum_filter(response, size=3, mode="nearest")
    threshold = 1e-8 * max(response.max(), 0.0)
    mask = (response >= footprint_max) & (response > threshold)
    labels, n_labels = ndimage.label(mask, structure=np.ones((3, 3), bool))
    ys, xs = np.nonzero(mask)  # row-major scan order
    if n_labels and len(ys):
        first = np.unique(labels[ys, xs], return_index=True)[1]
        ys, xs = ys[first], xs[first]
    return ys, xs


def detect_classical(image: np.ndarray, pool_size: int, image_id: str = "") -> FeatureSet:
    """Harris keypoints with unit-norm 16x16 patch descriptors (dim 256).

    Returns the strongest `pool_size` candidates (the oversized pre-selection
    pool); spatial selection is a separate step. A uniform image yields an
    empty FeatureSet; an image smaller than the patch raises.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValidationError(f"expected a single-channel 2D image, got shape {img.shape}")
    h, w = img.shape
    if h < PATCH or w < PATCH:
        raise ValidationError(f"image {w}x{h} smaller than the {PATCH}x{PATCH} descriptor patch")
    if pool_size < 0:
        raise ValidationError(f"pool_size must be >= 0, got {pool_size}")
    if img.size and img.max() > 1.0:
        img = img / 255.0

    response = harris_response(img)
    half = PATCH // 2
    ys, xs = _local_maxima(response)
    # keep the full patch inside the image
    inside = (ys >= half) & (ys <= h - half) & (xs >= half) & (xs <= w - half)
    ys, xs = ys[inside], xs[inside]
    scores = response[ys, xs]

    order = np.lexsort((xs, ys, -scores))[:pool_size]
    xs, ys, scores = xs[order], ys[order], scores[order]

    descriptors = np.empty((len(xs), PATCH * PATCH), dtype=np.float32)
    keep = np.ones(len(xs), dtype=bool)
    for i, (x, y) in enumerate(zip(xs, ys)):
        patch = img[y - half : y + half, x - half : x + half].reshape(-1)
        norm = np.linalg.norm(patch)
        if norm < 1e-12:
            keep[i] = False
            continue
        descriptors[i] = (patch / norm).astype(np.float32)

    return FeatureSet(
        image_id=image_id,
        width=w,
        height=h,
        xy=np.c_[xs[keep], ys[keep]].astype(np.float64),
        scores=scores[keep].astype(np.float64),
        descriptors=descriptors[keep],
        normalized=True,
    )


class ClassicalDetector:
    """FeatureSource wrapper around detect_classical."""

    def __init__(self, pool_size: int):
        self.pool_size = pool_size

    def extract(self, image: np.ndarray, image_id: str) -> FeatureSet:
        return detect_classical(image, self.pool_size, image_id=image_id)


# ---------------------------------------------------------------------------
# SPFT file transport


def encode_features(features: FeatureSet) -> bytes:
    """Serialize a FeatureSet to SPFT bytes."""
    n, dim = len(features), features.descriptor_dim
    header = _HEADER.pack(
        MAGIC, VERSION, features.width, features.height, n, dim, int(features.normalized)
    )
    records = np.empty((n, 3), dtype="<f4")
    records[:, :2] = features.xy
    records[:, 2] = features.scores
    body = features.descriptors.astype("<f4", copy=False)
    return header + records.tobytes() + body.tobytes()


def decode_features(data: bytes, image_id: str = "", path=None) -> FeatureSet:
    """Parse SPFT bytes; format errors carry the offending byte offset."""
    if len(data) < _HEADER.size:
        raise FormatError(
            f"truncated header: {len(data)} bytes, need {_HEADER.size}",
            path=path, byte_offset=len(data),
        )
    magic, version, width, height, count, dim, normalized = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", path=path, byte_offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", path=path, byte_offset=4)
    expected = _HEADER.size + count * 3 * 4 + count * dim * 4
    if len(data) != expected:
        raise FormatError(
            f"expected {expected} bytes for count={count}, dim={dim}, got {len(data)}",
            path=path, byte_offset=min(len(data), expected),
        )
    records = np.frombuffer(data, dtype="<f4", count=count * 3, offset=_HEADER.size)
    records = records.reshape(count, 3)
    descriptors = np.frombuffer(
        data, dtype="<f4", count=count * dim, offset=_HEADER.size + count * 12
    ).reshape(count, dim)
    where = path if path is not None else image_id or "<bytes>"
    if count and not np.all(np.isfinite(descriptors)):
        raise ValidationError(f"{where}: non-finite descriptor values")
    try:
        return FeatureSet(
            image_id=image_id,
            width=width,
            height=height,
            xy=records[:, :2].astype(np.float64),
            scores=records[:, 2].astype(np.float64),
            descriptors=descriptors,
            normalized=bool(normalized),
        )
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from None


def save_features(features: FeatureSet, path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_features(features))
    tmp.replace(path)


def load_features(path) -> FeatureSet:
    """Parse an SPFT file; format errors carry the offending byte offset."""
    path = Path(path)
    return decode_features(path.read_bytes(), image_id=path.stem, path=path)
