"""Writer for the SPFT feature-file interchange format.

Little-endian: magic "SPFT", version u32 = 1, width u32, height u32,
count u32, dim u32, normalized u8, 3 pad bytes; then count records of
(x f32, y f32, score f32); then count x dim f32 descriptors, row-major.
"""

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SPFT"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIIB3x")


def encode(width, height, xy, scores, descriptors, normalized=True) -> bytes:
    xy = np.asarray(xy, dtype="<f4").reshape(-1, 2)
    scores = np.asarray(scores, dtype="<f4").reshape(-1)
    descriptors = np.ascontiguousarray(np.asarray(descriptors, dtype="<f4"))
    n = len(xy)
    if scores.shape != (n,) or descriptors.shape[0] != n:
        raise ValueError("keypoint/score/descriptor counts disagree")
    dim = descriptors.shape[1] if descriptors.ndim == 2 else 0
    header = _HEADER.pack(MAGIC, VERSION, int(width), int(height), n, dim, int(normalized))
    records = np.empty((n, 3), dtype="<f4")
    records[:, :2] = xy
    records[:, 2] = scores
    return header + records.tobytes() + descriptors.tobytes()


def write(path, width, height, xy, scores, descriptors, normalized=True) -> None:
    """Atomic write: temp file in the target directory, then rename."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode(width, height, xy, scores, descriptors, normalized))
    tmp.replace(path)
