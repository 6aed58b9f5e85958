"""Small shared helpers."""

from __future__ import annotations

import os


def worker_count() -> int:
    """Worker cap from ANMS_VO_THREADS (0 or unset = one per CPU)."""
    raw = os.environ.get("ANMS_VO_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return max(1, n)
