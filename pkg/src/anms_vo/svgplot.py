"""Static SVG rendering of XZ trajectory overlays (no plotting dependency)."""

from __future__ import annotations

from .core import Trajectory


def _polyline_points(xs, zs, to_px) -> str:
    return " ".join(f"{to_px(x, z)[0]:.2f},{to_px(x, z)[1]:.2f}" for x, z in zip(xs, zs))


def trajectory_xz_svg(
    est: Trajectory,
    gt: Trajectory | None = None,
    width: int = 800,
    height: int = 600,
    margin: int = 50,
) -> str:
    """SVG document overlaying the estimated (and ground-truth) XZ tracks.

    The output always contains one <polyline> per trajectory, x rightward
    and z upward, with an equal-aspect data-to-pixel mapping.
    """
    tracks = [("estimate", "#d62728", est)]
    if gt is not None:
        tracks.insert(0, ("ground truth", "#1f77b4", gt))

    xs_all, zs_all = [], []
    for _, _, traj in tracks:
        pos = traj.positions()
        xs_all.extend(pos[:, 0])
        zs_all.extend(pos[:, 2])
    x_min, x_max = min(xs_all), max(xs_all)
    z_min, z_max = min(zs_all), max(zs_all)
    span = max(x_max - x_min, z_max - z_min, 1e-9)
    scale = (min(width, height) - 2 * margin) / span

    def to_px(x, z):
        return (
            margin + (x - x_min) * scale,
            height - margin - (z - z_min) * scale,
        )

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width // 2}" y="20" text-anchor="middle" font-family="sans-serif" '
        f'font-size="14">XZ trajectory</text>',
    ]
    for i, (label, color, traj) in enumerate(tracks):
        pos = traj.positions()
        pts = _polyline_points(pos[:, 0], pos[:, 2], to_px)
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        y = 40 + 18 * i
        parts.append(
            f'<line x1="{width - 170}" y1="{y - 4}" x2="{width - 140}" y2="{y - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{width - 132}" y="{y}" font-family="sans-serif" '
            f'font-size="12">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
