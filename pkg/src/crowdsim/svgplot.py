"""Standalone SVG renderings of trajectory frames: discs and trails."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .analysis import TrajectoryFrame
from .scene import DEFAULT_PROFILE

PERSON_RADIUS = 0.3
PHASE_COLORS = {False: "#1f77b4", True: "#2ca02c"}  # active, arrived
FIXED_STROKE = "#555555"
BACKGROUND = "#f7f4ec"


def data_extent(frames: Sequence[TrajectoryFrame], margin: float = 2.0):
    """(xmin, ymin, width, height) covering every position, or a unit box."""
    pts = [f.pos for f in frames if len(f)]
    if not pts:
        return (0.0, 0.0, 1.0, 1.0)
    allp = np.concatenate(pts)
    lo = allp.min(axis=0) - margin
    hi = allp.max(axis=0) + margin
    return (float(lo[0]), float(lo[1]), float(hi[0] - lo[0]), float(hi[1] - lo[1]))


def _fmt(v: float) -> str:
    s = f"{v:.4f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def _document(extent, body: list[str]) -> str:
    x, y, w, h = extent
    # flip y so that +y points up, as in the simulation plane
    return "\n".join([
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{_fmt(x)} {_fmt(y)} {_fmt(w)} {_fmt(h)}"'
        f' width="800" height="{_fmt(800 * h / w)}">',
        f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}" fill="{BACKGROUND}"/>',
        f'<g transform="matrix(1 0 0 -1 0 {_fmt(2 * y + h)})">',
        *body,
        "</g>",
        "</svg>",
        "",
    ])


def render_discs(frame: TrajectoryFrame | None, extent, fixed_radius: dict[int, float] | None = None) -> str:
    """One filled circle per person (colored by phase) and one outlined
    circle per fixed particle at its d1 radius."""
    body = []
    if frame is not None:
        body += _fixed_circles(frame, fixed_radius)
        for k in np.nonzero(~frame.fixed)[0]:
            x, y = frame.pos[k]
            color = PHASE_COLORS[bool(frame.arrived[k])]
            body.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{PERSON_RADIUS}" fill="{color}"/>')
    return _document(extent, body)


def _fixed_circles(frame: TrajectoryFrame, fixed_radius: dict[int, float] | None) -> list[str]:
    radii = fixed_radius or {}
    out = []
    for k in np.nonzero(frame.fixed)[0]:
        x, y = frame.pos[k]
        r = radii.get(int(frame.ids[k]), DEFAULT_PROFILE.d1)
        out.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{_fmt(r)}" fill="none" '
                   f'stroke="{FIXED_STROKE}" stroke-width="0.1"/>')
    return out


def render_trails(frames: Sequence[TrajectoryFrame], end: int, window: int, extent,
                  fixed_radius: dict[int, float] | None = None) -> str:
    """One polyline per person through its positions in the last ``window``
    frames up to and including ``end`` (fewer when the file is shorter)."""
    body = []
    if frames:
        body += _fixed_circles(frames[end], fixed_radius)
        start = max(0, end - window + 1)
        paths: dict[int, list[tuple[float, float]]] = {}
        arrived: dict[int, bool] = {}
        for f in frames[start:end + 1]:
            for k in np.nonzero(~f.fixed)[0]:
                pid = int(f.ids[k])
                paths.setdefault(pid, []).append((float(f.pos[k, 0]), float(f.pos[k, 1])))
                arrived[pid] = bool(f.arrived[k])
        for pid in sorted(paths):
            pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in paths[pid])
            body.append(f'<polyline points="{pts}" fill="none" stroke="{PHASE_COLORS[arrived[pid]]}" '
                        f'stroke-width="0.15"/>')
    return _document(extent, body)
