"""Uniform spatial hash grid for short-range neighbor search."""

from __future__ import annotations

import math
from collections.abc import Iterable

import numpy as np


class GridTooCoarse(ValueError):
    """A query radius exceeded the grid cell size."""


def cell_of(x: float, y: float, cell_size: float) -> tuple[int, int]:
    return (math.floor(x / cell_size), math.floor(y / cell_size))


class SpatialGrid:
    """Particles bucketed by ``floor(pos / cell_size)``; immutable once built.

    Any pair closer than ``cell_size`` lies in the same or an adjacent cell,
    so a radius query only scans the surrounding 3x3 block.
    """

    def __init__(self, cell_size: float, cells: dict[tuple[int, int], list[int]],
                 positions: dict[int, tuple[float, float]]):
        self.cell_size = cell_size
        self.cells = cells
        self.positions = positions

    @classmethod
    def rebuild(cls, positions: Iterable[tuple[int, tuple[float, float]]],
                cell_size: float) -> SpatialGrid:
        if not cell_size > 0:
            raise ValueError("cell_size must be > 0")
        cells: dict[tuple[int, int], list[int]] = {}
        pos: dict[int, tuple[float, float]] = {}
        for pid, (x, y) in positions:
            pos[pid] = (float(x), float(y))
            cells.setdefault(cell_of(x, y, cell_size), []).append(pid)
        for ids in cells.values():
            ids.sort()
        return cls(cell_size, cells, pos)

    def __eq__(self, other) -> bool:
        return (isinstance(other, SpatialGrid) and self.cell_size == other.cell_size
                and self.cells == other.cells and self.positions == other.positions)

    def __len__(self) -> int:
        return len(self.positions)

    def neighbors_within(self, center: tuple[float, float], radius: float,
                         exclude_id: int | None = None) -> list[int]:
        """Ids strictly closer than ``radius`` to ``center``, ascending."""
        if radius > self.cell_size:
            raise GridTooCoarse(f"radius {radius} exceeds cell size {self.cell_size}")
        cx, cy = cell_of(center[0], center[1], self.cell_size)
        r2 = radius * radius
        found = []
        for ix in (cx - 1, cx, cx + 1):
            for iy in (cy - 1, cy, cy + 1):
                for pid in self.cells.get((ix, iy), ()):
                    if pid == exclude_id:
                        continue
                    x, y = self.positions[pid]
                    dx, dy = x - center[0], y - center[1]
                    if dx * dx + dy * dy < r2:
                        found.append(pid)
        found.sort()
        return found


def rebuild(positions: Iterable[tuple[int, tuple[float, float]]], cell_size: float) -> SpatialGrid:
    return SpatialGrid.rebuild(positions, cell_size)


def neighbors_within(grid: SpatialGrid, center: tuple[float, float], radius: float,
                     exclude_id: int | None = None) -> list[int]:
    return grid.neighbors_within(center, radius, exclude_id)


def brute_force_within(positions: Iterable[tuple[int, tuple[float, float]]],
                       center: tuple[float, float], radius: float,
                       exclude_id: int | None = None) -> list[int]:
    r2 = radius * radius
    out = []
    for pid, (x, y) in positions:
        dx, dy = x - center[0], y - center[1]
        if pid != exclude_id and dx * dx + dy * dy < r2:
            out.append(pid)
    return sorted(out)


# --- vectorized broad phase used by the integrator ---------------------------

# (0, 0) plus four forward neighbors visits every adjacent cell pair once
_HALF_STENCIL = ((0, 0), (1, -1), (1, 0), (1, 1), (0, 1))


def candidate_pairs_grid(pos: np.ndarray, cell_size: float) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (i < j) whose cells are equal or adjacent.

    Superset of every pair closer than ``cell_size``; order is unspecified.
    """
    n = len(pos)
    empty = np.empty(0, dtype=np.int64)
    if n < 2:
        return empty, empty
    cell = np.floor(pos / cell_size).astype(np.int64)
    cell -= cell.min(axis=0) - 1
    nx, ny = int(cell[:, 0].max()) + 2, int(cell[:, 1].max()) + 2
    key = cell[:, 0] * ny + cell[:, 1]

    order = np.argsort(key, kind="stable")
    ukeys, starts, counts = np.unique(key[order], return_index=True, return_counts=True)
    dense = nx * ny <= 8 * n + 4096
    if dense:
        table = np.full(nx * ny, -1, dtype=np.int64)
        table[ukeys] = np.arange(len(ukeys))

    out_i, out_j = [], []
    for dx, dy in _HALF_STENCIL:
        nkey = key + (dx * ny + dy)
        if dense:
            slot = table[nkey]
            hit = slot >= 0
        else:
            slot = np.minimum(np.searchsorted(ukeys, nkey), len(ukeys) - 1)
            hit = ukeys[slot] == nkey
        src = np.nonzero(hit)[0]
        if len(src) == 0:
            continue
        cnt = counts[slot[src]]
        st = starts[slot[src]]
        total = int(cnt.sum())
        rep_src = np.repeat(src, cnt)
        within = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        dst = order[np.repeat(st, cnt) + within]
        if dx == 0 and dy == 0:
            keep = rep_src < dst
            out_i.append(rep_src[keep])
            out_j.append(dst[keep])
        else:
            out_i.append(np.minimum(rep_src, dst))
            out_j.append(np.maximum(rep_src, dst))
    if not out_i:
        return empty, empty
    return np.concatenate(out_i), np.concatenate(out_j)


def candidate_pairs_brute(n: int) -> tuple[np.ndarray, np.ndarray]:
    i, j = np.triu_indices(n, k=1)
    return i.astype(np.int64), j.astype(np.int64)
