"""Metrics over trajectory frames: density, jams, gate flow, vorticity and
pairwise avoidance."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .neighborhood import SpatialGrid

V_JAM = 0.2
R_LINK = 1.5
MIN_JAM_SIZE = 3
QUEUE_ASPECT = 3.0


@dataclass
class TrajectoryFrame:
    """Snapshot of every particle at one output step, rows by ascending id."""

    step: int
    time: float
    ids: np.ndarray
    fixed: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    arrived: np.ndarray

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        n = len(self.ids)
        self.fixed = np.asarray(self.fixed, dtype=bool).reshape(n)
        self.pos = np.asarray(self.pos, dtype=float).reshape(n, 2)
        self.vel = np.asarray(self.vel, dtype=float).reshape(n, 2)
        self.arrived = np.asarray(self.arrived, dtype=bool).reshape(n)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def persons(self) -> np.ndarray:
        return ~self.fixed

    @property
    def speed(self) -> np.ndarray:
        return np.sqrt(self.vel[:, 0] ** 2 + self.vel[:, 1] ** 2)

    def row_of(self, pid: int) -> int:
        k = int(np.searchsorted(self.ids, pid))
        if k >= len(self.ids) or self.ids[k] != pid:
            raise KeyError(pid)
        return k

    @classmethod
    def from_world(cls, world) -> TrajectoryFrame:
        return cls(world.step_index, world.time, world.ids.copy(), world.fixed.copy(),
                   world.pos.copy(), world.vel.copy(), world.arrived.copy())

    @classmethod
    def empty(cls, step: int = 0, time: float = 0.0) -> TrajectoryFrame:
        return cls(step, time, [], [], np.empty((0, 2)), np.empty((0, 2)), [])


# --- density -----------------------------------------------------------------

@dataclass
class DensityGrid:
    """Persons per m^2 on cells ``floor(pos / cell)``; ``origin`` is the
    integer index of ``values[0, 0]``."""

    cell: float
    origin: tuple[int, int]
    values: np.ndarray

    def occupied(self) -> list[tuple[int, int, float]]:
        out = []
        for ix, iy in zip(*np.nonzero(self.values)):
            out.append((self.origin[0] + int(ix), self.origin[1] + int(iy), float(self.values[ix, iy])))
        return out

    def occupied_mean(self) -> float:
        """Mean density over cells holding at least one person (0 if none)."""
        occ = self.values[self.values > 0]
        return float(occ.mean()) if len(occ) else 0.0


def density_grid(frame: TrajectoryFrame, cell: float) -> DensityGrid:
    if not cell > 0:
        raise ValueError("cell must be > 0")
    p = frame.pos[frame.persons]
    if len(p) == 0:
        return DensityGrid(cell, (0, 0), np.zeros((1, 1)))
    idx = np.floor(p / cell).astype(np.int64)
    lo = idx.min(axis=0)
    shape = idx.max(axis=0) - lo + 1
    counts = np.zeros(tuple(shape), dtype=float)
    np.add.at(counts, (idx[:, 0] - lo[0], idx[:, 1] - lo[1]), 1.0)
    return DensityGrid(cell, (int(lo[0]), int(lo[1])), counts / (cell * cell))


# --- jams ----------------------------------------------------------------------

@dataclass
class JamCluster:
    members: list[int]
    centroid: tuple[float, float]
    aspect_ratio: float = 1.0
    onset: float | None = None
    duration: float | None = None

    @property
    def size(self) -> int:
        return len(self.members)

    def is_queue(self, threshold: float = QUEUE_ASPECT) -> bool:
        """Elongated jam: principal-axis ratio of member spread >= threshold."""
        return self.aspect_ratio >= threshold


def _aspect_ratio(p: np.ndarray) -> float:
    c = p - p.mean(axis=0)
    ev = np.linalg.eigvalsh(c.T @ c / len(p))
    lo, hi = max(ev[0], 0.0), max(ev[1], 0.0)
    if hi == 0.0:
        return 1.0
    if lo == 0.0:
        return math.inf
    return math.sqrt(hi / lo)


def detect_jams(frame: TrajectoryFrame, v_jam: float = V_JAM, r_link: float = R_LINK,
                min_size: int = MIN_JAM_SIZE) -> list[JamCluster]:
    """Connected groups of slow, still-active persons.

    Persons slower than ``v_jam`` are linked when closer than ``r_link``;
    components of at least ``min_size`` members are returned, ordered by
    their smallest id. Arrived persons are settled, not jammed, and are
    ignored.
    """
    if not (v_jam > 0 and r_link > 0):
        raise ValueError("v_jam and r_link must be > 0")
    slow = np.nonzero(frame.persons & ~frame.arrived & (frame.speed < v_jam))[0]
    if len(slow) < min_size:
        return []
    ids = [int(frame.ids[k]) for k in slow]
    pos = {int(frame.ids[k]): (float(frame.pos[k, 0]), float(frame.pos[k, 1])) for k in slow}
    grid = SpatialGrid.rebuild(pos.items(), r_link)

    parent = {pid: pid for pid in ids}

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for pid in ids:
        for other in grid.neighbors_within(pos[pid], r_link, exclude_id=pid):
            ra, rb = find(pid), find(other)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

    groups: dict[int, list[int]] = {}
    for pid in sorted(ids):
        groups.setdefault(find(pid), []).append(pid)
    out = []
    for members in sorted(groups.values(), key=lambda m: m[0]):
        if len(members) < min_size:
            continue
        p = np.array([pos[m] for m in members])
        c = p.mean(axis=0)
        out.append(JamCluster(members, (float(c[0]), float(c[1])), _aspect_ratio(p)))
    return out


@dataclass
class JamTrack:
    """One jam followed across frames by member overlap."""

    onset: float
    end: float
    sizes: list[int] = field(default_factory=list)
    members: set[int] = field(default_factory=set)

    @property
    def duration(self) -> float:
        return self.end - self.onset

    @property
    def max_size(self) -> int:
        return max(self.sizes)


def track_jams(frames: Sequence[TrajectoryFrame], v_jam: float = V_JAM,
               r_link: float = R_LINK) -> list[JamTrack]:
    """Link per-frame clusters sharing members into tracks (onset, end, sizes)."""
    tracks: list[JamTrack] = []
    live: list[tuple[JamTrack, set[int]]] = []
    for frame in frames:
        nxt = []
        for cl in detect_jams(frame, v_jam, r_link):
            mem = set(cl.members)
            match = next((t for t, prev in live if prev & mem), None)
            if match is None:
                match = JamTrack(onset=frame.time, end=frame.time)
                tracks.append(match)
            match.end = frame.time
            match.sizes.append(cl.size)
            match.members |= mem
            nxt.append((match, mem))
        live = nxt
    return tracks


# --- gate flow -------------------------------------------------------------------

@dataclass
class FlowWindow:
    start: float
    signed: int
    gross: int


def _side(gate: tuple[tuple[float, float], tuple[float, float]], p: np.ndarray) -> np.ndarray:
    (ax, ay), (bx, by) = gate
    cross = (bx - ax) * (p[:, 1] - ay) - (by - ay) * (p[:, 0] - ax)
    return np.sign(cross).astype(int)


def _on_gate_span(gate, p: np.ndarray) -> np.ndarray:
    (ax, ay), (bx, by) = gate
    ex, ey = bx - ax, by - ay
    t = ((p[:, 0] - ax) * ex + (p[:, 1] - ay) * ey) / (ex * ex + ey * ey)
    return (t >= 0.0) & (t <= 1.0)


def _crosses_span(gate, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Whether segment p->q meets the gate's line inside the gate extent."""
    (ax, ay), (bx, by) = gate
    s1 = (q[:, 0] - p[:, 0]) * (ay - p[:, 1]) - (q[:, 1] - p[:, 1]) * (ax - p[:, 0])
    s2 = (q[:, 0] - p[:, 0]) * (by - p[:, 1]) - (q[:, 1] - p[:, 1]) * (bx - p[:, 0])
    return ~((s1 > 0) & (s2 > 0) | (s1 < 0) & (s2 < 0))


def flow_rate(frames: Sequence[TrajectoryFrame], gate, window: float) -> list[FlowWindow]:
    """Gate crossings by persons per time window.

    Positive crossings go toward the left of the directed gate (a -> b).
    A person landing exactly on the gate is counted when it leaves it, and
    only if it leaves on the other side. Each crossing is attributed to the
    window containing the later frame's time.
    """
    (ax, ay), (bx, by) = gate
    if (ax, ay) == (bx, by):
        raise ValueError("gate endpoints must differ")
    if not window > 0:
        raise ValueError("window must be > 0")
    if not frames:
        return []
    t0 = frames[0].time
    n_win = int(math.floor((frames[-1].time - t0) / window)) + 1
    signed = [0] * n_win
    gross = [0] * n_win
    pending: dict[int, int] = {}
    for prev, cur in zip(frames[:-1], frames[1:]):
        common, ia, ib = np.intersect1d(prev.ids, cur.ids, assume_unique=True, return_indices=True)
        persons = ~cur.fixed[ib]
        common, ia, ib = common[persons], ia[persons], ib[persons]
        if len(common) == 0:
            continue
        p, q = prev.pos[ia], cur.pos[ib]
        sp, sq = _side(gate, p), _side(gate, q)
        span = _crosses_span(gate, p, q)
        w = min(int(math.floor((cur.time - t0) / window)), n_win - 1)
        for k in np.nonzero((sp != sq) | (sp == 0))[0]:
            pid = int(common[k])
            a, b = int(sp[k]), int(sq[k])
            direction = 0
            if a != 0 and b != 0:
                if span[k]:
                    direction = b
            elif b == 0:
                if a != 0 and span[k]:
                    pending[pid] = a
                continue
            else:
                origin = pending.pop(pid, None)
                if origin is not None and b != origin:
                    direction = b
            if direction:
                signed[w] += direction
                gross[w] += 1
    return [FlowWindow(t0 + k * window, signed[k], gross[k]) for k in range(n_win)]


# --- vorticity --------------------------------------------------------------------

@dataclass
class CurlField:
    cell: float
    origin: tuple[int, int]
    values: np.ndarray  # NaN where the stencil lacks support

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.values)

    @property
    def mean_abs(self) -> float:
        v = self.values[self.defined]
        return float(np.abs(v).mean()) if len(v) else 0.0


def cell_mean_velocity(frame: TrajectoryFrame, cell: float):
    p = frame.pos[frame.persons]
    v = frame.vel[frame.persons]
    idx = np.floor(p / cell).astype(np.int64)
    lo = idx.min(axis=0) - 1
    shape = tuple(idx.max(axis=0) - lo + 2)
    count = np.zeros(shape)
    sx = np.zeros(shape)
    sy = np.zeros(shape)
    at = (idx[:, 0] - lo[0], idx[:, 1] - lo[1])
    np.add.at(count, at, 1.0)
    np.add.at(sx, at, v[:, 0])
    np.add.at(sy, at, v[:, 1])
    with np.errstate(invalid="ignore", divide="ignore"):
        return (int(lo[0]), int(lo[1])), count, sx / count, sy / count


def curl_field(frame: TrajectoryFrame, cell: float) -> CurlField:
    """Discrete vorticity dvy/dx - dvx/dy of per-cell mean person velocity.

    Central differences; a cell is defined only when its four neighbors
    (left, right, below, above) each hold at least one person.
    """
    if not cell > 0:
        raise ValueError("cell must be > 0")
    if not frame.persons.any():
        return CurlField(cell, (0, 0), np.full((1, 1), np.nan))
    origin, count, vx, vy = cell_mean_velocity(frame, cell)
    out = np.full(count.shape, np.nan)
    occ = count > 0
    ok = occ[2:, 1:-1] & occ[:-2, 1:-1] & occ[1:-1, 2:] & occ[1:-1, :-2]
    dvy_dx = (vy[2:, 1:-1] - vy[:-2, 1:-1]) / (2 * cell)
    dvx_dy = (vx[1:-1, 2:] - vx[1:-1, :-2]) / (2 * cell)
    inner = np.where(ok, dvy_dx - dvx_dy, np.nan)
    out[1:-1, 1:-1] = inner
    return CurlField(cell, origin, out)


def region_mean_abs_curl(frame: TrajectoryFrame, cell: float,
                         region: tuple[float, float, float, float] | None = None) -> float:
    """Mean |curl| over defined cells whose centers lie in ``region``
    (xmin, ymin, xmax, ymax); the whole field when ``region`` is None."""
    cf = curl_field(frame, cell)
    if region is None:
        return cf.mean_abs
    xs = (cf.origin[0] + np.arange(cf.values.shape[0]) + 0.5) * cell
    ys = (cf.origin[1] + np.arange(cf.values.shape[1]) + 0.5) * cell
    inside = ((xs[:, None] >= region[0]) & (xs[:, None] <= region[2])
              & (ys[None, :] >= region[1]) & (ys[None, :] <= region[3]))
    v = cf.values[inside & cf.defined]
    return float(np.abs(v).mean()) if len(v) else 0.0


# --- avoidance --------------------------------------------------------------------

@dataclass
class AvoidanceSignature:
    min_separation: float
    speed_dip: float
    lateral_deviation: float


CRUISE_FRACTION = 0.99


def _speed_dip(speed: np.ndarray) -> float:
    free = float(speed.max())
    if free == 0.0:
        return 0.0
    cruising = np.nonzero(speed >= CRUISE_FRACTION * free)[0]
    lo = float(speed[cruising[0]:cruising[-1] + 1].min())
    return 1.0 - lo / free


def _chord_deviation(path: np.ndarray) -> float:
    a, b = path[0], path[-1]
    e = b - a
    length = math.hypot(e[0], e[1])
    rel = path - a
    if length == 0.0:
        return float(np.sqrt((rel ** 2).sum(axis=1)).max())
    return float(np.abs(rel[:, 0] * e[1] - rel[:, 1] * e[0]).max() / length)


def avoidance_signature(frames: Sequence[TrajectoryFrame], id_a: int, id_b: int) -> AvoidanceSignature:
    """Encounter summary for two particles.

    ``speed_dip`` is 1 - min/max speed over each particle's cruising interval
    (first to last frame at >= 99% of its peak speed); ``lateral_deviation``
    is the largest distance from the straight chord joining a particle's
    first and last recorded positions. Both report the larger of the pair.
    """
    if not frames:
        raise ValueError("no frames")
    pa, pb, sa, sb = [], [], [], []
    for f in frames:
        try:
            ka, kb = f.row_of(id_a), f.row_of(id_b)
        except KeyError as exc:
            raise ValueError(f"id {exc.args[0]} missing from frame at step {f.step}") from None
        pa.append(f.pos[ka])
        pb.append(f.pos[kb])
        sa.append(math.hypot(*f.vel[ka]))
        sb.append(math.hypot(*f.vel[kb]))
    pa, pb = np.array(pa), np.array(pb)
    sep = np.sqrt(((pa - pb) ** 2).sum(axis=1))
    return AvoidanceSignature(
        min_separation=float(sep.min()),
        speed_dip=max(_speed_dip(np.array(sa)), _speed_dip(np.array(sb))),
        lateral_deviation=max(_chord_deviation(pa), _chord_deviation(pb)),
    )
