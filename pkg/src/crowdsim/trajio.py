"""Trajectory CSV reading and writing.

Floats are written with ``repr`` (shortest string that round-trips), so a
reloaded file is bit-identical to the simulated state and reruns produce
byte-identical files.
"""

from __future__ import annotations

import csv
import os
import tempfile
from collections.abc import Iterable, Iterator
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .analysis import TrajectoryFrame

HEADER = ("step", "time", "id", "kind", "x", "y", "vx", "vy", "phase")


class MalformedTrajectory(ValueError):
    pass


@contextmanager
def atomic_writer(path: str | os.PathLike, newline: str | None = ""):
    """Open a temp file beside ``path``; rename over it only on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline=newline) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def frame_rows(frame: TrajectoryFrame) -> Iterator[str]:
    step = str(frame.step)
    time = repr(float(frame.time))
    kinds = np.where(frame.fixed, "fixed", "person")
    phases = np.where(frame.arrived, "arrived", "active")
    for pid, kind, (x, y), (vx, vy), phase in zip(
            frame.ids.tolist(), kinds.tolist(), frame.pos.tolist(), frame.vel.tolist(),
            phases.tolist()):
        yield f"{step},{time},{pid},{kind},{x!r},{y!r},{vx!r},{vy!r},{phase}\n"


def write_frames(fh, frames: Iterable[TrajectoryFrame]) -> int:
    fh.write(",".join(HEADER) + "\n")
    n = 0
    for frame in frames:
        fh.writelines(frame_rows(frame))
        n += 1
    return n


def write_trajectory(path: str | os.PathLike, frames: Iterable[TrajectoryFrame]) -> int:
    """Write frames to ``path`` atomically; returns the number of frames."""
    with atomic_writer(path) as fh:
        return write_frames(fh, frames)


def _parse_float(text: str, line: int, name: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise MalformedTrajectory(f"line {line}: {name} is not a number: {text!r}") from None


def read_trajectory(path: str | os.PathLike) -> list[TrajectoryFrame]:
    """Load a trajectory CSV into frames (ordered by step, rows by id).

    Raises OSError on I/O failure and MalformedTrajectory on content errors.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_trajectory(fh)


def parse_trajectory(lines: Iterable[str]) -> list[TrajectoryFrame]:
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or tuple(header) != HEADER:
        raise MalformedTrajectory(f"expected header {','.join(HEADER)!r}, got {header!r}")
    frames: list[TrajectoryFrame] = []
    rows: list[tuple] = []
    cur_step: int | None = None
    cur_time = 0.0

    def flush() -> None:
        if cur_step is None:
            return
        ids = [r[0] for r in rows]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise MalformedTrajectory(f"step {cur_step}: ids not strictly ascending")
        frames.append(TrajectoryFrame(
            step=cur_step, time=cur_time, ids=ids,
            fixed=[r[1] for r in rows],
            pos=[(r[2], r[3]) for r in rows],
            vel=[(r[4], r[5]) for r in rows],
            arrived=[r[6] for r in rows],
        ))

    for line_no, rec in enumerate(reader, start=2):
        if len(rec) != len(HEADER):
            raise MalformedTrajectory(f"line {line_no}: expected {len(HEADER)} fields, got {len(rec)}")
        try:
            step, pid = int(rec[0]), int(rec[2])
        except ValueError:
            raise MalformedTrajectory(f"line {line_no}: step and id must be integers") from None
        time = _parse_float(rec[1], line_no, "time")
        if rec[3] not in ("person", "fixed"):
            raise MalformedTrajectory(f"line {line_no}: unknown kind {rec[3]!r}")
        if rec[8] not in ("active", "arrived"):
            raise MalformedTrajectory(f"line {line_no}: unknown phase {rec[8]!r}")
        vals = [_parse_float(rec[k], line_no, HEADER[k]) for k in (4, 5, 6, 7)]
        if step != cur_step:
            if cur_step is not None and step < cur_step:
                raise MalformedTrajectory(f"line {line_no}: step {step} after step {cur_step}")
            flush()
            rows, cur_step, cur_time = [], step, time
        elif time != cur_time:
            raise MalformedTrajectory(f"line {line_no}: time differs within step {step}")
        rows.append((pid, rec[3] == "fixed", *vals, rec[8] == "arrived"))
    flush()
    return frames
