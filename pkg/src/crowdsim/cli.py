"""Command line: ``crowdsim run | analyze | plot | scenario``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time
from pathlib import Path

from . import analysis, scenarios, svgplot, trajio
from .analysis import TrajectoryFrame
from .dynamics import NumericalInstability, Simulation, World
from .scene import SceneError, SceneValidationError, parse_scene, scene_to_dict, validate_scene

EXIT_OK = 0
EXIT_SCENE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4
EXIT_TRAJECTORY = 5
EXIT_METRIC = 6
EXIT_FRAME = 7

METRICS = ("density", "jams", "flow", "curl", "avoidance")
METRIC_HEADERS = {
    "density": "step,cell_x,cell_y,density",
    "jams": "step,cluster_id,size,cx,cy",
    "flow": "window_start,signed,gross",
    "curl": "step,mean_abs_curl",
    "avoidance": "min_separation,speed_dip,lateral_deviation",
}
DEFAULT_CELL = {"density": 5.0, "curl": 2.0}


@dataclasses.dataclass
class RunConfig:
    scene_path: str
    out_path: str
    seed: int | None = None
    dt: float | None = None
    duration: float | None = None
    literal_damping: bool = False
    threads: int = 1


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load_scene(path: str):
    """Returns (scene, exit_code); the scene is None on failure."""
    try:
        text = Path(path).read_bytes()
    except OSError as exc:
        _err(f"cannot read scene {path}: {exc}")
        return None, EXIT_IO
    try:
        return parse_scene(text), EXIT_OK
    except SceneValidationError as exc:
        for v in exc.violations:
            _err(str(v))
    except SceneError as exc:
        _err(f"scene error: {exc}")
    return None, EXIT_SCENE


def cmd_run(cfg: RunConfig) -> int:
    scene, code = _load_scene(cfg.scene_path)
    if scene is None:
        return code
    overrides = {k: v for k, v in (("seed", cfg.seed), ("dt", cfg.dt), ("duration", cfg.duration))
                 if v is not None}
    if overrides:
        scene = dataclasses.replace(scene, **overrides)
        problems = validate_scene(scene)
        if problems:
            for v in problems:
                _err(str(v))
            return EXIT_SCENE

    sim = Simulation(scene, literal_damping=cfg.literal_damping, threads=cfg.threads)
    start = time.perf_counter()
    last: World | None = None

    def frames():
        nonlocal last
        for world in sim.frames():
            last = world
            yield TrajectoryFrame.from_world(world)

    try:
        n_frames = trajio.write_trajectory(cfg.out_path, frames())
    except NumericalInstability as exc:
        _err(f"numerical abort: {exc}")
        return EXIT_NUMERIC
    except OSError as exc:
        _err(f"cannot write {cfg.out_path}: {exc}")
        return EXIT_IO
    wall = time.perf_counter() - start
    steps = last.step_index if last is not None else 0
    rate = steps / wall if wall > 0 else math.inf
    print(f"steps={steps} frames={n_frames} spawned={last.injected_total if last else 0} "
          f"wall_clock_s={wall:.3f} steps_per_s={rate:.1f}")
    return EXIT_OK


def _floats(text: str, n: int, name: str) -> list[float]:
    parts = text.split(",")
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"{name} needs {n} comma-separated numbers")
    return [float(p) for p in parts]


def _id_pair(text: str) -> list[int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("--ids needs two comma-separated particle ids")
    return [int(p) for p in parts]


def metric_rows(metric: str, frames: list[TrajectoryFrame], args) -> list[str]:
    rows = []
    if metric == "density":
        cell = args.cell or DEFAULT_CELL["density"]
        for f in frames:
            for ix, iy, d in analysis.density_grid(f, cell).occupied():
                rows.append(f"{f.step},{ix},{iy},{d!r}")
    elif metric == "jams":
        for f in frames:
            for k, c in enumerate(analysis.detect_jams(f, args.v_jam, args.r_link)):
                rows.append(f"{f.step},{k},{c.size},{c.centroid[0]!r},{c.centroid[1]!r}")
    elif metric == "flow":
        if args.gate is None:
            raise ValueError("metric flow needs --gate x1,y1,x2,y2")
        g = args.gate
        for w in analysis.flow_rate(frames, ((g[0], g[1]), (g[2], g[3])), args.window):
            rows.append(f"{w.start!r},{w.signed},{w.gross}")
    elif metric == "curl":
        cell = args.cell or DEFAULT_CELL["curl"]
        for f in frames:
            rows.append(f"{f.step},{analysis.curl_field(f, cell).mean_abs!r}")
    elif metric == "avoidance":
        if args.ids is None:
            raise ValueError("metric avoidance needs --ids a,b")
        sig = analysis.avoidance_signature(frames, args.ids[0], args.ids[1])
        rows.append(f"{sig.min_separation!r},{sig.speed_dip!r},{sig.lateral_deviation!r}")
    return rows


def cmd_analyze(args) -> int:
    if args.metric not in METRICS:
        _err(f"unknown metric {args.metric!r}; choose from {', '.join(METRICS)}")
        return EXIT_METRIC
    try:
        frames = trajio.read_trajectory(args.traj)
    except OSError as exc:
        _err(f"cannot read {args.traj}: {exc}")
        return EXIT_IO
    except trajio.MalformedTrajectory as exc:
        _err(f"malformed trajectory: {exc}")
        return EXIT_TRAJECTORY
    try:
        rows = metric_rows(args.metric, frames, args)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_TRAJECTORY
    try:
        with trajio.atomic_writer(args.out) as fh:
            fh.write(METRIC_HEADERS[args.metric] + "\n")
            fh.writelines(r + "\n" for r in rows)
    except OSError as exc:
        _err(f"cannot write {args.out}: {exc}")
        return EXIT_IO
    return EXIT_OK


def cmd_plot(args) -> int:
    try:
        frames = trajio.read_trajectory(args.traj)
    except OSError as exc:
        _err(f"cannot read {args.traj}: {exc}")
        return EXIT_IO
    except trajio.MalformedTrajectory as exc:
        _err(f"malformed trajectory: {exc}")
        return EXIT_TRAJECTORY

    extent = None
    radii: dict[int, float] = {}
    if args.scene:
        scene, code = _load_scene(args.scene)
        if scene is None:
            return code
        extent = scene.bounds.extent
        world = World.initial(dataclasses.replace(scene, injectors=()))
        radii = {int(i): float(p[0]) for i, p in zip(world.ids, world.profiles)}
    if extent is None:
        extent = svgplot.data_extent(frames)

    if args.frame is None:
        index = len(frames) - 1
    else:
        index = args.frame
        if not 0 <= index < len(frames):
            _err(f"frame {index} out of range (trajectory has {len(frames)} frames)")
            return EXIT_FRAME
    if args.style == "discs":
        svg = svgplot.render_discs(frames[index] if index >= 0 else None, extent, radii)
    else:
        svg = svgplot.render_trails(frames, index, args.trail_window, extent, radii)
    try:
        with trajio.atomic_writer(args.out, newline=None) as fh:
            fh.write(svg)
    except OSError as exc:
        _err(f"cannot write {args.out}: {exc}")
        return EXIT_IO
    return EXIT_OK


def cmd_scenario(args) -> int:
    if args.name not in scenarios.SCENARIOS:
        _err(f"unknown scenario {args.name!r}; choose from {', '.join(scenarios.SCENARIOS)}")
        return EXIT_SCENE
    doc = scene_to_dict(scenarios.SCENARIOS[args.name]())
    try:
        with trajio.atomic_writer(args.out, newline=None) as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        _err(f"cannot write {args.out}: {exc}")
        return EXIT_IO
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crowdsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scene into a trajectory CSV")
    run.add_argument("--scene", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--dt", type=float)
    run.add_argument("--duration", type=float)
    run.add_argument("--paper-literal-damping", action="store_true",
                     help="damp on the norm of the relative velocity instead of the closing speed")
    run.add_argument("--threads", type=int, default=1, help="worker threads for force evaluation")

    an = sub.add_parser("analyze", help="compute a metric from a trajectory CSV")
    an.add_argument("--traj", required=True)
    an.add_argument("--metric", required=True)
    an.add_argument("--out", required=True)
    an.add_argument("--cell", type=float)
    an.add_argument("--v-jam", type=float, default=analysis.V_JAM)
    an.add_argument("--r-link", type=float, default=analysis.R_LINK)
    an.add_argument("--gate", type=lambda s: _floats(s, 4, "--gate"))
    an.add_argument("--window", type=float, default=10.0)
    an.add_argument("--ids", type=_id_pair)

    pl = sub.add_parser("plot", help="render a trajectory frame as SVG")
    pl.add_argument("--traj", required=True)
    pl.add_argument("--style", choices=("discs", "trails"), required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--frame", type=int, help="frame index (default: last)")
    pl.add_argument("--trail-window", type=int, default=10, help="frames per trail")
    pl.add_argument("--scene", help="scene file for viewBox and obstacle radii")

    sc = sub.add_parser("scenario", help="write a built-in scene as JSON")
    sc.add_argument("name")
    sc.add_argument("--out", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(RunConfig(args.scene, args.out, args.seed, args.dt, args.duration,
                                 args.paper_literal_damping, args.threads))
    if args.command == "analyze":
        return cmd_analyze(args)
    if args.command == "plot":
        return cmd_plot(args)
    return cmd_scenario(args)


if __name__ == "__main__":
    sys.exit(main())
