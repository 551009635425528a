import hashlib
import io
import json
import re
from dataclasses import replace

import numpy as np
import pytest

from crowdsim import cli, scenarios, trajio
from crowdsim.analysis import TrajectoryFrame
from crowdsim.dynamics import NumericalInstability, Simulation
from crowdsim.scene import scene_to_dict


def write_scene(path, scene):
    path.write_text(json.dumps(scene_to_dict(scene)))
    return str(path)


@pytest.fixture
def small_scene():
    return scenarios.corridor(count=3, rate=1.0, duration=4.0, output_stride=10)


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


# --- trajectory CSV ----------------------------------------------------------------

def test_csv_round_trip_is_exact(small_scene):
    frames = [TrajectoryFrame.from_world(w) for w in Simulation(small_scene).frames()]
    buf = io.StringIO()
    trajio.write_frames(buf, frames)
    back = trajio.parse_trajectory(io.StringIO(buf.getvalue()))
    assert len(back) == len(frames)
    for a, b in zip(frames, back):
        assert a.step == b.step and a.time == b.time
        for name in ("ids", "fixed", "pos", "vel", "arrived"):
            assert np.array_equal(getattr(a, name), getattr(b, name))


@pytest.mark.parametrize("text", [
    "step,time,id\n",
    "step,time,id,kind,x,y,vx,vy,phase\n0,0.0,0,person,1.0,2.0,0.0,0.0\n",
    "step,time,id,kind,x,y,vx,vy,phase\n0,0.0,0,robot,1.0,2.0,0.0,0.0,active\n",
    "step,time,id,kind,x,y,vx,vy,phase\n0,0.0,0,person,one,2.0,0.0,0.0,active\n",
    "step,time,id,kind,x,y,vx,vy,phase\n0,0.0,1,person,1,2,0,0,active\n0,0.0,0,person,1,2,0,0,active\n",
    "step,time,id,kind,x,y,vx,vy,phase\n2,0.1,0,person,1,2,0,0,active\n1,0.05,0,person,1,2,0,0,active\n",
    "",
])
def test_malformed_trajectories_rejected(text):
    with pytest.raises(trajio.MalformedTrajectory):
        trajio.parse_trajectory(io.StringIO(text))


# --- run -------------------------------------------------------------------------

def test_run_writes_trajectory_and_summary(tmp_path, small_scene, capsys):
    out = tmp_path / "traj.csv"
    assert cli.main(["run", "--scene", write_scene(tmp_path / "s.json", small_scene), "--out", str(out)]) == 0
    summary = capsys.readouterr().out
    assert re.search(r"steps=80 frames=9 spawned=6 wall_clock_s=\S+ steps_per_s=\S+", summary)
    lines = out.read_text().splitlines()
    assert lines[0] == "step,time,id,kind,x,y,vx,vy,phase"
    frames = trajio.read_trajectory(out)
    assert [f.step for f in frames] == list(range(0, 81, 10))
    n_fixed = int(frames[0].fixed.sum())
    assert n_fixed > 0 and len(frames[-1]) == n_fixed + 6


def test_single_person_scene_rows(tmp_path):
    scene = replace(scenarios.lone_walker(duration=1.0), output_stride=1)
    out = tmp_path / "t.csv"
    assert cli.main(["run", "--scene", write_scene(tmp_path / "s.json", scene), "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 1 + 21


def test_reruns_are_byte_identical(tmp_path, small_scene):
    path = write_scene(tmp_path / "s.json", small_scene)
    outs = [tmp_path / f"{k}.csv" for k in range(3)]
    for k, out in enumerate(outs):
        assert cli.main(["run", "--scene", path, "--out", str(out), "--threads", str(k + 1)]) == 0
    assert len({digest(o) for o in outs}) == 1


def test_overrides_apply(tmp_path, small_scene):
    path = write_scene(tmp_path / "s.json", small_scene)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["run", "--scene", path, "--out", str(a), "--duration", "1.0", "--seed", "5"]) == 0
    assert cli.main(["run", "--scene", path, "--out", str(b), "--duration", "1.0", "--dt", "0.025"]) == 0
    assert trajio.read_trajectory(a)[-1].time == pytest.approx(1.0)
    assert trajio.read_trajectory(b)[-1].step == 40


def test_invalid_scene_exits_2_and_names_violation(tmp_path, small_scene, capsys):
    doc = scene_to_dict(small_scene)
    doc["injectors"][0]["profile_min"]["d2"] = 0.1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    out = tmp_path / "t.csv"
    assert cli.main(["run", "--scene", str(bad), "--out", str(out)]) == 2
    assert "profile.threshold-order" in capsys.readouterr().err
    assert not out.exists()


def test_unstable_override_exits_2(tmp_path, small_scene, capsys):
    path = write_scene(tmp_path / "s.json", small_scene)
    assert cli.main(["run", "--scene", path, "--out", str(tmp_path / "t.csv"), "--dt", "1.0"]) == 2
    assert "simulation.dt-unstable" in capsys.readouterr().err


def test_missing_scene_exits_3(tmp_path):
    assert cli.main(["run", "--scene", str(tmp_path / "nope.json"), "--out", str(tmp_path / "t.csv")]) == 3


def test_unwritable_output_exits_3(tmp_path, small_scene):
    path = write_scene(tmp_path / "s.json", small_scene)
    assert cli.main(["run", "--scene", path, "--out", str(tmp_path / "no" / "t.csv")]) == 3


def test_numerical_abort_exits_4_without_partial_output(tmp_path, small_scene, monkeypatch):
    path = write_scene(tmp_path / "s.json", small_scene)
    real = Simulation.frames

    def exploding(self, n_steps=None):
        for k, w in enumerate(real(self, n_steps)):
            if k == 3:
                raise NumericalInstability(7, w.step_index)
            yield w

    monkeypatch.setattr(Simulation, "frames", exploding)
    out = tmp_path / "t.csv"
    assert cli.main(["run", "--scene", path, "--out", str(out)]) == 4
    assert not out.exists() and list(tmp_path.iterdir()) == [tmp_path / "s.json"]


# --- analyze ---------------------------------------------------------------------

@pytest.fixture
def traj(tmp_path, small_scene):
    out = tmp_path / "traj.csv"
    cli.main(["run", "--scene", write_scene(tmp_path / "s.json", small_scene), "--out", str(out)])
    return out


def write_frames(path, frames):
    trajio.write_trajectory(path, frames)
    return str(path)


def test_density_on_empty_trajectory_is_header_only(tmp_path):
    src = write_frames(tmp_path / "e.csv", [TrajectoryFrame.empty()])
    out = tmp_path / "d.csv"
    assert cli.main(["analyze", "--traj", src, "--metric", "density", "--out", str(out)]) == 0
    assert out.read_text() == "step,cell_x,cell_y,density\n"


def test_jams_metric_reports_cluster(tmp_path):
    f = TrajectoryFrame(0, 0.0, np.arange(5), np.zeros(5, bool),
                        [(k * 1.0, 0.0) for k in range(5)], np.zeros((5, 2)), np.zeros(5, bool))
    src = write_frames(tmp_path / "j.csv", [f])
    out = tmp_path / "jams.csv"
    assert cli.main(["analyze", "--traj", src, "--metric", "jams", "--out", str(out)]) == 0
    assert out.read_text().splitlines() == ["step,cluster_id,size,cx,cy", "0,0,5,2.0,0.0"]


@pytest.mark.parametrize("metric, extra, header", [
    ("density", [], "step,cell_x,cell_y,density"),
    ("curl", ["--cell", "3"], "step,mean_abs_curl"),
    ("flow", ["--gate", "0,-2,0,2", "--window", "1"], "window_start,signed,gross"),
    ("avoidance", ["--ids", "0,1"], "min_separation,speed_dip,lateral_deviation"),
])
def test_metrics_write_their_headers(tmp_path, traj, metric, extra, header):
    out = tmp_path / "m.csv"
    assert cli.main(["analyze", "--traj", str(traj), "--metric", metric, "--out", str(out), *extra]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == header
    if metric in ("curl", "avoidance"):
        assert len(lines) > 1


def test_unknown_metric_exits_6(tmp_path, traj):
    assert cli.main(["analyze", "--traj", str(traj), "--metric", "entropy", "--out", str(tmp_path / "m")]) == 6


def test_malformed_trajectory_exits_5(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("step,time\n1,2\n")
    assert cli.main(["analyze", "--traj", str(bad), "--metric", "density", "--out", str(tmp_path / "m")]) == 5
    assert cli.main(["plot", "--traj", str(bad), "--style", "discs", "--out", str(tmp_path / "p.svg")]) == 5


def test_flow_without_gate_exits_5(tmp_path, traj):
    assert cli.main(["analyze", "--traj", str(traj), "--metric", "flow", "--out", str(tmp_path / "m")]) == 5


def test_missing_trajectory_exits_3(tmp_path):
    assert cli.main(["analyze", "--traj", str(tmp_path / "x.csv"), "--metric", "density",
                     "--out", str(tmp_path / "m")]) == 3


# --- plot ------------------------------------------------------------------------

def test_plot_empty_frame_is_background_only(tmp_path):
    src = write_frames(tmp_path / "e.csv", [TrajectoryFrame.empty()])
    out = tmp_path / "p.svg"
    assert cli.main(["plot", "--traj", src, "--style", "discs", "--out", str(out)]) == 0
    svg = out.read_text()
    assert svg.count("<rect") == 1 and "<circle" not in svg and "<polyline" not in svg


def test_plot_single_person_is_one_circle(tmp_path):
    f = TrajectoryFrame(0, 0.0, [0], [False], [(1.0, 2.0)], [(0.0, 0.0)], [False])
    src = write_frames(tmp_path / "one.csv", [f])
    out = tmp_path / "p.svg"
    assert cli.main(["plot", "--traj", src, "--style", "discs", "--out", str(out), "--frame", "0"]) == 0
    assert out.read_text().count("<circle") == 1


def test_trails_shorter_than_window(tmp_path):
    frames = [TrajectoryFrame(k, k * 0.1, [0], [False], [(k * 1.0, 0.0)], [(1.0, 0.0)], [False])
              for k in range(4)]
    src = write_frames(tmp_path / "t.csv", frames)
    out = tmp_path / "p.svg"
    assert cli.main(["plot", "--traj", src, "--style", "trails", "--out", str(out), "--trail-window", "10"]) == 0
    (points,) = re.findall(r'points="([^"]*)"', out.read_text())
    assert points.split() == ["0,0", "1,0", "2,0", "3,0"]


def test_plot_with_scene_draws_obstacles(tmp_path, traj, small_scene):
    out = tmp_path / "p.svg"
    scene = write_scene(tmp_path / "s2.json", small_scene)
    assert cli.main(["plot", "--traj", str(traj), "--style", "discs", "--out", str(out), "--scene", scene]) == 0
    svg = out.read_text()
    assert 'viewBox="-50 -25 100 50"' in svg
    assert 'r="2" fill="none"' in svg


def test_plot_frame_out_of_range_exits_7(tmp_path, traj):
    out = tmp_path / "p.svg"
    assert cli.main(["plot", "--traj", str(traj), "--style", "discs", "--out", str(out), "--frame", "99"]) == 7
    assert not out.exists()


# --- scenario --------------------------------------------------------------------

def test_scenario_export_parses_back(tmp_path):
    out = tmp_path / "c.json"
    assert cli.main(["scenario", "corridor", "--out", str(out)]) == 0
    from crowdsim.scene import parse_scene
    assert parse_scene(out.read_text()) == scenarios.corridor()


def test_every_builtin_scenario_is_valid():
    from crowdsim.scene import validate_scene
    for name, build in scenarios.SCENARIOS.items():
        assert validate_scene(build()) == [], name
