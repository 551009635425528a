"""Ready-made scenes: the head-on encounter, corridor counterflow, crossing
flows, an open place and the throughput benchmark."""

from __future__ import annotations

import math

from .scene import (
    DEFAULT_PROFILE,
    Bounds,
    InjectorSpec,
    InteractionProfile,
    ObstacleSpec,
    Scene,
    TargetSpec,
    Vec2,
    jitter_bounds,
)

# Compressible crowd for narrow passages: smaller spheres, softer contact,
# stronger damping.
ALLEY_PROFILE = InteractionProfile(d1=0.5, d2=1.0, d3=2.0, f1=20.0, f2=2.0,
                                   z_a=2.0, z_b=4.0, z_c=8.0)

# Wall envelope for 4 m thick walls: impenetrable up to the wall face.
WALL_PROFILE = InteractionProfile(d1=2.0, d2=2.5, d3=3.0, f1=60.0, f2=6.0,
                                  z_a=1.0, z_b=2.0, z_c=4.0)


def lone_walker(distance: float = 100.0, duration: float = 12.0, dt: float = 0.05) -> Scene:
    return Scene(
        bounds=Bounds(distance / 2, 0.0, distance + 10, 20.0), duration=duration, dt=dt,
        targets=(TargetSpec("far", Vec2(distance, 0.0)),),
        injectors=(InjectorSpec("origin", Vec2(0.0, 0.0), 1, 1.0, "far", radius=0.0,
                                profile_min=DEFAULT_PROFILE, profile_max=DEFAULT_PROFILE),),
    )


def head_on(offset: float = 0.3, start: float = 15.0, duration: float = 40.0,
            dt: float = 0.05, profile: InteractionProfile = DEFAULT_PROFILE) -> Scene:
    """Two persons walking toward each other; ``offset`` breaks the symmetry.

    Person 0 starts at (-start, 0) bound for (start + 10, offset); person 1
    starts at (start, offset) bound for (-start - 10, 0).
    """
    far = start + 10.0
    return Scene(
        bounds=Bounds(0.0, 0.0, 2 * far + 10, 20.0), duration=duration, dt=dt,
        targets=(TargetSpec("east", Vec2(far, offset)), TargetSpec("west", Vec2(-far, 0.0))),
        injectors=(
            InjectorSpec("a", Vec2(-start, 0.0), 1, 1.0, "east", radius=0.0,
                         profile_min=profile, profile_max=profile),
            InjectorSpec("b", Vec2(start, offset), 1, 1.0, "west", radius=0.0,
                         profile_min=profile, profile_max=profile),
        ),
    )


def corridor(seed: int = 42, count: int = 30, rate: float = 2.0, gap: float = 4.0,
             duration: float = 300.0, dt: float = 0.05, output_stride: int = 1) -> Scene:
    """Counterflow through a ``gap``-wide opening between two long walls.

    Each side injects ``count`` persons at ``rate`` per second toward a target
    beyond the far side of the walls.
    """
    lo, hi = jitter_bounds(ALLEY_PROFILE)
    wall_len = 40.0
    return Scene(
        bounds=Bounds(0.0, 0.0, 100.0, 50.0), duration=duration, dt=dt, seed=seed,
        output_stride=output_stride,
        targets=(TargetSpec("east", Vec2(40.0, 0.0), r_capture=5.0),
                 TargetSpec("west", Vec2(-40.0, 0.0), r_capture=5.0)),
        injectors=(
            InjectorSpec("west-in", Vec2(-20.0, 0.0), count, rate, "east", radius=2.0,
                         profile_min=lo, profile_max=hi),
            InjectorSpec("east-in", Vec2(20.0, 0.0), count, rate, "west", radius=2.0,
                         profile_min=lo, profile_max=hi),
        ),
        obstacles=(
            ObstacleSpec("north-wall", Vec2(0.0, gap / 2 + wall_len / 2), 4.0, wall_len,
                         spacing=1.0, profile=WALL_PROFILE),
            ObstacleSpec("south-wall", Vec2(0.0, -gap / 2 - wall_len / 2), 4.0, wall_len,
                         spacing=1.0, profile=WALL_PROFILE),
        ),
    )


def crossing(seed: int = 7, count: int = 40, rate: float = 1.0, arm: float = 20.0,
             duration: float = 90.0, dt: float = 0.05, output_stride: int = 10,
             profile: InteractionProfile = ALLEY_PROFILE) -> Scene:
    """Four flows from the corners of a square, each bound for the opposite
    corner, meeting in the central region."""
    lo, hi = jitter_bounds(profile)
    targets, injectors = [], []
    for k, (sx, sy) in enumerate(((-1, -1), (1, -1), (1, 1), (-1, 1))):
        targets.append(TargetSpec(f"t{k}", Vec2(-sx * (arm + 15), -sy * (arm + 15)), r_capture=6.0))
        injectors.append(InjectorSpec(f"i{k}", Vec2(sx * arm, sy * arm), count, rate, f"t{k}",
                                      radius=2.0, profile_min=lo, profile_max=hi))
    return Scene(bounds=Bounds(0.0, 0.0, 2 * arm + 40, 2 * arm + 40), duration=duration, dt=dt,
                 seed=seed, output_stride=output_stride, targets=tuple(targets),
                 injectors=tuple(injectors))


def single_flow(seed: int = 7, count: int = 640, rate: float = 16.0, arm: float = 20.0,
                duration: float = 90.0, dt: float = 0.05, output_stride: int = 10,
                profile: InteractionProfile = ALLEY_PROFILE, radius: float = 7.0) -> Scene:
    """One diagonal flow through the central region of :func:`crossing`.

    The defaults give the same peak head count in the central 10 x 10 m
    region as the default crossing scene (about 65 persons).
    """
    lo, hi = jitter_bounds(profile)
    return Scene(
        bounds=Bounds(0.0, 0.0, 2 * arm + 40, 2 * arm + 40), duration=duration, dt=dt,
        seed=seed, output_stride=output_stride,
        targets=(TargetSpec("t", Vec2(arm + 15, arm + 15), r_capture=6.0),),
        injectors=(InjectorSpec("i", Vec2(-arm, -arm), count, rate, "t", radius=radius,
                                profile_min=lo, profile_max=hi),),
    )


def open_place(seed: int = 3, per_gate: int = 60, rate: float = 1.0, size: float = 80.0,
               duration: float = 240.0, dt: float = 0.05, output_stride: int = 20) -> Scene:
    """Open square with two buildings; people enter from the four sides and
    gather at three meeting points, all with the default profile."""
    lo, hi = jitter_bounds(DEFAULT_PROFILE)
    half = size / 2
    spots = (Vec2(-12.0, 8.0), Vec2(14.0, 10.0), Vec2(0.0, -14.0))
    targets = tuple(TargetSpec(f"spot{k}", p, r_capture=12.0) for k, p in enumerate(spots))
    gates = (Vec2(-half, 0.0), Vec2(half, 0.0), Vec2(0.0, -half), Vec2(0.0, half))
    injectors = tuple(
        InjectorSpec(f"gate{k}", g, per_gate, rate, targets[k % len(targets)].id, radius=3.0,
                     profile_min=lo, profile_max=hi)
        for k, g in enumerate(gates))
    obstacles = (
        ObstacleSpec("stoa", Vec2(0.0, half - 6), 30.0, 6.0, spacing=3.0,
                     profile=InteractionProfile(3.0, 4.5, 6.0, 60.0, 6.0, 1.0, 2.0, 4.0)),
        ObstacleSpec("temple", Vec2(half - 10, -half + 10), 8.0, 8.0,
                     profile=InteractionProfile(5.0, 6.5, 8.0, 60.0, 6.0, 1.0, 2.0, 4.0)),
    )
    return Scene(bounds=Bounds(0.0, 0.0, size + 20, size + 20), duration=duration, dt=dt,
                 seed=seed, output_stride=output_stride, targets=targets,
                 injectors=injectors, obstacles=obstacles)


def throughput(persons: int = 2000, duration: float = 60.0, dt: float = 0.04,
               seed: int = 1) -> Scene:
    """``persons`` spread over a 4 x 4 lattice of spawn discs (roughly 14 m^2
    per person over the lattice), all present from the first step, each group
    walking to the mirrored lattice point."""
    side = 4
    per = persons // (side * side)
    extra = persons - per * side * side
    spacing = 42.0
    coords = [spacing * (k - (side - 1) / 2) for k in range(side)]
    targets, injectors = [], []
    n = 0
    for x in coords:
        for y in coords:
            count = per + (1 if n < extra else 0)
            targets.append(TargetSpec(f"t{n}", Vec2(-x, -y)))
            injectors.append(InjectorSpec(f"i{n}", Vec2(x, y), count, 1e4, f"t{n}",
                                          radius=math.sqrt(count * 10.0 / math.pi)))
            n += 1
    extent = spacing * side + 20
    return Scene(bounds=Bounds(0.0, 0.0, extent, extent), duration=duration, dt=dt, seed=seed,
                 output_stride=max(1, int(round(1.0 / dt))), targets=tuple(targets),
                 injectors=tuple(injectors))


SCENARIOS = {
    "lone-walker": lone_walker,
    "head-on": head_on,
    "corridor": corridor,
    "crossing": crossing,
    "single-flow": single_flow,
    "open-place": open_place,
    "throughput": throughput,
}
