"""Piecewise-linear visco-elastic interaction, target attraction and the
fixed-step semi-implicit Euler integrator.

The scalar functions (``elastic_magnitude``, ``pair_force``, ...) are the
reference definitions. ``compute_forces`` evaluates the same arithmetic over
numpy arrays, in the same operation order, so both paths agree bitwise.
"""

from __future__ import annotations

import functools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .neighborhood import candidate_pairs_brute, candidate_pairs_grid
from .scene import (
    PERSON_MASS,
    ZONE_C_AMPLIFICATION,
    InteractionProfile,
    Kind,
    ParticleState,
    Phase,
    Scene,
    TargetSpec,
    Vec2,
    build_obstacle_particles,
    sample_profile,
)

COINCIDENT_DISTANCE = 1e-6

# column layout of the per-particle profile array
D1, D2, D3, F1, F2, ZA, ZB, ZC = range(8)


class NumericalInstability(RuntimeError):
    def __init__(self, particle_id: int, step_index: int):
        super().__init__(
            f"non-finite state for particle {particle_id} at step {step_index}; "
            "dt is too large for the contact stiffness")
        self.particle_id = particle_id
        self.step_index = step_index


# --- scalar force laws --------------------------------------------------------

def elastic_magnitude(law: InteractionProfile, dist: float,
                      c_amp: float = ZONE_C_AMPLIFICATION) -> float:
    """Repulsion through knots (d1, f1), (d2, f2), (d3, 0).

    Zero at and beyond d3. Inside d1 the curve continues with the zone B slope
    amplified ``c_amp`` times.
    """
    if dist >= law.d3:
        return 0.0
    if dist >= law.d2:
        return (law.d3 - dist) * (law.f2 / (law.d3 - law.d2))
    k_b = (law.f1 - law.f2) / (law.d2 - law.d1)
    if dist >= law.d1:
        return law.f2 + (law.d2 - dist) * k_b
    return law.f1 + (law.d1 - dist) * (c_amp * k_b)


def zone_viscosity(law: InteractionProfile, dist: float) -> float:
    if dist >= law.d3:
        return 0.0
    if dist >= law.d2:
        return law.z_a
    if dist >= law.d1:
        return law.z_b
    return law.z_c


def combine_profiles(a: ParticleState, b: ParticleState) -> InteractionProfile:
    """Law for one pair: mean of two persons, or the fixed particle's own."""
    if a.kind is Kind.FIXED and b.kind is Kind.FIXED:
        raise ValueError("fixed-fixed pairs do not interact")
    if b.kind is Kind.FIXED:
        return b.profile
    if a.kind is Kind.FIXED:
        return a.profile
    pa, pb = a.profile.as_array(), b.profile.as_array()
    return InteractionProfile.from_array((pa + pb) * 0.5)


def coincident_direction(lo_id: int, hi_id: int) -> tuple[float, float]:
    """Fixed unit vector for a coincident pair, seen from the lower id."""
    h = (lo_id * 0x9E3779B1 + hi_id * 0x85EBCA77 + 0x27D4EB2F) & 0xFFFFFFFF
    theta = 2.0 * math.pi * h / 2.0**32
    return math.cos(theta), math.sin(theta)


def _pair_force_canonical(lo: ParticleState, hi: ParticleState, law: InteractionProfile,
                          literal_damping: bool) -> tuple[float, float]:
    dx = lo.pos.x - hi.pos.x
    dy = lo.pos.y - hi.pos.y
    dist = math.sqrt(dx * dx + dy * dy)
    if dist == 0.0:
        ux, uy = coincident_direction(lo.id, hi.id)
        dist = COINCIDENT_DISTANCE
    else:
        ux, uy = dx / dist, dy / dist
    if dist >= law.d3:
        return 0.0, 0.0
    dvx = lo.vel.x - hi.vel.x
    dvy = lo.vel.y - hi.vel.y
    if literal_damping:
        v = math.sqrt(dvx * dvx + dvy * dvy)
    else:
        v = max(0.0, -(dvx * ux + dvy * uy))
    mag = elastic_magnitude(law, dist) + zone_viscosity(law, dist) * v
    return mag * ux, mag * uy


def pair_force(self: ParticleState, other: ParticleState, law: InteractionProfile | None = None,
               literal_damping: bool = False) -> Vec2:
    """Force exerted on ``self`` by ``other``.

    The result is evaluated once for the (lower id, higher id) orientation and
    negated for the other side, so pair_force(a, b) == -pair_force(b, a)
    holds bit for bit. Damping acts on the radial closing speed only, unless
    ``literal_damping`` selects the norm of the relative velocity.
    """
    if law is None:
        law = combine_profiles(self, other)
    if self.id < other.id:
        fx, fy = _pair_force_canonical(self, other, law, literal_damping)
        return Vec2(fx, fy)
    fx, fy = _pair_force_canonical(other, self, law, literal_damping)
    return Vec2(-fx, -fy)


def target_force(p: ParticleState, t: TargetSpec) -> Vec2:
    """Saturated spring toward the target plus velocity damping.

    Far from the target the pull is capped at f_sat, so free walking settles
    at speed f_sat / z_t.
    """
    dx = t.pos.x - p.pos.x
    dy = t.pos.y - p.pos.y
    d = math.sqrt(dx * dx + dy * dy)
    if d > 0.0:
        pull = min(t.k_t * d, t.f_sat)
        ex, ey = dx / d, dy / d
        fx, fy = pull * ex, pull * ey
    else:
        fx, fy = 0.0, 0.0
    return Vec2(fx - t.z_t * p.vel.x, fy - t.z_t * p.vel.y)


# --- world state ----------------------------------------------------------------

@dataclass
class World:
    """Particle arrays ordered by ascending id, plus injector bookkeeping."""

    step_index: int
    dt: float
    ids: np.ndarray
    fixed: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    profiles: np.ndarray
    target: np.ndarray
    arrived: np.ndarray
    spawned: list[int]
    rng: np.random.Generator
    next_id: int = 0
    injected_total: int = 0

    @property
    def time(self) -> float:
        return self.step_index * self.dt

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def initial(cls, scene: Scene) -> World:
        """Obstacle particles (ids first), then the t = 0 injection."""
        fixed_parts: list[ParticleState] = []
        for ob in scene.obstacles:
            fixed_parts += build_obstacle_particles(ob, first_id=len(fixed_parts))
        n = len(fixed_parts)
        world = cls(
            step_index=0,
            dt=scene.dt,
            ids=np.arange(n, dtype=np.int64),
            fixed=np.ones(n, dtype=bool),
            pos=np.array([p.pos for p in fixed_parts], dtype=float).reshape(n, 2),
            vel=np.zeros((n, 2)),
            profiles=np.array([p.profile.as_array() for p in fixed_parts]).reshape(n, 8),
            target=np.full(n, -1, dtype=np.int64),
            arrived=np.zeros(n, dtype=bool),
            spawned=[0] * len(scene.injectors),
            rng=np.random.default_rng(scene.seed),
            next_id=n,
        )
        return inject(world, scene)

    def copy(self) -> World:
        return replace(self, ids=self.ids.copy(), fixed=self.fixed.copy(), pos=self.pos.copy(),
                       vel=self.vel.copy(), profiles=self.profiles.copy(),
                       target=self.target.copy(), arrived=self.arrived.copy(),
                       spawned=list(self.spawned), rng=clone_rng(self.rng))

    def remaining(self, scene: Scene) -> list[int]:
        return [inj.count - k for inj, k in zip(scene.injectors, self.spawned)]

    def next_spawn_times(self, scene: Scene) -> list[float]:
        return [k / inj.rate if k < inj.count else math.inf
                for inj, k in zip(scene.injectors, self.spawned)]

    def particles(self, scene: Scene) -> list[ParticleState]:
        out = []
        for k in range(len(self.ids)):
            out.append(ParticleState(
                id=int(self.ids[k]),
                kind=Kind.FIXED if self.fixed[k] else Kind.PERSON,
                pos=Vec2(float(self.pos[k, 0]), float(self.pos[k, 1])),
                vel=Vec2(float(self.vel[k, 0]), float(self.vel[k, 1])),
                profile=InteractionProfile.from_array(self.profiles[k]),
                target_id=None if self.fixed[k] else scene.targets[self.target[k]].id,
                phase=Phase.ARRIVED if self.arrived[k] else Phase.ACTIVE,
            ))
        return out

    def without(self, particle_id: int) -> World:
        """Copy with one particle removed (used by locality checks)."""
        keep = self.ids != particle_id
        w = self.copy()
        for name in ("ids", "fixed", "pos", "vel", "profiles", "target", "arrived"):
            setattr(w, name, getattr(w, name)[keep])
        return w


def clone_rng(rng: np.random.Generator) -> np.random.Generator:
    out = np.random.Generator(type(rng.bit_generator)())
    out.bit_generator.state = rng.bit_generator.state
    return out


def inject(world: World, scene: Scene) -> World:
    """Spawn persons whose scheduled time k / rate has been reached.

    Injectors are visited in scene order and ids handed out ascending. Spawn
    positions are uniform over the injector disc.
    """
    now = world.time
    due = [k < inj.count and k / inj.rate <= now + 1e-9
           for inj, k in zip(scene.injectors, world.spawned)]
    if not any(due):
        return world
    rng = clone_rng(world.rng)
    new_pos, new_prof, new_target = [], [], []
    spawned = list(world.spawned)
    tindex = scene.target_index()
    for n, inj in enumerate(scene.injectors):
        k = spawned[n]
        while k < inj.count and k / inj.rate <= now + 1e-9:
            u = rng.random(2)
            r = inj.radius * math.sqrt(u[0])
            theta = 2.0 * math.pi * u[1]
            new_pos.append((inj.center.x + r * math.cos(theta), inj.center.y + r * math.sin(theta)))
            new_prof.append(sample_profile(inj.profile_min, inj.profile_max, rng).as_array())
            new_target.append(tindex[inj.target_id])
            k += 1
        spawned[n] = k
    m = len(new_pos)
    return replace(
        world,
        ids=np.concatenate([world.ids, np.arange(world.next_id, world.next_id + m, dtype=np.int64)]),
        fixed=np.concatenate([world.fixed, np.zeros(m, dtype=bool)]),
        pos=np.concatenate([world.pos, np.array(new_pos, dtype=float).reshape(m, 2)]),
        vel=np.concatenate([world.vel, np.zeros((m, 2))]),
        profiles=np.concatenate([world.profiles, np.array(new_prof).reshape(m, 8)]),
        target=np.concatenate([world.target, np.array(new_target, dtype=np.int64)]),
        arrived=np.concatenate([world.arrived, np.zeros(m, dtype=bool)]),
        spawned=spawned,
        rng=rng,
        next_id=world.next_id + m,
        injected_total=world.injected_total + m,
    )


# --- vectorized forces ----------------------------------------------------------

def _elastic_vec(law: np.ndarray, dist: np.ndarray, c_amp: float = ZONE_C_AMPLIFICATION) -> np.ndarray:
    d1, d2, d3, f1, f2 = law[:, D1], law[:, D2], law[:, D3], law[:, F1], law[:, F2]
    k_b = (f1 - f2) / (d2 - d1)
    zone_a = (d3 - dist) * (f2 / (d3 - d2))
    zone_b = f2 + (d2 - dist) * k_b
    zone_c = f1 + (d1 - dist) * (c_amp * k_b)
    return np.where(dist >= d3, 0.0, np.where(dist >= d2, zone_a, np.where(dist >= d1, zone_b, zone_c)))


def _viscosity_vec(law: np.ndarray, dist: np.ndarray) -> np.ndarray:
    return np.where(dist >= law[:, D3], 0.0,
                    np.where(dist >= law[:, D2], law[:, ZA],
                             np.where(dist >= law[:, D1], law[:, ZB], law[:, ZC])))


@dataclass
class PairTerms:
    """Interacting pairs (i < j by index) and the force each pair puts on i."""

    i: np.ndarray
    j: np.ndarray
    fx: np.ndarray
    fy: np.ndarray


def interacting_pairs(world: World, cell_size: float, broadphase: str = "grid") -> tuple[np.ndarray, np.ndarray]:
    """Pairs (i < j) closer than their pair law's d3, sorted by (i, j)."""
    n = len(world)
    if n < 2:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    if broadphase == "grid":
        i, j = candidate_pairs_grid(world.pos, cell_size)
    elif broadphase == "brute":
        i, j = candidate_pairs_brute(n)
    else:
        raise ValueError(f"unknown broadphase {broadphase!r}")
    live = ~(world.fixed[i] & world.fixed[j])
    i, j = i[live], j[live]
    d = world.pos[i] - world.pos[j]
    dist = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])
    d3 = world.profiles[:, D3]
    fi, fj = world.fixed[i], world.fixed[j]
    reach = np.where(fj, d3[j], np.where(fi, d3[i], (d3[i] + d3[j]) * 0.5))
    close = dist < reach
    i, j = i[close], j[close]
    order = np.argsort(i * n + j, kind="stable")
    return i[order], j[order]


def _pair_law(world: World, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    law = (world.profiles[i] + world.profiles[j]) * 0.5
    fj = world.fixed[j]
    if fj.any():
        law[fj] = world.profiles[j[fj]]
    fi = world.fixed[i]
    if fi.any():
        law[fi] = world.profiles[i[fi]]
    return law


def pair_terms(world: World, i: np.ndarray, j: np.ndarray, literal_damping: bool = False) -> PairTerms:
    if len(i) == 0:
        return PairTerms(i, j, np.zeros(0), np.zeros(0))
    law = _pair_law(world, i, j)
    dx = world.pos[i, 0] - world.pos[j, 0]
    dy = world.pos[i, 1] - world.pos[j, 1]
    dist = np.sqrt(dx * dx + dy * dy)
    coincident = dist == 0.0
    if coincident.any():
        with np.errstate(divide="ignore", invalid="ignore"):
            ux, uy = dx / dist, dy / dist
        dist = dist.copy()
        for k in np.nonzero(coincident)[0]:
            ux[k], uy[k] = coincident_direction(int(world.ids[i[k]]), int(world.ids[j[k]]))
            dist[k] = COINCIDENT_DISTANCE
    else:
        ux, uy = dx / dist, dy / dist
    dvx = world.vel[i, 0] - world.vel[j, 0]
    dvy = world.vel[i, 1] - world.vel[j, 1]
    if literal_damping:
        v = np.sqrt(dvx * dvx + dvy * dvy)
    else:
        v = np.maximum(0.0, -(dvx * ux + dvy * uy))
    mag = _elastic_vec(law, dist) + _viscosity_vec(law, dist) * v
    return PairTerms(i, j, mag * ux, mag * uy)


@functools.lru_cache(maxsize=16)
def _target_table(targets: tuple[TargetSpec, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Target positions (T, 2) and parameters (T, 5): k_t, z_t, f_sat, r_capture, v_capture."""
    tp = np.array([t.pos for t in targets], dtype=float).reshape(-1, 2)
    tk = np.array([[t.k_t, t.z_t, t.f_sat, t.r_capture, t.v_capture] for t in targets],
                  dtype=float).reshape(-1, 5)
    return tp, tk


def target_terms(world: World, scene: Scene) -> np.ndarray:
    """Target force for every person (rows of fixed particles stay zero)."""
    out = np.zeros_like(world.pos)
    persons = np.nonzero(~world.fixed)[0]
    if len(persons) == 0:
        return out
    tp, tk = _target_table(scene.targets)
    tix = world.target[persons]
    dx = tp[tix, 0] - world.pos[persons, 0]
    dy = tp[tix, 1] - world.pos[persons, 1]
    d = np.sqrt(dx * dx + dy * dy)
    k_t, z_t, f_sat = tk[tix, 0], tk[tix, 1], tk[tix, 2]
    pull = np.minimum(k_t * d, f_sat)
    safe = np.where(d > 0.0, d, 1.0)
    fx = np.where(d > 0.0, pull * (dx / safe), 0.0)
    fy = np.where(d > 0.0, pull * (dy / safe), 0.0)
    out[persons, 0] = fx - z_t * world.vel[persons, 0]
    out[persons, 1] = fy - z_t * world.vel[persons, 1]
    return out


def _chunks(n: int, parts: int) -> list[tuple[int, int]]:
    edges = np.linspace(0, n, parts + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def accumulate(terms: PairTerms, n: int, fixed: np.ndarray,
               pool: ThreadPoolExecutor | None = None, threads: int = 1) -> np.ndarray:
    """Sum pair forces per particle in ascending neighbor-id order.

    Each particle's sum is formed sequentially over its own sorted
    contributions, so splitting rows across threads cannot change the result.
    """
    out = np.zeros((n, 2))
    if len(terms.i) == 0:
        return out
    rows = np.concatenate([terms.i, terms.j])
    cols = np.concatenate([terms.j, terms.i])
    fx = np.concatenate([terms.fx, -terms.fx])
    fy = np.concatenate([terms.fy, -terms.fy])
    keep = ~fixed[rows]
    rows, cols, fx, fy = rows[keep], cols[keep], fx[keep], fy[keep]
    order = np.argsort(rows * n + cols, kind="stable")
    rows, fx, fy = rows[order], fx[order], fy[order]

    if pool is None or threads <= 1:
        out[:, 0] = np.bincount(rows, weights=fx, minlength=n)
        out[:, 1] = np.bincount(rows, weights=fy, minlength=n)
        return out

    def work(span: tuple[int, int]) -> None:
        a, b = span
        s, e = np.searchsorted(rows, [a, b])
        out[a:b, 0] = np.bincount(rows[s:e] - a, weights=fx[s:e], minlength=b - a)
        out[a:b, 1] = np.bincount(rows[s:e] - a, weights=fy[s:e], minlength=b - a)

    list(pool.map(work, _chunks(n, threads)))
    return out


@dataclass
class StepOptions:
    broadphase: str = "grid"
    literal_damping: bool = False
    threads: int = 1
    pool: ThreadPoolExecutor | None = field(default=None, repr=False)


def compute_forces(world: World, scene: Scene, options: StepOptions | None = None) -> np.ndarray:
    """Total force on every particle (zero rows for fixed particles)."""
    opt = options or StepOptions()
    # grid cells must cover the longest reach actually present
    reach = float(world.profiles[:, D3].max()) if len(world) else 0.0
    i, j = interacting_pairs(world, max(reach, 1e-9), opt.broadphase)
    if opt.pool is not None and opt.threads > 1 and len(i) > 0:
        spans = _chunks(len(i), opt.threads)
        parts = list(opt.pool.map(
            lambda s: pair_terms(world, i[s[0]:s[1]], j[s[0]:s[1]], opt.literal_damping), spans))
        terms = PairTerms(i, j, np.concatenate([p.fx for p in parts]),
                          np.concatenate([p.fy for p in parts]))
    else:
        terms = pair_terms(world, i, j, opt.literal_damping)
    total = accumulate(terms, len(world), world.fixed, opt.pool, opt.threads)
    return total + target_terms(world, scene)


def step(world: World, scene: Scene, options: StepOptions | None = None) -> World:
    """Advance one dt: integrate persons, then inject, then mark arrivals.

    Returns a new World; the input is left untouched.
    """
    force = compute_forces(world, scene, options)
    persons = ~world.fixed
    vel = world.vel.copy()
    pos = world.pos.copy()
    # overflow surfaces as inf/nan and is reported just below
    with np.errstate(over="ignore", invalid="ignore"):
        vel[persons] = vel[persons] + (force[persons] / PERSON_MASS) * scene.dt
        pos[persons] = pos[persons] + vel[persons] * scene.dt

    bad = ~(np.isfinite(pos).all(axis=1) & np.isfinite(vel).all(axis=1))
    if bad.any():
        raise NumericalInstability(int(world.ids[np.argmax(bad)]), world.step_index + 1)

    nxt = replace(world, step_index=world.step_index + 1, pos=pos, vel=vel)
    nxt = inject(nxt, scene)
    return mark_arrivals(nxt, scene)


def mark_arrivals(world: World, scene: Scene) -> World:
    cand = np.nonzero(~world.fixed & ~world.arrived)[0]
    if len(cand) == 0 or not scene.targets:
        return world
    tp, tk = _target_table(scene.targets)
    rc, vc = tk[:, 3], tk[:, 4]
    tix = world.target[cand]
    d = world.pos[cand] - tp[tix]
    dist = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])
    v = world.vel[cand]
    speed = np.sqrt(v[:, 0] * v[:, 0] + v[:, 1] * v[:, 1])
    hit = (dist < rc[tix]) & (speed < vc[tix])
    if not hit.any():
        return world
    arrived = world.arrived.copy()
    arrived[cand[hit]] = True
    return replace(world, arrived=arrived)


class Simulation:
    """Runs a scene from t = 0, yielding worlds every ``output_stride`` steps."""

    def __init__(self, scene: Scene, broadphase: str = "grid", literal_damping: bool = False,
                 threads: int = 1):
        self.scene = scene
        self.threads = max(1, int(threads))
        self.options = StepOptions(broadphase=broadphase, literal_damping=literal_damping,
                                   threads=self.threads)

    def frames(self, n_steps: int | None = None):
        n_steps = self.scene.n_steps if n_steps is None else n_steps
        stride = self.scene.output_stride
        pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None
        self.options.pool = pool
        try:
            world = World.initial(self.scene)
            yield world
            for _ in range(n_steps):
                world = step(world, self.scene, self.options)
                if world.step_index % stride == 0:
                    yield world
        finally:
            self.options.pool = None
            if pool is not None:
                pool.shutdown()

    def run(self, n_steps: int | None = None) -> World:
        world = None
        for world in self.frames(n_steps):
            pass
        return world
