"""Scene description: domain types, JSON scene parsing, validation,
obstacle envelopes and per-person parameter sampling."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, NamedTuple

import numpy as np

# Zone C slope is the zone B slope times this factor.
ZONE_C_AMPLIFICATION = 10.0

PERSON_MASS = 1.0

DEFAULT_DT = 0.05
DEFAULT_OUTPUT_STRIDE = 1
DEFAULT_SEED = 0


class Vec2(NamedTuple):
    x: float
    y: float

    def dot(self, other) -> float:
        return self.x * other[0] + self.y * other[1]

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y)

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y)


class Kind(str, Enum):
    PERSON = "person"
    FIXED = "fixed"


class Phase(str, Enum):
    ACTIVE = "active"
    ARRIVED = "arrived"


@dataclass(frozen=True)
class InteractionProfile:
    """Distance thresholds (d1 < d2 < d3), knot forces at d1 and d2, and one
    viscosity per zone (A: d2..d3, B: d1..d2, C: below d1)."""

    d1: float
    d2: float
    d3: float
    f1: float
    f2: float
    z_a: float
    z_b: float
    z_c: float

    FIELDS = ("d1", "d2", "d3", "f1", "f2", "z_a", "z_b", "z_c")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in self.FIELDS], dtype=float)

    @classmethod
    def from_array(cls, values) -> InteractionProfile:
        return cls(*(float(v) for v in values))

    def violations(self, path: str = "profile") -> list[Violation]:
        out = []
        vals = self.as_array()
        if not np.all(np.isfinite(vals)):
            out.append(Violation("value.non-finite", path, "profile contains a non-finite value"))
            return out
        if not 0 < self.d1 < self.d2 < self.d3:
            out.append(Violation(
                "profile.threshold-order", path,
                f"thresholds must satisfy 0 < d1 < d2 < d3, got {self.d1}, {self.d2}, {self.d3}"))
        if not self.f1 > self.f2 > 0:
            out.append(Violation(
                "profile.force-order", path,
                f"knot forces must satisfy f1 > f2 > 0, got {self.f1}, {self.f2}"))
        if min(self.z_a, self.z_b, self.z_c) < 0:
            out.append(Violation("profile.viscosity-negative", path, "viscosities must be >= 0"))
        return out

    @property
    def zone_c_slope(self) -> float:
        return ZONE_C_AMPLIFICATION * (self.f1 - self.f2) / (self.d2 - self.d1)


DEFAULT_PROFILE = InteractionProfile(d1=1.0, d2=3.0, d3=5.0, f1=60.0, f2=6.0,
                                     z_a=1.0, z_b=2.0, z_c=4.0)


def jitter_bounds(p: InteractionProfile, rel: float = 0.2) -> tuple[InteractionProfile, InteractionProfile]:
    """Bounds giving +-rel on d1 and on each threshold gap; forces and
    viscosities are left unjittered."""
    g2, g3 = p.d2 - p.d1, p.d3 - p.d2
    lo_d1, hi_d1 = p.d1 * (1 - rel), p.d1 * (1 + rel)
    lo = replace(p, d1=lo_d1, d2=lo_d1 + g2 * (1 - rel), d3=lo_d1 + (g2 + g3) * (1 - rel))
    hi = replace(p, d1=hi_d1, d2=hi_d1 + g2 * (1 + rel), d3=hi_d1 + (g2 + g3) * (1 + rel))
    return lo, hi


DEFAULT_PROFILE_MIN, DEFAULT_PROFILE_MAX = jitter_bounds(DEFAULT_PROFILE)


@dataclass
class ParticleState:
    id: int
    kind: Kind
    pos: Vec2
    vel: Vec2
    profile: InteractionProfile
    target_id: str | None = None
    phase: Phase = Phase.ACTIVE


@dataclass(frozen=True)
class TargetSpec:
    id: str
    pos: Vec2
    k_t: float = 1.0
    z_t: float = 2.0
    f_sat: float = 3.0
    r_capture: float = 1.5
    v_capture: float = 0.3


@dataclass(frozen=True)
class InjectorSpec:
    id: str
    center: Vec2
    count: int
    rate: float
    target_id: str
    radius: float = 1.0
    profile_min: InteractionProfile = DEFAULT_PROFILE_MIN
    profile_max: InteractionProfile = DEFAULT_PROFILE_MAX


@dataclass(frozen=True)
class ObstacleSpec:
    id: str
    center: Vec2
    w: float
    h: float
    angle_deg: float = 0.0
    spacing: float = 1.0
    profile: InteractionProfile = DEFAULT_PROFILE


@dataclass(frozen=True)
class Bounds:
    cx: float
    cy: float
    w: float
    h: float

    @property
    def extent(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2, self.cy - self.h / 2, self.w, self.h)


@dataclass(frozen=True)
class Scene:
    bounds: Bounds
    duration: float
    dt: float = DEFAULT_DT
    seed: int = DEFAULT_SEED
    output_stride: int = DEFAULT_OUTPUT_STRIDE
    targets: tuple[TargetSpec, ...] = ()
    injectors: tuple[InjectorSpec, ...] = ()
    obstacles: tuple[ObstacleSpec, ...] = ()

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def target_index(self) -> dict[str, int]:
        return {t.id: i for i, t in enumerate(self.targets)}

    def all_profiles(self) -> list[InteractionProfile]:
        out = []
        for inj in self.injectors:
            out += [inj.profile_min, inj.profile_max]
        out += [ob.profile for ob in self.obstacles]
        return out

    def max_interaction_range(self) -> float:
        """Largest d3 any particle of this scene can carry."""
        return max((p.d3 for p in self.all_profiles()), default=DEFAULT_PROFILE.d3)


# --- errors -----------------------------------------------------------------

class SceneError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class SceneSyntaxError(SceneError):
    pass


class SceneSchemaError(SceneError):
    pass


class SceneReferenceError(SceneError):
    pass


class SceneValidationError(SceneError):
    def __init__(self, violations: list[Violation]):
        super().__init__(violations[0].path, "; ".join(v.code for v in violations))
        self.violations = violations


@dataclass(frozen=True)
class Violation:
    code: str
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.code} at {self.path}: {self.message}"


# --- parsing ----------------------------------------------------------------

_PROFILE_KEYS = set(InteractionProfile.FIELDS)


def _number(obj: dict, key: str, path: str, default: Any = ...) -> float:
    if key not in obj:
        if default is ...:
            raise SceneSchemaError(f"{path}.{key}", "missing required key")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SceneSchemaError(f"{path}.{key}", f"expected a number, got {type(v).__name__}")
    return float(v)


def _integer(obj: dict, key: str, path: str, default: Any = ...) -> int:
    if key not in obj:
        if default is ...:
            raise SceneSchemaError(f"{path}.{key}", "missing required key")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise SceneSchemaError(f"{path}.{key}", f"expected an integer, got {type(v).__name__}")
    return v


def _string(obj: dict, key: str, path: str) -> str:
    if key not in obj:
        raise SceneSchemaError(f"{path}.{key}", "missing required key")
    v = obj[key]
    if not isinstance(v, str):
        raise SceneSchemaError(f"{path}.{key}", f"expected a string, got {type(v).__name__}")
    return v


def _object(v: Any, path: str, allowed: set[str]) -> dict:
    if not isinstance(v, dict):
        raise SceneSchemaError(path, f"expected an object, got {type(v).__name__}")
    unknown = sorted(set(v) - allowed)
    if unknown:
        raise SceneSchemaError(f"{path}.{unknown[0]}", "unknown key")
    return v


def _list(doc: dict, key: str) -> list:
    v = doc.get(key, [])
    if not isinstance(v, list):
        raise SceneSchemaError(key, f"expected an array, got {type(v).__name__}")
    return v


def _profile(obj: dict, key: str, path: str, default: InteractionProfile) -> InteractionProfile:
    if key not in obj:
        return default
    p = f"{path}.{key}"
    raw = _object(obj[key], p, _PROFILE_KEYS)
    return InteractionProfile(**{k: _number(raw, k, p) for k in InteractionProfile.FIELDS})


def parse_scene(text: str | bytes, validate: bool = True) -> Scene:
    """Parse a JSON scene document.

    Raises SceneSyntaxError, SceneSchemaError or SceneReferenceError naming
    the offending path; with ``validate`` the result is also checked by
    :func:`validate_scene` and SceneValidationError raised on violations.
    """
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SceneSyntaxError("", f"malformed JSON: {exc}") from None

    doc = _object(doc, "$", {"bounds", "simulation", "targets", "injectors", "obstacles"})
    for key in ("bounds", "simulation"):
        if key not in doc:
            raise SceneSchemaError(key, "missing required key")

    b = _object(doc["bounds"], "bounds", {"cx", "cy", "w", "h"})
    bounds = Bounds(*(_number(b, k, "bounds") for k in ("cx", "cy", "w", "h")))

    sim = _object(doc["simulation"], "simulation", {"dt", "duration", "seed", "output_stride"})
    dt = _number(sim, "dt", "simulation", DEFAULT_DT)
    duration = _number(sim, "duration", "simulation")
    seed = _integer(sim, "seed", "simulation", DEFAULT_SEED)
    if not 0 <= seed < 2**64:
        raise SceneSchemaError("simulation.seed", "seed must be a 64-bit unsigned integer")
    stride = _integer(sim, "output_stride", "simulation", DEFAULT_OUTPUT_STRIDE)

    targets = []
    for i, raw in enumerate(_list(doc, "targets")):
        p = f"targets[{i}]"
        raw = _object(raw, p, {"id", "x", "y", "k_t", "z_t", "f_sat", "r_capture", "v_capture"})
        d = TargetSpec("", Vec2(0.0, 0.0))
        targets.append(TargetSpec(
            id=_string(raw, "id", p),
            pos=Vec2(_number(raw, "x", p), _number(raw, "y", p)),
            **{k: _number(raw, k, p, getattr(d, k))
               for k in ("k_t", "z_t", "f_sat", "r_capture", "v_capture")},
        ))
    target_ids = {t.id for t in targets}

    injectors = []
    for i, raw in enumerate(_list(doc, "injectors")):
        p = f"injectors[{i}]"
        raw = _object(raw, p, {"id", "x", "y", "radius", "count", "rate", "target_id",
                               "profile_min", "profile_max"})
        target_id = _string(raw, "target_id", p)
        if target_id not in target_ids:
            raise SceneReferenceError(f"{p}.target_id", f"no target with id {target_id!r}")
        injectors.append(InjectorSpec(
            id=_string(raw, "id", p),
            center=Vec2(_number(raw, "x", p), _number(raw, "y", p)),
            radius=_number(raw, "radius", p, 1.0),
            count=_integer(raw, "count", p),
            rate=_number(raw, "rate", p),
            target_id=target_id,
            profile_min=_profile(raw, "profile_min", p, DEFAULT_PROFILE_MIN),
            profile_max=_profile(raw, "profile_max", p, DEFAULT_PROFILE_MAX),
        ))

    obstacles = []
    for i, raw in enumerate(_list(doc, "obstacles")):
        p = f"obstacles[{i}]"
        raw = _object(raw, p, {"id", "cx", "cy", "w", "h", "angle_deg", "spacing", "profile"})
        obstacles.append(ObstacleSpec(
            id=_string(raw, "id", p),
            center=Vec2(_number(raw, "cx", p), _number(raw, "cy", p)),
            w=_number(raw, "w", p),
            h=_number(raw, "h", p),
            angle_deg=_number(raw, "angle_deg", p, 0.0),
            spacing=_number(raw, "spacing", p, 1.0),
            profile=_profile(raw, "profile", p, DEFAULT_PROFILE),
        ))

    scene = Scene(bounds=bounds, duration=duration, dt=dt, seed=seed, output_stride=stride,
                  targets=tuple(targets), injectors=tuple(injectors), obstacles=tuple(obstacles))
    if validate:
        problems = validate_scene(scene)
        if problems:
            raise SceneValidationError(problems)
    return scene


def scene_to_dict(scene: Scene) -> dict:
    """Inverse of :func:`parse_scene` (all defaults written out)."""

    def prof(p: InteractionProfile) -> dict:
        return {k: getattr(p, k) for k in InteractionProfile.FIELDS}

    return {
        "bounds": {"cx": scene.bounds.cx, "cy": scene.bounds.cy,
                   "w": scene.bounds.w, "h": scene.bounds.h},
        "simulation": {"dt": scene.dt, "duration": scene.duration, "seed": scene.seed,
                       "output_stride": scene.output_stride},
        "targets": [{"id": t.id, "x": t.pos.x, "y": t.pos.y, "k_t": t.k_t, "z_t": t.z_t,
                     "f_sat": t.f_sat, "r_capture": t.r_capture, "v_capture": t.v_capture}
                    for t in scene.targets],
        "injectors": [{"id": j.id, "x": j.center.x, "y": j.center.y, "radius": j.radius,
                       "count": j.count, "rate": j.rate, "target_id": j.target_id,
                       "profile_min": prof(j.profile_min), "profile_max": prof(j.profile_max)}
                      for j in scene.injectors],
        "obstacles": [{"id": o.id, "cx": o.center.x, "cy": o.center.y, "w": o.w, "h": o.h,
                       "angle_deg": o.angle_deg, "spacing": o.spacing, "profile": prof(o.profile)}
                      for o in scene.obstacles],
    }


# --- validation -------------------------------------------------------------

def stability_limit(scene: Scene) -> float:
    """Largest admissible dt for the stiffest contact the scene can produce.

    Symplectic Euler on an undamped spring is stable for dt < 2/omega with
    omega = sqrt(K / m_reduced). Person pairs have m_reduced = m/2, a person
    against a fixed particle has m_reduced = m.
    """
    limits = []
    for inj in scene.injectors:
        lo, hi = inj.profile_min, inj.profile_max
        gap = min(lo.d2 - lo.d1, hi.d2 - hi.d1)
        if gap > 0:
            k = ZONE_C_AMPLIFICATION * (hi.f1 - lo.f2) / gap
            if k > 0:
                limits.append(2.0 * math.sqrt(0.5 * PERSON_MASS / k))
    for ob in scene.obstacles:
        k = ob.profile.zone_c_slope if ob.profile.d2 > ob.profile.d1 else 0.0
        if k > 0:
            limits.append(2.0 * math.sqrt(PERSON_MASS / k))
    for t in scene.targets:
        if t.k_t > 0:
            limits.append(2.0 * math.sqrt(PERSON_MASS / t.k_t))
    return min(limits, default=math.inf)


def validate_scene(scene: Scene) -> list[Violation]:
    """Check every scene invariant; returns [] for a valid scene."""
    out: list[Violation] = []

    def check(cond: bool, code: str, path: str, msg: str) -> None:
        if not cond:
            out.append(Violation(code, path, msg))

    b = scene.bounds
    check(all(map(math.isfinite, (b.cx, b.cy, b.w, b.h))), "value.non-finite", "bounds",
          "bounds must be finite")
    check(b.w > 0 and b.h > 0, "bounds.size-nonpositive", "bounds", "bounds w and h must be > 0")
    check(math.isfinite(scene.dt) and scene.dt > 0, "simulation.dt-nonpositive", "simulation.dt",
          "dt must be a finite positive number")
    check(math.isfinite(scene.duration) and scene.duration > 0, "simulation.duration-nonpositive",
          "simulation.duration", "duration must be a finite positive number")
    check(scene.output_stride >= 1, "simulation.output-stride", "simulation.output_stride",
          "output_stride must be >= 1")
    check(0 <= scene.seed < 2**64, "simulation.seed-range", "simulation.seed",
          "seed must be a 64-bit unsigned integer")

    ids: dict[str, str] = {}

    def unique(kind: str, ident: str, path: str) -> None:
        key = f"{kind}:{ident}"
        check(key not in ids, "scene.duplicate-id", path, f"duplicate {kind} id {ident!r}")
        ids.setdefault(key, path)

    for i, t in enumerate(scene.targets):
        p = f"targets[{i}]"
        unique("target", t.id, p)
        nums = (t.pos.x, t.pos.y, t.k_t, t.z_t, t.f_sat, t.r_capture, t.v_capture)
        if not all(map(math.isfinite, nums)):
            out.append(Violation("value.non-finite", p, "target contains a non-finite value"))
            continue
        for k in ("k_t", "z_t", "f_sat", "r_capture"):
            check(getattr(t, k) > 0, "target.param-nonpositive", f"{p}.{k}", f"{k} must be > 0")
        check(t.v_capture >= 0, "target.param-nonpositive", f"{p}.v_capture",
              "v_capture must be >= 0")

    targets = scene.target_index()
    for i, j in enumerate(scene.injectors):
        p = f"injectors[{i}]"
        unique("injector", j.id, p)
        if not all(map(math.isfinite, (j.center.x, j.center.y, j.radius, j.rate))):
            out.append(Violation("value.non-finite", p, "injector contains a non-finite value"))
        check(j.target_id in targets, "scene.unresolved-target", f"{p}.target_id",
              f"no target with id {j.target_id!r}")
        check(j.count >= 0, "injector.count-negative", f"{p}.count", "count must be >= 0")
        check(j.rate > 0, "injector.rate-nonpositive", f"{p}.rate", "rate must be > 0")
        check(j.radius >= 0, "injector.radius-negative", f"{p}.radius", "radius must be >= 0")
        lo_bad = j.profile_min.violations(f"{p}.profile_min")
        hi_bad = j.profile_max.violations(f"{p}.profile_max")
        out += lo_bad + hi_bad
        if not lo_bad and not hi_bad:
            lo, hi = j.profile_min.as_array(), j.profile_max.as_array()
            check(bool(np.all(lo <= hi)), "profile.jitter-bounds", p,
                  "profile_min must not exceed profile_max in any field")
            check(j.profile_max.f2 < j.profile_min.f1, "profile.jitter-force-overlap", p,
                  "f2 range must lie strictly below the f1 range")

    for i, ob in enumerate(scene.obstacles):
        p = f"obstacles[{i}]"
        unique("obstacle", ob.id, p)
        nums = (ob.center.x, ob.center.y, ob.w, ob.h, ob.angle_deg, ob.spacing)
        if not all(map(math.isfinite, nums)):
            out.append(Violation("value.non-finite", p, "obstacle contains a non-finite value"))
            continue
        check(ob.w > 0 and ob.h > 0, "obstacle.size-nonpositive", p, "w and h must be > 0")
        check(ob.spacing > 0, "obstacle.spacing-nonpositive", f"{p}.spacing", "spacing must be > 0")
        out += ob.profile.violations(f"{p}.profile")

    structural = {v.code for v in out}
    if not structural & {"simulation.dt-nonpositive", "profile.threshold-order",
                         "profile.force-order", "value.non-finite"}:
        limit = stability_limit(scene)
        check(scene.dt < limit, "simulation.dt-unstable", "simulation.dt",
              f"dt={scene.dt} exceeds the stability limit {limit:.4g} s for the stiffest contact")
    return out


# --- obstacle envelopes -------------------------------------------------------

def obstacle_offsets(spec: ObstacleSpec) -> list[Vec2]:
    """Particle positions of an obstacle envelope, before assigning ids."""
    length = abs(spec.w - spec.h)
    n = max(1, math.ceil(length / spec.spacing) + 1)
    if n == 1:
        along = [0.0]
    else:
        along = [-length / 2 + length * k / (n - 1) for k in range(n)]
    theta = math.radians(spec.angle_deg)
    if spec.h > spec.w:
        theta += math.pi / 2
    c, s = math.cos(theta), math.sin(theta)
    return [Vec2(spec.center.x + a * c, spec.center.y + a * s) for a in along]


def build_obstacle_particles(spec: ObstacleSpec, first_id: int = 0) -> list[ParticleState]:
    """Fixed particles on the medial segment of a rectangular obstacle.

    A square collapses to a single particle at its center; a w x h rectangle
    gets ceil(|w - h| / spacing) + 1 particles evenly spread along its
    long-axis centerline.
    """
    return [
        ParticleState(id=first_id + k, kind=Kind.FIXED, pos=pos, vel=Vec2(0.0, 0.0),
                      profile=spec.profile)
        for k, pos in enumerate(obstacle_offsets(spec))
    ]


# --- parameter jitter ---------------------------------------------------------

def sample_profile(base_min: InteractionProfile, base_max: InteractionProfile,
                   rng: np.random.Generator) -> InteractionProfile:
    """Draw one profile uniformly between ``base_min`` and ``base_max``.

    Thresholds are drawn as d1 and the two gaps so that d1 < d2 < d3 holds
    without rejection; each result is clipped into its field's [min, max].
    """
    lo, hi = base_min, base_max
    u = rng.random(8)

    def draw(a: float, b: float, t: float) -> float:
        return a + (b - a) * t

    d1 = draw(lo.d1, hi.d1, u[0])
    g2 = sorted((lo.d2 - lo.d1, hi.d2 - hi.d1))
    d2 = min(max(d1 + draw(g2[0], g2[1], u[1]), lo.d2), hi.d2)
    g3 = sorted((lo.d3 - lo.d2, hi.d3 - hi.d2))
    d3 = min(max(d2 + draw(g3[0], g3[1], u[2]), lo.d3), hi.d3)
    return InteractionProfile(
        d1=d1, d2=d2, d3=d3,
        f1=draw(lo.f1, hi.f1, u[3]),
        f2=draw(lo.f2, hi.f2, u[4]),
        z_a=draw(lo.z_a, hi.z_a, u[5]),
        z_b=draw(lo.z_b, hi.z_b, u[6]),
        z_c=draw(lo.z_c, hi.z_c, u[7]),
    )
