"""Synthetic depth camera, noise injection and a kinematic unicycle robot.

World frame is z-up and right-handed.  The camera sits at the robot origin and
looks along the body x axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .camera import BodyFrameExtrinsics, CameraIntrinsics
from .grid import NO_RETURN, DepthImage

_MIN_T = 1e-6


def _vec(v, name):
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got {v!r}")
    return a


@dataclass(frozen=True, eq=False)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center, "center"))
        if not self.radius > 0:
            raise ValueError(f"sphere radius must be positive, got {self.radius}")

    def bounds(self):
        return self.center - self.radius, self.center + self.radius

    def distance(self, p):
        """Signed distance from points ``p`` (..., 3) to the surface."""
        return np.linalg.norm(np.asarray(p) - self.center, axis=-1) - self.radius

    def intersect(self, o, d):
        """Smallest ray parameter ``t > 0`` with ``o + t d`` on the surface, else inf."""
        oc = o - self.center
        a = np.einsum("ij,ij->i", d, d)
        b = d @ oc
        c = oc @ oc - self.radius**2
        return _quadratic_hits(a, b, c)

    def to_record(self):
        return {"center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class Cylinder:
    """Vertical solid cylinder standing on ``base`` (its bottom center)."""

    base: np.ndarray
    radius: float
    height: float

    def __post_init__(self):
        object.__setattr__(self, "base", _vec(self.base, "base"))
        if not (self.radius > 0 and self.height > 0):
            raise ValueError("cylinder radius and height must be positive")

    def bounds(self):
        r = np.array([self.radius, self.radius, 0.0])
        return self.base - r, self.base + r + np.array([0.0, 0.0, self.height])

    def distance(self, p):
        p = np.asarray(p, dtype=float)
        radial = np.linalg.norm(p[..., :2] - self.base[:2], axis=-1) - self.radius
        axial = np.abs(p[..., 2] - (self.base[2] + self.height / 2)) - self.height / 2
        outside = np.hypot(np.maximum(radial, 0), np.maximum(axial, 0))
        return np.minimum(np.maximum(radial, axial), 0) + outside

    def intersect(self, o, d):
        z0, z1 = self.base[2], self.base[2] + self.height
        oc = o[:2] - self.base[:2]
        dxy = d[:, :2]
        a = np.einsum("ij,ij->i", dxy, dxy)
        b = dxy @ oc
        c = oc @ oc - self.radius**2
        with np.errstate(divide="ignore", invalid="ignore"):
            t_side = _quadratic_hits(a, b, c)
            z = o[2] + t_side * d[:, 2]
            t_side = np.where((z >= z0) & (z <= z1), t_side, np.inf)
            best = t_side
            for zc in (z0, z1):
                t = (zc - o[2]) / d[:, 2]
                hit = o[:2] + t[:, None] * dxy - self.base[:2]
                inside = np.einsum("ij,ij->i", hit, hit) <= self.radius**2
                t = np.where(inside & (t > _MIN_T), t, np.inf)
                best = np.minimum(best, t)
        return best

    def to_record(self):
        return {"base": self.base.tolist(), "radius": self.radius, "height": self.height}


@dataclass(frozen=True, eq=False)
class Cable:
    """Capsule around the segment ``a``-``b``; thin cables, wires, poles."""

    a: np.ndarray
    b: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "a", _vec(self.a, "a"))
        object.__setattr__(self, "b", _vec(self.b, "b"))
        if not self.radius > 0:
            raise ValueError(f"cable radius must be positive, got {self.radius}")

    def bounds(self):
        lo = np.minimum(self.a, self.b) - self.radius
        hi = np.maximum(self.a, self.b) + self.radius
        return lo, hi

    def distance(self, p):
        p = np.asarray(p, dtype=float)
        ab = self.b - self.a
        denom = ab @ ab
        t = np.clip(((p - self.a) @ ab) / denom, 0.0, 1.0) if denom > 0 else np.zeros(p.shape[:-1])
        closest = self.a + np.asarray(t)[..., None] * ab
        return np.linalg.norm(p - closest, axis=-1) - self.radius

    def intersect(self, o, d):
        ba = self.b - self.a
        oa = o - self.a
        baba = ba @ ba
        bard = d @ ba
        baoa = oa @ ba
        rdoa = d @ oa
        oaoa = oa @ oa
        rdrd = np.einsum("ij,ij->i", d, d)
        # infinite cylinder about the axis, clipped to the segment
        a = baba * rdrd - bard * bard
        b = baba * rdoa - baoa * bard
        c = baba * oaoa - baoa * baoa - self.radius**2 * baba
        with np.errstate(divide="ignore", invalid="ignore"):
            t_body = _quadratic_hits(a, b, c)
            y = baoa + t_body * bard
            t_body = np.where((y > 0) & (y < baba), t_body, np.inf)
        caps = np.minimum(
            Sphere(self.a, self.radius).intersect(o, d),
            Sphere(self.b, self.radius).intersect(o, d),
        )
        return np.minimum(t_body, caps)

    def to_record(self):
        return {"a": self.a.tolist(), "b": self.b.tolist(), "radius": self.radius}


def _quadratic_hits(a, b, c):
    """Smallest positive root of ``a t^2 + 2 b t + c`` per ray, inf if none."""
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = b * b - a * c
        root = np.sqrt(np.maximum(disc, 0.0))
        t0 = (-b - root) / a
        t1 = (-b + root) / a
        t = np.where(t0 > _MIN_T, t0, np.where(t1 > _MIN_T, t1, np.inf))
        return np.where((disc >= 0) & (a > 0), t, np.inf)


@dataclass(frozen=True, eq=False)
class GoalRegion:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center, "center"))
        if not self.radius > 0:
            raise ValueError(f"goal radius must be positive, got {self.radius}")

    def contains(self, p):
        return float(np.linalg.norm(np.asarray(p) - self.center)) <= self.radius


@dataclass(frozen=True)
class RobotState:
    position: tuple
    yaw: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(x) for x in self.position))
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @property
    def xyz(self):
        return np.array(self.position)

    def body_rotation(self):
        """Body-to-world rotation (yaw only)."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def to_body(self, world_point):
        return self.body_rotation().T @ (np.asarray(world_point, dtype=float) - self.xyz)


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2 * math.pi)
    if a <= 0:
        a += 2 * math.pi
    return a - math.pi


@dataclass(frozen=True, eq=False)
class Scene:
    obstacles: tuple = ()
    goals: tuple = ()
    start: RobotState = field(default_factory=lambda: RobotState((0.0, 0.0, 1.0)))
    target: int = 0
    max_time: float | None = None

    def clearance(self, p, robot_radius):
        """Gap between the robot's hull and the nearest obstacle surface (inf if none)."""
        if not self.obstacles:
            return math.inf
        return min(float(o.distance(p)) for o in self.obstacles) - robot_radius

    @property
    def goal(self) -> GoalRegion:
        return self.goals[self.target]


# --- rendering -------------------------------------------------------------


class Renderer:
    """Ray caster for a fixed image size and camera; caches per-pixel ray directions."""

    def __init__(self, width, height, intrinsics: CameraIntrinsics, extrinsics: BodyFrameExtrinsics,
                 max_range: float):
        self.width, self.height = width, height
        self.intrinsics, self.extrinsics = intrinsics, extrinsics
        self.max_range = max_range
        u, v = np.meshgrid(np.arange(width) + 0.5, np.arange(height) + 0.5)
        # camera-frame rays scaled so the ray parameter equals optical depth
        self.rays_cam = np.stack(
            [(u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, np.ones_like(u)],
            axis=-1,
        ).reshape(-1, 3)

    def render(self, scene: Scene, robot: RobotState) -> DepthImage:
        r_cw = robot.body_rotation() @ self.extrinsics.rotation
        origin = robot.xyz
        depth = np.full(self.width * self.height, np.inf)
        for prim in scene.obstacles:
            rect = self._pixel_rect(prim, r_cw, origin)
            if rect is None:
                continue
            u0, u1, v0, v1 = rect
            idx = (np.arange(v0, v1)[:, None] * self.width + np.arange(u0, u1)[None, :]).ravel()
            dirs = self.rays_cam[idx] @ r_cw.T
            t = prim.intersect(origin, dirs)
            depth[idx] = np.minimum(depth[idx], t)
        depth[~(depth <= self.max_range)] = NO_RETURN
        return DepthImage(depth.reshape(self.height, self.width))

    def _pixel_rect(self, prim, r_cw, origin):
        """Conservative pixel window covering ``prim``, or None when it cannot be seen."""
        lo, hi = prim.bounds()
        corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
        cam = (corners - origin) @ r_cw
        z = cam[:, 2]
        if np.all(z <= 0):
            return None
        if np.linalg.norm(np.clip(origin, lo, hi) - origin) > self.max_range:
            return None
        if np.any(z <= 1e-6):
            return 0, self.width, 0, self.height
        uv, _ = self.intrinsics.project(cam)
        u0 = max(int(math.floor(uv[:, 0].min() - 0.5)), 0)
        u1 = min(int(math.ceil(uv[:, 0].max() + 0.5)), self.width)
        v0 = max(int(math.floor(uv[:, 1].min() - 0.5)), 0)
        v1 = min(int(math.ceil(uv[:, 1].max() + 0.5)), self.height)
        if u0 >= u1 or v0 >= v1:
            return None
        return u0, u1, v0, v1


def render_depth(scene, robot, intrinsics, extrinsics, width, height, max_range) -> DepthImage:
    return Renderer(width, height, intrinsics, extrinsics, max_range).render(scene, robot)


# --- noise -------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSpec:
    """Depth noise on a row-major pixel stride.

    ``pixel_density`` n perturbs pixels whose flat index is a multiple of n
    (1: all, 2: even indices, inf: none).  Perturbed pixels with a return get
    Gaussian depth noise; perturbed pixels without one get a spurious return
    drawn uniformly from ``(0, spurious_range)``.  Independently, each true
    return is lost with probability ``dropout_rate``.
    """

    sigma: float = 0.0
    pixel_density: float = math.inf
    dropout_rate: float = 0.0
    spurious_range: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"noise sigma must be non-negative, got {self.sigma}")
        if not self.pixel_density >= 1:
            raise ValueError(f"pixel_density must be >= 1, got {self.pixel_density}")
        if not 0 <= self.dropout_rate <= 1:
            raise ValueError(f"dropout_rate must lie in [0, 1], got {self.dropout_rate}")


def inject_noise(image: DepthImage, spec: NoiseSpec, rng: np.random.Generator | None = None) -> DepthImage:
    """Corrupt a depth image; deterministic for a given generator state or seed."""
    if math.isinf(spec.pixel_density) and spec.dropout_rate == 0:
        return image
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    d = image.depths.astype(np.float64).ravel()
    valid = np.isfinite(d) & (d > 0)
    if not math.isinf(spec.pixel_density):
        stride = int(spec.pixel_density)
        picked = np.arange(0, d.size, stride)
        pv = valid[picked]
        noisy = picked[pv]
        d[noisy] += rng.normal(0.0, spec.sigma, noisy.size)
        spurious = picked[~pv]
        d[spurious] = rng.uniform(0.0, spec.spurious_range, spurious.size)
    if spec.dropout_rate > 0:
        lost = valid & (rng.random(d.size) < spec.dropout_rate)
        d[lost] = NO_RETURN
    # noise can push a return behind the camera; that pixel then reads as no-return
    d[~(d > 0)] = NO_RETURN
    return DepthImage(d.reshape(image.depths.shape))


# --- kinematics -------------------------------------------------------------


def step_robot(robot: RobotState, cmd, dt: float) -> RobotState:
    """Unicycle step: forward speed along the heading, climb rate, yaw rate."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x, y, z = robot.position
    c, s = math.cos(robot.yaw), math.sin(robot.yaw)
    return RobotState(
        (x + cmd.v_x * c * dt, y + cmd.v_x * s * dt, z + cmd.v_z * dt),
        robot.yaw + cmd.v_psi * dt,
        robot.time + dt,
    )


# --- scene files -------------------------------------------------------------

_PRIMITIVES = {"sphere": Sphere, "cylinder": Cylinder, "cable": Cable}
_SCENE_KEYS = {"start", "goal", "target", "max_time", *_PRIMITIVES}


class SceneError(ValueError):
    pass


def scene_from_dict(data: dict) -> Scene:
    unknown = sorted(set(data) - _SCENE_KEYS)
    if unknown:
        raise SceneError(f"unknown scene key {unknown[0]!r}")
    obstacles = []
    for kind, cls in _PRIMITIVES.items():
        for n, rec in enumerate(data.get(kind, [])):
            try:
                obstacles.append(cls(**rec))
            except (TypeError, ValueError) as exc:
                raise SceneError(f"{kind}[{n}]: {exc}") from None
    goals = []
    for n, rec in enumerate(data.get("goal", [])):
        try:
            goals.append(GoalRegion(**rec))
        except (TypeError, ValueError) as exc:
            raise SceneError(f"goal[{n}]: {exc}") from None
    if not goals:
        raise SceneError("scene defines no goal region")
    start = data.get("start", {})
    extra = set(start) - {"position", "yaw"}
    if extra:
        raise SceneError(f"unknown start key {sorted(extra)[0]!r}")
    try:
        start_state = RobotState(tuple(_vec(start.get("position", (0.0, 0.0, 1.0)), "start.position")),
                                 float(start.get("yaw", 0.0)))
    except ValueError as exc:
        raise SceneError(str(exc)) from None
    target = int(data.get("target", 0))
    if not 0 <= target < len(goals):
        raise SceneError(f"target {target} does not name one of {len(goals)} goals")
    max_time = data.get("max_time")
    return Scene(tuple(obstacles), tuple(goals), start_state, target,
                 None if max_time is None else float(max_time))


def scene_to_dict(scene: Scene) -> dict:
    out = {
        "start": {"position": list(scene.start.position), "yaw": scene.start.yaw},
        "target": scene.target,
        "goal": [{"center": g.center.tolist(), "radius": g.radius} for g in scene.goals],
    }
    if scene.max_time is not None:
        out["max_time"] = scene.max_time
    for kind, cls in _PRIMITIVES.items():
        recs = [o.to_record() for o in scene.obstacles if type(o) is cls]
        if recs:
            out[kind] = recs
    return out


def loads_scene(text: str) -> Scene:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise SceneError(f"parse error: {exc}") from None
    return scene_from_dict(data)


def load_scene(path) -> Scene:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SceneError(f"{path}: {exc}") from None
    try:
        return loads_scene(text)
    except SceneError as exc:
        raise SceneError(f"{path}: {exc}") from None


def dumps_scene(scene: Scene) -> str:
    return tomli_w.dumps(scene_to_dict(scene))


def save_scene(scene: Scene, path):
    Path(path).write_text(dumps_scene(scene))
