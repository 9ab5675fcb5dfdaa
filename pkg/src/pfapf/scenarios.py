"""Seeded scenario set used for closed-loop batches and the safety check.

Obstacles are 270 mm spheres, 90 mm poles and a hanging cable of the same
90 mm class.  Thinner cables are not reliably seen early enough under the
flight observation parameters (see README).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import with_seed
from .scenario import run_scenario, write_run_artifacts
from .sim import Cable, Cylinder, GoalRegion, NoiseSpec, Renderer, RobotState, Scene, Sphere, inject_noise

SPHERE_RADIUS = 0.135
POLE_RADIUS = 0.045
CABLE_RADIUS = 0.045
GOAL_RADIUS = 0.5
ALTITUDE = 1.0

KINDS = ("sphere-field", "cylinder-slalom", "hanging-cable")


def sphere_field(seed: int, count: int = 5, min_gap: float = 1.3) -> Scene:
    """Spheres scattered between start and goal, kept far enough apart to pass between."""
    rng = np.random.default_rng(seed)
    start = np.array([0.0, 0.0, ALTITUDE])
    goal = np.array([8.0, 0.0, ALTITUDE])
    centers = []
    while len(centers) < count:
        c = np.array([rng.uniform(2.0, 6.5), rng.uniform(-1.5, 1.5), ALTITUDE + rng.uniform(-0.3, 0.3)])
        if np.linalg.norm(c - start) < 1.5 or np.linalg.norm(c - goal) < 1.2:
            continue
        if any(np.linalg.norm(c - o) < min_gap for o in centers):
            continue
        centers.append(c)
    obstacles = tuple(Sphere(tuple(c), SPHERE_RADIUS) for c in centers)
    return Scene(obstacles, (GoalRegion(tuple(goal), GOAL_RADIUS),), RobotState(tuple(start)))


def cylinder_slalom(seed: int, poles: int = 4, spacing: float = 1.5) -> Scene:
    """Floor-to-ceiling poles alternating either side of the straight line."""
    rng = np.random.default_rng(seed)
    side = 1.0 if rng.random() < 0.5 else -1.0
    obstacles = []
    for n in range(poles):
        x = 2.0 + n * spacing + rng.uniform(-0.2, 0.2)
        y = side * rng.uniform(0.15, 0.45)
        obstacles.append(Cylinder((x, y, 0.0), POLE_RADIUS, 3.0))
        side = -side
    goal_x = 2.0 + poles * spacing + 0.5
    return Scene(tuple(obstacles), (GoalRegion((goal_x, 0.0, ALTITUDE), GOAL_RADIUS),),
                 RobotState((0.0, 0.0, ALTITUDE)))


def hanging_cable(seed: int) -> Scene:
    """One slightly slanted cable hanging from the ceiling across the path."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(2.5, 4.5)
    y = rng.uniform(-0.4, 0.4)
    lean = rng.uniform(-0.2, 0.2, size=2)
    top = (x, y, 3.5)
    bottom = (x + lean[0], y + lean[1], 0.3)
    goal = (6.5, rng.uniform(-0.5, 0.5), ALTITUDE)
    return Scene((Cable(bottom, top, CABLE_RADIUS),), (GoalRegion(goal, GOAL_RADIUS),),
                 RobotState((0.0, 0.0, ALTITUDE)))


_BUILDERS = {"sphere-field": sphere_field, "cylinder-slalom": cylinder_slalom, "hanging-cable": hanging_cable}


def make_scene(kind: str, seed: int) -> Scene:
    try:
        return _BUILDERS[kind](seed)
    except KeyError:
        raise ValueError(f"unknown scenario kind {kind!r}; choose from {', '.join(KINDS)}") from None


def shipped_scenarios(n: int = 20):
    """``n`` (name, scene) pairs cycling through the three kinds with seeds 0..n-1."""
    out = []
    for seed in range(n):
        kind = KINDS[seed % len(KINDS)]
        out.append((f"{kind}-{seed:02d}", make_scene(kind, seed)))
    return out


def time_budget(scene: Scene, speed: float = 0.6, factor: float = 3.0, floor: float = 20.0) -> float:
    """Generous time limit from the straight-line distance to the goal."""
    d = math.dist(scene.start.position, scene.goal.center)
    return max(floor, factor * d / speed)


def static_cable_scene(distance: float = 1.0, diameter: float = 0.008, length: float = 4.0) -> Scene:
    """A thin vertical cable straight ahead of a hovering camera, for offline replays."""
    y = 0.02  # keep the cable off a pixel-block seam
    cable = Cable((distance, y, ALTITUDE - length / 2), (distance, y, ALTITUDE + length / 2), diameter / 2)
    return Scene((cable,), (GoalRegion((distance + 4.0, 0.0, ALTITUDE), GOAL_RADIUS),),
                 RobotState((0.0, 0.0, ALTITUDE)))


def cable_sequence(cfg, n_frames: int, pixel_density=math.inf, sigma: float = 0.2, seed: int = 0,
                   scene: Scene | None = None):
    """``n_frames`` noisy renders of a static scene (the cable scene by default)."""
    scene = scene or static_cable_scene()
    renderer = Renderer(cfg.grid.width, cfg.grid.height, cfg.intrinsics(), cfg.extrinsics(), cfg.sim.max_range)
    clean = renderer.render(scene, scene.start)
    noise = NoiseSpec(sigma, pixel_density, 0.0, cfg.sim.noise.spurious_range, seed)
    rng = np.random.default_rng(seed)
    return [inject_noise(clean, noise, rng) for _ in range(n_frames)]


BATCH_COLUMNS = ["name", "seed", "outcome", "min_clearance_m", "duration_s", "path_length_m", "frames"]


def _run_one(job):
    name, scene, cfg, out_dir = job
    result = run_scenario(scene, scene.start, scene.goal, cfg, max_time=time_budget(scene),
                          keep_frames=out_dir is not None)
    if out_dir is not None:
        write_run_artifacts(out_dir, result, cfg, scene)
    s = result.summary()
    return {
        "name": name,
        "seed": cfg.filter.seed,
        "outcome": s["outcome"],
        "min_clearance_m": s["min_clearance_m"],
        "duration_s": s["duration_s"],
        "path_length_m": s["path_length_m"],
        "frames": s["frames"],
    }


def run_batch(cfg, scenes, out_dir=None, jobs=1):
    """Run named scenes; run ``n`` gets filter and noise seed ``cfg.filter.seed + n``.

    Results come back in input order whatever ``jobs`` is.
    """
    work = []
    for n, (name, scene) in enumerate(scenes):
        run_dir = None if out_dir is None else Path(out_dir) / name
        work.append((name, scene, with_seed(cfg, cfg.filter.seed + n), run_dir))
    if jobs <= 1:
        return [_run_one(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, work))
