"""Closed-loop runs: render, filter, steer, integrate, check for contact."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .filter import BeliefWriter
from .pipeline import COMMAND_COLUMNS, FrameResult, Pipeline, command_row
from .sim import GoalRegion, NoiseSpec, Renderer, RobotState, Scene, inject_noise, scene_to_dict, step_robot

REACHED, COLLIDED, TIMEOUT = "reached", "collided", "timeout"


@dataclass(eq=False)
class ScenarioResult:
    outcome: str
    trajectory: list = field(default_factory=list)
    frames: list = field(default_factory=list)
    min_clearance: float = math.inf
    compute_s: list = field(default_factory=list)

    @property
    def duration(self):
        return self.trajectory[-1].time if self.trajectory else 0.0

    def path_length(self):
        pts = np.array([r.position for r in self.trajectory])
        return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum()) if len(pts) > 1 else 0.0

    def summary(self):
        return {
            "outcome": self.outcome,
            "duration_s": self.duration,
            "frames": len(self.frames),
            "path_length_m": self.path_length(),
            "min_clearance_m": None if math.isinf(self.min_clearance) else self.min_clearance,
            "final_position": list(self.trajectory[-1].position) if self.trajectory else None,
        }


def noise_spec(cfg: RunConfig) -> NoiseSpec:
    n = cfg.sim.noise
    return NoiseSpec(n.sigma, n.pixel_density, n.dropout_rate, n.spurious_range, n.seed)


def run_scenario(
    scene: Scene,
    start: RobotState,
    goal: GoalRegion,
    cfg: RunConfig,
    max_time: float | None = None,
    keep_frames: bool = True,
) -> ScenarioResult:
    """Fly from ``start`` toward ``goal`` until it is reached, something is hit, or time runs out."""
    cfg.validate()
    if max_time is None:
        max_time = scene.max_time if scene.max_time is not None else cfg.sim.max_time
    if not max_time > 0:
        raise ValueError(f"max_time must be positive, got {max_time}")
    dt = 1.0 / cfg.sim.frame_rate
    radius = cfg.sim.robot_radius
    pipeline = Pipeline(cfg)
    renderer = Renderer(cfg.grid.width, cfg.grid.height, pipeline.intrinsics, pipeline.extrinsics,
                        cfg.sim.max_range)
    noise = noise_spec(cfg)
    noise_rng = np.random.default_rng(noise.seed)

    robot = start
    result = ScenarioResult(TIMEOUT, trajectory=[robot])
    result.min_clearance = scene.clearance(robot.xyz, radius)
    if result.min_clearance <= 0:
        result.outcome = COLLIDED
        return result
    if goal.contains(robot.xyz):
        result.outcome = REACHED
        return result

    n_frames = int(math.ceil(max_time / dt - 1e-9))
    for _ in range(n_frames):
        image = inject_noise(renderer.render(scene, robot), noise, noise_rng)
        frame = pipeline.step(image, robot.to_body(goal.center))
        result.compute_s.append(frame.compute_s)
        if keep_frames:
            result.frames.append(frame)
        else:
            result.frames.append(None)
        robot = step_robot(robot, frame.command, dt)
        result.trajectory.append(robot)
        clearance = scene.clearance(robot.xyz, radius)
        result.min_clearance = min(result.min_clearance, clearance)
        if clearance <= 0:
            result.outcome = COLLIDED
            break
        if goal.contains(robot.xyz):
            result.outcome = REACHED
            break
    return result


# --- artifacts ---------------------------------------------------------------

TRAJECTORY_COLUMNS = ["time", "x", "y", "z", "yaw"]


def write_trajectory(path, result: ScenarioResult):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for r in result.trajectory:
            w.writerow([repr(r.time), *(repr(v) for v in r.position), repr(r.yaw)])
        w.writerow(["outcome", result.outcome, "", "", ""])


def write_frames(out_dir, frames, times):
    """belief.csv, commands.csv and timing.csv for a sequence of frame results."""
    out_dir = Path(out_dir)
    with BeliefWriter(out_dir / "belief.csv") as bw, \
            open(out_dir / "commands.csv", "w", newline="") as cf, \
            open(out_dir / "timing.csv", "w", newline="") as tf:
        cw = csv.writer(cf, lineterminator="\n")
        tw = csv.writer(tf, lineterminator="\n")
        cw.writerow(COMMAND_COLUMNS)
        tw.writerow(["frame", "compute_ms"])
        for fr, t in zip(frames, times):
            bw.write(fr.frame, fr.belief)
            cw.writerow(command_row(fr, t))
            tw.writerow([fr.frame, f"{fr.compute_s * 1e3:.3f}"])


def manifest(cfg: RunConfig, extra=None):
    m = {
        "artifact_version": __version__,
        "config_sha256": cfg.digest(),
        "filter_seed": cfg.filter.seed,
        "noise_seed": cfg.sim.noise.seed,
    }
    if extra:
        m.update(extra)
    return m


def scene_digest(scene: Scene):
    return hashlib.sha256(json.dumps(scene_to_dict(scene), sort_keys=True).encode()).hexdigest()


def write_run_artifacts(out_dir, result: ScenarioResult, cfg: RunConfig, scene: Scene):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trajectory(out_dir / "trajectory.csv", result)
    frames = [f for f in result.frames if f is not None]
    times = [r.time for r in result.trajectory[: len(frames)]]
    write_frames(out_dir, frames, times)
    (out_dir / "summary.json").write_text(json.dumps(result.summary(), indent=2) + "\n")
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest(cfg, {"scene_sha256": scene_digest(scene)}), indent=2) + "\n"
    )
    cfg.save(out_dir / "config.toml")
