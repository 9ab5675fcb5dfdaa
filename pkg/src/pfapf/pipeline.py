"""Per-frame perception and control loop shared by every entry point."""

from __future__ import annotations

import functools
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .control import ControlCommand, Direction, net_direction, steering_command
from .filter import Belief, ParticleFilter
from .grid import DepthImage, discretize, read_depth_image
from .models import TransitionModel, build_transition_model


@dataclass(frozen=True, eq=False)
class FrameResult:
    frame: int
    belief: Belief
    direction: Direction
    command: ControlCommand
    closest_depth: float
    compute_s: float


@functools.lru_cache(maxsize=4)
def _cached_transition(spec, sigma_s, sigma_z, truncation, cache_dir) -> TransitionModel:
    return build_transition_model(spec, sigma_s, sigma_z, truncation, cache_dir=cache_dir or None)


def transition_for(cfg: RunConfig) -> TransitionModel:
    """Transition table for ``cfg``, shared within the process and optionally cached on disk."""
    f = cfg.filter
    cache_dir = str(Path(cfg.io.cache_dir).resolve()) if cfg.io.cache_dir else ""
    return _cached_transition(cfg.grid_spec(), f.sigma_s, f.sigma_z, f.truncation, cache_dir)


class Pipeline:
    """Owns one particle filter and turns depth images into velocity commands."""

    def __init__(self, cfg: RunConfig, seed=None):
        self.cfg = cfg
        self.spec = cfg.grid_spec()
        self.params = cfg.observation_params()
        self.intrinsics = cfg.intrinsics()
        self.extrinsics = cfg.extrinsics()
        self.potential = cfg.potential_config()
        self.limits = cfg.steering_limits()
        self.transition = transition_for(cfg)
        self.filter = ParticleFilter(
            self.spec, self.transition, self.params, cfg.filter.particles,
            cfg.filter.seed if seed is None else seed,
        )
        self.frame = 0

    def step(self, image: DepthImage, x_goal) -> FrameResult:
        """Process one image with the goal given in the body frame."""
        t0 = time.perf_counter()
        obs = discretize(image, self.spec)
        belief = self.filter.update(obs)
        direction = net_direction(np.asarray(x_goal, dtype=float), belief, self.spec,
                                  self.intrinsics, self.extrinsics, self.potential)
        command = steering_command(direction.nu, self.limits)
        elapsed = time.perf_counter() - t0
        result = FrameResult(self.frame, belief, direction, command, image.closest_depth(), elapsed)
        self.frame += 1
        return result


COMMAND_COLUMNS = [
    "frame", "time_s", "v_x", "v_z", "v_psi", "nu_x", "nu_y", "nu_z",
    "F_rep_magnitude", "mode_depth_m", "mode_belief", "closest_depth_m",
]


def command_row(result: FrameResult, time_s: float):
    c, nu = result.command, result.direction.nu
    return [
        result.frame, repr(float(time_s)), repr(float(c.v_x)), repr(float(c.v_z)), repr(float(c.v_psi)),
        repr(float(nu[0])), repr(float(nu[1])), repr(float(nu[2])),
        repr(result.direction.repulsive_magnitude),
        repr(result.belief.mode_depth()), repr(result.belief.mode_probability),
        repr(result.closest_depth),
    ]


# --- offline replay ------------------------------------------------------------

IMAGE_SUFFIXES = (".pfm", ".raw", ".bin")


class ReplayError(ValueError):
    pass


def list_frames(directory) -> list[Path]:
    """Depth images in ``directory`` sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ReplayError(f"{directory}: not a directory")
    paths = sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise ReplayError(f"{directory}: no depth images ({', '.join(IMAGE_SUFFIXES)})")
    return paths


def load_frames(paths, spec) -> list[DepthImage]:
    """Read every frame up front so a bad file aborts before anything is written."""
    images = []
    for p in paths:
        try:
            img = read_depth_image(p)
        except (OSError, ValueError) as exc:
            raise ReplayError(f"{p}: unreadable depth image ({exc})") from None
        if (img.width, img.height) != (spec.width, spec.height):
            raise ReplayError(f"{p}: image is {img.width}x{img.height}, grid expects {spec.width}x{spec.height}")
        images.append(img)
    return images


def replay(cfg: RunConfig, images, x_goal, seed=None) -> list[FrameResult]:
    """Run the filter and controller over recorded images with the robot held still."""
    pipe = Pipeline(cfg, seed)
    return [pipe.step(img, x_goal) for img in images]
