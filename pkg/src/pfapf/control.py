"""Artificial potential field over a voxel belief, and the steering law."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import BodyFrameExtrinsics, CameraIntrinsics
from .filter import Belief
from .grid import GridSpec, voxel_centers

STAGNATION_EPS = 1e-12


@dataclass(frozen=True)
class PotentialConfig:
    xi: float = 0.4
    eta: float = 1.1
    rho_r: float = 0.5
    rho_0: float = 3.0
    eps_min: float = 0.05

    def __post_init__(self):
        for name in ("xi", "eta", "rho_r", "rho_0", "eps_min"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.eps_min < self.rho_0:
            raise ValueError(f"eps_min ({self.eps_min}) must be below rho_0 ({self.rho_0})")


@dataclass(frozen=True)
class SteeringLimits:
    v_x_max: float = 0.6
    v_z_max: float = 0.6
    v_psi_max: float = 1.0

    def __post_init__(self):
        for name in ("v_x_max", "v_z_max", "v_psi_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class ControlCommand:
    v_x: float
    v_z: float
    v_psi: float
    limits: SteeringLimits = SteeringLimits()

    @classmethod
    def zero(cls, limits=SteeringLimits()):
        return cls(0.0, 0.0, 0.0, limits)


# --- potentials ------------------------------------------------------------


def attractive_potential(x_goal, cfg: PotentialConfig):
    d = float(np.linalg.norm(x_goal))
    if d > cfg.rho_r:
        return cfg.rho_r * cfg.xi * d
    return 0.5 * cfg.xi * d * d


def repulsive_potential(x_obs, cfg: PotentialConfig):
    """Vectorized over a trailing axis of length 3."""
    d = np.linalg.norm(np.asarray(x_obs, dtype=float), axis=-1)
    d = np.maximum(d, cfg.eps_min)
    u = 0.5 * cfg.eta * (1.0 / d - 1.0 / cfg.rho_0) ** 2
    return np.where(d < cfg.rho_0, u, 0.0)


def attractive_force(x_goal, cfg: PotentialConfig) -> np.ndarray:
    """Pull toward the goal: constant magnitude outside ``rho_r``, linear inside."""
    x = np.asarray(x_goal, dtype=float)
    d = float(np.linalg.norm(x))
    if d == 0.0:
        return np.zeros(3)
    if d > cfg.rho_r:
        return cfg.rho_r * cfg.xi * x / d
    return cfg.xi * x


def repulsive_force(x_obs, cfg: PotentialConfig) -> np.ndarray:
    """Push away from obstacle points; rows of ``x_obs`` are handled independently.

    Points closer than ``eps_min`` are treated as sitting at ``eps_min``.
    """
    x = np.asarray(x_obs, dtype=float)
    d = np.linalg.norm(x, axis=-1, keepdims=True)
    dc = np.maximum(d, cfg.eps_min)
    mag = cfg.eta * (1.0 / dc - 1.0 / cfg.rho_0) / dc**2
    mag = np.where(dc < cfg.rho_0, mag, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(d > 0, x / d, 0.0)
    return -mag * unit


# --- net field -----------------------------------------------------------------


@dataclass(frozen=True)
class Direction:
    nu: np.ndarray
    force: np.ndarray
    repulsive: np.ndarray
    stagnated: bool = False

    @property
    def repulsive_magnitude(self):
        return float(np.linalg.norm(self.repulsive))


class VoxelGeometry:
    """Body-frame voxel centers for one grid / camera pairing."""

    def __init__(self, spec: GridSpec, intrinsics: CameraIntrinsics, extrinsics: BodyFrameExtrinsics):
        self.spec = spec
        self.centers = extrinsics.to_body(voxel_centers(spec, intrinsics))
        self.centers.setflags(write=False)


_geometry_cache: dict = {}


def _geometry(spec, intrinsics, extrinsics) -> VoxelGeometry:
    key = (spec, intrinsics, extrinsics)
    geom = _geometry_cache.get(key)
    if geom is None:
        geom = _geometry_cache[key] = VoxelGeometry(spec, intrinsics, extrinsics)
    return geom


def belief_repulsion(belief: Belief, spec, intrinsics, extrinsics, cfg) -> np.ndarray:
    """Belief-weighted sum of voxel repulsions; the boundary state adds nothing."""
    p = belief.probabilities[: spec.n_voxels]
    active = np.flatnonzero(p)
    if active.size == 0:
        return np.zeros(3)
    centers = _geometry(spec, intrinsics, extrinsics).centers[active]
    return p[active] @ repulsive_force(centers, cfg)


def net_potential(x_goal, belief: Belief, spec, intrinsics, extrinsics, cfg) -> float:
    """Scalar belief-weighted potential; the attractive term enters once."""
    p = belief.probabilities[: spec.n_voxels]
    centers = _geometry(spec, intrinsics, extrinsics).centers
    return attractive_potential(x_goal, cfg) + float(p @ repulsive_potential(centers, cfg))


def net_direction(
    x_goal,
    belief: Belief,
    spec: GridSpec,
    intrinsics: CameraIntrinsics,
    extrinsics: BodyFrameExtrinsics,
    cfg: PotentialConfig,
) -> Direction:
    """Unit descent direction of the net potential, in the body frame.

    When the forces cancel the robot heads straight at the goal and the
    result is flagged ``stagnated``.
    """
    x_goal = np.asarray(x_goal, dtype=float)
    rep = belief_repulsion(belief, spec, intrinsics, extrinsics, cfg)
    force = attractive_force(x_goal, cfg) + rep
    norm = float(np.linalg.norm(force))
    if norm >= STAGNATION_EPS:
        return Direction(force / norm, force, rep)
    g = float(np.linalg.norm(x_goal))
    nu = x_goal / g if g > 0 else np.array([1.0, 0.0, 0.0])
    return Direction(nu, force, rep, stagnated=True)


VERTICAL_TOL = 1e-9


def steering_command(nu, limits: SteeringLimits = SteeringLimits()) -> ControlCommand:
    """Face the descent direction: yaw toward it, fly forward by its cosine, climb by its z."""
    nu = np.asarray(nu, dtype=float)
    if abs(float(np.linalg.norm(nu)) - 1.0) > 1e-6:
        raise ValueError(f"steering direction must be a unit vector, got norm {np.linalg.norm(nu)}")
    v_z = float(min(max(limits.v_z_max * nu[2], -limits.v_z_max), limits.v_z_max))
    if math.hypot(nu[0], nu[1]) <= VERTICAL_TOL:
        # straight up or down has no heading; atan2(0, 0) = 0 would read as "fly ahead"
        return ControlCommand(0.0, v_z, 0.0, limits)
    theta = math.atan2(float(nu[1]), float(nu[0]))
    v_psi = theta / math.pi * limits.v_psi_max
    v_x = max(0.0, limits.v_x_max * math.cos(theta))
    return ControlCommand(v_x, v_z, v_psi, limits)
