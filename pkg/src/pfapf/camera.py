"""Pinhole intrinsics and the camera-to-body rotation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Optical frame (x right, y down, z forward) -> body frame (x forward, y left, z up).
OPTICAL_TO_BODY = np.array(
    [
        [0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
    ]
)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float = 380.0
    fy: float = 380.0
    cx: float = 320.0
    cy: float = 240.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def project(self, points):
        """Camera-frame points (..., 3) -> pixel coordinates (..., 2) and depth (...)."""
        p = np.asarray(points, dtype=float)
        z = p[..., 2]
        u = p[..., 0] * (self.fx / z) + self.cx
        v = p[..., 1] * (self.fy / z) + self.cy
        return np.stack([u, v], axis=-1), z

    def deproject(self, u, v, depth):
        """Inverse of :meth:`project` for pixel (u, v) at camera-frame depth."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        z = np.asarray(depth, dtype=float)
        x = (u - self.cx) * z / self.fx
        y = (v - self.cy) * z / self.fy
        return np.stack(np.broadcast_arrays(x, y, z), axis=-1)


@dataclass(frozen=True, eq=False)
class BodyFrameExtrinsics:
    """Rotation taking camera-frame vectors into the robot body frame."""

    rotation: np.ndarray = field(default_factory=lambda: OPTICAL_TO_BODY.copy())

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got shape {r.shape}")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation must have determinant +1")
        r.setflags(write=False)
        object.__setattr__(self, "rotation", r)

    def __eq__(self, other):
        if not isinstance(other, BodyFrameExtrinsics):
            return NotImplemented
        return bool(np.array_equal(self.rotation, other.rotation))

    def __hash__(self):
        return hash(self.rotation.tobytes())

    def to_body(self, points):
        return np.asarray(points, dtype=float) @ self.rotation.T

    def to_camera(self, points):
        return np.asarray(points, dtype=float) @ self.rotation
