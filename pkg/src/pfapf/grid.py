"""2.5D voxel discretization of depth images.

A depth image is split into ``k_w x k_h`` pixel blocks and each block is cut
into ``N_d`` depth bins of ``k_d`` meters.  Every (block, bin) pair is a voxel
state; one extra state, the boundary, stands for "nothing inside the sensing
horizon".  States are linearized with the width index varying fastest and the
boundary state in the last slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import CameraIntrinsics

#: Depth value the simulator writes for pixels with no return.
NO_RETURN = 0.0


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Per-pixel depth in meters, shape ``(height, width)``.

    Non-finite or non-positive entries are no-return pixels.
    """

    depths: np.ndarray

    def __post_init__(self):
        d = np.array(self.depths, dtype=np.float32)
        if d.ndim != 2:
            raise ValueError(f"depth image must be 2D, got shape {d.shape}")
        d.setflags(write=False)
        object.__setattr__(self, "depths", d)

    @classmethod
    def from_flat(cls, width, height, values):
        values = np.asarray(values, dtype=np.float32)
        if values.size != width * height:
            raise ValueError(f"expected {width * height} depth values, got {values.size}")
        return cls(values.reshape(height, width))

    @classmethod
    def empty(cls, width, height):
        return cls(np.full((height, width), NO_RETURN, dtype=np.float32))

    @property
    def width(self):
        return self.depths.shape[1]

    @property
    def height(self):
        return self.depths.shape[0]

    @property
    def valid_mask(self):
        d = self.depths
        return np.isfinite(d) & (d > 0)

    def closest_depth(self):
        """Smallest valid depth, or ``nan`` if the image has no returns."""
        valid = self.depths[self.valid_mask]
        return float(valid.min()) if valid.size else math.nan

    def __eq__(self, other):
        if not isinstance(other, DepthImage):
            return NotImplemented
        return self.depths.shape == other.depths.shape and bool(
            np.array_equal(self.depths, other.depths, equal_nan=True)
        )

    __hash__ = None


@dataclass(frozen=True)
class GridSpec:
    width: int
    height: int
    k_w: int
    k_h: int
    k_d: float
    n_w: int
    n_h: int
    n_d: int

    @property
    def max_depth(self):
        return self.n_d * self.k_d

    @property
    def n_voxels(self):
        return self.n_w * self.n_h * self.n_d

    @property
    def n_states(self):
        return self.n_voxels + 1

    @property
    def boundary(self):
        """Linear index of the boundary (obstacle-free) state."""
        return self.n_voxels

    @property
    def n_max(self):
        """Nominal maximum number of points in one voxel."""
        return self.k_w * self.k_h

    def linearize(self, i, j, k):
        return i + self.n_w * (j + self.n_h * k)

    def delinearize(self, s):
        """Linear index (scalar or array) -> ``(i, j, k)``.  Undefined for the boundary."""
        s = np.asarray(s)
        i = s % self.n_w
        j = (s // self.n_w) % self.n_h
        k = s // (self.n_w * self.n_h)
        if s.ndim == 0:
            return int(i), int(j), int(k)
        return i, j, k

    def voxel_depth(self, k):
        """Depth of the center of depth bin ``k``."""
        return (np.asarray(k) + 0.5) * self.k_d

    def voxel_pixel_center(self, i, j):
        return i * self.k_w + self.k_w / 2.0, j * self.k_h + self.k_h / 2.0

    def to_dict(self):
        return {
            "width": self.width,
            "height": self.height,
            "k_w": self.k_w,
            "k_h": self.k_h,
            "k_d": self.k_d,
            "n_d": self.n_d,
        }


@dataclass(frozen=True)
class StateIndex:
    """A state in the grid.  ``StateIndex.BOUNDARY`` (all fields ``None``) is s_b."""

    i: int | None
    j: int | None
    k: int | None

    @property
    def is_boundary(self):
        return self.i is None

    def linear(self, spec: GridSpec) -> int:
        if self.is_boundary:
            return spec.boundary
        if not (0 <= self.i < spec.n_w and 0 <= self.j < spec.n_h and 0 <= self.k < spec.n_d):
            raise IndexError(f"{self} outside grid {spec.n_w}x{spec.n_h}x{spec.n_d}")
        return spec.linearize(self.i, self.j, self.k)

    @classmethod
    def from_linear(cls, s: int, spec: GridSpec) -> StateIndex:
        s = int(s)
        if s == spec.boundary:
            return BOUNDARY
        if not 0 <= s < spec.boundary:
            raise IndexError(f"linear state {s} outside [0, {spec.boundary}]")
        return cls(*spec.delinearize(s))

    def __repr__(self):
        return "StateIndex(BOUNDARY)" if self.is_boundary else f"StateIndex({self.i}, {self.j}, {self.k})"


BOUNDARY = StateIndex(None, None, None)
StateIndex.BOUNDARY = BOUNDARY


@dataclass(frozen=True, eq=False)
class VoxelObservation:
    """Point count per voxel, in linear-state order (boundary excluded)."""

    counts: np.ndarray
    spec: GridSpec | None = None

    @property
    def max_count(self):
        return int(self.counts.max()) if self.counts.size else 0


def build_grid_spec(width, height, k_w, k_h, k_d, n_d) -> GridSpec:
    for name, value in (("width", width), ("height", height), ("k_w", k_w), ("k_h", k_h), ("n_d", n_d)):
        if int(value) != value or value <= 0:
            raise ValueError(f"{name} must be a positive integer, got {value!r}")
    if not (k_d > 0 and math.isfinite(k_d)):
        raise ValueError(f"k_d must be positive, got {k_d!r}")
    if k_w > width or k_h > height:
        raise ValueError(f"pixel steps ({k_w}, {k_h}) exceed image size ({width}, {height})")
    width, height, k_w, k_h, n_d = (int(v) for v in (width, height, k_w, k_h, n_d))
    return GridSpec(
        width=width,
        height=height,
        k_w=k_w,
        k_h=k_h,
        k_d=float(k_d),
        n_w=-(-width // k_w),
        n_h=-(-height // k_h),
        n_d=n_d,
    )


class _BinCache:
    """Per-pixel voxel column offsets, reused across frames of one grid."""

    def __init__(self, spec: GridSpec):
        cols = np.arange(spec.width) // spec.k_w
        rows = np.arange(spec.height) // spec.k_h
        self.column = (rows[:, None] * spec.n_w + cols[None, :]).astype(np.int64).ravel()


_bin_caches: dict[GridSpec, _BinCache] = {}


def discretize(image: DepthImage, spec: GridSpec) -> VoxelObservation:
    """Count the valid pixels falling into each voxel.

    Pixels without a return or at or beyond ``spec.max_depth`` are dropped.
    """
    if image.width != spec.width or image.height != spec.height:
        raise ValueError(
            f"image is {image.width}x{image.height}, grid expects {spec.width}x{spec.height}"
        )
    cache = _bin_caches.get(spec)
    if cache is None:
        cache = _bin_caches[spec] = _BinCache(spec)
    d = image.depths.ravel()
    with np.errstate(invalid="ignore"):
        keep = np.isfinite(d) & (d > 0) & (d < spec.max_depth)
    depth_bin = np.floor(d[keep].astype(np.float64) / spec.k_d).astype(np.int64)
    # float32 rounding can land a depth just below max_depth in bin n_d
    np.minimum(depth_bin, spec.n_d - 1, out=depth_bin)
    linear = cache.column[keep] + depth_bin * (spec.n_w * spec.n_h)
    counts = np.bincount(linear, minlength=spec.n_voxels)
    return VoxelObservation(counts, spec)


def project_state_to_3d(s, spec: GridSpec, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Camera-frame 3D point at the center of voxel ``s``.

    ``s`` is a :class:`StateIndex` or a linear index (array allowed).
    """
    if isinstance(s, StateIndex):
        if s.is_boundary:
            raise ValueError("the boundary state has no position")
        i, j, k = s.i, s.j, s.k
    else:
        s = np.asarray(s)
        if np.any(s >= spec.boundary) or np.any(s < 0):
            raise ValueError("only in-grid voxel states can be projected")
        i, j, k = spec.delinearize(s)
    u, v = spec.voxel_pixel_center(i, j)
    return intrinsics.deproject(u, v, spec.voxel_depth(k))


def voxel_centers(spec: GridSpec, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Camera-frame centers of all voxels, shape ``(n_voxels, 3)``."""
    return project_state_to_3d(np.arange(spec.n_voxels), spec, intrinsics)


# --- file formats -----------------------------------------------------------

_RAW_MAGIC_SIZE = 16


def read_pfm(path) -> DepthImage:
    with open(path, "rb") as f:
        kind = f.readline().strip()
        if kind != b"Pf":
            raise ValueError(f"{path}: not a grayscale PFM file (header {kind!r})")
        dims = f.readline().split()
        while not dims:
            dims = f.readline().split()
        width, height = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(), dtype=dtype)
    if data.size < width * height:
        raise ValueError(f"{path}: truncated PFM data ({data.size} of {width * height} floats)")
    # PFM scanlines run bottom to top
    return DepthImage(np.flipud(data[: width * height].reshape(height, width)).astype(np.float32))


def write_pfm(path, image: DepthImage):
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{image.width} {image.height}\n".encode())
        f.write(b"-1.0\n")
        f.write(np.flipud(image.depths).astype("<f4").tobytes())


def decode_raw(blob: bytes, name="raw image") -> DepthImage:
    """Parse the raw format: four little-endian u32 (width, height, reserved x2), then f32 depths."""
    if len(blob) < _RAW_MAGIC_SIZE:
        raise ValueError(f"{name}: shorter than the 16-byte header")
    width, height, _, _ = np.frombuffer(blob[:_RAW_MAGIC_SIZE], dtype="<u4")
    expected = _RAW_MAGIC_SIZE + 4 * int(width) * int(height)
    if len(blob) != expected:
        raise ValueError(f"{name}: expected {expected} bytes for {width}x{height}, got {len(blob)}")
    if width == 0 or height == 0:
        raise ValueError(f"{name}: empty image ({width}x{height})")
    data = np.frombuffer(blob[_RAW_MAGIC_SIZE:], dtype="<f4")
    return DepthImage(data.reshape(int(height), int(width)))


def encode_raw(image: DepthImage) -> bytes:
    header = np.array([image.width, image.height, 0, 0], dtype="<u4").tobytes()
    return header + image.depths.astype("<f4").tobytes()


def read_raw(path) -> DepthImage:
    return decode_raw(Path(path).read_bytes(), str(path))


def write_raw(path, image: DepthImage):
    Path(path).write_bytes(encode_raw(image))


def read_depth_image(path) -> DepthImage:
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        return read_pfm(path)
    return read_raw(path)
