"""Transition and observation models over the voxel state space."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import GridSpec, StateIndex, VoxelObservation

logger = logging.getLogger(__name__)

_CACHE_VERSION = 1
_ROW_CHUNK = 128


def half_normal_kernel(x, sigma):
    """Unnormalized half-normal density ``exp(-x^2 / 2 sigma^2)``."""
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * (x / sigma) ** 2)


def boundary_distance(spec: GridSpec, states=None):
    """Manhattan distance (voxel steps) from each voxel to the boundary state.

    One step past the nearest of the six grid faces.
    """
    if states is None:
        states = np.arange(spec.n_voxels)
    i, j, k = spec.delinearize(np.asarray(states))
    to_face = np.minimum.reduce(
        [i, spec.n_w - 1 - i, j, spec.n_h - 1 - j, k, spec.n_d - 1 - k]
    )
    return to_face + 1


class TransitionModel:
    """Sparse row-stochastic transition table in CSR layout.

    ``indices[indptr[s]:indptr[s+1]]`` are the reachable next states of ``s``
    and ``cdf`` holds the running probability within each row, ending at
    exactly 1.  Treat instances as immutable.
    """

    def __init__(self, spec, sigma_s, sigma_z, truncation, indptr, indices, cdf):
        self.spec = spec
        self.sigma_s = float(sigma_s)
        self.sigma_z = float(sigma_z)
        self.truncation = float(truncation)
        self.indptr = indptr
        self.indices = indices
        self.cdf = cdf
        self._steps = int(np.diff(indptr).max()).bit_length()
        for arr in (indptr, indices, cdf):
            arr.setflags(write=False)

    @property
    def n_states(self):
        return self.spec.n_states

    @property
    def nnz(self):
        return int(self.indices.size)

    def row(self, s):
        """Dense probability row for linear state ``s``.

        Recomputed from the weights over the stored support rather than
        differenced from ``cdf``, which would lose entries below ~1e-16.
        """
        cols = self.indices[self.indptr[s]:self.indptr[s + 1]]
        w = _row_weights(self.spec, np.array([s]), self.sigma_s, self.sigma_z)[0]
        p = w / w.sum()
        out = np.zeros(self.n_states)
        out[cols] = p[cols]
        return out / out.sum()

    def dense(self):
        """Full ``(n_states, n_states)`` matrix; only sensible for small grids."""
        return np.stack([self.row(s) for s in range(self.n_states)])

    def sample(self, states, rng: np.random.Generator):
        """Draw one next state per entry of ``states`` (linear indices)."""
        states = np.asarray(states, dtype=np.int64)
        u = rng.random(states.shape)
        # bisection for the first cdf entry > u, all rows at once
        lo = self.indptr[states].copy()
        hi = self.indptr[states + 1] - 1
        for _ in range(self._steps):
            mid = (lo + hi) >> 1
            right = self.cdf[mid] <= u
            lo = np.where(right, mid + 1, lo)
            hi = np.where(right, hi, mid)
        return self.indices[lo].astype(np.int64)


def _row_weights(spec: GridSpec, sources, sigma_s, sigma_z):
    """Unnormalized transition weights for a block of source states."""
    n_vox = spec.n_voxels
    dest = np.arange(n_vox)
    di, dj, dk = spec.delinearize(dest)
    dest_depth = half_normal_kernel(spec.voxel_depth(dk), sigma_z)
    dest_bdist = boundary_distance(spec)

    w = np.empty((len(sources), spec.n_states))
    in_grid = sources < n_vox
    src = sources[in_grid]
    if src.size:
        si, sj, sk = spec.delinearize(src)
        manhattan = (
            np.abs(si[:, None] - di[None, :])
            + np.abs(sj[:, None] - dj[None, :])
            + np.abs(sk[:, None] - dk[None, :])
        )
        w[in_grid, :n_vox] = half_normal_kernel(manhattan, sigma_s) * dest_depth[None, :]
        # moving out to the boundary carries no depth bias
        w[in_grid, n_vox] = half_normal_kernel(boundary_distance(spec, src), sigma_s)
    if (~in_grid).any():
        w[~in_grid, :n_vox] = half_normal_kernel(dest_bdist, sigma_s) * dest_depth
        w[~in_grid, n_vox] = 1.0
    return w


def build_transition_model(
    spec: GridSpec,
    sigma_s: float,
    sigma_z: float,
    truncation: float = 1e-8,
    cache_dir=None,
) -> TransitionModel:
    """Tabulate next-state probabilities for every state of ``spec``.

    Entries whose normalized probability falls below ``truncation`` are
    dropped and the row renormalized; the boundary entry of each row is
    always kept.
    """
    if not (sigma_s > 0 and sigma_z > 0):
        raise ValueError(f"sigma_s and sigma_z must be positive, got {sigma_s}, {sigma_z}")
    if not 0 <= truncation <= 1e-3:
        raise ValueError(f"truncation must lie in [0, 1e-3], got {truncation}")

    cache_path = None
    if cache_dir is not None:
        cache_path = Path(cache_dir) / f"transition-{_cache_key(spec, sigma_s, sigma_z, truncation)}.npz"
        if cache_path.exists():
            logger.debug("loading transition table from %s", cache_path)
            return _load(cache_path, spec, sigma_s, sigma_z, truncation)

    n = spec.n_states
    index_dtype = np.int16 if n <= np.iinfo(np.int16).max else np.int32
    indptr = np.zeros(n + 1, dtype=np.int64)
    idx_parts, prob_parts = [], []
    for start in range(0, n, _ROW_CHUNK):
        sources = np.arange(start, min(start + _ROW_CHUNK, n))
        w = _row_weights(spec, sources, sigma_s, sigma_z)
        p = w / w.sum(axis=1, keepdims=True)
        keep = p >= truncation
        keep[:, spec.boundary] = True
        p = np.where(keep, p, 0.0)
        p /= p.sum(axis=1, keepdims=True)
        rows, cols = np.nonzero(keep)
        indptr[sources + 1] = np.bincount(rows, minlength=len(sources))
        idx_parts.append(cols.astype(index_dtype))
        prob_parts.append(p[rows, cols])
    np.cumsum(indptr, out=indptr)
    model = _assemble(spec, sigma_s, sigma_z, truncation, indptr,
                      np.concatenate(idx_parts), np.concatenate(prob_parts))
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(cache_path, indptr=model.indptr, indices=model.indices, cdf=model.cdf)
    return model


def _assemble(spec, sigma_s, sigma_z, truncation, indptr, indices, probs):
    cdf = np.cumsum(probs)
    row_start_mass = np.concatenate([[0.0], cdf[indptr[1:-1] - 1]])
    cdf -= np.repeat(row_start_mass, np.diff(indptr))
    cdf[indptr[1:] - 1] = 1.0
    return TransitionModel(spec, sigma_s, sigma_z, truncation, indptr, indices, cdf)


def _cache_key(spec, sigma_s, sigma_z, truncation):
    payload = json.dumps(
        {"v": _CACHE_VERSION, "grid": spec.to_dict(), "sigma_s": sigma_s,
         "sigma_z": sigma_z, "truncation": truncation},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _load(path, spec, sigma_s, sigma_z, truncation):
    with np.load(path) as data:
        return TransitionModel(spec, sigma_s, sigma_z, truncation,
                               data["indptr"].copy(), data["indices"].copy(), data["cdf"].copy())


def sample_next_state(model: TransitionModel, s, rng: np.random.Generator):
    """Draw the successor of a single state; accepts a StateIndex or a linear index."""
    if isinstance(s, StateIndex):
        nxt = int(model.sample(np.array([s.linear(model.spec)]), rng)[0])
        return StateIndex.from_linear(nxt, model.spec)
    return int(model.sample(np.array([int(s)]), rng)[0])


@dataclass(frozen=True)
class ObservationParams:
    sigma_o: float
    sigma_n: float
    n_max: int

    def __post_init__(self):
        if not self.sigma_o > 0:
            raise ValueError(f"sigma_o must be positive, got {self.sigma_o}")
        if not self.sigma_n > 0:
            raise ValueError(f"sigma_n must be positive, got {self.sigma_n}")
        if self.n_max < 1:
            raise ValueError(f"n_max must be at least 1, got {self.n_max}")


def observation_log_weights(params: ObservationParams, obs: VoxelObservation) -> np.ndarray:
    """Log observation weight of every state (boundary last), up to a shared constant."""
    counts = obs.counts.astype(float)
    out = np.empty(counts.size + 1)
    out[:-1] = -0.5 * ((counts - params.n_max) / params.sigma_o) ** 2
    out[-1] = -0.5 * (obs.max_count / params.sigma_n) ** 2
    return out


def observation_weight(params: ObservationParams, s, obs: VoxelObservation) -> float:
    """Relative likelihood of ``obs`` given the true state ``s``.

    In-grid states score how close their own count is to a full voxel; the
    boundary state scores how empty the most populated voxel is.
    """
    if isinstance(s, StateIndex):
        if s.is_boundary:
            lin = obs.counts.size
        elif obs.spec is None:
            raise ValueError("observation carries no grid; pass a linear state index")
        else:
            lin = s.linear(obs.spec)
    else:
        lin = int(s)
    if lin == obs.counts.size:
        return float(np.exp(-0.5 * (obs.max_count / params.sigma_n) ** 2))
    n = float(obs.counts[lin])
    return float(np.exp(-0.5 * ((n - params.n_max) / params.sigma_o) ** 2))
