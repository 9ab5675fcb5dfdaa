"""Particle filter over voxel states, plus an exact Bayes filter for checking it."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec, StateIndex, VoxelObservation
from .models import ObservationParams, TransitionModel, observation_log_weights

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Belief:
    """Probability of every state (boundary last) and the most probable one."""

    spec: GridSpec
    probabilities: np.ndarray
    degenerate: bool = False

    @property
    def mode_linear(self) -> int:
        # argmax returns the first maximum, i.e. the lowest linear index
        return int(np.argmax(self.probabilities))

    @property
    def mode(self) -> StateIndex:
        return StateIndex.from_linear(self.mode_linear, self.spec)

    @property
    def mode_probability(self) -> float:
        return float(self.probabilities[self.mode_linear])

    @property
    def boundary_probability(self) -> float:
        return float(self.probabilities[-1])

    def mode_depth(self) -> float:
        """Depth of the mode voxel's center; ``nan`` when the mode is the boundary."""
        s = self.mode_linear
        if s == self.spec.boundary:
            return float("nan")
        return float(self.spec.voxel_depth(s // (self.spec.n_w * self.spec.n_h)))

    def total_variation(self, other: Belief) -> float:
        return 0.5 * float(np.abs(self.probabilities - other.probabilities).sum())

    @classmethod
    def uniform(cls, spec: GridSpec) -> Belief:
        return cls(spec, np.full(spec.n_states, 1.0 / spec.n_states))

    @classmethod
    def point(cls, spec: GridSpec, s: int) -> Belief:
        p = np.zeros(spec.n_states)
        p[s] = 1.0
        return cls(spec, p)


@dataclass(eq=False)
class ParticleSet:
    """Particles as linear state indices.  ``rng`` is owned by this set."""

    spec: GridSpec
    particles: np.ndarray
    rng: np.random.Generator
    degenerate: bool = field(default=False)

    def __len__(self):
        return len(self.particles)


def init_uniform(n_particles: int, spec: GridSpec, seed) -> ParticleSet:
    """Spread particles evenly over every state, boundary included.

    Whole rounds go round-robin; the remainder is placed on distinct states
    chosen by the seeded generator.
    """
    if n_particles <= 0:
        raise ValueError(f"particle count must be positive, got {n_particles}")
    n = spec.n_states
    if n_particles < n:
        warnings.warn(
            f"{n_particles} particles cannot cover {n} states", RuntimeWarning, stacklevel=2
        )
    rng = np.random.default_rng(seed)
    rounds, rest = divmod(n_particles, n)
    particles = np.concatenate(
        [np.tile(np.arange(n), rounds), np.sort(rng.choice(n, size=rest, replace=False))]
    ).astype(np.int64)
    return ParticleSet(spec, particles, rng)


def multinomial_resample(weights, n, rng: np.random.Generator):
    """Indices of ``n`` independent draws proportional to ``weights``."""
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    return np.minimum(idx, len(weights) - 1)


def update_belief(
    ps: ParticleSet,
    obs: VoxelObservation,
    transition: TransitionModel,
    params: ObservationParams,
) -> ParticleSet:
    """One propagate / weight / resample cycle.

    If every weight vanishes the propagated particles are kept as they are
    and the returned set is flagged ``degenerate``.
    """
    propagated = transition.sample(ps.particles, ps.rng)
    log_w = observation_log_weights(params, obs)[propagated]
    top = log_w.max()
    w = np.exp(log_w - top) if np.isfinite(top) else np.zeros_like(log_w)
    total = w.sum()
    if not (total > 0 and np.isfinite(total)):
        logger.warning("all particle weights vanished; keeping propagated particles")
        return ParticleSet(ps.spec, propagated, ps.rng, degenerate=True)
    chosen = multinomial_resample(w, len(propagated), ps.rng)
    return ParticleSet(ps.spec, propagated[chosen], ps.rng)


def belief_of(ps: ParticleSet) -> Belief:
    counts = np.bincount(ps.particles, minlength=ps.spec.n_states)
    return Belief(ps.spec, counts / len(ps.particles), degenerate=ps.degenerate)


class ParticleFilter:
    """Stateful wrapper holding the models and the current particle set."""

    def __init__(self, spec, transition, params, n_particles, seed):
        self.spec = spec
        self.transition = transition
        self.params = params
        self.particles = init_uniform(n_particles, spec, seed)
        self.frames = 0

    def update(self, obs: VoxelObservation) -> Belief:
        self.particles = update_belief(self.particles, obs, self.transition, self.params)
        self.frames += 1
        return self.belief

    @property
    def belief(self) -> Belief:
        return belief_of(self.particles)


# --- exact recursion -----------------------------------------------------


def exact_forward_trajectory(prior: Belief, observations, transition, params, dense_t=None):
    """Exact posteriors after each observation, as a list of beliefs.

    ``b' ~ Z(., o) * (T^T b)``.  A vanishing normalizer resets to uniform and
    marks that step degenerate.
    """
    spec = prior.spec
    if spec.n_states > 20_000:
        raise ValueError(f"{spec.n_states} states is too many for the dense recursion")
    t = transition.dense() if dense_t is None else dense_t
    b = prior.probabilities.astype(float)
    out = []
    for obs in observations:
        log_z = observation_log_weights(params, obs)
        z = np.exp(log_z - log_z.max())
        post = z * (t.T @ b)
        total = post.sum()
        if total > 0 and np.isfinite(total):
            b = post / total
            out.append(Belief(spec, b))
        else:
            b = np.full(spec.n_states, 1.0 / spec.n_states)
            out.append(Belief(spec, b, degenerate=True))
    return out


def exact_forward_filter(prior: Belief, observations, transition, params) -> Belief:
    observations = list(observations)
    if not observations:
        return prior
    return exact_forward_trajectory(prior, observations, transition, params)[-1]


# --- CSV export ----------------------------------------------------------

BELIEF_COLUMNS = [
    "frame", "record", "linear_state", "probability",
    "mode_i", "mode_j", "mode_k", "mode_depth_m", "mode_belief",
]


def belief_rows(frame: int, belief: Belief):
    """CSV rows for one frame: every nonzero state, then one mode row."""
    rows = []
    for s in np.flatnonzero(belief.probabilities):
        rows.append([frame, "state", int(s), repr(float(belief.probabilities[s])), "", "", "", "", ""])
    mode = belief.mode
    if mode.is_boundary:
        ijk, depth = ("", "", ""), ""
    else:
        ijk, depth = (mode.i, mode.j, mode.k), repr(belief.mode_depth())
    rows.append([frame, "mode", belief.mode_linear, "", *ijk, depth, repr(belief.mode_probability)])
    return rows


class BeliefWriter:
    """Streams a belief trajectory to CSV."""

    def __init__(self, path):
        self._f = open(path, "w", newline="")
        self._w = csv.writer(self._f, lineterminator="\n")
        self._w.writerow(BELIEF_COLUMNS)

    def write(self, frame, belief):
        self._w.writerows(belief_rows(frame, belief))

    def close(self):
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
