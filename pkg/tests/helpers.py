"""Shared fixtures-as-functions for the filter checks."""

import numpy as np

from pfapf.grid import VoxelObservation, build_grid_spec


def oracle_grid():
    # 4 x 3 x 5 voxels plus the boundary state
    return build_grid_spec(200, 150, 50, 50, 0.2, 5)


def counts(spec, entries=None):
    c = np.zeros(spec.n_voxels, dtype=np.int64)
    for s, n in (entries or {}).items():
        c[s] = n
    return VoxelObservation(c, spec)


def scripted_sequence(spec, seed=2024):
    """Twenty frames: empty, a solid obstacle, a split one, sparse outliers, a moved obstacle."""
    r = np.random.default_rng(seed)
    a = spec.linearize(1, 1, 2)
    b = spec.linearize(2, 1, 1)
    seq = [counts(spec) for _ in range(4)]
    seq += [counts(spec, {a: 2500}) for _ in range(5)]
    seq += [counts(spec, {a: 1500, b: 900}) for _ in range(3)]
    for _ in range(4):
        noisy = {int(s): int(r.integers(1, 4)) for s in r.choice(spec.n_voxels, 6, replace=False)}
        seq.append(counts(spec, noisy))
    seq += [counts(spec, {b: 2400}) for _ in range(4)]
    return seq


# one "criterion N: PASS|FAIL ..." line per acceptance check, printed by conftest
ACCEPTANCE_LINES = []


def report(number, title, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}  ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
