"""Input-configuration generators, exact GP simulation, and split protocols.

All generators are pure functions of (shape parameters, seed).  Randomness
uses numpy's PCG64 generator seeded as [base_seed, stream] so CSV goldens
are stable across platforms; stream 0 draws coordinates, stream 1 draws
simulation noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .covmodels import CovarianceModel, InputSet
from .errors import EmptyTestSet, InvalidShape
from .linalg import cholesky

SCENARIO_NAMES = (
    "random-2d",
    "random-spacetime",
    "station",
    "gridded",
    "satellite",
    "multivariate-misaligned",
    "multivariate-aligned",
    "tree",
)


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in SCENARIO_NAMES:
            raise InvalidShape(f"unknown scenario {self.name!r}")


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(stream)])


def generate_inputs(scenario: Scenario) -> InputSet:
    p = scenario.params
    rng = _rng(scenario.seed, 0)
    name = scenario.name

    if name == "random-2d":
        n = int(p.get("n", 900))
        return InputSet(kind="spatial", coords=rng.uniform(size=(n, 2)))

    if name == "random-spacetime":
        n = int(p.get("n", 900))
        return InputSet(
            kind="spatiotemporal",
            coords=rng.uniform(size=(n, 2)),
            times=rng.uniform(size=n),
        )

    if name == "station":
        n_stations = int(p.get("stations", 100))
        n_times = int(p.get("times", 9))
        coords = rng.uniform(size=(n_stations, 2))
        times = np.arange(1, n_times + 1) / n_times
        return InputSet(
            kind="spatiotemporal",
            coords=np.repeat(coords, n_times, axis=0),
            times=np.tile(times, n_stations),
        )

    if name == "gridded":
        side = int(p.get("side", 10))
        n_times = int(p.get("times", 9))
        centers = (np.arange(side) + 0.5) / side
        g1, g2 = np.meshgrid(centers, centers, indexing="ij")
        coords = np.column_stack([g1.ravel(), g2.ravel()])
        times = np.arange(1, n_times + 1) / n_times
        return InputSet(
            kind="spatiotemporal",
            coords=np.repeat(coords, n_times, axis=0),
            times=np.tile(times, side * side),
        )

    if name == "satellite":
        # Convention: 5 slope-2 tracks wrapping in the first coordinate,
        # each traversed in two repeat cycles (cycle offset half the track
        # spacing); a traversal emits 90 points at consecutive steps among
        # the 900 regular global time steps.
        tracks = int(p.get("tracks", 5))
        cycles = int(p.get("cycles", 2))
        per_track = int(p.get("per_track", 90))
        total = tracks * cycles * per_track
        xs, ts = [], []
        for cyc in range(cycles):
            for trk in range(tracks):
                q = cyc * tracks + trk
                offset = trk / tracks + cyc / (tracks * cycles)
                x2 = (np.arange(per_track) + 0.5) / per_track
                x1 = (offset + 0.5 * x2) % 1.0
                t = (q * per_track + np.arange(per_track) + 0.5) / total
                xs.append(np.column_stack([x1, x2]))
                ts.append(t)
        return InputSet(
            kind="spatiotemporal", coords=np.vstack(xs), times=np.concatenate(ts)
        )

    if name in ("multivariate-misaligned", "multivariate-aligned"):
        p_comp = int(p.get("components", 2))
        n_j = int(p.get("n_per_component", 400))
        if name == "multivariate-aligned":
            base = rng.uniform(size=(n_j, 2))
            coords = np.tile(base, (p_comp, 1))
        else:
            coords = rng.uniform(size=(p_comp * n_j, 2))
        comps = np.repeat(np.arange(1, p_comp + 1), n_j)
        return InputSet(kind="multivariate-spatial", coords=coords, components=comps)

    if name == "tree":
        depth = int(p.get("depth", 12))
        n = 2**depth
        leaves = np.arange(n)
        paths = ((leaves[:, None] >> np.arange(depth - 1, -1, -1)[None, :]) & 1) + 1
        return InputSet(kind="tree", tree_paths=paths)

    raise InvalidShape(f"unknown scenario {name!r}")


def simulate_exact(model: CovarianceModel, seed: int) -> np.ndarray:
    """y = L eps with L the dense Cholesky factor of the model's matrix."""
    n = model.n
    if n > 5000:
        raise InvalidShape(f"dense simulation guarded to n <= 5000, got {n}")
    idx = np.arange(n)
    low = cholesky(model.eval_matrix(idx, idx))
    eps = _rng(seed, 1).standard_normal(n)
    return low @ eps


def train_test_split(inputs: InputSet, protocol: str, params: dict, seed: int = 0):
    """Disjoint exhaustive (train, test) index partition.

    'holdout-random' draws ``count`` test items uniformly; 'spacetime-cube'
    marks, for each of ``locations`` seed space-time points, all items of
    every component within the (2 cells x 2 cells x 1 step) neighborhood.
    """
    n = inputs.n
    rng = _rng(seed, 2)
    if protocol == "holdout-random":
        count = int(params.get("count", 100))
        if count <= 0 or count >= n:
            raise EmptyTestSet(f"holdout count {count} invalid for n={n}")
        test = np.sort(rng.choice(n, size=count, replace=False))
    elif protocol == "spacetime-cube":
        n_loc = int(params.get("locations", 12))
        if n_loc <= 0:
            raise EmptyTestSet("cube protocol needs at least one seed location")
        dxy = float(params.get("cell", 0.1))
        dt = float(params.get("step", 0.1))
        seeds = rng.choice(n, size=min(n_loc, n), replace=False)
        mask = np.zeros(n, dtype=bool)
        t = inputs.times if inputs.times is not None else np.zeros(n)
        for s in seeds:
            near = (
                (np.abs(inputs.coords[:, 0] - inputs.coords[s, 0]) <= 2 * dxy)
                & (np.abs(inputs.coords[:, 1] - inputs.coords[s, 1]) <= 2 * dxy)
                & (np.abs(t - t[s]) <= dt)
            )
            mask |= near
        test = np.flatnonzero(mask)
        if len(test) == 0 or len(test) == n:
            raise EmptyTestSet("cube protocol produced a degenerate split")
    else:
        raise InvalidShape(f"unknown split protocol {protocol!r}")
    train = np.setdiff1d(np.arange(n), test)
    return train, test


def subset_inputs(inputs: InputSet, idx: np.ndarray) -> InputSet:
    """Restrict an input set to the given item indices (order preserved)."""
    take = lambda a: None if a is None else np.asarray(a)[idx]
    return InputSet(
        kind=inputs.kind,
        coords=take(inputs.coords),
        times=take(inputs.times),
        components=take(inputs.components),
        tree_paths=take(inputs.tree_paths),
    )


def concat_inputs(a: InputSet, b: InputSet) -> InputSet:
    """Stack two input sets of the same kind (observed first)."""
    cat = lambda x, y: None if x is None else np.concatenate([x, y], axis=0)
    return InputSet(
        kind=a.kind,
        coords=cat(a.coords, b.coords),
        times=cat(a.times, b.times),
        components=cat(a.components, b.components),
        tree_paths=cat(a.tree_paths, b.tree_paths),
    )
