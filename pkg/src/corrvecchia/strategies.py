"""Registry of ordering x conditioning strategies by their experiment names.

Orderings: C-MM, E-MM, S-E-MM, X-ord, Y-ord, T-ord, L-ord, R-ord.
Conditionings: C-NN, J-C-NN, S-C-NN, E-NN, J-E-NN, S-E-NN, D-E-NN, T-NN, R-N.
The S-/J-/D- multivariate variants are metric and grouping wrappers around
the generic nearest-neighbor search.
"""

from __future__ import annotations

import numpy as np

from . import geometry
from .covmodels import CovarianceModel, InputSet
from .errors import InvalidParameter
from .geometry import (
    CorrelationMetric,
    EuclideanMetric,
    OrderedApprox,
    RandomMetric,
    TimeMetric,
)

ORDERINGS = ("C-MM", "E-MM", "S-E-MM", "X-ord", "Y-ord", "T-ord", "L-ord", "R-ord")
CONDITIONINGS = (
    "C-NN",
    "J-C-NN",
    "S-C-NN",
    "E-NN",
    "J-E-NN",
    "S-E-NN",
    "D-E-NN",
    "T-NN",
    "R-N",
)


def parse_strategy(name: str):
    """Split 'C-MM+C-NN' into its ordering and conditioning ids."""
    try:
        ordering, conditioning = name.split("+")
    except ValueError as exc:
        raise InvalidParameter(f"strategy {name!r} must be 'ordering+conditioning'") from exc
    if ordering not in ORDERINGS or conditioning not in CONDITIONINGS:
        raise InvalidParameter(f"unknown strategy {name!r}")
    return ordering, conditioning


def _component_quota(m: int, labels: np.ndarray) -> dict:
    """Floor division of m across components, remainder in label order."""
    uniq = np.unique(labels)
    base, rem = divmod(m, len(uniq))
    return {int(g): base + (1 if k < rem else 0) for k, g in enumerate(np.sort(uniq))}


def build_ordering(
    ordering: str, inputs: InputSet, model: CovarianceModel | None, seed: int = 0, first=None
) -> np.ndarray:
    n = inputs.n
    if ordering == "C-MM":
        return geometry.maximin_order(CorrelationMetric(model), n, first=first)
    if ordering == "E-MM":
        return geometry.maximin_order(EuclideanMetric(inputs.space_time_coords()), n, first=first)
    if ordering == "S-E-MM":
        parts = []
        for g in np.sort(np.unique(inputs.components)):
            idx = np.flatnonzero(inputs.components == g)
            sub = geometry.maximin_order(EuclideanMetric(inputs.coords[idx]), len(idx))
            parts.append(idx[sub])
        return np.concatenate(parts)
    if ordering in ("X-ord", "Y-ord", "T-ord"):
        if inputs.components is not None:
            # multivariate: order each component separately, then join
            parts = []
            for g in np.sort(np.unique(inputs.components)):
                idx = np.flatnonzero(inputs.components == g)
                from .scenarios import subset_inputs

                sub = geometry.coordinate_order(subset_inputs(inputs, idx), ordering)
                parts.append(idx[sub])
            return np.concatenate(parts)
        return geometry.coordinate_order(inputs, ordering)
    if ordering == "L-ord":
        return np.arange(n, dtype=np.int64)
    if ordering == "R-ord":
        return np.random.default_rng([int(seed), 3]).permutation(n).astype(np.int64)
    raise InvalidParameter(f"unknown ordering {ordering!r}")


def conditioning_metric(
    conditioning: str, inputs: InputSet, model: CovarianceModel | None, seed: int = 0
):
    if conditioning in ("C-NN", "J-C-NN", "S-C-NN"):
        return CorrelationMetric(model)
    if conditioning == "E-NN":
        return EuclideanMetric(inputs.space_time_coords())
    if conditioning in ("J-E-NN", "S-E-NN", "D-E-NN"):
        return EuclideanMetric(inputs.coords)
    if conditioning == "T-NN":
        if inputs.times is None:
            raise InvalidParameter("T-NN conditioning requires timestamped inputs")
        return TimeMetric(inputs.times)
    if conditioning == "R-N":
        return RandomMetric(inputs.n, seed)
    raise InvalidParameter(f"unknown conditioning {conditioning!r}")


def build_skeleton(
    ordering: str,
    conditioning: str,
    inputs: InputSet,
    model: CovarianceModel | None,
    m: int,
    seed: int = 0,
    first=None,
) -> OrderedApprox:
    order = build_ordering(ordering, inputs, model, seed=seed, first=first)
    metric = conditioning_metric(conditioning, inputs, model, seed=seed)
    if conditioning in ("S-C-NN", "S-E-NN"):
        return geometry.nearest_neighbors(
            metric, order, m, groups=inputs.components, mode="separate"
        )
    if conditioning == "D-E-NN":
        return geometry.nearest_neighbors(
            metric,
            order,
            m,
            groups=inputs.components,
            mode="quota",
            quotas=_component_quota(m, inputs.components),
        )
    return geometry.nearest_neighbors(metric, order, m)
