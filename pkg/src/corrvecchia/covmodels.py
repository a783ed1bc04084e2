"""Covariance model catalog: pairwise evaluators K(i, j) over an input set.

Every model exposes scalar ``eval_pair`` and vectorized ``eval_pairs`` /
``eval_matrix``; all downstream algorithms (ordering, factor construction,
dense oracles) consume models only through this interface.  Implementations
are argument-order symmetric so eval_pair(i, j) == eval_pair(j, i) bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bessel import matern_function
from .errors import DimensionMismatch, InvalidParameter, NegativeNoise
from .linalg import cholesky


@dataclass(frozen=True)
class InputSet:
    """The n inputs a covariance model is evaluated over.

    kind is one of spatial, spatiotemporal, multivariate-spatial,
    multivariate-spatiotemporal, tree.  coords is (n, d); times in [0, 1];
    components are labels 1..p; tree_paths is (n, depth) with branch choices.
    """

    kind: str
    coords: np.ndarray | None = None
    times: np.ndarray | None = None
    components: np.ndarray | None = None
    tree_paths: np.ndarray | None = None

    def __post_init__(self):
        for arr in (self.coords, self.times, self.components, self.tree_paths):
            if arr is not None and not np.all(np.isfinite(np.asarray(arr, dtype=float))):
                raise InvalidParameter("input coordinates must be finite")

    @property
    def n(self) -> int:
        for arr in (self.coords, self.times, self.components, self.tree_paths):
            if arr is not None:
                return arr.shape[0]
        return 0

    def space_time_coords(self) -> np.ndarray:
        """Coordinates with time appended as an extra column when present."""
        if self.times is None:
            return self.coords
        return np.column_stack([self.coords, self.times])


@dataclass(frozen=True)
class ParamVector:
    """Named real parameters; ``positive`` ones optimize on log scale."""

    values: dict
    positive: frozenset = frozenset()

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def with_values(self, **updates) -> "ParamVector":
        merged = dict(self.values)
        merged.update(updates)
        return ParamVector(merged, self.positive)

    def to_opt(self, free: list) -> np.ndarray:
        out = []
        for name in free:
            v = self.values[name]
            out.append(np.log(v) if name in self.positive else v)
        return np.array(out)

    def from_opt(self, free: list, vec: np.ndarray) -> "ParamVector":
        updates = {}
        for name, v in zip(free, vec):
            nat = np.exp(v) if name in self.positive else v
            if not np.isfinite(nat):
                raise InvalidParameter(f"parameter {name} is non-finite after transform")
            updates[name] = float(nat)
        return self.with_values(**updates)


class CovarianceModel:
    """Base evaluator; subclasses implement ``eval_pairs`` on index arrays."""

    inputs: InputSet

    @property
    def n(self) -> int:
        return self.inputs.n

    def eval_pairs(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def eval_pair(self, i: int, j: int) -> float:
        return float(self.eval_pairs(np.asarray(i), np.asarray(j)))

    def eval_matrix(self, rows, cols) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        return self.eval_pairs(rows[:, None], cols[None, :])

    def variances(self) -> np.ndarray:
        idx = np.arange(self.n)
        return self.eval_pairs(idx, idx)


def _pair_sq_dists(coords: np.ndarray, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    d = coords[i] - coords[j]
    return np.sum(d * d, axis=-1)


class NonstationaryMatern(CovarianceModel):
    """Paciorek-Stein style nonstationary Matern on 2-D inputs.

    K(x, x') = sigma2 * |A(x)|^(1/4) |A(x')|^(1/4) / |Abar|^(1/2)
               * M_nubar(Q^(1/2)),
    with Abar the average of the local anisotropy matrices, nubar the average
    local smoothness, and Q the Abar^-1 quadratic form of x - x'.  Local
    fields come from named presets: ``anisotropic`` (degree a), ``varying-
    smoothness`` (nu = 0.2 + 1.3 x1), ``varying-rotation`` (angle pi x1 / 2).
    """

    PRESETS = ("anisotropic", "varying-smoothness", "varying-rotation")

    def __init__(self, inputs: InputSet, params: ParamVector, preset: str):
        if preset not in self.PRESETS:
            raise InvalidParameter(f"unknown anisotropy preset {preset!r}")
        self.inputs = inputs
        self.params = params
        self.preset = preset
        self.sigma2 = float(params["sigma2"])
        x = inputs.coords
        n = x.shape[0]
        if preset == "anisotropic":
            a = float(params["a"])
            amat = np.zeros((n, 2, 2))
            amat[:, 0, 0] = 1e-2 / a**2
            amat[:, 1, 1] = 1e-2
            nu = np.full(n, 0.5)
        elif preset == "varying-smoothness":
            amat = np.zeros((n, 2, 2))
            amat[:, 0, 0] = 1e-2
            amat[:, 1, 1] = 1e-2
            nu = 0.2 + 1.3 * x[:, 0]
        else:  # varying-rotation
            eta = 0.5 * np.pi * x[:, 0]
            c, s = np.cos(eta), np.sin(eta)
            # R^T diag(1e-4, 1e-2) R with R = [[c, s], [-s, c]]
            amat = np.empty((n, 2, 2))
            amat[:, 0, 0] = 1e-4 * c * c + 1e-2 * s * s
            amat[:, 1, 1] = 1e-4 * s * s + 1e-2 * c * c
            amat[:, 0, 1] = 1e-4 * c * s - 1e-2 * s * c
            amat[:, 1, 0] = amat[:, 0, 1]
            nu = np.full(n, 0.5)
        if not np.all(np.isfinite(amat)) or not np.all(nu > 0):
            raise InvalidParameter("anisotropy field or smoothness invalid")
        self._amat = amat
        self._nu = nu
        det = amat[:, 0, 0] * amat[:, 1, 1] - amat[:, 0, 1] * amat[:, 1, 0]
        self._det_quarter = det**0.25

    def eval_pairs(self, i, j):
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        x = self.inputs.coords
        a = 0.5 * (self._amat[i] + self._amat[j])
        det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
        d = x[i] - x[j]
        # Q = d^T a^-1 d via the 2x2 adjugate
        q = (
            a[..., 1, 1] * d[..., 0] ** 2
            - 2.0 * a[..., 0, 1] * d[..., 0] * d[..., 1]
            + a[..., 0, 0] * d[..., 1] ** 2
        ) / det
        nubar = 0.5 * (self._nu[i] + self._nu[j])
        pref = self.sigma2 * self._det_quarter[i] * self._det_quarter[j] / np.sqrt(det)
        return pref * matern_function(nubar, np.sqrt(np.maximum(q, 0.0)))


class SpaceTimeExponential(CovarianceModel):
    """Exponential kernel on range-scaled space-time coordinates.

    K(x, x') = sigma2 * exp(-||A^-1 (x - x')||) with A = diag(r_s, r_s, r_t),
    so the process is isotropic in the coordinates scaled by the spatial and
    temporal ranges.
    """

    def __init__(self, inputs: InputSet, params: ParamVector):
        self.inputs = inputs
        self.params = params
        self.sigma2 = float(params["sigma2"])
        r_s, r_t = float(params["r_s"]), float(params["r_t"])
        if not (np.isfinite(r_s) and np.isfinite(r_t) and r_s > 0 and r_t > 0):
            raise InvalidParameter("ranges must be positive and finite")
        self._scaled = np.column_stack(
            [inputs.coords[:, 0] / r_s, inputs.coords[:, 1] / r_s, inputs.times / r_t]
        )

    def eval_pairs(self, i, j):
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        return self.sigma2 * np.exp(-np.sqrt(_pair_sq_dists(self._scaled, i, j)))


class LatentMultivariateExponential(CovarianceModel):
    """Multivariate exponential kernel via a latent component coordinate.

    Component j sits at latent coordinate (j - 1) * delta; the kernel is
    sigma2 * exp(-||xtil - xtil'|| / r) on the latent-augmented inputs.
    """

    def __init__(self, inputs: InputSet, params: ParamVector):
        self.inputs = inputs
        self.params = params
        self.sigma2 = float(params["sigma2"])
        r, delta = float(params["r"]), float(params["delta"])
        if not (r > 0 and np.isfinite(r) and delta >= 0 and np.isfinite(delta)):
            raise InvalidParameter("r must be positive, delta nonnegative")
        latent = (inputs.components - 1).astype(float) * delta
        self._aug = np.column_stack([inputs.coords, latent])
        self._r = r

    def eval_pairs(self, i, j):
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        return self.sigma2 * np.exp(-np.sqrt(_pair_sq_dists(self._aug, i, j)) / self._r)


class TreeHierarchical(CovarianceModel):
    """Hierarchical normal model on the leaves of a binary tree of depth J.

    cov(leaf, leaf') = sum of level variances up to the deepest common
    ancestor (inclusive of the root level 0).
    """

    def __init__(self, inputs: InputSet, params: ParamVector):
        self.inputs = inputs
        self.params = params
        paths = np.asarray(inputs.tree_paths)
        self.depth = paths.shape[1]
        sigma2 = float(params["sigma2"])  # shared across levels 0..J
        self._level_var = np.full(self.depth + 1, sigma2)
        # cum_var[alpha] = sum_{r=0}^{alpha} sigma_r^2
        self._cum_var = np.cumsum(self._level_var)
        self._paths = paths

    def eval_pairs(self, i, j):
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        eq = self._paths[i] == self._paths[j]
        # depth of deepest common ancestor: length of the common path prefix
        alpha = np.where(np.all(eq, axis=-1), self.depth, np.argmin(eq, axis=-1))
        return self._cum_var[alpha]


class PerDimensionRangeMatern(CovarianceModel):
    """Matern kernel with one range per input dimension plus a latent one.

    Inputs carry space-time coordinates and a component label; component 2
    sits at latent coordinate 1 (component 1 at 0).  The kernel is
    sigma2 * M_nu(||A^-1 dx||) with A = diag(ranges..., r_l) and fixed nu.
    The component-indicator mean design is exposed via ``design_matrix``.
    """

    def __init__(self, inputs: InputSet, params: ParamVector, nu: float = 0.75):
        self.inputs = inputs
        self.params = params
        self.nu = float(nu)
        self.sigma2 = float(params["sigma2"])
        coords = inputs.space_time_coords()
        d = coords.shape[1]
        names = [f"r{k+1}" for k in range(d)]
        ranges = np.array([float(params[nm]) for nm in names])
        cols = [coords[:, k] / ranges[k] for k in range(d)]
        if inputs.components is not None:
            r_l = float(params["r_l"])
            cols.append((inputs.components - 1).astype(float) / r_l)
            ranges = np.append(ranges, r_l)
        if not np.all(np.isfinite(ranges)) or np.any(ranges <= 0):
            raise InvalidParameter("all ranges must be positive and finite")
        self._scaled = np.column_stack(cols)

    def eval_pairs(self, i, j):
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        dist = np.sqrt(_pair_sq_dists(self._scaled, i, j))
        return self.sigma2 * matern_function(self.nu, dist)

    def design_matrix(self) -> np.ndarray:
        """Intercept plus component-2 indicator; mean = X @ (beta0, beta1)."""
        comp = self.inputs.components
        ind = (comp == 2).astype(float) if comp is not None else np.zeros(self.n)
        return np.column_stack([np.ones(self.n), ind])

    def mean(self) -> np.ndarray:
        beta = np.array([self.params.values.get("beta0", 0.0), self.params.values.get("beta1", 0.0)])
        return self.design_matrix() @ beta


class NoisyModel(CovarianceModel):
    """Wraps a model with per-item diagonal noise: K(i,j) + [i==j] D_ii."""

    def __init__(self, base: CovarianceModel, noise_variances: np.ndarray):
        d = np.asarray(noise_variances, dtype=float)
        if d.shape != (base.n,):
            raise DimensionMismatch(f"noise vector must have length {base.n}")
        if np.any(d < 0):
            raise NegativeNoise("noise variances must be nonnegative")
        self.base = base
        self.inputs = base.inputs
        self.noise = d

    def eval_pairs(self, i, j):
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        k = self.base.eval_pairs(i, j)
        return k + np.where(i == j, self.noise[i], 0.0)


def with_noise(model: CovarianceModel, noise_variances) -> NoisyModel:
    n = model.n
    d = np.asarray(noise_variances, dtype=float)
    if d.ndim == 0:
        d = np.full(n, float(d))
    return NoisyModel(model, d)


class RescaledModel(CovarianceModel):
    """K'(i,j) = s_i s_j K(i,j): marginal rescaling with correlations fixed."""

    def __init__(self, base: CovarianceModel, scale: np.ndarray):
        self.base = base
        self.inputs = base.inputs
        self.scale = np.asarray(scale, dtype=float)

    def eval_pairs(self, i, j):
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        return self.scale[i] * self.scale[j] * self.base.eval_pairs(i, j)


# ---------------------------------------------------------------------------
# registry and parameterized families

_POSITIVE_DEFAULTS = {
    "anisotropic": ({"sigma2": 1.0, "a": 10.0}, {"sigma2", "a"}),
    "varying-smoothness": ({"sigma2": 1.0}, {"sigma2"}),
    "varying-rotation": ({"sigma2": 1.0}, {"sigma2"}),
    "spacetime": ({"sigma2": 1.0, "r_s": 0.1, "r_t": 1.0}, {"sigma2", "r_s", "r_t"}),
    "multivariate": ({"sigma2": 1.0, "r": 0.1, "delta": 0.4}, {"sigma2", "r", "delta"}),
    "tree": ({"sigma2": 1.0}, {"sigma2"}),
}


def default_params(model_id: str, inputs: InputSet | None = None, **overrides) -> ParamVector:
    """Schema-complete ParamVector for a registry model at catalog defaults."""
    if model_id == "perdim-matern":
        d = 2 if inputs is None else inputs.space_time_coords().shape[1]
        values = {"sigma2": 1.0, "beta0": 0.0, "beta1": 0.0}
        positive = {"sigma2"}
        for k in range(d):
            values[f"r{k+1}"] = 0.3
            positive.add(f"r{k+1}")
        if inputs is None or inputs.components is not None:
            values["r_l"] = 1.0
            positive.add("r_l")
    elif model_id in _POSITIVE_DEFAULTS:
        base, positive = _POSITIVE_DEFAULTS[model_id]
        values = dict(base)
    else:
        raise InvalidParameter(f"unknown model id {model_id!r}")
    values.update(overrides)
    return ParamVector(values, frozenset(positive))


def make_model(model_id: str, inputs: InputSet, params: ParamVector, **kwargs) -> CovarianceModel:
    if model_id in NonstationaryMatern.PRESETS:
        return NonstationaryMatern(inputs, params, preset=model_id)
    if model_id == "spacetime":
        return SpaceTimeExponential(inputs, params)
    if model_id == "multivariate":
        return LatentMultivariateExponential(inputs, params)
    if model_id == "tree":
        return TreeHierarchical(inputs, params)
    if model_id == "perdim-matern":
        return PerDimensionRangeMatern(inputs, params, **kwargs)
    raise InvalidParameter(f"unknown model id {model_id!r}")


@dataclass(frozen=True)
class ModelFamily:
    """A covariance model with some parameters left free for inference."""

    model_id: str
    inputs: InputSet
    base_params: ParamVector
    free: tuple
    noise: np.ndarray | None = None
    kwargs: dict = field(default_factory=dict)

    def build(self, params: ParamVector) -> CovarianceModel:
        return make_model(self.model_id, self.inputs, params, **self.kwargs)

    def build_opt(self, vec: np.ndarray) -> CovarianceModel:
        return self.build(self.base_params.from_opt(list(self.free), vec))

    def params_from_opt(self, vec: np.ndarray) -> ParamVector:
        return self.base_params.from_opt(list(self.free), vec)


def eval_pair(model: CovarianceModel, i: int, j: int) -> float:
    return model.eval_pair(i, j)


def eval_matrix(model: CovarianceModel, rows, cols) -> np.ndarray:
    return model.eval_matrix(rows, cols)


def spot_check_positive_definite(model: CovarianceModel) -> None:
    """Raise NotPositiveDefinite if the induced matrix fails Cholesky."""
    idx = np.arange(model.n)
    cholesky(model.eval_matrix(idx, idx))
