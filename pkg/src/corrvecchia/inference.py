"""Fisher-scoring parameter estimation and fixed-skeleton posterior grids.

Covariance derivatives are central finite differences on the optimization
(log) scale, uniform across the model catalog.  The ordering/conditioning
skeleton is held fixed within an iteration and refreshed on the schedule G.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import strategies, vecchia
from .covmodels import ModelFamily, ParamVector, with_noise
from .errors import DimensionMismatch, DivergenceDetected
from .geometry import OrderedApprox
from .linalg import cholesky, logdet_from_cholesky, solve_triangular

_FD_STEP = 1e-5
_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class FisherState:
    """Trace of one Fisher-scoring run."""

    theta: ParamVector
    theta_skeleton: ParamVector
    iteration: int = 0
    schedule: frozenset = frozenset()
    skeleton: OrderedApprox | None = None
    grad_norms: list = field(default_factory=list)
    step_norms: list = field(default_factory=list)
    logliks: list = field(default_factory=list)
    dampings: list = field(default_factory=list)
    converged: bool = False
    singular_information: bool = False


def rmsd(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch("rmsd operands must have equal length")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def _fd_models(family: ModelFamily, opt: np.ndarray):
    """Central-difference model pairs per free parameter on the opt scale."""
    steps = _FD_STEP * np.maximum(1.0, np.abs(opt))
    pairs = []
    for j, h in enumerate(steps):
        up, dn = opt.copy(), opt.copy()
        up[j] += h
        dn[j] -= h
        pairs.append((family.build_opt(up), family.build_opt(dn), h))
    return pairs


def _block_eval(model, orig_blocks):
    k = model.eval_pairs(orig_blocks[:, :, None], orig_blocks[:, None, :])
    return 0.5 * (k + np.swapaxes(k, -1, -2))


def score_and_fisher(
    skeleton: OrderedApprox, family: ModelFamily, theta: ParamVector, y: np.ndarray
):
    """Score vector and Fisher information of the Vecchia loglikelihood.

    Sums per-block Gaussian contributions over the c-tilde blocks and
    subtracts the c blocks; y in original item indexing.  Returns
    (gradient, information, singular_flag).
    """
    free = list(family.free)
    p = len(free)
    opt = theta.to_opt(free)
    model0 = family.build(theta)
    fd = _fd_models(family, opt)
    y = np.asarray(y, dtype=float)
    y_ord = y[skeleton.order]

    grad = np.zeros(p)
    info = np.zeros((p, p))

    def accumulate(blocks, sign):
        by_size: dict = {}
        for blk in blocks:
            if len(blk):
                by_size.setdefault(len(blk), []).append(blk)
        for size, members in by_size.items():
            pos = np.array(members, dtype=np.int64)
            orig = skeleton.order[pos]
            k0 = _block_eval(model0, orig)
            np.linalg.cholesky(k0)  # surfaces non-SPD blocks early
            binv = np.linalg.inv(k0)
            yb = y_ord[pos][:, :, None]
            alpha = binv @ yb
            s_mats = []
            for j, (up, dn, h) in enumerate(fd):
                db = (_block_eval(up, orig) - _block_eval(dn, orig)) / (2.0 * h)
                s = binv @ db
                s_mats.append(s)
                tr = np.trace(s, axis1=-2, axis2=-1)
                quad = (np.swapaxes(alpha, -1, -2) @ db @ alpha)[:, 0, 0]
                grad[j] += sign * np.sum(-0.5 * tr + 0.5 * quad)
            for j in range(p):
                for kk in range(j, p):
                    tr = np.sum(s_mats[j] * np.swapaxes(s_mats[kk], -1, -2), axis=(-2, -1))
                    val = sign * 0.5 * np.sum(tr)
                    info[j, kk] += val
                    if kk != j:
                        info[kk, j] += val
    accumulate(skeleton.blocks(), +1.0)
    accumulate(skeleton.neighbors, -1.0)
    info = 0.5 * (info + info.T)
    eig = np.linalg.eigvalsh(info)
    singular = bool(eig.min() < 1e-10 * max(np.trace(info), 1e-300))
    return grad, info, singular


def _dense_score_fisher(family: ModelFamily, theta: ParamVector, y: np.ndarray):
    """Exact-GP score and Fisher information (the m = n - 1 reference)."""
    free = list(family.free)
    p = len(free)
    opt = theta.to_opt(free)
    idx = np.arange(family.inputs.n)
    k0 = family.build(theta).eval_matrix(idx, idx)
    if family.noise is not None:
        k0 = k0 + np.diag(np.broadcast_to(family.noise, (len(idx),)))
    kinv = np.linalg.inv(0.5 * (k0 + k0.T))
    alpha = kinv @ np.asarray(y, dtype=float)
    grad = np.zeros(p)
    smats = []
    for up, dn, h in _fd_models(family, opt):
        dk = (up.eval_matrix(idx, idx) - dn.eval_matrix(idx, idx)) / (2.0 * h)
        s = kinv @ dk
        smats.append(s)
        grad_j = -0.5 * np.trace(s) + 0.5 * alpha @ dk @ alpha
        grad[len(smats) - 1] = grad_j
    info = np.zeros((p, p))
    for j in range(p):
        for kk in range(j, p):
            info[j, kk] = info[kk, j] = 0.5 * np.sum(smats[j] * smats[kk].T)
    eig = np.linalg.eigvalsh(info)
    singular = bool(eig.min() < 1e-10 * max(np.trace(info), 1e-300))
    return grad, info, singular


def _profile_beta(family: ModelFamily, model, factor, y: np.ndarray, order: np.ndarray):
    """GLS estimate of the mean coefficients under the implied precision."""
    x = model.design_matrix()[order]
    px = np.column_stack(
        [factor.apply(factor.apply(x[:, j], transpose=True)) for j in range(x.shape[1])]
    )
    xtpx = x.T @ px
    beta = np.linalg.solve(xtpx, px.T @ y[order])
    return beta


def _family_loglik(family, theta, skeleton, y, noise_path=None):
    model = family.build(theta)
    y = np.asarray(y, dtype=float)
    if family.noise is None:
        approx = vecchia.vecchia_approx(skeleton, model)
        return vecchia.loglik(approx, y)
    noise = np.broadcast_to(family.noise, (family.inputs.n,))
    if noise_path == "ic":
        approx = vecchia.vecchia_approx(skeleton, model)
        return vecchia.loglik_noisy_ic(approx, noise, y)
    return vecchia.loglik_noisy_naive(skeleton, model, noise, y)


def fisher_scoring(
    family: ModelFamily,
    y: np.ndarray,
    theta0: ParamVector,
    m: int,
    schedule=None,
    max_iter: int = 30,
    tol: float = 1e-6,
    method: str = "vecchia",
    ordering: str = "C-MM",
    conditioning: str = "C-NN",
    seed: int = 0,
):
    """Damped Fisher scoring with skeleton refresh after iterations in G.

    ``schedule`` is an iterable of iteration numbers (1-based); None means
    refresh after every iteration.  ``method`` 'exact' runs the dense-GP
    reference.  Returns (theta_hat, FisherState).
    """
    free = list(family.free)
    y = np.asarray(y, dtype=float)
    theta = theta0
    has_mean = hasattr(family.build(theta0), "design_matrix")
    schedule = None if schedule is None else frozenset(int(k) for k in schedule)

    def make_skeleton(th):
        if method == "exact":
            n = family.inputs.n
            return strategies.build_skeleton(
                "L-ord", "R-N", family.inputs, None, n - 1, seed=seed
            )
        model = family.build(th)
        if family.noise is not None and conditioning in ("C-NN", "J-C-NN", "S-C-NN"):
            model = with_noise(model, family.noise)
        return strategies.build_skeleton(
            ordering, conditioning, family.inputs, model, m, seed=seed
        )

    def loglik_at(th, skel, resid):
        if method == "exact":
            idx = np.arange(family.inputs.n)
            k = family.build(th).eval_matrix(idx, idx)
            if family.noise is not None:
                k = k + np.diag(np.broadcast_to(family.noise, (len(idx),)))
            return vecchia.exact_loglik(k, resid)
        return _family_loglik(family, th, skel, resid)

    skeleton = make_skeleton(theta)
    state = FisherState(theta=theta, theta_skeleton=theta, schedule=schedule or frozenset())
    state.skeleton = skeleton
    resid = y
    consecutive_damped = 0
    for k in range(1, max_iter + 1):
        state.iteration = k
        if has_mean:
            model = family.build(theta)
            factor = vecchia.build_factor(skeleton, model)
            beta = _profile_beta(family, model, factor, y, skeleton.order)
            theta = theta.with_values(beta0=float(beta[0]), beta1=float(beta[1]))
            resid = y - model.design_matrix() @ beta
        if method == "exact":
            grad, info, singular = _dense_score_fisher(family, theta, resid)
        elif family.noise is not None:
            # naive noisy score: differentiate the K + D block likelihoods
            grad, info, singular = _noisy_score_and_fisher(skeleton, family, theta, resid)
        else:
            grad, info, singular = score_and_fisher(skeleton, family, theta, resid)
        state.singular_information = state.singular_information or singular
        if singular:
            info = info + np.eye(len(free)) * (1e-8 * np.trace(info) / len(free))
        step = np.linalg.solve(info, grad)
        state.grad_norms.append(float(np.linalg.norm(grad)))
        ll_old = loglik_at(theta, skeleton, resid)
        opt = theta.to_opt(free)
        damp = 0
        trial = theta
        while True:
            try:
                candidate = family.base_params.from_opt(free, opt + step / 2**damp).values
                trial = theta.with_values(**{nm: candidate[nm] for nm in free})
                ll_new = loglik_at(trial, skeleton, resid)
            except Exception:
                ll_new = -np.inf
            if ll_new >= ll_old or damp >= 5:
                break
            damp += 1
        state.dampings.append(damp)
        if ll_new < ll_old:
            consecutive_damped += 1
            if consecutive_damped >= 5:
                raise DivergenceDetected("loglikelihood decreased for 5 damped steps")
        else:
            consecutive_damped = 0
        theta = trial
        state.theta = theta
        state.logliks.append(float(ll_new))
        step_norm = float(np.linalg.norm(step / 2**damp))
        state.step_norms.append(step_norm)
        if schedule is None or k in schedule:
            skeleton = make_skeleton(theta)
            state.skeleton = skeleton
            state.theta_skeleton = theta
        if step_norm < tol:
            state.converged = True
            break
    return theta, state


def _noisy_score_and_fisher(skeleton, family, theta, y):
    """Score of the naive noisy likelihood: block covariances are K + D."""

    class _NoisyFamily:
        free = family.free

        def build(self, th):
            return with_noise(family.build(th), family.noise)

        def build_opt(self, vec):
            return self.build(family.base_params.from_opt(list(family.free), vec))

    nf = _NoisyFamily()
    nf.inputs = family.inputs
    return score_and_fisher(skeleton, nf, theta, y)


# ---------------------------------------------------------------------------
# posterior grids


@dataclass(frozen=True)
class LogNormalPrior:
    """log(theta) ~ N(log_mean, log_sd^2); density on the natural scale."""

    log_mean: float
    log_sd: float

    def logpdf(self, value: float) -> float:
        z = (np.log(value) - self.log_mean) / self.log_sd
        return float(-0.5 * z * z - np.log(value * self.log_sd) - 0.5 * _LOG_2PI)

    def grid(self, points: int = 61, width: float = 3.0) -> np.ndarray:
        lo = self.log_mean - width * self.log_sd
        hi = self.log_mean + width * self.log_sd
        return np.exp(np.linspace(lo, hi, points))


@dataclass
class PosteriorGrid:
    names: list
    axes: list  # natural-scale grid per parameter
    log_prior: np.ndarray
    log_lik: np.ndarray
    density: np.ndarray  # normalized to integrate to 1 by trapezoid

    def marginal(self, name: str):
        """1-D marginal density over one axis (trapezoid over the others)."""
        k = self.names.index(name)
        dens = self.density
        for other in reversed(range(len(self.names))):
            if other == k:
                continue
            dens = np.trapezoid(dens, x=self.axes[other], axis=other)
        return self.axes[k], dens

    def integral(self) -> float:
        dens = self.density
        for k in reversed(range(len(self.names))):
            dens = np.trapezoid(dens, x=self.axes[k], axis=k)
        return float(dens)


def posterior_grid(
    family: ModelFamily,
    y: np.ndarray,
    priors: dict,
    axes: dict,
    theta_hat: ParamVector,
    m: int,
    noise_path: str | None = None,
    ordering: str = "C-MM",
    conditioning: str = "C-NN",
    seed: int = 0,
    exact: bool = False,
    refresh_per_point: bool = False,
):
    """Posterior density over a parameter grid with the skeleton fixed at
    theta_hat.

    ``refresh_per_point`` rebuilds ordering and conditioning at every grid
    point; it exists only to demonstrate the instability of that scheme.
    ``exact`` evaluates the dense likelihood instead (reference rows).
    """
    names = list(axes.keys())
    grids = [np.asarray(axes[nm], dtype=float) for nm in names]
    shape = tuple(len(g) for g in grids)
    y = np.asarray(y, dtype=float)
    n = family.inputs.n

    skeleton = None
    if not exact:
        model_hat = family.build(theta_hat)
        if family.noise is not None and noise_path != "ic":
            model_hat = with_noise(model_hat, family.noise)
        skeleton = strategies.build_skeleton(
            ordering, conditioning, family.inputs, model_hat, m, seed=seed
        )

    log_prior = np.zeros(shape)
    log_lik = np.zeros(shape)
    for point in itertools.product(*[range(s) for s in shape]):
        values = {nm: float(grids[k][point[k]]) for k, nm in enumerate(names)}
        theta = theta_hat.with_values(**values)
        lp = sum(priors[nm].logpdf(values[nm]) for nm in names)
        if exact:
            idx = np.arange(n)
            k_mat = family.build(theta).eval_matrix(idx, idx)
            if family.noise is not None:
                k_mat = k_mat + np.diag(np.broadcast_to(family.noise, (n,)))
            ll = vecchia.exact_loglik(k_mat, y)
        else:
            skel = skeleton
            if refresh_per_point:
                model_pt = family.build(theta)
                if family.noise is not None and noise_path != "ic":
                    model_pt = with_noise(model_pt, family.noise)
                skel = strategies.build_skeleton(
                    ordering, conditioning, family.inputs, model_pt, m, seed=seed
                )
            ll = _family_loglik(family, theta, skel, y, noise_path=noise_path)
        log_prior[point] = lp
        log_lik[point] = ll
    log_post = log_prior + log_lik
    log_post -= log_post.max()
    density = np.exp(log_post)
    norm = density
    for k in reversed(range(len(names))):
        norm = np.trapezoid(norm, x=grids[k], axis=k)
    density = density / float(norm)
    return PosteriorGrid(names=names, axes=grids, log_prior=log_prior, log_lik=log_lik, density=density)
