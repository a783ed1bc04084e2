"""Vecchia approximation core: sparse factor construction, likelihoods, KL
divergence, posterior prediction, and the naive / incomplete-Cholesky noise
paths.

Vectors handed to the likelihood and prediction routines are in the ordered
indexing of the supplied skeleton unless noted otherwise.  Dense oracles are
guarded to n <= 5000.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse
from numba import njit

from . import geometry
from .covmodels import CovarianceModel, with_noise
from .errors import DimensionMismatch, NotPositiveDefinite, ZeroNoise
from .geometry import CorrelationMetric, Metric, OrderedApprox
from .linalg import SparseFactor, cholesky, logdet_from_cholesky, solve_triangular

DENSE_GUARD = 5000
_LOG_2PI = float(np.log(2.0 * np.pi))


def _check_dense_guard(n: int):
    if n > DENSE_GUARD:
        raise DimensionMismatch(f"dense path requested for n={n} > {DENSE_GUARD}")


def _build_columns(orig_of_pos: np.ndarray, blocks: list, model: CovarianceModel) -> SparseFactor:
    """Factor columns from per-position index blocks (self first).

    Blocks are grouped by size so covariance evaluation and Cholesky run
    batched; each column i solves its (s x s) block for e_1 and scales.
    """
    n = len(blocks)
    rows = [None] * n
    vals = [None] * n
    by_size: dict = {}
    for i, blk in enumerate(blocks):
        by_size.setdefault(len(blk), []).append(i)
    for size, members in by_size.items():
        pos = np.array([blocks[i] for i in members], dtype=np.int64)  # (g, s)
        orig = orig_of_pos[pos]
        k = model.eval_pairs(orig[:, :, None], orig[:, None, :])
        k = 0.5 * (k + np.swapaxes(k, -1, -2))
        try:
            low = np.linalg.cholesky(k)
        except np.linalg.LinAlgError:
            for i, kk in zip(members, k):
                try:
                    np.linalg.cholesky(kk)
                except np.linalg.LinAlgError as exc:
                    raise NotPositiveDefinite(f"conditioning block of column {i} is not SPD") from exc
            raise
        e1 = np.zeros((len(members), size, 1))
        e1[:, 0, 0] = 1.0
        w = np.linalg.solve(low, e1)
        v = np.linalg.solve(np.swapaxes(low, -1, -2), w)[:, :, 0]
        scale = np.sqrt(v[:, 0])
        u = v / scale[:, None]
        for g, i in enumerate(members):
            blk = blocks[i]
            rows[i] = np.append(blk[1:], blk[0])
            vals[i] = np.append(u[g, 1:], u[g, 0])
    return SparseFactor(n=n, rows=rows, vals=vals)


def build_factor(skeleton: OrderedApprox, model: CovarianceModel) -> SparseFactor:
    """Sparse inverse Cholesky factor U with column i supported on {i} u c(i)."""
    return _build_columns(skeleton.order, skeleton.blocks(), model)


@dataclass(frozen=True)
class VecchiaApprox:
    skeleton: OrderedApprox
    model: CovarianceModel
    factor: SparseFactor

    @property
    def n(self) -> int:
        return self.skeleton.n


def vecchia_approx(skeleton: OrderedApprox, model: CovarianceModel) -> VecchiaApprox:
    return VecchiaApprox(skeleton, model, build_factor(skeleton, model))


def loglik(approx: VecchiaApprox, y: np.ndarray) -> float:
    """log N(y; 0, Khat) via the factor; y in original item indexing."""
    y = np.asarray(y, dtype=float)
    if y.shape[0] != approx.n:
        raise DimensionMismatch(f"expected y of length {approx.n}")
    uty = approx.factor.apply(y[approx.skeleton.order], transpose=True)
    return float(
        np.sum(np.log(approx.factor.diag)) - 0.5 * approx.n * _LOG_2PI - 0.5 * uty @ uty
    )


def loglik_conditional_sum(skeleton: OrderedApprox, model: CovarianceModel, y: np.ndarray) -> float:
    """Conditional-sum form of the Vecchia loglikelihood (test oracle);
    y in original item indexing."""
    y = np.asarray(y, dtype=float)

    def dense_logpdf(pos):
        if len(pos) == 0:
            return 0.0
        orig = skeleton.order[pos]
        k = model.eval_matrix(orig, orig)
        low = cholesky(k)
        alpha = solve_triangular(low, y[orig])
        return -0.5 * (len(pos) * _LOG_2PI + logdet_from_cholesky(low) + alpha @ alpha)

    total = 0.0
    for i in range(skeleton.n):
        c = skeleton.neighbors[i]
        ctil = np.concatenate(([i], c))
        total += dense_logpdf(ctil) - dense_logpdf(c)
    return float(total)


def exact_loglik(k: np.ndarray, y: np.ndarray) -> float:
    """Dense Gaussian log-density log N(y; 0, K)."""
    low = cholesky(k)
    alpha = solve_triangular(low, y)
    return float(-0.5 * (len(y) * _LOG_2PI + logdet_from_cholesky(low) + alpha @ alpha))


def kl_divergence(approx: VecchiaApprox, exact_model: CovarianceModel) -> float:
    """KL(exact || approx) via the conditional-variance-ratio identity.

    Requires that the approximation was built from ``exact_model``; dense
    O(n^3) work, guarded to n <= 5000.
    """
    n = approx.n
    _check_dense_guard(n)
    order = approx.skeleton.order
    k = exact_model.eval_matrix(order, order)
    low = cholesky(k)
    var_exact = np.diag(low) ** 2
    var_approx = 1.0 / approx.factor.diag ** 2
    return float(0.5 * np.sum(np.log(var_approx) - np.log(var_exact)))


def gaussian_kl(k_true: np.ndarray, approx: VecchiaApprox) -> float:
    """Generic KL( N(0, K_true) || N(0, Khat) ) with Khat^-1 = U U^T.

    K_true is given in original item indexing.  Used both as the oracle for
    the ratio identity and for KL at estimated parameters.
    """
    n = approx.n
    _check_dense_guard(n)
    order = approx.skeleton.order
    k_ord = np.asarray(k_true, dtype=float)[np.ix_(order, order)]
    u = approx.factor.to_csc()
    ut = u.T.tocsr()
    trace = float(ut.multiply(ut @ k_ord).sum())
    logdet_khat = -2.0 * float(np.sum(np.log(approx.factor.diag)))
    logdet_k = logdet_from_cholesky(cholesky(k_true))
    return float(0.5 * (trace - n + logdet_khat - logdet_k))


# ---------------------------------------------------------------------------
# prediction


@dataclass(frozen=True)
class PredictiveDistribution:
    """Joint Gaussian posterior over the prediction items.

    ``mean`` follows the restricted prediction ordering; ``factor`` F is
    triangular with positive diagonal and F F^T equal to the posterior
    precision; ``pred_indices[k]`` maps restricted position k back to the
    caller's prediction indexing (0..n*-1).
    """

    mean: np.ndarray
    factor: np.ndarray
    pred_indices: np.ndarray

    @property
    def n(self) -> int:
        return len(self.mean)

    def _to_restricted(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape[0] != self.n:
            raise DimensionMismatch(f"expected vector of length {self.n}")
        return y[self.pred_indices]

    def mean_original(self) -> np.ndarray:
        out = np.empty(self.n)
        out[self.pred_indices] = self.mean
        return out

    def covariance_original(self) -> np.ndarray:
        prec = self.factor @ self.factor.T
        cov = np.linalg.inv(prec)
        inv = np.empty(self.n, dtype=np.int64)
        inv[self.pred_indices] = np.arange(self.n)
        return cov[np.ix_(inv, inv)]

    def logscore(self, y_test: np.ndarray) -> float:
        """Joint negative log predictive density of y_test (caller indexing)."""
        d = self._to_restricted(y_test) - self.mean
        ftd = self.factor.T @ d
        logdet_prec = 2.0 * float(np.sum(np.log(np.diag(self.factor))))
        return float(0.5 * (self.n * _LOG_2PI - logdet_prec + ftd @ ftd))

    def marginal_logscore_sum(self, y_test: np.ndarray) -> float:
        """Sum over items of the marginal negative log densities."""
        d = self.mean_original() - np.asarray(y_test, dtype=float)
        var = np.diag(self.covariance_original())
        return float(0.5 * np.sum(_LOG_2PI + np.log(var) + d * d / var))


def logscore(pred: PredictiveDistribution, y_test: np.ndarray) -> float:
    return pred.logscore(y_test)


def _joint_blocks(skeleton_obs: OrderedApprox, pred_order, jn):
    """Joint position map and per-column blocks for (observed, prediction)."""
    n = skeleton_obs.n
    inv_obs = np.empty(n, dtype=np.int64)
    inv_obs[skeleton_obs.order] = np.arange(n)
    orig_of_pos = np.concatenate([skeleton_obs.order, pred_order])
    blocks = skeleton_obs.blocks()
    for i, (c_o, c_u) in enumerate(jn):
        cond = np.sort(np.concatenate([inv_obs[c_o], n + c_u]))
        blocks.append(np.concatenate(([n + i], cond)))
    return orig_of_pos, blocks


def predict(
    model_all: CovarianceModel,
    skeleton_obs: OrderedApprox,
    m: int,
    y_obs: np.ndarray,
    metric: Metric | None = None,
) -> PredictiveDistribution:
    """Posterior predictive for items n..n+n*-1 given observed items 0..n-1.

    ``y_obs`` is in original observed-item indexing.  Predictions
    follow the restricted maximin ordering and condition on the m nearest
    items among all observed and previously ordered predictions.
    """
    n = skeleton_obs.n
    n_pred = model_all.n - n
    if metric is None:
        metric = CorrelationMetric(model_all)
    pred_order = geometry.restricted_order(metric, n, n_pred)
    jn = geometry.joint_neighbors(metric, pred_order, m, n)
    orig_of_pos, blocks = _joint_blocks(skeleton_obs, pred_order, jn)
    u = _build_columns(orig_of_pos, blocks, model_all)
    dense_u = u.densify()
    w = dense_u[n:, n:]
    v = dense_u[:n, n:]
    y_ord = np.asarray(y_obs, dtype=float)[skeleton_obs.order]
    mean = -solve_triangular(w.T, v.T @ y_ord, side="lower")
    # w.T is lower triangular because prediction columns only reference
    # previously ordered prediction rows
    return PredictiveDistribution(mean=mean, factor=w, pred_indices=pred_order - n)


def exact_krig(model_all: CovarianceModel, n_obs: int, y_obs: np.ndarray, noise=None):
    """Dense GP conditional (mean, covariance) oracle; y_obs in item indexing."""
    n_all = model_all.n
    _check_dense_guard(n_all)
    idx_o = np.arange(n_obs)
    idx_p = np.arange(n_obs, n_all)
    koo = model_all.eval_matrix(idx_o, idx_o)
    if noise is not None:
        koo = koo + np.diag(np.broadcast_to(noise, (n_obs,)))
    kpo = model_all.eval_matrix(idx_p, idx_o)
    kpp = model_all.eval_matrix(idx_p, idx_p)
    low = cholesky(koo)
    a = solve_triangular(low, np.asarray(y_obs, dtype=float))
    b = solve_triangular(low, kpo.T)
    mean = b.T @ a
    cov = kpp - b.T @ b
    return mean, cov


# ---------------------------------------------------------------------------
# noise paths


def loglik_noisy_naive(
    skeleton: OrderedApprox, model: CovarianceModel, noise: np.ndarray, z: np.ndarray
) -> float:
    """Vecchia loglikelihood of noisy data under the K + D covariance.

    The skeleton is expected to have been built with the correlation metric
    of the noisy covariance (the with_noise-wrapped model).  ``noise`` and
    ``z`` are in original item indexing.
    """
    noisy = with_noise(model, noise)
    return loglik(vecchia_approx(skeleton, noisy), z)


@njit(cache=True)
def _ic_kernel(lam, indptr, indices, boost):
    """Up-looking incomplete Cholesky restricted to a fixed lower pattern.

    Entries outside the pattern are dropped (no fill-in).  On a nonpositive
    pivot the diagonal is boosted by up to 3 increments of ``boost`` times
    the diagonal entry; returns (L, failed_row) with failed_row = -1 on
    success.
    """
    n = lam.shape[0]
    low = np.zeros((n, n))
    for i in range(n):
        start, end = indptr[i], indptr[i + 1]
        for p in range(start, end - 1):  # diagonal is last in each row
            j = indices[p]
            s = lam[i, j]
            for q in range(start, p):
                k = indices[q]
                s -= low[i, k] * low[j, k]
            low[i, j] = s / low[j, j]
        s = lam[i, i]
        for q in range(start, end - 1):
            k = indices[q]
            s -= low[i, k] * low[i, k]
        if s <= 0.0:
            bump = boost * lam[i, i]
            attempts = 0
            while s <= 0.0 and attempts < 3:
                s += bump
                attempts += 1
            if s <= 0.0:
                return low, i
        low[i, i] = np.sqrt(s)
    return low, -1


def _lower_pattern(struct: scipy.sparse.spmatrix):
    """CSR (indptr, indices) of the lower-triangular pattern, diagonal last."""
    coo = scipy.sparse.tril(struct).tocsr()
    coo.sort_indices()
    return coo.indptr.astype(np.int64), coo.indices.astype(np.int64)


def ic_cholesky(lam: np.ndarray, indptr: np.ndarray, indices: np.ndarray) -> np.ndarray:
    low, failed = _ic_kernel(np.ascontiguousarray(lam), indptr, indices, 1e-10)
    if failed >= 0:
        raise NotPositiveDefinite(f"incomplete Cholesky pivot failure at row {failed}")
    return low


def _ic_solver(prec: scipy.sparse.spmatrix, dinv: np.ndarray):
    """Pattern-restricted IC solver for Lambda = prec + diag(dinv).

    Elimination runs in reverse (fine-to-coarse) position order, where the
    exact Cholesky factor of the posterior precision decays fastest off the
    pattern; the factor itself would be far less accurate eliminated
    coarse-to-fine.  Returns (solve, logdet) with solve applying an
    approximate Lambda^-1 to a vector or matrix.
    """
    n = prec.shape[0]
    rev = np.arange(n - 1, -1, -1)
    struct_r = prec.tocsr()[rev][:, rev]
    lam_r = struct_r.toarray() + np.diag(dinv[rev])
    indptr, indices = _lower_pattern(struct_r)
    low = ic_cholesky(lam_r, indptr, indices)
    logdet = 2.0 * float(np.sum(np.log(np.diag(low))))

    def solve(b: np.ndarray) -> np.ndarray:
        half = solve_triangular(low, b[rev])
        return solve_triangular(low.T, half, side="upper")[rev]

    return solve, logdet


def loglik_noisy_ic(approx: VecchiaApprox, noise: np.ndarray, z: np.ndarray) -> float:
    """log N(z; 0, Khat + D) via the latent-posterior identity with the
    posterior precision factored by pattern-restricted incomplete Cholesky.

    ``approx`` is the Vecchia approximation of the latent (noise-free)
    covariance; z and noise are in original item indexing.
    """
    n = approx.n
    _check_dense_guard(n)
    order = approx.skeleton.order
    noise = np.broadcast_to(np.asarray(noise, dtype=float), (n,))[order]
    if np.any(noise <= 0.0):
        raise ZeroNoise("IC path requires strictly positive noise; use the naive path")
    z = np.asarray(z, dtype=float)[order]
    u = approx.factor.to_csc()
    solve, logdet_lam = _ic_solver(u @ u.T, 1.0 / noise)
    dz = z / noise
    logdet_uut = 2.0 * float(np.sum(np.log(approx.factor.diag)))
    quad = z @ dz - dz @ solve(dz)
    logdet = float(np.sum(np.log(noise))) - logdet_uut + logdet_lam
    return float(-0.5 * (logdet + quad + n * _LOG_2PI))


def predict_noisy(
    model_all: CovarianceModel,
    skeleton_obs: OrderedApprox,
    m: int,
    z_obs: np.ndarray,
    noise: np.ndarray,
    metric: Metric | None = None,
) -> PredictiveDistribution:
    """Posterior of the latent prediction items given noisy observations.

    Builds the joint latent factor as in ``predict``, adds the observation
    precision on the observed diagonal, and factors the resulting posterior
    precision by pattern-restricted incomplete Cholesky.  ``z_obs`` and
    ``noise`` are in original observed-item indexing.
    """
    n = skeleton_obs.n
    n_pred = model_all.n - n
    _check_dense_guard(n + n_pred)
    noise = np.broadcast_to(np.asarray(noise, dtype=float), (n,))[skeleton_obs.order]
    if np.any(noise <= 0.0):
        raise ZeroNoise("predict_noisy requires strictly positive noise variances")
    if metric is None:
        metric = CorrelationMetric(model_all)
    pred_order = geometry.restricted_order(metric, n, n_pred)
    jn = geometry.joint_neighbors(metric, pred_order, m, n)
    orig_of_pos, blocks = _joint_blocks(skeleton_obs, pred_order, jn)
    u = _build_columns(orig_of_pos, blocks, model_all)
    dinv = np.concatenate([1.0 / noise, np.zeros(n_pred)])
    uc = u.to_csc()
    solve, _ = _ic_solver(uc @ uc.T, dinv)
    z_ord = np.asarray(z_obs, dtype=float)[skeleton_obs.order]
    rhs = np.concatenate([z_ord / noise, np.zeros(n_pred)])
    mu_joint = solve(rhs)
    ee = np.zeros((n + n_pred, n_pred))
    ee[n:, :] = np.eye(n_pred)
    cov = solve(ee)[n:, :]
    cov = 0.5 * (cov + cov.T)
    prec = np.linalg.inv(cov)
    factor = cholesky(prec)
    return PredictiveDistribution(
        mean=mu_joint[n:], factor=factor, pred_indices=pred_order - n
    )
