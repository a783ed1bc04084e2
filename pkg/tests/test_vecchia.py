import numpy as np
import pytest

import corrvecchia as cv
from corrvecchia.covmodels import with_noise
from corrvecchia.errors import ZeroNoise
from corrvecchia.scenarios import concat_inputs, subset_inputs
from corrvecchia.vecchia import (
    exact_krig,
    ic_cholesky,
    loglik_conditional_sum,
    logscore,
)


def _setup(n=50, seed=0, model_id="anisotropic", scenario="random-2d", sp=None):
    inp = cv.generate_inputs(cv.Scenario(scenario, seed=seed, params=sp or {"n": n}))
    model = cv.make_model(model_id, inp, cv.default_params(model_id, inp))
    return inp, model


def test_factor_exact_at_full_conditioning():
    inp, model = _setup(40, 1)
    skel = cv.build_skeleton("C-MM", "C-NN", inp, model, m=39)
    ap = cv.vecchia_approx(skel, model)
    k = model.eval_matrix(np.arange(40), np.arange(40))
    kord = k[np.ix_(skel.order, skel.order)]
    u = ap.factor.densify()
    assert np.allclose(u @ u.T, np.linalg.inv(kord), atol=1e-10)
    # upper triangular, positive diagonal
    assert np.allclose(np.triu(u), u)
    assert np.all(np.diag(u) > 0)


def test_factor_column_normalization():
    """Each column solves the block system: U_{ctil,i} = B^-1 e1 / sqrt(e1' B^-1 e1)."""
    inp, model = _setup(30, 2)
    skel = cv.build_skeleton("C-MM", "C-NN", inp, model, m=6)
    ap = cv.vecchia_approx(skel, model)
    u = ap.factor.densify()
    for i in (5, 17, 29):
        ctil = np.concatenate(([i], skel.neighbors[i]))
        orig = skel.order[ctil]
        b = model.eval_matrix(orig, orig)
        e1 = np.zeros(len(ctil))
        e1[0] = 1.0
        v = np.linalg.solve(b, e1)
        want = v / np.sqrt(v[0])
        assert np.allclose(u[ctil, i], want)


def test_loglik_forms_agree():
    inp, model = _setup(60, 3)
    y = cv.simulate_exact(model, 3)
    skel = cv.build_skeleton("C-MM", "C-NN", inp, model, m=8)
    ap = cv.vecchia_approx(skel, model)
    assert np.isclose(cv.loglik(ap, y), loglik_conditional_sum(skel, model, y),
                      rtol=0, atol=1e-9)


def test_loglik_exact_at_full_m():
    inp, model = _setup(45, 4)
    y = cv.simulate_exact(model, 4)
    k = model.eval_matrix(np.arange(45), np.arange(45))
    skel = cv.build_skeleton("C-MM", "C-NN", inp, model, m=44)
    ap = cv.vecchia_approx(skel, model)
    assert np.isclose(cv.loglik(ap, y), cv.exact_loglik(k, y), atol=1e-8)


def test_kl_identity_matches_generic_kl():
    inp, model = _setup(50, 5)
    k = model.eval_matrix(np.arange(50), np.arange(50))
    for m in (2, 5, 15):
        skel = cv.build_skeleton("C-MM", "C-NN", inp, model, m=m)
        ap = cv.vecchia_approx(skel, model)
        assert np.isclose(cv.kl_divergence(ap, model), cv.gaussian_kl(k, ap),
                          rtol=0, atol=1e-8)


def test_kl_nonnegative_and_vanishes_at_full_m():
    inp, model = _setup(35, 6)
    skel = cv.build_skeleton("C-MM", "C-NN", inp, model, m=3)
    assert cv.kl_divergence(cv.vecchia_approx(skel, model), model) > 0
    skel = cv.build_skeleton("C-MM", "C-NN", inp, model, m=34)
    assert abs(cv.kl_divergence(cv.vecchia_approx(skel, model), model)) < 1e-10


def test_kl_monotone_in_m_small():
    inp, model = _setup(80, 7)
    kls = []
    for m in (0, 2, 5, 10, 20):
        skel = cv.build_skeleton("C-MM", "C-NN", inp, model, m=m)
        kls.append(cv.kl_divergence(cv.vecchia_approx(skel, model), model))
    assert all(b <= a + 1e-10 for a, b in zip(kls, kls[1:]))


def _prediction_problem(seed, n=60, n_test=12):
    inp, model = _setup(n, seed)
    y = cv.simulate_exact(model, seed)
    te = np.arange(n - n_test, n)
    tr = np.arange(n - n_test)
    inp_all = concat_inputs(subset_inputs(inp, tr), subset_inputs(inp, te))
    params = cv.default_params("anisotropic")
    model_all = cv.make_model("anisotropic", inp_all, params)
    model_obs = cv.make_model("anisotropic", subset_inputs(inp, tr), params)
    return inp, model_obs, model_all, tr, te, y


def test_predict_matches_exact_kriging_at_full_m():
    inp, model_obs, model_all, tr, te, y = _prediction_problem(8)
    skel = cv.build_skeleton("C-MM", "C-NN", subset_inputs(inp, tr), model_obs,
                             m=len(tr) - 1)
    pred = cv.predict(model_all, skel, m=len(tr) + len(te) - 1, y_obs=y[tr])
    mu, cov = exact_krig(model_all, len(tr), y[tr])
    assert np.allclose(pred.mean_original(), mu, atol=1e-10)
    assert np.allclose(pred.covariance_original(), cov, atol=1e-10)


def test_predict_logscore_matches_dense_at_full_m():
    inp, model_obs, model_all, tr, te, y = _prediction_problem(9)
    skel = cv.build_skeleton("C-MM", "C-NN", subset_inputs(inp, tr), model_obs,
                             m=len(tr) - 1)
    pred = cv.predict(model_all, skel, m=len(tr) + len(te) - 1, y_obs=y[tr])
    mu, cov = exact_krig(model_all, len(tr), y[tr])
    d = y[te] - mu
    sign, logdet = np.linalg.slogdet(cov)
    dense_score = 0.5 * (len(te) * np.log(2 * np.pi) + logdet
                         + d @ np.linalg.solve(cov, d))
    assert np.isclose(logscore(pred, y[te]), dense_score, atol=1e-8)


def test_predict_finite_m_reasonable():
    inp, model_obs, model_all, tr, te, y = _prediction_problem(10)
    skel = cv.build_skeleton("C-MM", "C-NN", subset_inputs(inp, tr), model_obs, m=10)
    pred = cv.predict(model_all, skel, m=10, y_obs=y[tr])
    mu, _ = exact_krig(model_all, len(tr), y[tr])
    # approximate mean tracks the exact kriging mean
    assert np.sqrt(np.mean((pred.mean_original() - mu) ** 2)) < 0.2


def test_noisy_naive_loglik_exact_at_full_m():
    inp, model = _setup(40, 11)
    d = 0.4
    y = cv.simulate_exact(model, 11)
    z = y + np.sqrt(d) * np.random.default_rng([11, 4]).standard_normal(40)
    noisy = with_noise(model, d)
    skel = cv.build_skeleton("C-MM", "C-NN", inp, noisy, m=39)
    k = model.eval_matrix(np.arange(40), np.arange(40)) + d * np.eye(40)
    got = cv.loglik_noisy_naive(skel, model, np.full(40, d), z)
    assert np.isclose(got, cv.exact_loglik(k, z), atol=1e-8)


def test_noisy_ic_loglik_exact_at_full_m():
    inp, model = _setup(40, 12)
    d = 0.4
    y = cv.simulate_exact(model, 12)
    z = y + np.sqrt(d) * np.random.default_rng([12, 4]).standard_normal(40)
    skel = cv.build_skeleton("C-MM", "C-NN", inp, model, m=39)
    ap = cv.vecchia_approx(skel, model)
    k = model.eval_matrix(np.arange(40), np.arange(40)) + d * np.eye(40)
    assert np.isclose(cv.loglik_noisy_ic(ap, np.full(40, d), z),
                      cv.exact_loglik(k, z), atol=1e-7)


def test_noisy_ic_close_at_moderate_m():
    inp, model = _setup(100, 13)
    d = 0.4
    y = cv.simulate_exact(model, 13)
    z = y + np.sqrt(d) * np.random.default_rng([13, 4]).standard_normal(100)
    skel = cv.build_skeleton("C-MM", "C-NN", inp, model, m=20)
    ap = cv.vecchia_approx(skel, model)
    k = model.eval_matrix(np.arange(100), np.arange(100)) + d * np.eye(100)
    exact = cv.exact_loglik(k, z)
    assert abs(cv.loglik_noisy_ic(ap, np.full(100, d), z) - exact) / abs(exact) < 5e-3


def test_noisy_ic_rejects_zero_noise():
    inp, model = _setup(20, 14)
    skel = cv.build_skeleton("C-MM", "C-NN", inp, model, m=5)
    ap = cv.vecchia_approx(skel, model)
    with pytest.raises(ZeroNoise):
        cv.loglik_noisy_ic(ap, np.zeros(20), np.zeros(20))


def test_noisy_predict_exact_at_full_m():
    inp, model_obs, model_all, tr, te, y = _prediction_problem(15)
    d = 0.4
    z = y + np.sqrt(d) * np.random.default_rng([15, 4]).standard_normal(len(y))
    noisy_obs = with_noise(model_obs, d)
    skel = cv.build_skeleton("C-MM", "C-NN", subset_inputs(inp, tr), noisy_obs,
                             m=len(tr) - 1)
    pred = cv.predict_noisy(model_all, skel, m=len(tr) + len(te) - 1,
                            z_obs=z[tr], noise=np.full(len(tr), d))
    mu, cov = exact_krig(model_all, len(tr), z[tr], noise=d)
    assert np.allclose(pred.mean_original(), mu, atol=1e-8)
    assert np.allclose(pred.covariance_original(), cov, atol=1e-8)


def test_ic_cholesky_dense_pattern_is_exact():
    rng = np.random.default_rng(16)
    a = rng.standard_normal((12, 12))
    k = a @ a.T + 12 * np.eye(12)
    indptr = np.arange(0, 13 * 12 // 2 + 13, dtype=np.int64)
    # full lower pattern
    import scipy.sparse

    full = scipy.sparse.tril(np.ones((12, 12))).tocsr()
    full.sort_indices()
    low = ic_cholesky(k, full.indptr.astype(np.int64), full.indices.astype(np.int64))
    assert np.allclose(low, np.linalg.cholesky(k))


def test_noise_does_not_change_cmm_cnn_for_constant_variance():
    inp, model = _setup(60, 17)
    skels = []
    for d in (0.0, 0.4, 10.0):
        metric_model = model if d == 0.0 else with_noise(model, d)
        skels.append(cv.build_skeleton("C-MM", "C-NN", inp, metric_model, m=10))
    for other in skels[1:]:
        assert np.array_equal(skels[0].order, other.order)
        assert all(np.array_equal(a, b)
                   for a, b in zip(skels[0].neighbors, other.neighbors))
