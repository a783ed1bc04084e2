import numpy as np
import pytest

import corrvecchia as cv
from corrvecchia.errors import EmptyTestSet, InvalidShape
from corrvecchia.scenarios import concat_inputs, subset_inputs


def test_scenario_rejects_unknown_name():
    with pytest.raises(InvalidShape):
        cv.Scenario("no-such-scenario")


def test_random_2d_shape_and_range():
    inp = cv.generate_inputs(cv.Scenario("random-2d", seed=1, params={"n": 123}))
    assert inp.coords.shape == (123, 2)
    assert inp.times is None and inp.components is None
    assert np.all((inp.coords >= 0) & (inp.coords <= 1))


def test_generation_is_seed_deterministic():
    a = cv.generate_inputs(cv.Scenario("random-2d", seed=5, params={"n": 50}))
    b = cv.generate_inputs(cv.Scenario("random-2d", seed=5, params={"n": 50}))
    c = cv.generate_inputs(cv.Scenario("random-2d", seed=6, params={"n": 50}))
    assert np.array_equal(a.coords, b.coords)
    assert not np.array_equal(a.coords, c.coords)


def test_station_layout():
    inp = cv.generate_inputs(cv.Scenario("station", seed=2,
                                         params={"stations": 10, "times": 9}))
    assert inp.n == 90
    # each station repeats its coordinates across all 9 times
    assert np.allclose(inp.coords[:9], inp.coords[0])
    assert np.allclose(inp.times[:9], np.arange(1, 10) / 9)


def test_gridded_layout():
    inp = cv.generate_inputs(cv.Scenario("gridded", seed=0,
                                         params={"side": 10, "times": 9}))
    assert inp.n == 900
    cells = np.unique(inp.coords[:, 0])
    assert np.allclose(cells, (np.arange(10) + 0.5) / 10)


def test_satellite_layout():
    inp = cv.generate_inputs(cv.Scenario("satellite", seed=0))
    assert inp.n == 900
    assert np.all((inp.coords >= 0) & (inp.coords <= 1))
    # global time steps are consecutive and regular
    assert np.allclose(np.sort(inp.times), (np.arange(900) + 0.5) / 900)
    # every 0.1 x 0.1 cell of the unit square is visited
    counts, _, _ = np.histogram2d(inp.coords[:, 0], inp.coords[:, 1],
                                  bins=[10, 10], range=[[0, 1], [0, 1]])
    assert np.all(counts > 0)


def test_multivariate_alignment():
    mis = cv.generate_inputs(cv.Scenario("multivariate-misaligned", seed=1,
                                         params={"components": 2, "n_per_component": 30}))
    ali = cv.generate_inputs(cv.Scenario("multivariate-aligned", seed=1,
                                         params={"components": 2, "n_per_component": 30}))
    assert mis.n == ali.n == 60
    assert np.array_equal(ali.coords[:30], ali.coords[30:])
    assert not np.array_equal(mis.coords[:30], mis.coords[30:])
    assert np.array_equal(np.unique(mis.components), [1, 2])


def test_tree_paths():
    inp = cv.generate_inputs(cv.Scenario("tree", params={"depth": 4}))
    assert inp.n == 16
    assert inp.tree_paths.shape == (16, 4)
    assert set(np.unique(inp.tree_paths)) == {1, 2}
    # all leaves distinct
    assert len({tuple(p) for p in inp.tree_paths}) == 16


def test_simulation_reproducible_and_correct_marginals():
    inp = cv.generate_inputs(cv.Scenario("random-2d", seed=3, params={"n": 50}))
    model = cv.make_model("anisotropic", inp, cv.default_params("anisotropic"))
    y1 = cv.simulate_exact(model, 3)
    y2 = cv.simulate_exact(model, 3)
    assert np.array_equal(y1, y2)
    # many replicates: sample variance of each entry near the model variance
    ys = np.stack([cv.simulate_exact(model, s) for s in range(300)])
    assert np.allclose(ys.var(axis=0), 1.0, atol=0.35)


def test_holdout_split_disjoint_exhaustive():
    inp = cv.generate_inputs(cv.Scenario("random-2d", seed=1, params={"n": 80}))
    tr, te = cv.train_test_split(inp, "holdout-random", {"count": 15}, seed=2)
    assert len(te) == 15
    assert len(np.intersect1d(tr, te)) == 0
    assert np.array_equal(np.sort(np.concatenate([tr, te])), np.arange(80))


def test_holdout_split_invalid_count():
    inp = cv.generate_inputs(cv.Scenario("random-2d", seed=1, params={"n": 20}))
    with pytest.raises(EmptyTestSet):
        cv.train_test_split(inp, "holdout-random", {"count": 0}, seed=0)
    with pytest.raises(EmptyTestSet):
        cv.train_test_split(inp, "holdout-random", {"count": 20}, seed=0)


def test_cube_split_selects_neighborhoods():
    inp = cv.generate_inputs(cv.Scenario("station", seed=4,
                                         params={"stations": 60, "times": 9}))
    tr, te = cv.train_test_split(inp, "spacetime-cube",
                                 {"locations": 3, "cell": 0.1, "step": 0.1}, seed=1)
    assert len(te) > 0 and len(tr) > 0
    assert np.array_equal(np.sort(np.concatenate([tr, te])), np.arange(inp.n))


def test_subset_concat_roundtrip():
    inp = cv.generate_inputs(cv.Scenario("random-spacetime", seed=2, params={"n": 40}))
    idx_a, idx_b = np.arange(25), np.arange(25, 40)
    cat = concat_inputs(subset_inputs(inp, idx_a), subset_inputs(inp, idx_b))
    assert np.array_equal(cat.coords, inp.coords)
    assert np.array_equal(cat.times, inp.times)


def test_dense_simulation_guard():
    coords = np.random.default_rng(0).uniform(size=(5100, 2))
    from corrvecchia.covmodels import InputSet
    inp = InputSet(kind="spatial", coords=coords)
    model = cv.make_model("anisotropic", inp, cv.default_params("anisotropic"))
    with pytest.raises(InvalidShape):
        cv.simulate_exact(model, 0)
