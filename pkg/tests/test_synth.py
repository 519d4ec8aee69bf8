import math

import numpy as np
import pytest

from equitest.core import Dataset, rotation_action, rotation_star_action
from equitest.synth import (
    Fig2Config,
    InputLaw,
    KernelRegressor,
    NoiseSpec,
    SyntheticTarget,
    generate_dataset,
    nadaraya_watson_predict,
    run_fig2_experiment,
)


def _orbit(act, X):
    return [act.apply_input(g, X) for g in act.elements]


class TestTargets:
    def test_f2_star_invariant(self):
        f = SyntheticTarget("f_2")
        X = np.random.default_rng(0).normal(size=(200, 2))
        for Y in _orbit(rotation_star_action(2), X):
            assert np.array_equal(f(Y), f(X))

    def test_f2_not_dot_invariant(self):
        f = SyntheticTarget("f_2")
        x = np.array([[2.0, 0.0]])
        assert f(x)[0] != f(rotation_action(2).apply_input("R", x))[0]

    @pytest.mark.parametrize("dim", [2, 3, 5])
    def test_f3_invariant_under_both(self, dim):
        f = SyntheticTarget("f_3", dim)
        X = np.random.default_rng(dim).normal(size=(100, dim))
        for act in (rotation_action(dim), rotation_star_action(dim)):
            for Y in _orbit(act, X):
                assert np.allclose(f(Y), f(X), rtol=1e-15)

    def test_f4_only_star_invariant(self):
        f = SyntheticTarget("f_4", 3)
        X = np.random.default_rng(1).normal(size=(100, 3))
        for Y in _orbit(rotation_star_action(3), X):
            assert np.array_equal(f(Y), f(X))
        assert not np.allclose(f(rotation_action(3).apply_input("R", X)), f(X))

    def test_f_sim(self):
        assert SyntheticTarget("f_sim")([[3.0, 4.0]])[0] == math.exp(-5)

    def test_bad_names(self):
        with pytest.raises(ValueError):
            SyntheticTarget("f_9")
        with pytest.raises(ValueError):
            SyntheticTarget("f_2", 3)
        with pytest.raises(ValueError):
            SyntheticTarget("f_2")([[1.0, 2.0, 3.0]])


class TestGeneration:
    def test_noiseless_on_axis(self):
        ds = generate_dataset(SyntheticTarget("f_2"), InputLaw(), NoiseSpec("none"), 50, 0)
        X = ds.points.copy()
        X[:, 0] = 0
        assert np.all(SyntheticTarget("f_2")(X) == 1.0)
        assert np.array_equal(ds.responses[:, 0], np.exp(-np.abs(ds.points[:, 0])))

    def test_noise_mean_clt(self):
        n = 10000
        ds = generate_dataset(SyntheticTarget("f_2"), InputLaw(), NoiseSpec("gaussian", 0.05),
                              n, 3)
        resid = ds.responses[:, 0] - SyntheticTarget("f_2")(ds.points)
        assert abs(resid.mean()) < 4 * 0.05 / math.sqrt(n)
        assert abs(resid.std() - 0.05) < 0.002

    def test_gaussian_law_scale(self):
        X = InputLaw("gaussian").sample(np.random.default_rng(0), 20000, 2)
        assert np.allclose(X.std(axis=0), 2.0, atol=0.05)

    def test_ball_law(self):
        X = InputLaw("ball").sample(np.random.default_rng(0), 20000, 2)
        r = np.linalg.norm(X, axis=1)
        assert r.max() <= 4.0
        # uniform on the disc: P(r < 2) = 1/4
        assert abs(np.mean(r < 2) - 0.25) < 0.015

    def test_deterministic(self):
        args = (SyntheticTarget("f_3", 3), InputLaw("ball"), NoiseSpec("uniform", 0.1), 30, 8)
        a, b = generate_dataset(*args), generate_dataset(*args)
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(a.responses, b.responses)

    def test_uniform_noise_bounded(self):
        ds = generate_dataset(SyntheticTarget("f_2"), InputLaw(), NoiseSpec("uniform", 0.1),
                              500, 1)
        resid = ds.responses[:, 0] - SyntheticTarget("f_2")(ds.points)
        assert np.all(np.abs(resid) < 0.1)

    def test_too_small(self):
        with pytest.raises(ValueError):
            generate_dataset(SyntheticTarget("f_2"), InputLaw(), NoiseSpec(), 1, 0)


class TestKernelRegressor:
    def test_single_point_in_window(self):
        ds = Dataset(np.array([[0.0, 0.0], [5.0, 5.0]]), [7.0, 1.0])
        assert nadaraya_watson_predict(KernelRegressor(1.0), ds, [0.1, 0.1]) == 7.0

    def test_empty_window(self):
        ds = Dataset(np.array([[0.0, 0.0], [5.0, 5.0]]), [7.0, 1.0])
        assert nadaraya_watson_predict(KernelRegressor(0.5), ds, [2.5, 2.5]) is None
        est = KernelRegressor(0.5).fit(ds.points, ds.responses[:, 0])
        assert np.isnan(est.predict([[2.5, 2.5]])[0])

    def test_matches_weighted_mean_oracle(self):
        rng = np.random.default_rng(4)
        X = rng.uniform(-4, 4, size=(300, 2))
        y = rng.normal(size=300)
        Q = rng.uniform(-4, 4, size=(100, 2))
        act = rotation_action(2)
        for action in (None, act):
            est = KernelRegressor(1.2, action=action).fit(X, y)
            pred = est.predict(Q)
            elements = [None] if action is None else list(act.elements)
            for k, q in enumerate(Q):
                w = np.zeros(300)
                for g in elements:
                    qq = q if g is None else act.apply_input(g, q)
                    w += [float(np.linalg.norm(qq - x) < 1.2) for x in X]
                if w.sum() == 0:
                    assert np.isnan(pred[k])
                else:
                    assert math.isclose(pred[k], float(w @ y / w.sum()), rel_tol=1e-12,
                                        abs_tol=1e-12)

    def test_symmetrised_is_invariant(self):
        rng = np.random.default_rng(5)
        X = rng.uniform(-4, 4, size=(200, 2))
        y = rng.normal(size=200)
        act = rotation_action(2)
        est = KernelRegressor(1.0, action=act).fit(X, y)
        Q = rng.uniform(-3, 3, size=(50, 2))
        base = est.predict(Q)
        for g in act.elements:
            assert np.allclose(est.predict(act.apply_input(g, Q)), base, equal_nan=True)

    def test_bad_bandwidth(self):
        with pytest.raises(ValueError):
            KernelRegressor(0.0).fit(np.zeros((3, 2)), np.zeros(3))


@pytest.mark.filterwarnings("ignore:.*empty kernel windows")
def test_small_fig2_run():
    cfg = Fig2Config(n_grid=(50, 100), replicates=3, bandwidth_const=1.7)
    res = run_fig2_experiment(cfg)
    assert len(res.rows) == 2 * 2 * 2 * 3
    summary = res.summary()
    assert {(s["target"], s["n"]) for s in summary} == {
        ("f_sim", 50), ("f_sim", 100), ("f_2", 50), ("f_2", 100)}
    again = run_fig2_experiment(cfg)
    assert [r["mse"] for r in res.rows] == [r["mse"] for r in again.rows]


def test_bandwidth_calibration_picks_grid_value():
    from equitest.synth import calibrate_bandwidth
    cfg = Fig2Config(calibration_replicates=2, calibration_grid=(0.5, 1.7, 3.0))
    assert calibrate_bandwidth(cfg) in (0.5, 1.7, 3.0)
