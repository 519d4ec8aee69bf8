import json
import math
from fractions import Fraction

import numpy as np
import pytest
from gmpy2 import comb, mpz
from hypothesis import given, settings
from hypothesis import strategies as st

from equitest.avt import (
    AsymmetricVariationTest,
    AvtConfig,
    asym_statistic,
    auto_threshold_grid,
    binomial_tail,
    effective_tail,
    run_avt,
)
from equitest.core import (
    Dataset,
    GeneratorDistribution,
    NoiseModel,
    OutputNorm,
    VariationBound,
    rotation_action,
    rotation_star_action,
)
from equitest.sampling import SampledPair, derive_seed
from equitest.synth import InputLaw, NoiseSpec, SyntheticTarget, generate_dataset

TINY = np.finfo(float).tiny


def exact_tail(m, N, p):
    """Exact upper tail in integer arithmetic; a float ``p`` is a dyadic rational."""
    frac = Fraction(p)
    a, b = mpz(frac.numerator), mpz(frac.denominator)
    c = b - a
    num = mpz(0)
    ak = a ** N
    cpow = [mpz(1)]
    for _ in range(m - N):
        cpow.append(cpow[-1] * c)
    for k in range(N, m + 1):
        num += comb(m, k) * ak * cpow[m - k]
        ak *= a
    return Fraction(int(num), int(b ** m))


def close_to_oracle(value, oracle: Fraction) -> bool:
    target = float(oracle)
    if target >= TINY:
        return abs(value - target) <= 1e-10 * target
    return abs(value - target) <= TINY


class TestBinomialTail:
    def test_zero_count(self):
        assert binomial_tail(50, 0, 0.3) == 1.0
        assert binomial_tail(50, 0, 0.0) == 1.0

    def test_zero_probability(self):
        assert binomial_tail(50, 1, 0.0) == 0.0

    def test_all_heads(self):
        assert binomial_tail(3, 3, 0.5) == 0.125

    def test_large_case(self):
        assert close_to_oracle(binomial_tail(1000, 200, 0.1467),
                               exact_tail(1000, 200, 0.1467))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            binomial_tail(5, 6, 0.5)
        with pytest.raises(ValueError):
            binomial_tail(5, 2, 1.5)

    def test_random_triples_against_exact_sum(self):
        rng = np.random.default_rng(2024)
        bad = []
        for _ in range(1000):
            m = int(rng.integers(1, 1001))
            N = int(rng.integers(0, m + 1))
            p = float(rng.random())
            if not close_to_oracle(binomial_tail(m, N, p), exact_tail(m, N, p)):
                bad.append((m, N, p))
        assert not bad, bad[:5]

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 300), st.data())
    def test_monotone_in_N_and_p(self, m, data):
        N = data.draw(st.integers(0, m - 1))
        p = data.draw(st.floats(0.01, 0.99))
        q = data.draw(st.floats(p, 0.99))
        assert binomial_tail(m, N + 1, p) <= binomial_tail(m, N, p)
        assert binomial_tail(m, N, p) <= binomial_tail(m, N, q) * (1 + 1e-12)


class TestStatistic:
    def test_worked_example(self):
        ds = Dataset(np.array([[2.0, 0.0], [0.0, 2.0]]), np.exp(-np.array([2.0, 0.0])))
        act = rotation_action(2)
        pair = SampledPair("R", 0, 1, act.apply_input("R", ds.points[0]), 0.0)
        D = asym_statistic(pair, ds, act, VariationBound.known(1.0))
        assert math.isclose(D, 1 - math.exp(-2), rel_tol=1e-15)
        assert abs(D - 0.8647) < 1e-4

    def test_equal_responses_give_minus_V(self):
        ds = Dataset(np.array([[0.0, 0.0], [3.0, 4.0]]), [1.0, 1.0])
        act = rotation_action(2)
        pair = SampledPair("e", 0, 1, ds.points[0], 5.0)
        assert asym_statistic(pair, ds, act, VariationBound.known(2.0)) == -10.0

    def test_noiseless_invariant_function_never_exceeds(self):
        ds = generate_dataset(SyntheticTarget("f_2"), InputLaw("gaussian"), NoiseSpec("none"),
                              200, 0)
        cfg = AvtConfig(m=200, noise=NoiseModel.noiseless(), bound=VariationBound.known(1.0))
        report = run_avt(ds, rotation_star_action(2), cfg)
        assert np.all(report.statistics <= 1e-12)
        assert report.p_value == 1.0


class TestThresholds:
    def test_gaussian_grid(self):
        noise = NoiseModel.gaussian(1.0)
        ts = auto_threshold_grid(noise, 9)
        assert all(b > a for a, b in zip(ts, ts[1:]))
        targets = [i / 10 for i in range(9, 0, -1)]
        for t, target in zip(ts, targets):
            assert abs(noise.tail(t) - target) < 1e-6
        # dense-scan oracle: first grid point whose tail has dropped to the target
        grid = np.linspace(1e-3, 5, 100001)
        tails = np.array([noise.tail(t) for t in grid])
        step = grid[1] - grid[0]
        for t, target in zip(ts, targets):
            assert abs(grid[np.argmax(tails <= target)] - t) <= step

    def test_single_threshold(self):
        (t,) = auto_threshold_grid(NoiseModel.gaussian(0.5), 1)
        assert abs(NoiseModel.gaussian(0.5).tail(t) - 0.5) < 1e-6

    def test_noiseless_returns_user_threshold(self):
        assert auto_threshold_grid(NoiseModel.noiseless(), 5, t=0.3) == [0.3]

    def test_table_grid(self):
        noise = NoiseModel.from_table([(0.1, 0.8), (0.2, 0.5), (0.4, 0.1)])
        assert auto_threshold_grid(noise, 1) == [0.2]

    def test_thresholds_must_increase(self):
        with pytest.raises(ValueError):
            AvtConfig(m=5, noise=NoiseModel.gaussian(1), bound=VariationBound.known(1),
                      thresholds=(0.2, 0.1))
        with pytest.raises(ValueError):
            AvtConfig(m=5, noise=NoiseModel.gaussian(1), bound=VariationBound.known(1),
                      thresholds=(0.0,))

    def test_union_bound_for_vector_outputs(self):
        noise = NoiseModel.gaussian(0.1)
        assert effective_tail(noise, 0.3, 3, OutputNorm("max")) == pytest.approx(
            min(1.0, 3 * noise.tail(0.3)))
        assert effective_tail(noise, 0.3, 4, OutputNorm("euclidean")) == pytest.approx(
            min(1.0, 4 * noise.tail(0.15)))


def _f2(n, seed, law="gaussian"):
    return generate_dataset(SyntheticTarget("f_2"), InputLaw(law), NoiseSpec("gaussian", 0.05),
                            n, seed)


class TestRunAvt:
    def test_order_bound_rejected(self):
        cfg = AvtConfig(m=5, noise=NoiseModel.gaussian(1), bound=VariationBound.order())
        with pytest.raises(ValueError, match="permutation variant"):
            run_avt(_f2(20, 0), rotation_action(2), cfg)

    def test_counts_and_report(self):
        cfg = AvtConfig(m=150, noise=NoiseModel.gaussian(0.05), bound=VariationBound.known(1),
                        thresholds=(0.05, 0.1, 0.2), seed=4, keep_samples=True)
        rep = run_avt(_f2(150, 1), rotation_action(2), cfg)
        counts = rep.counts
        assert all(b <= a for a, b in zip(counts, counts[1:]))
        for row in rep.per_threshold:
            assert row.N_t == int(np.sum(rep.statistics >= row.t))
            assert 0 <= row.p_value <= 1
        assert rep.p_value == min(r.p_value for r in rep.per_threshold)
        blob = json.loads(rep.to_json(include_samples=True))
        assert len(blob["samples"]["D"]) == 150
        assert blob["metadata"]["self_match"] == "excluded_when_zero_distance"

    def test_large_threshold_gives_p_one(self):
        cfg = AvtConfig(m=50, noise=NoiseModel.gaussian(0.05), bound=VariationBound.known(1),
                        thresholds=(10.0,))
        assert run_avt(_f2(50, 2), rotation_action(2), cfg).p_value == 1.0

    def test_minimum_is_order_free(self):
        ds = _f2(120, 5)
        act = rotation_action(2)
        ts = (0.05, 0.1, 0.15)
        joint = run_avt(ds, act, AvtConfig(m=120, noise=NoiseModel.gaussian(0.05),
                                           bound=VariationBound.known(1), thresholds=ts, seed=9))
        singles = [run_avt(ds, act, AvtConfig(m=120, noise=NoiseModel.gaussian(0.05),
                                              bound=VariationBound.known(1), thresholds=(t,),
                                              seed=9)).p_value for t in ts[::-1]]
        assert joint.p_value == min(singles)

    def test_deterministic_json(self):
        cfg = AvtConfig(m=80, noise=NoiseModel.gaussian(0.05), bound=VariationBound.known(1),
                        seed=12)
        a = run_avt(_f2(80, 3), rotation_action(2), cfg).to_json(include_samples=True)
        b = run_avt(_f2(80, 3), rotation_action(2), cfg).to_json(include_samples=True)
        assert a == b

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.05, 3.0), st.floats(1.0, 4.0))
    def test_monotone_in_L(self, seed, L, factor):
        ds = _f2(60, seed)
        act = rotation_action(2)

        def p(LL):
            cfg = AvtConfig(m=60, noise=NoiseModel.gaussian(0.05),
                            bound=VariationBound.known(LL), thresholds=(0.1,), seed=seed)
            return run_avt(ds, act, cfg).p_value

        assert p(L) <= p(L * factor)

    def test_size_under_null(self):
        R = 500
        rejections = 0
        for r in range(R):
            ds = _f2(100, derive_seed(77, r))
            cfg = AvtConfig(m=100, noise=NoiseModel.gaussian(0.05),
                            bound=VariationBound.known(1), thresholds=(0.1,), seed=r)
            rejections += run_avt(ds, rotation_star_action(2), cfg).p_value <= 0.05
        assert rejections / R <= 0.07

    def test_multioutput(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(80, 2))
        Y = np.stack([np.exp(-np.abs(X[:, 0])), np.exp(-np.abs(X[:, 1]))], axis=1)
        cfg = AvtConfig(m=80, noise=NoiseModel.gaussian(0.05), bound=VariationBound.known(1))
        rep = run_avt(Dataset(X, Y), rotation_star_action(2, dim_y=2), cfg)
        assert "union bound" in rep.metadata["noise_combination"]


class TestEstimator:
    def test_fit_and_reject(self):
        ds = _f2(300, 11, "ball")
        est = AsymmetricVariationTest(action=rotation_action(2), m=300, L=1.0, sigma=0.05,
                                      thresholds=(0.1,), random_state=0)
        est.fit(ds.points, ds.responses[:, 0])
        assert est.reject(0.05)
        assert est.statistics_.shape == (300,)
        assert est.get_params()["m"] == 300

    def test_requires_action(self):
        with pytest.raises(ValueError):
            AsymmetricVariationTest().fit(np.zeros((3, 2)), np.zeros(3))


class TestConcentrationFacts:
    def test_shifted_noise_exceeds_more_often(self):
        rng = np.random.default_rng(5)
        Y = rng.normal(size=1_000_000)
        for t in (0.5, 1.0, 2.0):
            assert np.mean(np.abs(0.5 + Y) >= t) > np.mean(np.abs(Y) >= t)

    def test_binomial_cdf_at_larger_binomial_tends_to_one(self):
        from scipy import stats
        rng = np.random.default_rng(6)
        n = 2000
        Y = rng.binomial(n, 0.3, size=20000)
        assert np.mean(stats.binom.cdf(Y, n, 0.1)) > 0.99
