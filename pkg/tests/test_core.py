import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from equitest.core import (
    Dataset,
    GeneratorDistribution,
    Metric,
    NoiseModel,
    OutputNorm,
    SignedPermutation,
    VariationBound,
    action_from_spec,
    d4_image_action,
    evaluate_variation,
    load_action_spec,
    noise_tail,
    permutation_action,
    rotation_action,
    rotation_star_action,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


class TestDataset:
    def test_promotes_vectors(self):
        ds = Dataset([[0, 1], [2, 3], [4, 5]], [1.0, 2.0, 3.0])
        assert (ds.n, ds.dim_x, ds.dim_y) == (3, 2, 1)

    def test_rejects_single_point(self):
        with pytest.raises(ValueError):
            Dataset([[0.0, 1.0]], [1.0])

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            Dataset([[0.0], [1.0], [2.0]], [1.0, 2.0])

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            Dataset([[0.0], [np.nan]], [1.0, 2.0])


class TestMetric:
    def test_euclidean(self):
        assert Metric()([0, 0], [3, 4]) == 5.0

    def test_minkowski_one(self):
        assert Metric.minkowski(1)([0, 0], [3, 4]) == 7.0

    def test_minkowski_needs_p_at_least_one(self):
        with pytest.raises(ValueError):
            Metric.minkowski(0.5)

    def test_custom_pairwise_matches_call(self):
        m = Metric.custom(lambda a, b: float(np.max(np.abs(a - b))))
        A = np.array([[0.0, 0.0], [1.0, 2.0]])
        B = np.array([[3.0, 1.0]])
        assert m.pairwise(A, B).tolist() == [[3.0], [2.0]]

    @settings(max_examples=100, deadline=None)
    @given(st.lists(finite, min_size=9, max_size=9))
    def test_metric_axioms(self, v):
        x, y, z = (np.array(v[k:k + 3]) for k in (0, 3, 6))
        for m in (Metric(), Metric.minkowski(1), Metric.minkowski(3)):
            assert m(x, x) == 0
            assert m(x, y) == m(y, x)
            assert m(x, z) <= m(x, y) + m(y, z) + 1e-9 * (1 + m(x, z))


class TestOutputNorm:
    def test_defaults(self):
        assert OutputNorm.default_for(1).kind == "absolute"
        assert OutputNorm.default_for(3).kind == "max"

    @settings(max_examples=100, deadline=None)
    @given(st.lists(finite, min_size=6, max_size=6), finite)
    def test_norm_axioms(self, v, a):
        y, z = np.array(v[:3]), np.array(v[3:])
        for kind in ("euclidean", "max"):
            norm = OutputNorm(kind)
            assert norm(np.zeros(3)) == 0
            assert math.isclose(norm(a * y), abs(a) * norm(y), rel_tol=1e-12, abs_tol=1e-12)
            assert norm(y + z) <= norm(y) + norm(z) + 1e-9


class TestActions:
    def test_rotation_dot(self):
        act = rotation_action(4)
        assert act.apply_input("R", [1, 2, 3, 4]).tolist() == [-2, 1, 3, 4]

    def test_rotation_star(self):
        act = rotation_star_action(4)
        assert act.apply_input("R", [1, 2, 3, 4]).tolist() == [-1, -2, 3, 4]

    def test_identity(self):
        x = np.array([0.3, -1.2, 5.0])
        for act in (rotation_action(3), rotation_star_action(3)):
            assert np.array_equal(act.apply_input("e", x), x)
            assert np.array_equal(act.apply_output("e", [0.7]), [0.7])

    def test_trivial_output(self):
        act = rotation_action(2)
        for g in act.elements:
            assert act.apply_output(g, [0.7]).tolist() == [0.7]

    def test_negating_output_is_involution(self):
        act = rotation_action(2, output="negate")
        y = np.array([0.25])
        assert act.apply_output("R", y).tolist() == [-0.25]
        assert act.apply_output("R", act.apply_output("R", y)).tolist() == [0.25]

    def test_dimension_too_small(self):
        with pytest.raises(ValueError):
            rotation_action(1)

    def test_unknown_element(self):
        with pytest.raises(KeyError):
            rotation_action(2).apply_input("S", [1.0, 2.0])

    def test_wrong_input_dimension(self):
        with pytest.raises(ValueError):
            rotation_action(3).apply_input("R", [1.0, 2.0])

    def test_rotation_order_four(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(50, 5))
        for act in (rotation_action(5), rotation_star_action(5)):
            y = x
            for _ in range(4):
                y = act.apply_input("R", y)
            assert np.array_equal(y, x)

    def test_rotation_powers_compose(self):
        act = rotation_action(2)
        x = np.array([[1.5, -0.5]])
        assert np.array_equal(act.apply_input("R^2", x),
                              act.apply_input("R", act.apply_input("R", x)))
        assert act.compose("R", "R^3") == "e"

    def test_d4_relations_pixel_exact(self):
        act = d4_image_action(28)
        rng = np.random.default_rng(1)
        x = rng.random((5, 784))

        def word(w, v):
            for letter in reversed(w):
                v = act.apply_input(letter, v)
            return v

        assert np.array_equal(word("aaaa", x), x)
        assert np.array_equal(word("bb", x), x)
        # ab = b a^3
        assert np.array_equal(word("ab", x), word("baaa", x))
        for g in act.elements:
            assert np.array_equal(np.sort(act.apply_input(g, x), axis=1), np.sort(x, axis=1))

    def test_d4_output_same(self):
        act = d4_image_action(4, output="same")
        mask = np.arange(16.0)
        assert np.array_equal(act.apply_output("b", act.apply_output("b", mask)), mask)

    def test_output_linearity(self):
        rng = np.random.default_rng(2)
        actions = [(rotation_action(3), 1), (rotation_star_action(3), 1),
                   (rotation_action(3, output="negate", dim_y=2), 2),
                   (d4_image_action(3, output="same"), 9)]
        for act, dy in actions:
            for _ in range(200):
                g = act.elements[rng.integers(len(act.elements))]
                y, z = rng.normal(size=(2, dy))
                a = rng.normal()
                lhs = act.apply_output(g, a * y + z)
                rhs = a * act.apply_output(g, y) + act.apply_output(g, z)
                assert np.allclose(lhs, rhs, atol=1e-9)

    def test_permutation_action(self):
        act = permutation_action({"s": {"input": [1, 0, 2]}}, dim=3)
        assert act.apply_input("s", [1, 2, 3]).tolist() == [2, 1, 3]
        assert "e" in act.elements

    def test_action_spec_roundtrip(self, tmp_path):
        path = tmp_path / "action.json"
        path.write_text(json.dumps({"kind": "rotation_star", "dim": 3}))
        act = load_action_spec(path)
        assert act.apply_input("R", [1, 2, 3]).tolist() == [-1, -2, 3]
        with pytest.raises(ValueError):
            action_from_spec({"kind": "nope"})

    def test_signed_permutation_then(self):
        p = SignedPermutation([1, 0], [1, -1])
        q = SignedPermutation([0, 1], [-1, 1])
        x = np.array([3.0, 5.0])
        assert np.array_equal(p.then(q)(x), q(p(x)))


class TestGeneratorDistribution:
    def test_default_rotation(self):
        d = GeneratorDistribution.default_for(rotation_action(2))
        assert set(d.support) == {"R", "R^2", "R^3"}
        assert math.isclose(sum(d.weights), 1.0, abs_tol=1e-12)

    def test_default_d4(self):
        d = GeneratorDistribution.default_for(d4_image_action(4))
        assert set(d.support) == {"a", "a^2", "a^3", "b"}

    def test_bad_weights(self):
        with pytest.raises(ValueError):
            GeneratorDistribution(("a", "b"), (0.7, 0.7))
        with pytest.raises(ValueError):
            GeneratorDistribution((), ())

    def test_support_must_be_in_action(self):
        with pytest.raises(ValueError):
            GeneratorDistribution.point_mass("zz").validate_for(rotation_action(2))


class TestVariationBound:
    def test_known(self):
        assert evaluate_variation(VariationBound.known(2, 1), [0, 0], [3, 0], Metric()) == 6.0

    def test_holder_half(self):
        assert evaluate_variation(VariationBound.known(1, 0.5), [0, 0], [4, 0], Metric()) == 2.0

    def test_order_treats_L_as_one(self):
        assert evaluate_variation(VariationBound.order(1.0), [0, 0], [3, 0], Metric()) == 3.0

    def test_custom(self):
        b = VariationBound(mode="known", func=lambda x, y: 0.25)
        assert evaluate_variation(b, [0, 0], [3, 0], Metric()) == 0.25

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            evaluate_variation(VariationBound.known(1), [0, 0], [1, 2, 3], Metric())

    def test_alpha_range(self):
        with pytest.raises(ValueError):
            VariationBound.known(1, 1.5)
        with pytest.raises(ValueError):
            VariationBound.known(-1, 1)

    def test_symmetric_and_zero_diagonal(self):
        rng = np.random.default_rng(3)
        b = VariationBound.known(1.7, 0.6)
        m = Metric()
        for _ in range(1000):
            x, y = rng.normal(size=(2, 3))
            assert evaluate_variation(b, x, x, m) == 0
            assert evaluate_variation(b, x, y, m) == evaluate_variation(b, y, x, m)


class TestNoiseModel:
    def test_noiseless(self):
        assert noise_tail(NoiseModel.noiseless(), 0.1) == 0.0

    def test_gaussian_at_two_sigma(self):
        expected = math.exp(-1) / math.sqrt(2 * math.pi)
        assert math.isclose(noise_tail(NoiseModel.gaussian(0.05), 0.1), expected, rel_tol=1e-14)
        assert round(expected, 6) == 0.146763

    def test_clamped(self):
        assert noise_tail(NoiseModel.gaussian(1.0), 1e-6) == 1.0

    def test_nonpositive_t(self):
        with pytest.raises(ValueError):
            noise_tail(NoiseModel.gaussian(1.0), 0.0)

    def test_monotone(self):
        for model in (NoiseModel.gaussian(0.3),
                      NoiseModel.from_table([(0.1, 0.9), (0.5, 0.4), (1.0, 0.05)])):
            ts = np.linspace(0.01, 3, 400)
            ps = [noise_tail(model, t) for t in ts]
            assert all(b <= a for a, b in zip(ps, ps[1:]))
            assert all(0 <= p <= 1 for p in ps)

    def test_table_step(self):
        model = NoiseModel.from_table([(0.1, 0.9), (0.5, 0.4)])
        assert noise_tail(model, 0.05) == 1.0
        assert noise_tail(model, 0.3) == 0.9
        assert noise_tail(model, 0.5) == 0.4

    def test_table_must_be_monotone(self):
        with pytest.raises(ValueError):
            NoiseModel.from_table([(0.1, 0.2), (0.5, 0.4)])
