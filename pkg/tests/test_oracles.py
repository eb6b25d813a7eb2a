import numpy as np
import pytest

from conftest import random_model
from packages.shared.errors import GroundSetError, ProblemTooLargeError
from packages.submodular.oracles import (
    CardinalityFunction,
    ConcaveCardinality,
    Cut,
    Modular,
    Sum,
    Table,
    all_masks,
    all_subset_values,
    as_mask,
    codes_from_masks,
    contract,
    evaluate,
    marginal_gain,
    masks_from_codes,
    restrict,
)
from packages.submodular.polytope import check_submodular


def counterexample():
    return Table.from_sets(2, {(0,): -20.0, (1,): -8.0, (0, 1): -16.0})


class TestEvaluate:
    def test_single_edge_cut(self, two_node_cut):
        assert evaluate(two_node_cut, as_mask(2, [0])) == 1.0
        assert evaluate(two_node_cut, as_mask(2, [0, 1])) == 0.0

    def test_concave_cardinality(self):
        F = ConcaveCardinality(3, [0, 1, 2], 1.0)
        assert evaluate(F, as_mask(3, [0])) == pytest.approx(2.0 / 9.0)

    def test_sum_is_additive(self):
        F = Sum(3, [(Cut(3, [(0, 1, 1.0)]), None), (ConcaveCardinality(3, [0, 1, 2], 1.0), None)])
        assert evaluate(F, as_mask(3, [0])) == pytest.approx(1.0 + 2.0 / 9.0)

    def test_empty_set_is_zero(self, rng):
        F = random_model(rng, 6)
        assert evaluate(F, np.zeros(6, dtype=bool)) == 0.0

    def test_mask_length_mismatch(self, two_node_cut):
        with pytest.raises(GroundSetError):
            evaluate(two_node_cut, np.zeros(3, dtype=bool))

    def test_sum_restricts_to_support(self, rng):
        n = 7
        F = random_model(rng, n, hops=3)
        masks = all_masks(n)
        expected = np.zeros(len(masks))
        for oracle, idx in F.terms:
            expected += oracle.evaluate_many(masks[:, idx])
        np.testing.assert_array_equal(F.evaluate_many(masks), expected)


class TestMarginalGain:
    def test_modular(self):
        F = Modular([0.5, -1.5, 2.0])
        assert marginal_gain(F, as_mask(3, [0, 2]), 1) == pytest.approx(-1.5)

    def test_cut(self, two_node_cut):
        assert marginal_gain(two_node_cut, as_mask(2), 0) == 1.0
        assert marginal_gain(two_node_cut, as_mask(2, [1]), 0) == -1.0

    def test_element_already_present(self, two_node_cut):
        with pytest.raises(GroundSetError):
            marginal_gain(two_node_cut, as_mask(2, [0]), 0)


class TestCheckSubmodular:
    def test_cut_is_submodular(self, rng):
        edges = [(u, v, float(rng.uniform(0, 3))) for u in range(6) for v in range(u + 1, 6)]
        ok, witness = check_submodular(Cut(6, edges))
        assert ok and witness is None

    def test_modular_is_submodular(self):
        assert check_submodular(Modular([1.0, -2.0, 3.0]))[0]

    def test_counterexample_is_not(self):
        ok, witness = check_submodular(counterexample())
        assert not ok
        assert witness.gain_larger > witness.gain_smaller
        assert {witness.gain_smaller, witness.gain_larger} == {-20.0, -8.0}

    def test_random_models_are_submodular(self, rng):
        for _ in range(20):
            assert check_submodular(random_model(rng, int(rng.integers(2, 8))))[0]

    def test_guard(self):
        with pytest.raises(ProblemTooLargeError):
            check_submodular(Modular(np.zeros(13)))


class TestOracleVariants:
    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            Cut(2, [(0, 1, -1.0)])
        with pytest.raises(GroundSetError):
            Cut(2, [(0, 2, 1.0)])
        with pytest.raises(ValueError):
            Table(1, [1.0, 2.0])
        with pytest.raises(ValueError):
            CardinalityFunction([1.0, 0.0])

    def test_table_from_sets(self):
        F = counterexample()
        np.testing.assert_array_equal(all_subset_values(F), [0.0, -20.0, -8.0, -16.0])

    def test_codes_round_trip_in_order(self):
        codes = np.arange(16)
        np.testing.assert_array_equal(codes_from_masks(masks_from_codes(codes, 4)), codes)

    def test_profile_only_on_full_region(self):
        assert ConcaveCardinality(4, [0, 1], 1.0).cardinality_profile() is None
        np.testing.assert_allclose(ConcaveCardinality(2, [0, 1], 1.0).cardinality_profile(), [0.0, 0.25, 0.0])


class TestMinors:
    @pytest.mark.parametrize("seed", range(5))
    def test_restrict_and_contract_match_definitions(self, seed):
        rng = np.random.default_rng(seed)
        n = 6
        F = random_model(rng, n)
        keep = rng.random(n) < 0.5
        keep[0] = True
        keep[-1] = False
        masks = all_masks(n)
        R = restrict(F, keep)
        sub = masks[:, ~keep].any(axis=1)
        np.testing.assert_allclose(R.evaluate_many(masks[~sub][:, keep]), F.evaluate_many(masks[~sub]))
        C = contract(F, keep)
        inside = masks[:, keep].all(axis=1)
        expected = F.evaluate_many(masks[inside]) - F.evaluate(keep)
        np.testing.assert_allclose(C.evaluate_many(masks[inside][:, ~keep]), expected)

    def test_minor_of_minor(self, rng):
        F = random_model(rng, 6)
        first = contract(F, as_mask(6, [0]))
        second = contract(first, as_mask(5, [1]))
        # second lives on elements (1, 3, 4, 5) with {0, 2} contracted
        local = as_mask(4, [1, 3])
        expected = F.evaluate(as_mask(6, [0, 2, 3, 5])) - F.evaluate(as_mask(6, [0, 2]))
        assert second.evaluate(local) == pytest.approx(expected)

    def test_cardinality_minors_stay_cardinality(self):
        F = ConcaveCardinality(5, range(5), 2.0)
        A = as_mask(5, [1, 3])
        np.testing.assert_allclose(restrict(F, A).cardinality_profile(), F.cardinality_profile()[:3])
        np.testing.assert_allclose(contract(F, A).cardinality_profile(), F.cardinality_profile()[2:] - F.cardinality_profile()[2])
