import numpy as np
import pytest
from scipy.special import expit

from conftest import random_model
from packages.inference.divergence import (
    dinfty_bruteforce_min,
    dinfty_dual_value,
    dinfty_values,
    duality_gap,
    renyi_infty,
)
from packages.inference.exact import exact_marginals, exact_partition
from packages.inference.lfield import (
    lfield_infer,
    logpartition_upper_bound,
    map_from_marginals,
    marginals_from_potentials,
)
from packages.shared.errors import ProblemTooLargeError
from packages.solvers.sfm import brute_force_sfm
from packages.submodular.oracles import Modular, Table, all_masks, all_subset_values
from packages.submodular.polytope import greedy_vertex


def counterexample():
    return Table.from_sets(2, {(0,): -20.0, (1,): -8.0, (0, 1): -16.0})


def random_point_in_polyhedron(F, rng):
    """A convex combination of a few greedy vertices pushed down by a nonnegative vector."""
    vertices = np.array([greedy_vertex(F, rng.permutation(F.n)) for _ in range(3)])
    weights = rng.dirichlet(np.ones(3))
    return weights @ vertices - np.abs(rng.normal(0.0, 0.5, F.n))


class TestLField:
    def test_modular_is_exact(self):
        F = Modular([-20.0, -8.0])
        result = lfield_infer(F)
        np.testing.assert_allclose(result.marginals, expit([20.0, 8.0]))
        assert result.log_z_upper == pytest.approx(exact_partition(F), abs=1e-12)

    def test_symmetric_cut(self, two_node_cut):
        np.testing.assert_allclose(lfield_infer(two_node_cut).marginals, [0.5, 0.5], atol=1e-12)

    @pytest.mark.parametrize("method", ["divide_and_conquer", "frank_wolfe"])
    def test_methods_agree_with_min_norm(self, rng, method):
        F = random_model(rng, 7)
        base = lfield_infer(F, method="min_norm")
        other = lfield_infer(F, method=method)
        np.testing.assert_allclose(other.marginals, base.marginals, atol=1e-3)

    def test_unknown_method(self, two_node_cut):
        with pytest.raises(ValueError):
            lfield_infer(two_node_cut, method="gibbs")

    def test_result_serializes(self, two_node_cut):
        payload = lfield_infer(two_node_cut).to_dict()
        assert payload["map_minimal"] == [] and payload["map_maximal"] == [0, 1]


class TestBoundAndMap:
    def test_bound_at_origin(self):
        assert logpartition_upper_bound(np.zeros(2)) == pytest.approx(2 * np.log(2))

    def test_bound_at_vertex(self):
        expected = np.log1p(np.exp(-1.0)) + np.log1p(np.e)
        assert logpartition_upper_bound(np.array([1.0, -1.0])) == pytest.approx(expected)

    def test_optimum_beats_every_vertex(self, rng):
        F = random_model(rng, 6)
        best = lfield_infer(F).log_z_upper
        for _ in range(20):
            assert best <= logpartition_upper_bound(greedy_vertex(F, rng.permutation(6))) + 1e-12

    def test_thresholds(self):
        minimal, maximal = map_from_marginals([0.7, 0.5, 0.2])
        np.testing.assert_array_equal(minimal, [True, False, False])
        np.testing.assert_array_equal(maximal, [True, True, False])
        minimal, maximal = map_from_marginals(np.full(4, 0.5))
        assert not minimal.any() and maximal.all()

    def test_marginals_are_sigmoids(self):
        np.testing.assert_allclose(marginals_from_potentials([0.0, 2.0]), [0.5, expit(-2.0)])


class TestExact:
    def test_uniform(self):
        F = Modular(np.zeros(2))
        assert exact_partition(F) == pytest.approx(np.log(4))
        np.testing.assert_allclose(exact_marginals(F), [0.5, 0.5])

    def test_cut(self, two_node_cut):
        assert exact_partition(two_node_cut) == pytest.approx(np.log(2 + 2 * np.exp(-1)))
        np.testing.assert_allclose(exact_marginals(two_node_cut), [0.5, 0.5])

    def test_modular_marginals(self):
        m = np.array([1.0, -2.0, 0.3])
        np.testing.assert_allclose(exact_marginals(Modular(m)), expit(-m))

    def test_guard(self):
        with pytest.raises(ProblemTooLargeError):
            exact_partition(Modular(np.zeros(21)))


class TestDivergence:
    def test_zero_for_factorized_model(self):
        m = np.array([0.5, -1.0, 2.0])
        assert renyi_infty(Modular(m), m).d_infty == pytest.approx(0.0, abs=1e-12)

    def test_cut_at_origin(self, two_node_cut):
        report = renyi_infty(two_node_cut, np.zeros(2))
        assert report.slack == 0.0
        assert report.d_infty == pytest.approx(2 * np.log(2) - np.log(2 + 2 * np.exp(-1)))

    def test_slack_vanishes_on_base_polytope(self, rng):
        F = random_model(rng, 5)
        assert renyi_infty(F, greedy_vertex(F, rng.permutation(5))).slack == pytest.approx(0.0, abs=1e-12)

    def test_batched_matches_single(self, rng):
        F = random_model(rng, 4)
        qs = rng.normal(size=(5, 4))
        np.testing.assert_allclose(dinfty_values(F, qs), [renyi_infty(F, q).d_infty for q in qs])

    def test_lfield_solution_minimizes_divergence(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 9))
            F = random_model(rng, n)
            s = lfield_infer(F).s_star
            best = renyi_infty(F, s).d_infty
            perturbed = s + rng.uniform(-1.0, 1.0, size=(10_000, n))
            assert dinfty_values(F, perturbed).min() >= best - 1e-8
            inside = np.array([random_point_in_polyhedron(F, rng) for _ in range(1000)])
            assert dinfty_values(F, inside).min() >= best - 1e-8
            assert duality_gap(F, s, marginals_from_potentials(s)) <= 1e-6

    def test_solution_is_a_lower_bound(self, rng):
        for _ in range(30):
            n = int(rng.integers(2, 16))
            F = random_model(rng, n)
            s = lfield_infer(F).s_star
            assert np.all(all_masks(n).astype(float) @ s <= all_subset_values(F) + 1e-8)


class TestCounterexample:
    def test_positive_slack_beats_feasible_points(self):
        F = counterexample()
        log_z_p = exact_partition(F)
        witness = dinfty_values(F, [[-19.0, -7.0]])[0] + log_z_p
        assert witness < 27.1
        free = dinfty_bruteforce_min(F)
        assert free.objective <= witness + 1e-9
        assert free.slack > 0.0
        constrained = dinfty_bruteforce_min(F, feasible_only=True)
        assert constrained.slack == 0.0
        assert constrained.objective >= 28.0 - 0.01
        np.testing.assert_allclose(constrained.q, [-20.0, -8.0], atol=0.01)

    def test_dual_certificate(self):
        lambdas = np.array([0.0, 1.0, 1.0, 0.0])
        assert dinfty_dual_value(counterexample(), lambdas) == pytest.approx(28.0)

    def test_dual_rejects_overfull_multipliers(self):
        with pytest.raises(ValueError):
            dinfty_dual_value(counterexample(), np.array([0.0, 1.0, 0.0, 0.5]))

    def test_submodular_optimum_needs_no_slack(self, rng):
        F = random_model(rng, 2, hops=1)
        best = dinfty_bruteforce_min(F)
        assert best.slack <= 0.02
        bound = lfield_infer(F).log_z_upper
        assert bound - 1e-9 <= best.objective <= bound + 0.01


class TestDualityGap:
    def test_cut_at_optimum(self, two_node_cut):
        assert duality_gap(two_node_cut, np.zeros(2), np.full(2, 0.5)) == pytest.approx(0.0, abs=1e-15)

    def test_modular(self):
        m = np.array([-2.0, 0.5, 3.0])
        assert duality_gap(Modular(m), m, expit(-m)) == pytest.approx(0.0, abs=1e-12)

    def test_weak_duality(self, rng):
        for _ in range(50):
            F = random_model(rng, 5)
            s = greedy_vertex(F, rng.permutation(5))
            assert duality_gap(F, s, rng.uniform(size=5)) >= -1e-12

    def test_rejects_bad_inputs(self, two_node_cut):
        with pytest.raises(ValueError):
            duality_gap(two_node_cut, np.zeros(2), np.array([1.5, 0.5]))
        with pytest.raises(ValueError):
            duality_gap(two_node_cut, np.array([2.0, -2.0]), np.full(2, 0.5))


class TestAcceptance:
    def test_bound_validity(self, rng):
        for _ in range(200):
            F = random_model(rng, int(rng.integers(2, 16)))
            result = lfield_infer(F)
            assert exact_partition(F) <= result.log_z_upper + 1e-9
            assert duality_gap(F, result.s_star, result.marginals) <= 1e-6

    def test_bound_is_tight_on_modular(self, rng):
        for _ in range(20):
            F = Modular(rng.normal(0.0, 3.0, int(rng.integers(1, 15))))
            assert lfield_infer(F).log_z_upper == pytest.approx(exact_partition(F), abs=1e-9)

    def test_modes_match_brute_force(self, rng):
        for _ in range(200):
            F = random_model(rng, int(rng.integers(2, 13)))
            result = lfield_infer(F)
            exact = brute_force_sfm(F)
            np.testing.assert_array_equal(result.map_minimal, exact.minimal)
            np.testing.assert_array_equal(result.map_maximal, exact.maximal)
            assert duality_gap(F, result.s_star, result.marginals) <= 1e-6
