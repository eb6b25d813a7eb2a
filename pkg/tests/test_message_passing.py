import csv

import numpy as np
import pytest

from conftest import grid_factors
from packages.message_passing.graph import (
    Factor,
    build_factor_graph,
    factors_from_model,
    norm_g,
    norm_g_star,
)
from packages.message_passing.rate import check_linear_rate, displayed_rate, fit_linear_rate, prose_rate
from packages.message_passing.solver import (
    factor_update,
    initial_state,
    project,
    run_parallel_mp,
    run_sequential_ep,
    variable_to_factor_round,
)
from packages.shared.errors import GroundSetError
from packages.shared.io_utils import HopSpec, ModelFile
from packages.solvers.separable import weighted_min_norm
from packages.solvers.wolfe import min_norm_point
from packages.submodular.oracles import ConcaveCardinality, Cut, Modular
from packages.submodular.polytope import greedy_vertex, in_base_polytope


def cycle_factors(weights=(1.0, 0.5, 2.0, 1.5)):
    n = len(weights)
    return [(Cut(2, [(0, 1, w)]), (v, (v + 1) % n)) for v, w in enumerate(weights)]


def cycle_with_unaries():
    return cycle_factors() + [(Modular([0.8, -0.3, 1.2, -1.5]), range(4))]


class TestFactorGraph:
    def test_counts(self):
        graph = build_factor_graph([(Cut(2, [(0, 1, 1.0)]), (0, 1)), (ConcaveCardinality(3, range(3), 1.0), (0, 1, 2))])
        assert graph.max_degree == 2 and graph.n_edges == 5
        graph = build_factor_graph([(ConcaveCardinality(3, range(3), 1.0), (0, 1, 2))] * 2)
        assert graph.max_degree == 2 and graph.n_edges == 6 and graph.is_regular

    def test_cycles_are_regular(self):
        plain = build_factor_graph(cycle_factors())
        assert plain.is_regular and plain.max_degree == 2 and plain.n_edges == 8
        full = build_factor_graph(cycle_with_unaries())
        assert full.is_regular and full.max_degree == 3 and full.n_edges == 12

    def test_factor_kinds(self):
        graph = build_factor_graph(grid_factors(2, 2, np.random.default_rng(0), block=2))
        assert [f.kind for f in graph.factors] == ["modular"] + ["pairwise_cut"] * 4 + ["cardinality"]
        np.testing.assert_allclose(graph.factors[-1].profile, [0.0, 0.09375, 0.125, 0.09375, 0.0])
        assert all(f.profile is None for f in graph.factors[:-1])

    def test_factors_at_is_ascending(self):
        graph = build_factor_graph(cycle_with_unaries())
        np.testing.assert_array_equal(graph.factors_at(0), [0, 3, 4])

    def test_rejects_bad_supports(self):
        with pytest.raises(GroundSetError):
            build_factor_graph([(Cut(2, [(0, 1, 1.0)]), (0, 2))], n=2)
        with pytest.raises(GroundSetError):
            build_factor_graph([(Cut(2, [(0, 1, 1.0)]), (0, 1))], n=3)
        with pytest.raises(GroundSetError):
            Factor(Cut(2, [(0, 1, 1.0)]), np.array([1, 1]))

    def test_from_model(self):
        model = ModelFile(n=3, modular=[1.0, -1.0, 0.5], edges=[(0, 1, 2.0)], hops=[HopSpec(elements=[0, 1, 2], scale=1.0)])
        factors = factors_from_model(model)
        assert [f.kind for f in factors] == ["modular", "pairwise_cut", "cardinality"]
        graph = build_factor_graph(factors)
        np.testing.assert_array_equal(graph.degrees, [3, 3, 2])


class TestNorms:
    def test_weighted_by_degree(self):
        graph = build_factor_graph(cycle_with_unaries())
        x = np.array([1.0, 2.0, 0.0, -1.0])
        assert norm_g(x, graph) == pytest.approx(np.sqrt(6.0 / 3.0))
        assert norm_g_star(x, graph) == pytest.approx(np.sqrt(18.0))

    def test_dual_pairing(self, rng):
        graph = build_factor_graph(grid_factors(3, 4, rng, block=2))
        for _ in range(20):
            x, y = rng.normal(size=(2, graph.n))
            assert abs(x @ y) <= norm_g(x, graph) * norm_g_star(y, graph) + 1e-12

    def test_support_restriction(self):
        graph = build_factor_graph(cycle_factors())
        assert norm_g([2.0], graph, support=[1]) == pytest.approx(np.sqrt(2.0))
        with pytest.raises(GroundSetError):
            norm_g([1.0, 2.0], graph, support=[1])


class TestMessages:
    def test_variable_round_is_the_mean(self, rng):
        graph = build_factor_graph(grid_factors(3, 3, rng, block=2))
        state = initial_state(graph)
        messages = variable_to_factor_round(state, graph)
        for v in range(graph.n):
            incoming = state.factor_to_var[graph.edge_var == v]
            np.testing.assert_allclose(messages[graph.edge_var == v], incoming.mean())

    def test_initial_state_is_feasible(self, rng):
        graph = build_factor_graph(grid_factors(3, 3, rng, block=2))
        state = initial_state(graph)
        assert in_base_polytope(graph.to_oracle(), state.aggregate)

    def test_pairwise_closed_form(self):
        factor = Factor(Cut(2, [(0, 1, 1.0)]), np.array([0, 1]))
        q = factor_update(factor, np.array([0.5, -0.2]), np.zeros(2), np.ones(2))
        np.testing.assert_allclose(q, [0.35, -0.35])
        clipped = factor_update(factor, np.array([4.0, 0.0]), np.zeros(2), np.ones(2))
        np.testing.assert_allclose(clipped, [1.0, -1.0])

    def test_closed_forms_match_generic_projection(self, rng):
        factors = [
            Factor(Cut(2, [(0, 1, 0.7)]), np.array([0, 1])),
            Factor(ConcaveCardinality(4, range(4), 1.5), np.arange(4)),
        ]
        for factor in factors:
            k = factor.support.size
            target, weights = rng.normal(size=k), rng.uniform(1.0, 4.0, k)
            np.testing.assert_allclose(
                project(factor, target, weights), weighted_min_norm(factor.oracle, target, weights), atol=1e-9
            )

    def test_projection_is_idempotent_and_feasible(self, rng):
        factor = Factor(ConcaveCardinality(5, range(5), 2.0), np.arange(5))
        weights = np.full(5, 3.0)
        q = project(factor, rng.normal(size=5), weights)
        assert in_base_polytope(factor.oracle, q)
        np.testing.assert_allclose(project(factor, q, weights), q, atol=1e-9)

    def test_greedy_vertex_splits_over_factors(self, rng):
        graph = build_factor_graph(grid_factors(3, 3, rng, block=2))
        order = rng.permutation(graph.n)
        rank = np.argsort(order)
        total = np.zeros(graph.n)
        for f in graph.factors:
            total[f.support] += greedy_vertex(f.oracle, np.argsort(rank[f.support]))
        np.testing.assert_allclose(greedy_vertex(graph.to_oracle(), order), total, atol=1e-12)


class TestParallelMP:
    @pytest.mark.parametrize("seed", range(20))
    def test_matches_monolithic_min_norm(self, seed):
        rng = np.random.default_rng(seed)
        if seed < 17:
            rows, cols, block = int(rng.integers(2, 6)), int(rng.integers(2, 6)), int(rng.choice([0, 2, 3]))
        else:
            rows, cols, block = 10, 10, 2
        graph = build_factor_graph(grid_factors(rows, cols, rng, block=block))
        result, trace = run_parallel_mp(graph, tol=1e-10, max_iter=20_000, workers=1)
        assert result.report.converged
        np.testing.assert_allclose(result.s_star, min_norm_point(graph.to_oracle()).solution, atol=1e-4)
        assert np.isnan(trace.delta_inf[0]) and trace.iteration[-1] == result.report.iterations

    def test_converged_factors_are_fixed_points(self, rng):
        graph = build_factor_graph(grid_factors(4, 4, rng, block=2))
        result, trace = run_parallel_mp(graph, tol=1e-11, max_iter=50_000, workers=1)
        assert result.report.converged
        state = trace.state
        messages = variable_to_factor_round(state, graph)
        d_edge = graph.degrees[graph.edge_var].astype(float)
        for i, f in enumerate(graph.factors):
            e = graph.edges_of(i)
            q_i = state.factor_to_var[e]
            np.testing.assert_allclose(factor_update(f, q_i, messages[e], d_edge[e]), q_i, atol=1e-8)

    @pytest.mark.parametrize("max_iter", [1, 7, 5000])
    def test_factor_states_stay_feasible(self, rng, max_iter):
        graph = build_factor_graph(grid_factors(4, 4, rng, block=2))
        _, trace = run_parallel_mp(graph, tol=1e-10, max_iter=max_iter, workers=1)
        for i, f in enumerate(graph.factors):
            assert in_base_polytope(f.oracle, trace.state.factor_to_var[graph.edges_of(i)], tol=1e-8)

    def test_cycle(self):
        graph = build_factor_graph(cycle_with_unaries())
        result, _ = run_parallel_mp(graph, tol=1e-12, workers=1)
        np.testing.assert_allclose(result.s_star, min_norm_point(graph.to_oracle()).solution, atol=1e-6)

    def test_worker_count_does_not_change_the_trace(self, rng):
        graph = build_factor_graph(grid_factors(4, 4, rng, block=2))
        _, serial = run_parallel_mp(graph, tol=1e-9, max_iter=300, workers=1)
        _, threaded = run_parallel_mp(graph, tol=1e-9, max_iter=300, workers=4)
        assert serial.primal_objective == threaded.primal_objective
        assert serial.state.factor_to_var.tobytes() == threaded.state.factor_to_var.tobytes()

    def test_cap_reports_not_converged(self, rng):
        graph = build_factor_graph(grid_factors(4, 4, rng))
        result, trace = run_parallel_mp(graph, tol=0.0, max_iter=3, workers=1)
        assert not result.report.converged and len(trace.iteration) == 4

    def test_trace_csv(self, rng, tmp_path):
        graph = build_factor_graph(cycle_with_unaries())
        q_star = min_norm_point(graph.to_oracle()).solution
        _, trace = run_parallel_mp(graph, tol=1e-8, workers=1, reference=q_star)
        path = tmp_path / "trace.csv"
        trace.to_csv(str(path))
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
        assert list(rows[0]) == ["iteration", "primal_objective", "delta_inf", "error_to_reference"]
        assert len(rows) == len(trace.iteration)
        assert float(rows[-1]["error_to_reference"]) < 1e-5


class TestSequentialEP:
    def test_block_objectives_never_increase(self, rng):
        graph = build_factor_graph(grid_factors(4, 4, rng, block=2))
        _, trace = run_sequential_ep(graph, tol=1e-10)
        steps = np.diff(trace.block_objectives)
        assert np.all(steps <= 1e-10)

    @pytest.mark.parametrize("seed", range(5))
    def test_reaches_the_monolithic_limit(self, seed):
        rng = np.random.default_rng(seed)
        graph = build_factor_graph(grid_factors(int(rng.integers(2, 5)), int(rng.integers(2, 5)), rng, block=2))
        ep, trace = run_sequential_ep(graph, tol=1e-10)
        np.testing.assert_allclose(ep.s_star, min_norm_point(graph.to_oracle()).solution, atol=1e-4)
        assert np.all(np.diff(trace.primal_objective[1:]) <= 1e-10)

    @pytest.mark.parametrize("rows,cols", [(4, 4), (5, 10)])
    def test_agrees_with_parallel(self, rng, rows, cols):
        graph = build_factor_graph(grid_factors(rows, cols, rng, block=2))
        ep, _ = run_sequential_ep(graph, tol=1e-10)
        mp, _ = run_parallel_mp(graph, tol=1e-10, max_iter=20_000, workers=1)
        assert ep.report.converged
        np.testing.assert_allclose(ep.s_star, mp.s_star, atol=1e-4)


class TestLinearRate:
    @pytest.mark.parametrize("factors", [cycle_with_unaries(), cycle_factors()])
    def test_regular_cycles_obey_the_bound(self, factors):
        graph = build_factor_graph(factors)
        q_star = min_norm_point(graph.to_oracle()).solution
        _, trace = run_parallel_mp(graph, tol=1e-9, workers=1, reference=q_star)
        assert check_linear_rate(trace, graph, q_star)

    def test_fitted_rate_decays(self):
        graph = build_factor_graph(cycle_with_unaries())
        q_star = min_norm_point(graph.to_oracle()).solution
        _, trace = run_parallel_mp(graph, tol=1e-9, workers=1, reference=q_star)
        fit = fit_linear_rate(trace, graph)
        assert fit.slope < 0.0 and fit.fitted_rate < 1.0
        assert fit.displayed_rate == pytest.approx(1.0 - 1.0 / 144.0)
        assert fit.prose_rate == pytest.approx((1.0 - 1.0 / 12.0) ** 2)

    def test_rates(self):
        graph = build_factor_graph(cycle_factors())
        assert displayed_rate(graph) == pytest.approx(1.0 - 1.0 / 64.0)
        assert prose_rate(graph) == pytest.approx((7.0 / 8.0) ** 2)

    def test_requires_regular_graph(self):
        graph = build_factor_graph([(Cut(2, [(0, 1, 1.0)]), (0, 1)), (Cut(2, [(0, 1, 1.0)]), (1, 2))])
        _, trace = run_parallel_mp(graph, workers=1, reference=np.zeros(3))
        with pytest.raises(ValueError):
            check_linear_rate(trace, graph, np.zeros(3))

    def test_requires_reference(self):
        graph = build_factor_graph(cycle_factors())
        _, trace = run_parallel_mp(graph, workers=1)
        with pytest.raises(ValueError):
            fit_linear_rate(trace, graph)
