"""Parallel message passing and sequential block updates for decomposable min-norm problems.

Both solvers minimize ||sum_i q_i||^2 over q_i in B(F_i). The parallel solver
majorizes the objective with the degree-weighted norm ||.||_G*, so every factor
solves its own projection from a frozen snapshot of the messages; the
sequential solver minimizes exactly over one factor at a time.
"""
from __future__ import annotations

import concurrent.futures
import csv
import logging
import os
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from dotenv import load_dotenv
from tqdm import tqdm

from packages.inference.lfield import InferenceResult, result_from_potentials
from packages.message_passing.graph import Factor, FactorGraph
from packages.shared.errors import SolverError
from packages.solvers.report import SolverReport
from packages.solvers.separable import cardinality_min_norm, weighted_min_norm
from packages.submodular.oracles import ModularVector
from packages.submodular.polytope import greedy_vertex, linear_minimize_over_base

load_dotenv()

logger = logging.getLogger(__name__)

# 0 = one worker per CPU, 1 = run factor updates inline.
SUBVAR_THREADS = int(os.environ.get("SUBVAR_THREADS", "0"))
MP_TOL = 1e-7
MP_MAX_ITER = 10_000


@dataclass
class MessageState:
    """Per-edge messages; edges are grouped by factor as in FactorGraph."""

    factor_to_var: np.ndarray  # mu_{F_i -> v}, equal to coordinate v of q_i
    var_to_factor: np.ndarray  # mu_{v -> F_i}
    aggregate: ModularVector  # q_v = sum of mu_{F_i -> v} over delta(v)
    iteration: int = 0


@dataclass
class ConvergenceTrace:
    iteration: List[int] = field(default_factory=list)
    primal_objective: List[float] = field(default_factory=list)
    delta_inf: List[float] = field(default_factory=list)
    error_to_reference: List[Optional[float]] = field(default_factory=list)
    # Objective after every single factor step (sequential solver only).
    block_objectives: List[float] = field(default_factory=list)
    q_zero: Optional[ModularVector] = None
    state: Optional[MessageState] = None

    def record(self, t: int, q: ModularVector, delta: float, reference: Optional[ModularVector]) -> None:
        self.iteration.append(t)
        self.primal_objective.append(float(q @ q))
        self.delta_inf.append(float(delta))
        self.error_to_reference.append(None if reference is None else float(np.linalg.norm(q - reference)))

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["iteration", "primal_objective", "delta_inf", "error_to_reference"])
            for row in zip(self.iteration, self.primal_objective, self.delta_inf, self.error_to_reference):
                t, obj, delta, err = row
                writer.writerow([t, repr(obj), repr(delta), "" if err is None else repr(err)])


def initial_state(graph: FactorGraph) -> MessageState:
    """Each q_i starts at the greedy vertex of B(F_i) under the identity ordering."""
    q_edge = np.empty(graph.n_edges)
    for i, f in enumerate(graph.factors):
        q_edge[graph.edges_of(i)] = greedy_vertex(f.oracle, np.arange(f.oracle.n))
    aggregate = graph.aggregate(q_edge)
    return MessageState(factor_to_var=q_edge, var_to_factor=(aggregate / graph.degrees)[graph.edge_var], aggregate=aggregate)


def variable_to_factor_round(state: MessageState, graph: FactorGraph) -> np.ndarray:
    """mu_{v -> F_i} = (1/|delta(v)|) sum_j mu_{F_j -> v}, the same value for every factor at v."""
    aggregate = graph.aggregate(state.factor_to_var)
    return (aggregate / graph.degrees)[graph.edge_var]


def project(factor: Factor, target: ModularVector, weights: ModularVector) -> ModularVector:
    """argmin over q in B(F_i) of sum_v weights_v (q_v - target_v)^2."""
    if factor.kind == "modular":
        return np.array(factor.oracle.values, dtype=float)
    if factor.kind == "pairwise_cut":
        w = float(factor.oracle.w.sum())
        s = (weights[0] * target[0] - weights[1] * target[1]) / (weights[0] + weights[1])
        s = min(max(s, -w), w)
        return np.array([s, -s])
    if factor.kind == "cardinality":
        return cardinality_min_norm(factor.profile, target, weights)
    return weighted_min_norm(factor.oracle, target, weights)


def factor_update(factor: Factor, q_i: ModularVector, m_i: ModularVector, weights: ModularVector) -> ModularVector:
    """q_i^{t+1} = argmin over B(F_i) of ||q - (q_i^t - m_i^t)||_G*^2, weights = |delta(v)| on V_i."""
    return project(factor, np.asarray(q_i, dtype=float) - np.asarray(m_i, dtype=float), np.asarray(weights, dtype=float))


def _pairwise_batch(graph: FactorGraph):
    ids = np.array([i for i, f in enumerate(graph.factors) if f.kind == "pairwise_cut"], dtype=np.intp)
    first = graph.offsets[ids]
    weights = np.array([float(graph.factors[i].oracle.w.sum()) for i in ids])
    return first, first + 1, weights


def _resolve_workers(workers: Optional[int]) -> int:
    if workers is None:
        workers = SUBVAR_THREADS
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


def wolfe_gap(graph: FactorGraph, q: ModularVector) -> float:
    """||q||^2 - min over B(F) of <q, s>; the greedy vertex of a sum splits over the factors."""
    vertex = np.zeros(graph.n)
    for f in graph.factors:
        vertex[f.support] += linear_minimize_over_base(f.oracle, q[f.support])
    return float(q @ q - q @ vertex)


def run_parallel_mp(
    graph: FactorGraph,
    tol: float = MP_TOL,
    max_iter: int = MP_MAX_ITER,
    workers: Optional[int] = None,
    reference: Optional[ModularVector] = None,
    progress: bool = False,
) -> Tuple[InferenceResult, ConvergenceTrace]:
    """Two-phase rounds: variables average, then every factor projects from the same snapshot.

    Pairwise cut factors are updated in one vectorized step; modular factors never
    move; the remaining factors run through a thread pool. Results are collected
    in factor order, so the trace does not depend on the worker count.
    Returns (InferenceResult, ConvergenceTrace).
    """
    started = time.perf_counter()
    workers = _resolve_workers(workers)
    state = initial_state(graph)
    trace = ConvergenceTrace(q_zero=state.aggregate.copy())
    trace.record(0, state.aggregate, float("nan"), reference)
    cut_u, cut_v, cut_w = _pairwise_batch(graph)
    d_edge = graph.degrees[graph.edge_var].astype(float)
    projected = [i for i, f in enumerate(graph.factors) if f.kind in ("cardinality", "generic")]
    threaded = workers > 1 and len(projected) > 1

    def update(i: int) -> np.ndarray:
        e = graph.edges_of(i)
        return factor_update(graph.factors[i], frozen[e], state.var_to_factor[e], d_edge[e])

    converged = False
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor, tqdm(
        total=max_iter, desc="message passing", unit="round", leave=False, disable=not progress
    ) as bar:
        mapper = executor.map if threaded else map
        for t in range(1, max_iter + 1):
            state.var_to_factor = variable_to_factor_round(state, graph)
            frozen = state.factor_to_var
            target = frozen - state.var_to_factor
            nxt = frozen.copy()
            if cut_u.size:
                du, dv = d_edge[cut_u], d_edge[cut_v]
                s = np.clip((du * target[cut_u] - dv * target[cut_v]) / (du + dv), -cut_w, cut_w)
                nxt[cut_u], nxt[cut_v] = s, -s
            for i, q_i in zip(projected, mapper(update, projected)):
                nxt[graph.edges_of(i)] = q_i
            previous = state.aggregate
            state.factor_to_var = nxt
            state.aggregate = graph.aggregate(nxt)
            state.iteration = t
            delta = float(np.max(np.abs(state.aggregate - previous)))
            trace.record(t, state.aggregate, delta, reference)
            bar.update(1)
            logger.debug("mp round=%d objective=%.10g delta=%.3g", t, trace.primal_objective[-1], delta)
            if not np.isfinite(delta):
                raise SolverError(f"message passing diverged at round {t}")
            if delta <= tol:
                converged = True
                break
    if not converged:
        logger.warning("message passing stopped after %d rounds (last change %.3g)", state.iteration, trace.delta_inf[-1])
    trace.state = state
    q = state.aggregate.copy()
    report = SolverReport(
        solution=q,
        objective=float(q @ q),
        gap=wolfe_gap(graph, q),
        iterations=state.iteration,
        milliseconds=(time.perf_counter() - started) * 1000.0,
        converged=converged,
        history=list(trace.primal_objective),
    )
    return result_from_potentials(q, report), trace


def run_sequential_ep(
    graph: FactorGraph,
    tol: float = MP_TOL,
    max_sweeps: int = MP_MAX_ITER,
    reference: Optional[ModularVector] = None,
) -> Tuple[InferenceResult, ConvergenceTrace]:
    """Block coordinate descent in factor index order.

    Factor i replaces q_i by argmin over B(F_i) of ||q_i + r||^2, where r is the
    sum of the other factors' current states on V_i. Returns
    (InferenceResult, ConvergenceTrace).
    """
    started = time.perf_counter()
    state = initial_state(graph)
    trace = ConvergenceTrace(q_zero=state.aggregate.copy())
    trace.record(0, state.aggregate, float("nan"), reference)
    ones = [np.ones(f.support.size) for f in graph.factors]
    q_edge = state.factor_to_var
    converged = False
    sweep = 0
    for sweep in range(1, max_sweeps + 1):
        previous = state.aggregate.copy()
        aggregate = previous.copy()
        for i, f in enumerate(graph.factors):
            e = graph.edges_of(i)
            rest = aggregate[f.support] - q_edge[e]
            q_edge[e] = project(f, -rest, ones[i])
            aggregate[f.support] = rest + q_edge[e]
            trace.block_objectives.append(float(aggregate @ aggregate))
        state.aggregate = graph.aggregate(q_edge)
        state.iteration = sweep
        delta = float(np.max(np.abs(state.aggregate - previous)))
        trace.record(sweep, state.aggregate, delta, reference)
        logger.debug("ep sweep=%d objective=%.10g delta=%.3g", sweep, trace.primal_objective[-1], delta)
        if delta <= tol:
            converged = True
            break
    if not converged:
        logger.warning("sequential updates stopped after %d sweeps (last change %.3g)", sweep, trace.delta_inf[-1])
    state.var_to_factor = variable_to_factor_round(state, graph)
    trace.state = state
    q = state.aggregate.copy()
    report = SolverReport(
        solution=q,
        objective=float(q @ q),
        gap=wolfe_gap(graph, q),
        iterations=sweep,
        milliseconds=(time.perf_counter() - started) * 1000.0,
        converged=converged,
        history=list(trace.primal_objective),
    )
    return result_from_potentials(q, report), trace
