"""Fujishige-Wolfe minimum-norm point over the base polytope B(F).

The iterate x is kept both explicitly and as a convex combination of active
greedy vertices. A major cycle adds the greedy vertex minimizing <x, .>; minor
cycles move to the affine minimizer of the active set and drop vertices whose
coefficients would turn nonpositive.

References:
1. Wolfe P. Finding the nearest point in a polytope. Math Program. 1976.
2. Fujishige S, Hayashi T, Isotani S. The Minimum-Norm-Point Algorithm Applied
   to Submodular Function Minimization and Linear Programming. 2006.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from packages.shared.errors import SolverError
from packages.solvers.report import SolverReport
from packages.submodular.oracles import ModularVector, SubmodularOracle
from packages.submodular.polytope import linear_minimize_over_base

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
# Vertices closer than this to an active one are treated as already active.
DUPLICATE_TOL = 1e-12
# Barycentric coefficients at or below this are dropped.
COEFFICIENT_TOL = 1e-12
MAX_MINOR_CYCLES = 1000


@dataclass
class WolfeState:
    vertices: NDArray[np.float64]  # (k, n), affinely independent rows
    weights: NDArray[np.float64]  # (k,), nonnegative, sums to 1
    x: ModularVector
    major: int = 0
    minor: int = 0

    @classmethod
    def start(cls, F: SubmodularOracle) -> "WolfeState":
        x = linear_minimize_over_base(F, np.zeros(F.n))
        return cls(vertices=x[None, :].copy(), weights=np.ones(1), x=x.copy())


def affine_minimizer(S: NDArray[np.float64]) -> Tuple[NDArray[np.float64], ModularVector]:
    """Min-norm point of the affine hull of the rows of S, with its affine coefficients."""
    m = S.shape[0]
    M = np.zeros((m + 1, m + 1))
    M[0, 1:] = 1.0
    M[1:, 0] = 1.0
    M[1:, 1:] = S @ S.T
    rhs = np.zeros(m + 1)
    rhs[0] = 1.0
    try:
        sol = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
        if not np.all(np.isfinite(sol)):
            raise SolverError("affine minimizer system is singular")
    b = sol[1:]
    return b, b @ S


def _minor_cycles(state: WolfeState) -> None:
    for _ in range(MAX_MINOR_CYCLES):
        b, y = affine_minimizer(state.vertices)
        state.minor += 1
        if np.all(b > COEFFICIENT_TOL):
            state.weights, state.x = b, y
            return
        # Walk from x towards y until the first coefficient hits zero.
        a = state.weights
        shrinking = (a - b) > COEFFICIENT_TOL
        theta = float(np.min(a[shrinking] / (a - b)[shrinking])) if shrinking.any() else 1.0
        theta = min(max(theta, 0.0), 1.0)
        a = theta * b + (1.0 - theta) * a
        keep = a > COEFFICIENT_TOL
        if not keep.any():
            keep[np.argmax(a)] = True
        state.vertices = state.vertices[keep]
        state.weights = a[keep] / a[keep].sum()
        state.x = state.weights @ state.vertices
    raise SolverError("Wolfe minor cycles did not terminate")


def min_norm_point(
    F: SubmodularOracle,
    tol: float = DEFAULT_TOL,
    max_major_cycles: Optional[int] = None,
    state: Optional[WolfeState] = None,
    callback: Optional[Callable[[WolfeState], None]] = None,
) -> SolverReport:
    """argmin of ||s||^2 over B(F).

    Stops when the Wolfe gap ||x||^2 - <x, q> falls below tol (scaled by the
    squared norms in play) or when the greedy vertex q is already active.
    Hitting the cycle cap returns the best iterate with converged=False.
    """
    started = time.perf_counter()
    if max_major_cycles is None:
        max_major_cycles = max(10 * F.n, 100)
    if state is None:
        state = WolfeState.start(F)
    converged = False
    gap = float("inf")
    history = []
    while state.major < max_major_cycles:
        x = state.x
        q = linear_minimize_over_base(F, x)
        gap = float(x @ x - x @ q)
        history.append(float(x @ x))
        scale = max(1.0, float(q @ q), float(np.max(np.einsum("ij,ij->i", state.vertices, state.vertices))))
        if gap <= tol * scale:
            converged = True
            break
        if np.any(np.all(np.abs(state.vertices - q) <= DUPLICATE_TOL, axis=1)):
            converged = True
            break
        state.vertices = np.vstack([state.vertices, q])
        state.weights = np.append(state.weights, 0.0)
        state.major += 1
        _minor_cycles(state)
        logger.debug("wolfe major=%d active=%d norm2=%.6g gap=%.3g", state.major, len(state.weights), state.x @ state.x, gap)
        if callback is not None:
            callback(state)
    if not converged:
        q = linear_minimize_over_base(F, state.x)
        gap = float(state.x @ state.x - state.x @ q)
        logger.warning("min_norm_point stopped after %d major cycles with gap %.3g", state.major, gap)
    x = state.x.copy()
    return SolverReport(
        solution=x,
        objective=float(x @ x),
        gap=gap,
        iterations=state.major,
        minor_iterations=state.minor,
        milliseconds=(time.perf_counter() - started) * 1000.0,
        converged=converged,
        history=history,
    )
