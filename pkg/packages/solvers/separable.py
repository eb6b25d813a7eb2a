"""Separable convex minimization over B(F) by divide and conquer.

The objective is sum_v psi_v(s_v). Each family is parametrized by a scalar
level t at which all derivatives agree: s_v(t) is increasing and unbounded in t
for every coordinate, so the level matching F(V) is found by a monotone search.
"""
from __future__ import annotations

import logging
import time
from abc import ABC, abstractmethod
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import bisect, isotonic_regression
from scipy.special import expit

from packages.shared.errors import GroundSetError, SolverError
from packages.solvers.report import SolverReport
from packages.solvers.sfm import default_sfm_oracle
from packages.submodular.oracles import (
    ModularVector,
    SubmodularOracle,
    SubsetMask,
    contract,
    restrict,
)

logger = logging.getLogger(__name__)

SFMOracle = Callable[[SubmodularOracle, ModularVector], SubsetMask]

LEVEL_XTOL = 1e-12
MAX_BRACKET_DOUBLINGS = 200
DC_TOL = 1e-10


class SeparableFamily(ABC):
    """psi_v for every coordinate of the full ground set."""

    @abstractmethod
    def value(self, s: ModularVector, idx: Optional[NDArray[np.intp]] = None) -> float:
        ...

    @abstractmethod
    def derivative(self, s: ModularVector, idx: Optional[NDArray[np.intp]] = None) -> ModularVector:
        ...

    @abstractmethod
    def level_point(self, t: float, idx: NDArray[np.intp]) -> ModularVector:
        """Coordinates idx of the point whose derivatives all sit at level t."""

    def solve_level(self, target: float, idx: NDArray[np.intp]) -> ModularVector:
        """Level point with coordinates summing to target (bracket by doubling, then bisection)."""

        def excess(t: float) -> float:
            return float(self.level_point(t, idx).sum()) - target

        lo, hi = -1.0, 1.0
        for _ in range(MAX_BRACKET_DOUBLINGS):
            if excess(lo) <= 0.0:
                break
            lo *= 2.0
        for _ in range(MAX_BRACKET_DOUBLINGS):
            if excess(hi) >= 0.0:
                break
            hi *= 2.0
        f_lo, f_hi = excess(lo), excess(hi)
        if f_lo > 0.0 or f_hi < 0.0:
            raise SolverError(f"could not bracket the level for target {target}")
        if f_lo == 0.0:
            return self.level_point(lo, idx)
        if f_hi == 0.0:
            return self.level_point(hi, idx)
        t = bisect(excess, lo, hi, xtol=LEVEL_XTOL, maxiter=400)
        return self.level_point(t, idx)


def _select(a: ModularVector, idx):
    return a if idx is None else a[idx]


class Quadratic(SeparableFamily):
    """psi_v(s) = w_v (s - y_v)^2."""

    def __init__(self, y: Sequence[float], w: Optional[Sequence[float]] = None):
        self.y = np.asarray(y, dtype=float)
        self.w = np.ones_like(self.y) if w is None else np.asarray(w, dtype=float)
        if self.w.shape != self.y.shape:
            raise GroundSetError("weights and targets must have the same length")
        if np.any(self.w <= 0):
            raise ValueError("weights must be strictly positive")

    def value(self, s, idx=None):
        return float(np.sum(_select(self.w, idx) * (s - _select(self.y, idx)) ** 2))

    def derivative(self, s, idx=None):
        return 2.0 * _select(self.w, idx) * (s - _select(self.y, idx))

    def level_point(self, t, idx):
        return self.y[idx] + t / self.w[idx]

    def solve_level(self, target, idx):
        y, w = self.y[idx], self.w[idx]
        t = (target - y.sum()) / np.sum(1.0 / w)
        return y + t / w


class Logistic(SeparableFamily):
    """psi_v(s) = log(1 + exp(-s)), the L-Field objective."""

    def value(self, s, idx=None):
        return float(np.sum(np.logaddexp(0.0, -np.asarray(s, dtype=float))))

    def derivative(self, s, idx=None):
        return -expit(-np.asarray(s, dtype=float))

    def level_point(self, t, idx):
        return np.full(len(idx), float(t))


class WeightedLogistic(SeparableFamily):
    """psi_v(s) = (1/w_v) log(exp(-w_v s) + exp(-w_v y_v))."""

    def __init__(self, y: Sequence[float], w: Sequence[float]):
        self.y = np.asarray(y, dtype=float)
        self.w = np.asarray(w, dtype=float)
        if self.w.shape != self.y.shape:
            raise GroundSetError("weights and targets must have the same length")
        if np.any(self.w <= 0):
            raise ValueError("weights must be strictly positive")

    def value(self, s, idx=None):
        w, y = _select(self.w, idx), _select(self.y, idx)
        return float(np.sum(np.logaddexp(-w * s, -w * y) / w))

    def derivative(self, s, idx=None):
        w, y = _select(self.w, idx), _select(self.y, idx)
        return -expit(w * (y - s))

    def level_point(self, t, idx):
        return self.y[idx] + t / self.w[idx]


def divide_and_conquer_report(
    F: SubmodularOracle,
    family: SeparableFamily,
    sfm: Optional[SFMOracle] = None,
    tol: float = DC_TOL,
) -> SolverReport:
    """argmin of sum_v psi_v(s_v) over B(F).

    Each piece takes the equal-level candidate for its ground set, asks the SFM
    oracle for A* minimizing G(A) - s(A), and splits into the restriction to A*
    and the contraction by A* when that value is negative. Every split is proper,
    so there are at most |V| - 1 oracle calls.
    """
    started = time.perf_counter()
    sfm = sfm or default_sfm_oracle
    s = np.empty(F.n)
    calls = 0
    depth = 0
    stack = [(F, np.arange(F.n, dtype=np.intp), 0)]
    while stack:
        G, idx, level = stack.pop()
        depth = max(depth, level)
        if G.n == 1:
            s[idx] = G.value_of_ground_set()
            continue
        target = G.value_of_ground_set()
        candidate = family.solve_level(target, idx)
        A = np.asarray(sfm(G, candidate), dtype=bool)
        calls += 1
        if A.shape != (G.n,):
            raise SolverError(f"SFM oracle returned a mask of shape {A.shape} for n={G.n}")
        value = G.evaluate(A) - float(candidate[A].sum())
        if value >= -tol * max(1.0, abs(target)) or A.all() or not A.any():
            s[idx] = candidate
            continue
        stack.append((restrict(G, A), idx[A], level + 1))
        stack.append((contract(G, A), idx[~A], level + 1))
    logger.debug("divide_and_conquer n=%d sfm_calls=%d depth=%d", F.n, calls, depth)
    return SolverReport(
        solution=s,
        objective=family.value(s),
        gap=0.0,
        iterations=calls,
        milliseconds=(time.perf_counter() - started) * 1000.0,
    )


def divide_and_conquer(
    F: SubmodularOracle,
    family: SeparableFamily,
    sfm: Optional[SFMOracle] = None,
    tol: float = DC_TOL,
) -> ModularVector:
    return divide_and_conquer_report(F, family, sfm=sfm, tol=tol).solution


def weighted_min_norm(
    F: SubmodularOracle,
    y: Sequence[float],
    w: Sequence[float],
    tol: float = DC_TOL,
    sfm: Optional[SFMOracle] = None,
) -> ModularVector:
    """argmin over s in B(F) of sum_v w_v (s_v - y_v)^2."""
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if y.shape != (F.n,) or w.shape != (F.n,):
        raise GroundSetError(f"target and weights must have length {F.n}")
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    return divide_and_conquer(F, Quadratic(y, w), sfm=sfm, tol=tol)


def cardinality_min_norm(
    profile: Sequence[float],
    y: Sequence[float],
    w: Sequence[float],
    tol: float = DC_TOL,
) -> ModularVector:
    """argmin over s in B(F) of sum_v w_v (s_v - y_v)^2 for F(A) = g(|A|), g concave.

    B(F) is the convex hull of the permutations of the increments of g. With equal
    weights the projection keeps the order of y, so it is y minus the nonincreasing
    isotonic fit of sorted y minus those increments. Unequal weights run the
    divide-and-conquer splits on index arrays: the restriction to a top-k set keeps
    g(0..k) and the contraction by it shifts the profile by k.
    """
    g = np.asarray(profile, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    n = y.size
    if g.shape != (n + 1,) or w.shape != (n,):
        raise GroundSetError(f"profile, target and weights do not describe {n} elements")
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    if np.all(w == w[0]):
        order = np.argsort(-y, kind="stable")
        fit = isotonic_regression(y[order] - np.diff(g), increasing=False).x
        s = np.empty(n)
        s[order] = y[order] - fit
        return s
    s = np.empty(n)
    stack = [(np.arange(n, dtype=np.intp), 0, n)]
    while stack:
        idx, lo, hi = stack.pop()
        target = g[hi] - g[lo]
        if idx.size == 1:
            s[idx] = target
            continue
        wi = w[idx]
        candidate = y[idx] + (target - y[idx].sum()) / np.sum(1.0 / wi) / wi
        order = np.argsort(-candidate, kind="stable")
        excess = (g[lo:hi + 1] - g[lo]) - np.concatenate([[0.0], np.cumsum(candidate[order])])
        k = int(np.argmin(excess))
        if excess[k] >= -tol * max(1.0, abs(target)) or k == idx.size:
            s[idx] = candidate
            continue
        stack.append((idx[order[:k]], lo, lo + k))
        stack.append((idx[order[k:]], lo + k, hi))
    return s
