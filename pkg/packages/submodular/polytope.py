"""Base-polytope primitives: greedy vertices, linear optimization, Lovász extension, membership."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from packages.shared.errors import GroundSetError, ProblemTooLargeError
from packages.submodular.oracles import (
    ModularVector,
    Ordering,
    SubmodularOracle,
    all_masks,
    all_subset_values,
    check_ordering,
)

CHECK_SUBMODULAR_MAX_N = 12
MEMBERSHIP_MAX_N = 15


def prefix_masks(order: Ordering) -> NDArray[np.bool_]:
    """Row k holds {order[0], ..., order[k-1]}, for k = 0..n."""
    n = order.size
    rank = np.empty(n, dtype=np.intp)
    rank[order] = np.arange(n)
    return rank[None, :] < np.arange(n + 1)[:, None]


def greedy_vertex(F: SubmodularOracle, pi: Sequence[int]) -> ModularVector:
    """s_{j_k} = F({j_1..j_k}) - F({j_1..j_{k-1}}); a vertex of B(F)."""
    order = check_ordering(pi, F.n)
    values = F.evaluate_many(prefix_masks(order))
    s = np.empty(F.n)
    s[order] = np.diff(values)
    return s


def descending_order(w: ModularVector) -> Ordering:
    # Stable sort on -w: descending value, ties by ascending index.
    return np.argsort(-np.asarray(w, dtype=float), kind="stable")


def ascending_order(c: ModularVector) -> Ordering:
    return np.argsort(np.asarray(c, dtype=float), kind="stable")


def _check_vector(F: SubmodularOracle, w) -> ModularVector:
    w = np.asarray(w, dtype=float)
    if w.shape != (F.n,):
        raise GroundSetError(f"vector of shape {w.shape} does not match ground set of size {F.n}")
    return w


def linear_minimize_over_base(F: SubmodularOracle, c: ModularVector) -> ModularVector:
    """argmin of <c, s> over B(F) (Edmonds' greedy algorithm)."""
    c = _check_vector(F, c)
    return greedy_vertex(F, ascending_order(c))


def lovasz_extension(F: SubmodularOracle, w: ModularVector) -> float:
    w = _check_vector(F, w)
    s = greedy_vertex(F, descending_order(w))
    return float(np.dot(w, s))


def _membership_values(F: SubmodularOracle, s) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    if F.n > MEMBERSHIP_MAX_N:
        raise ProblemTooLargeError("base polytope membership", F.n, MEMBERSHIP_MAX_N)
    s = _check_vector(F, s)
    return all_masks(F.n).astype(float) @ s, all_subset_values(F)


def in_submodular_polyhedron(F: SubmodularOracle, s: ModularVector, tol: float = 1e-9) -> bool:
    """s(A) <= F(A) + tol for every A."""
    lhs, rhs = _membership_values(F, s)
    return bool(np.all(lhs <= rhs + tol))


def in_base_polytope(F: SubmodularOracle, s: ModularVector, tol: float = 1e-9) -> bool:
    lhs, rhs = _membership_values(F, s)
    return bool(np.all(lhs <= rhs + tol) and abs(lhs[-1] - rhs[-1]) <= tol)


@dataclass
class SubmodularityViolation:
    """F(x | A) < F(x | B) for A ⊆ B, x ∉ B."""

    smaller: Tuple[int, ...]
    larger: Tuple[int, ...]
    element: int
    gain_smaller: float
    gain_larger: float


def check_submodular(
    F: SubmodularOracle, tol: float = 1e-9
) -> Tuple[bool, Optional[SubmodularityViolation]]:
    """Exhaustive diminishing-returns check via the pairwise form.

    F is submodular iff F(A+x) + F(A+y) >= F(A+x+y) + F(A) for all A and
    distinct x, y outside A, which costs 2^n * n^2 instead of 3^n * n.
    """
    n = F.n
    if n > CHECK_SUBMODULAR_MAX_N:
        raise ProblemTooLargeError("check_submodular", n, CHECK_SUBMODULAR_MAX_N)
    values = all_subset_values(F)
    codes = np.arange(1 << n, dtype=np.int64)
    for x in range(n):
        for y in range(n):
            if x == y:
                continue
            bx, by = 1 << x, 1 << y
            base = codes[(codes & (bx | by)) == 0]
            gain_small = values[base | bx] - values[base]
            gain_large = values[base | bx | by] - values[base | by]
            bad = np.flatnonzero(gain_small < gain_large - tol)
            if bad.size:
                a = int(base[bad[0]])
                smaller = tuple(i for i in range(n) if a >> i & 1)
                larger = tuple(sorted(smaller + (y,)))
                return False, SubmodularityViolation(
                    smaller=smaller,
                    larger=larger,
                    element=x,
                    gain_smaller=float(gain_small[bad[0]]),
                    gain_larger=float(gain_large[bad[0]]),
                )
    return True, None
