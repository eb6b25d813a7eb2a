"""Set-function oracles over a dense ground set {0, ..., n-1}.

Subsets are boolean masks of length n. Every oracle evaluates a whole batch of
masks at once (`evaluate_many`), which is what the greedy step, the exhaustive
checks and the brute-force inference oracles lean on.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from packages.shared.errors import GroundSetError, ProblemTooLargeError

ModularVector = NDArray[np.float64]
SubsetMask = NDArray[np.bool_]
Ordering = NDArray[np.intp]

# Exhaustive enumeration is capped here; 2^20 masks is about a million rows.
MAX_ENUMERATION = 20
ENUMERATION_CHUNK = 1 << 16


def _phi_quadratic(z):
    return z * (1.0 - z)


# Named concave functions accepted by the model file format.
PHI_REGISTRY: Dict[str, Callable] = {
    "z(1-z)": _phi_quadratic,
}


def as_mask(n: int, elements: Sequence[int] = ()) -> SubsetMask:
    """Build a mask over n elements from an iterable of element indices."""
    mask = np.zeros(n, dtype=bool)
    idx = np.asarray(list(elements), dtype=np.intp)
    if idx.size:
        if idx.min() < 0 or idx.max() >= n:
            raise GroundSetError(f"elements {idx.tolist()} out of range for n={n}")
        mask[idx] = True
    return mask


def masks_from_codes(codes: NDArray[np.int64], n: int) -> NDArray[np.bool_]:
    """Decode integer bitmasks (bit i set <=> element i present) into rows of masks."""
    bits = np.arange(n, dtype=np.int64)
    return ((np.asarray(codes, dtype=np.int64)[:, None] >> bits) & 1).astype(bool)


def codes_from_masks(masks: NDArray[np.bool_]) -> NDArray[np.int64]:
    masks = np.atleast_2d(masks)
    weights = np.left_shift(np.int64(1), np.arange(masks.shape[1], dtype=np.int64))
    return masks.astype(np.int64) @ weights


def enumerate_masks(n: int, chunk: int = ENUMERATION_CHUNK) -> Iterator[Tuple[NDArray[np.int64], NDArray[np.bool_]]]:
    """Yield (codes, masks) blocks covering all 2^n subsets in code order."""
    if n > MAX_ENUMERATION:
        raise ProblemTooLargeError("subset enumeration", n, MAX_ENUMERATION)
    total = 1 << n
    for start in range(0, total, chunk):
        codes = np.arange(start, min(total, start + chunk), dtype=np.int64)
        yield codes, masks_from_codes(codes, n)


def check_ordering(pi: Sequence[int], n: int) -> Ordering:
    order = np.asarray(pi, dtype=np.intp)
    if order.shape != (n,) or not np.array_equal(np.sort(order), np.arange(n)):
        raise GroundSetError(f"ordering {order.tolist()} is not a permutation of 0..{n - 1}")
    return order


class SubmodularOracle(ABC):
    """A normalized set function F: 2^V -> R with F(empty) = 0."""

    n: int

    @abstractmethod
    def _evaluate_many(self, masks: NDArray[np.bool_]) -> NDArray[np.float64]:
        ...

    def evaluate_many(self, masks: NDArray[np.bool_]) -> NDArray[np.float64]:
        masks = np.asarray(masks, dtype=bool)
        if masks.ndim != 2 or masks.shape[1] != self.n:
            raise GroundSetError(f"expected masks of shape (k, {self.n}), got {masks.shape}")
        return np.asarray(self._evaluate_many(masks), dtype=float)

    def evaluate(self, mask: SubsetMask) -> float:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (self.n,):
            raise GroundSetError(f"mask of length {mask.shape} does not match ground set of size {self.n}")
        return float(self.evaluate_many(mask[None, :])[0])

    def cardinality_profile(self) -> Optional[NDArray[np.float64]]:
        """g(0..n) when F(A) = g(|A|), otherwise None."""
        return None

    def value_of_ground_set(self) -> float:
        return self.evaluate(np.ones(self.n, dtype=bool))


class Modular(SubmodularOracle):
    def __init__(self, values: Sequence[float]):
        self.values = np.asarray(values, dtype=float).copy()
        if self.values.ndim != 1 or self.values.size == 0:
            raise GroundSetError("modular vector must be a non-empty 1-d array")
        self.values.setflags(write=False)
        self.n = int(self.values.size)

    def _evaluate_many(self, masks):
        # Row-wise sum in index order keeps s(A) reproducible.
        return np.where(masks, self.values, 0.0).sum(axis=1)

    def __repr__(self) -> str:
        return f"Modular(n={self.n})"


class Cut(SubmodularOracle):
    """Weighted undirected cut: F(A) = sum of w_uv over edges with exactly one end in A."""

    def __init__(self, n: int, edges: Sequence[Tuple[int, int, float]]):
        if n < 1:
            raise GroundSetError("ground set must have at least one element")
        self.n = int(n)
        arr = np.asarray(list(edges), dtype=float).reshape(-1, 3)
        self.u = arr[:, 0].astype(np.intp)
        self.v = arr[:, 1].astype(np.intp)
        self.w = arr[:, 2].copy()
        if arr.shape[0]:
            if min(self.u.min(), self.v.min()) < 0 or max(self.u.max(), self.v.max()) >= n:
                raise GroundSetError(f"cut edge endpoint out of range for n={n}")
            if np.any(self.u == self.v):
                raise GroundSetError("cut edges must join two distinct elements")
            if np.any(self.w < 0):
                raise ValueError("cut weights must be nonnegative")

    def _evaluate_many(self, masks):
        crossing = masks[:, self.u] != masks[:, self.v]
        return crossing.astype(float) @ self.w

    def cardinality_profile(self):
        if self.n == 2 and self.w.size:
            total = float(self.w.sum())
            return np.array([0.0, total, 0.0])
        return None

    def __repr__(self) -> str:
        return f"Cut(n={self.n}, edges={self.w.size})"


class ConcaveCardinality(SubmodularOracle):
    """F(A) = c * phi(|A ∩ P| / |P|) for a concave phi with phi(0) = 0."""

    def __init__(
        self,
        n: int,
        region: Sequence[int],
        scale: float,
        phi: Callable = _phi_quadratic,
        phi_name: str = "z(1-z)",
        concave: bool = True,
    ):
        self.n = int(n)
        self.region = np.unique(np.asarray(list(region), dtype=np.intp))
        if self.region.size == 0:
            raise GroundSetError("concave-of-cardinality region must be non-empty")
        if self.region.min() < 0 or self.region.max() >= self.n:
            raise GroundSetError(f"region out of range for n={n}")
        if scale < 0:
            raise ValueError("concave-of-cardinality scale must be nonnegative")
        if not concave:
            raise ValueError("phi must be concave for the potential to be submodular")
        if abs(float(phi(0.0))) > 1e-12:
            raise ValueError("phi(0) must be 0")
        self.scale = float(scale)
        self.phi = phi
        self.phi_name = phi_name

    def _evaluate_many(self, masks):
        counts = masks[:, self.region].sum(axis=1)
        return self.scale * self.phi(counts / self.region.size)

    def cardinality_profile(self):
        if self.region.size != self.n:
            return None
        k = np.arange(self.n + 1, dtype=float)
        return self.scale * self.phi(k / self.n)

    def __repr__(self) -> str:
        return f"ConcaveCardinality(n={self.n}, |P|={self.region.size}, scale={self.scale}, phi={self.phi_name!r})"


class CardinalityFunction(SubmodularOracle):
    """F(A) = g(|A|) from an explicit profile g(0), ..., g(n) with g(0) = 0."""

    def __init__(self, profile: Sequence[float]):
        self.profile = np.asarray(profile, dtype=float).copy()
        if self.profile.ndim != 1 or self.profile.size < 2:
            raise GroundSetError("cardinality profile needs g(0..n) with n >= 1")
        if abs(self.profile[0]) > 1e-12:
            raise ValueError("cardinality profile must satisfy g(0) = 0")
        self.n = int(self.profile.size - 1)

    def _evaluate_many(self, masks):
        return self.profile[masks.sum(axis=1)]

    def cardinality_profile(self):
        return self.profile

    def __repr__(self) -> str:
        return f"CardinalityFunction(n={self.n})"


class Table(SubmodularOracle):
    """Explicit values for all 2^n subsets, indexed by bitmask code."""

    def __init__(self, n: int, values: Sequence[float]):
        if n > MAX_ENUMERATION:
            raise ProblemTooLargeError("table oracle", n, MAX_ENUMERATION)
        self.n = int(n)
        self.values = np.asarray(values, dtype=float).copy()
        if self.values.shape != (1 << self.n,):
            raise GroundSetError(f"table needs {1 << self.n} values, got {self.values.size}")
        if self.values[0] != 0.0:
            raise ValueError("table oracle must be normalized, F(empty) = 0")

    @classmethod
    def from_sets(cls, n: int, values: Dict[Tuple[int, ...], float]) -> "Table":
        table = np.zeros(1 << n)
        for elements, value in values.items():
            table[int(codes_from_masks(as_mask(n, elements)[None, :])[0])] = value
        return cls(n, table)

    def _evaluate_many(self, masks):
        return self.values[codes_from_masks(masks)]

    def __repr__(self) -> str:
        return f"Table(n={self.n})"


class Sum(SubmodularOracle):
    """F(A) = sum_i F_i(A ∩ V_i); each summand lives on its own support V_i."""

    def __init__(self, n: int, terms: Sequence[Tuple[SubmodularOracle, Optional[Sequence[int]]]]):
        self.n = int(n)
        self.terms: List[Tuple[SubmodularOracle, NDArray[np.intp]]] = []
        for oracle, support in terms:
            idx = np.arange(self.n, dtype=np.intp) if support is None else np.asarray(list(support), dtype=np.intp)
            if idx.size != oracle.n:
                raise GroundSetError(f"support of size {idx.size} does not match summand {oracle!r}")
            if idx.size and (idx.min() < 0 or idx.max() >= self.n or np.unique(idx).size != idx.size):
                raise GroundSetError(f"invalid support {idx.tolist()} for n={self.n}")
            self.terms.append((oracle, idx))

    def _evaluate_many(self, masks):
        total = np.zeros(masks.shape[0])
        for oracle, idx in self.terms:
            total += oracle.evaluate_many(masks[:, idx])
        return total

    def __repr__(self) -> str:
        return f"Sum(n={self.n}, terms={len(self.terms)})"


class Minor(SubmodularOracle):
    """B -> F(lift(B) ∪ C) - F(C) on a subset of the base ground set, C contracted."""

    def __init__(self, base: SubmodularOracle, elements: NDArray[np.intp], contracted: SubsetMask):
        self.base = base
        self.elements = np.asarray(elements, dtype=np.intp)
        self.contracted = np.asarray(contracted, dtype=bool)
        self.n = int(self.elements.size)
        self.offset = base.evaluate(self.contracted) if self.contracted.any() else 0.0

    def _evaluate_many(self, masks):
        full = np.broadcast_to(self.contracted, (masks.shape[0], self.base.n)).copy()
        full[:, self.elements] = masks
        return self.base.evaluate_many(full) - self.offset

    def __repr__(self) -> str:
        return f"Minor(base={self.base!r}, n={self.n}, contracted={int(self.contracted.sum())})"


def restrict(F: SubmodularOracle, keep: SubsetMask) -> SubmodularOracle:
    """F restricted to subsets of `keep`, re-indexed densely."""
    keep = np.asarray(keep, dtype=bool)
    profile = F.cardinality_profile()
    if profile is not None:
        return CardinalityFunction(profile[: int(keep.sum()) + 1])
    if isinstance(F, Modular):
        return Modular(F.values[keep])
    if isinstance(F, Minor):
        return Minor(F.base, F.elements[keep], F.contracted)
    return Minor(F, np.flatnonzero(keep), np.zeros(F.n, dtype=bool))


def contract(F: SubmodularOracle, absorbed: SubsetMask) -> SubmodularOracle:
    """B -> F(B ∪ A) - F(A) on the complement of A = `absorbed`."""
    absorbed = np.asarray(absorbed, dtype=bool)
    profile = F.cardinality_profile()
    if profile is not None:
        k = int(absorbed.sum())
        return CardinalityFunction(profile[k:] - profile[k])
    if isinstance(F, Modular):
        return Modular(F.values[~absorbed])
    if isinstance(F, Minor):
        contracted = F.contracted.copy()
        contracted[F.elements[absorbed]] = True
        return Minor(F.base, F.elements[~absorbed], contracted)
    return Minor(F, np.flatnonzero(~absorbed), absorbed)


def evaluate(F: SubmodularOracle, A: SubsetMask) -> float:
    return F.evaluate(A)


def marginal_gain(F: SubmodularOracle, A: SubsetMask, x: int) -> float:
    """F(A ∪ {x}) - F(A)."""
    A = np.asarray(A, dtype=bool)
    if A.shape != (F.n,):
        raise GroundSetError(f"mask of length {A.shape} does not match ground set of size {F.n}")
    if not 0 <= x < F.n:
        raise GroundSetError(f"element {x} out of range for n={F.n}")
    if A[x]:
        raise GroundSetError(f"element {x} is already in the set")
    both = np.stack([A, A])
    both[0, x] = True
    values = F.evaluate_many(both)
    return float(values[0] - values[1])


def all_subset_values(F: SubmodularOracle) -> NDArray[np.float64]:
    """F on every subset, position = bitmask code."""
    if F.n > MAX_ENUMERATION:
        raise ProblemTooLargeError("all_subset_values", F.n, MAX_ENUMERATION)
    out = np.empty(1 << F.n)
    for codes, masks in enumerate_masks(F.n):
        out[codes] = F.evaluate_many(masks)
    return out


def all_masks(n: int) -> NDArray[np.bool_]:
    if n > MAX_ENUMERATION:
        raise ProblemTooLargeError("all_masks", n, MAX_ENUMERATION)
    return masks_from_codes(np.arange(1 << n, dtype=np.int64), n)
