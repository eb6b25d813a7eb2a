"""Factor graphs of decomposable functions F(S) = sum_i F_i(S ∩ V_i).

Variables and factors form a bipartite graph. Edges are stored flat and grouped
by factor in ascending factor order, so a per-variable reduction over edges
always adds contributions in ascending factor index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from packages.shared.errors import GroundSetError
from packages.shared.io_utils import ModelFile, hop_oracle
from packages.submodular.oracles import Cut, Modular, ModularVector, SubmodularOracle, Sum

KINDS = ("modular", "pairwise_cut", "cardinality", "generic")


def factor_kind(oracle: SubmodularOracle) -> str:
    if isinstance(oracle, Modular):
        return "modular"
    if isinstance(oracle, Cut) and oracle.n == 2:
        return "pairwise_cut"
    if oracle.cardinality_profile() is not None:
        return "cardinality"
    return "generic"


@dataclass
class Factor:
    """One summand F_i together with its support V_i (global indices, in local order)."""

    oracle: SubmodularOracle
    support: NDArray[np.intp]
    kind: str = ""
    # g(0..n) for cardinality factors, read once.
    profile: Optional[NDArray[np.float64]] = field(default=None, repr=False)

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=np.intp)
        if self.support.ndim != 1 or self.support.size != self.oracle.n:
            raise GroundSetError(f"support of size {self.support.size} does not match {self.oracle!r}")
        if np.unique(self.support).size != self.support.size:
            raise GroundSetError(f"support {self.support.tolist()} repeats a variable")
        if not self.kind:
            self.kind = factor_kind(self.oracle)
        elif self.kind not in KINDS:
            raise ValueError(f"unknown factor kind {self.kind!r}")
        if self.kind == "cardinality" and self.profile is None:
            self.profile = self.oracle.cardinality_profile()


@dataclass
class FactorGraph:
    n: int
    factors: List[Factor]
    degrees: NDArray[np.intp]
    edge_var: NDArray[np.intp]
    edge_factor: NDArray[np.intp]
    offsets: NDArray[np.intp]
    _oracle: Optional[Sum] = field(default=None, repr=False)

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max())

    @property
    def n_edges(self) -> int:
        return int(self.edge_var.size)

    @property
    def is_regular(self) -> bool:
        return bool(np.all(self.degrees == self.degrees[0]))

    def edges_of(self, i: int) -> slice:
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    def factors_at(self, v: int) -> NDArray[np.intp]:
        """delta(v), ascending."""
        return self.edge_factor[self.edge_var == v]

    def aggregate(self, edge_values: NDArray[np.float64]) -> ModularVector:
        """q_v = sum over factors at v, reduced in ascending factor order."""
        return np.bincount(self.edge_var, weights=edge_values, minlength=self.n)

    def to_oracle(self) -> Sum:
        if self._oracle is None:
            self._oracle = Sum(self.n, [(f.oracle, f.support) for f in self.factors])
        return self._oracle


FactorLike = Union[Factor, Tuple[SubmodularOracle, Sequence[int]]]


def build_factor_graph(factors: Sequence[FactorLike], n: Optional[int] = None) -> FactorGraph:
    items = [f if isinstance(f, Factor) else Factor(f[0], np.asarray(list(f[1]), dtype=np.intp)) for f in factors]
    if not items:
        raise GroundSetError("a factor graph needs at least one factor")
    if n is None:
        n = int(max(f.support.max() for f in items)) + 1
    for i, f in enumerate(items):
        if f.support.min() < 0 or f.support.max() >= n:
            raise GroundSetError(f"factor {i} touches a variable outside 0..{n - 1}")
    sizes = np.array([f.support.size for f in items], dtype=np.intp)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.intp)
    edge_var = np.concatenate([f.support for f in items]).astype(np.intp)
    edge_factor = np.repeat(np.arange(len(items), dtype=np.intp), sizes)
    degrees = np.bincount(edge_var, minlength=n).astype(np.intp)
    uncovered = np.flatnonzero(degrees == 0)
    if uncovered.size:
        raise GroundSetError(f"variables {uncovered.tolist()} belong to no factor")
    return FactorGraph(
        n=int(n),
        factors=items,
        degrees=degrees,
        edge_var=edge_var,
        edge_factor=edge_factor,
        offsets=offsets,
    )


def factors_from_model(model: ModelFile) -> List[Factor]:
    """One factor per edge, one per hop, and the modular part as one factor over all of V."""
    factors = [Factor(Modular(model.modular_values()), np.arange(model.n, dtype=np.intp))]
    factors.extend(Factor(Cut(2, [(0, 1, w)]), np.array([u, v], dtype=np.intp)) for u, v, w in model.edges)
    factors.extend(Factor(hop_oracle(h), np.asarray(h.elements, dtype=np.intp)) for h in model.hops)
    return factors


def _degrees_for(x, graph: FactorGraph, support: Optional[Sequence[int]]) -> Tuple[ModularVector, NDArray[np.intp]]:
    x = np.asarray(x, dtype=float)
    idx = np.arange(graph.n, dtype=np.intp) if support is None else np.asarray(list(support), dtype=np.intp)
    if x.shape != idx.shape:
        raise GroundSetError(f"vector of length {x.size} does not match {idx.size} variables")
    d = graph.degrees[idx]
    if np.any(d == 0):
        raise GroundSetError("norm is undefined on a zero-degree variable")
    return x, d


def norm_g(x, graph: FactorGraph, support: Optional[Sequence[int]] = None) -> float:
    """||x||_G^2 = sum_v x_v^2 / |delta(v)|."""
    x, d = _degrees_for(x, graph, support)
    return float(np.sqrt(np.sum(x * x / d)))


def norm_g_star(x, graph: FactorGraph, support: Optional[Sequence[int]] = None) -> float:
    """||x||_G*^2 = sum_v |delta(v)| x_v^2, the dual of norm_g."""
    x, d = _degrees_for(x, graph, support)
    return float(np.sqrt(np.sum(d * x * x)))
