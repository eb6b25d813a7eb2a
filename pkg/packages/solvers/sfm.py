"""Submodular function minimization: exhaustive, cardinality-based and min-norm thresholding."""
from __future__ import annotations

import os
from typing import NamedTuple, Optional

import numpy as np
from dotenv import load_dotenv

from packages.shared.errors import GroundSetError
from packages.solvers.wolfe import min_norm_point
from packages.submodular.oracles import (
    MAX_ENUMERATION,
    Modular,
    ModularVector,
    SubmodularOracle,
    SubsetMask,
    Sum,
    all_masks,
    all_subset_values,
)

load_dotenv()

BRUTE_FORCE_MAX = int(os.environ.get("SUBVAR_BRUTE_FORCE_MAX", "18"))
# Cleanup band around zero when reading minimizers off the min-norm point.
THRESHOLD_TAU = 1e-8
EXHAUSTIVE_LIMIT = 20


class SFMResult(NamedTuple):
    minimal: SubsetMask
    maximal: SubsetMask
    value: float


def _exhaustive(F: SubmodularOracle, z: Optional[ModularVector] = None, tol: float = 1e-9) -> SFMResult:
    masks = all_masks(F.n)
    values = all_subset_values(F)
    if z is not None:
        values = values - masks.astype(float) @ z
    best = float(values.min())
    hits = masks[values <= best + tol * max(1.0, abs(best))]
    # Minimizers form a lattice: the intersection and the union are minimizers too.
    return SFMResult(minimal=hits.all(axis=0), maximal=hits.any(axis=0), value=best)


def brute_force_sfm(F: SubmodularOracle, tol: float = 1e-9) -> SFMResult:
    return _exhaustive(F, None, tol)


def threshold_min_norm(F: SubmodularOracle, tau: float = THRESHOLD_TAU) -> SFMResult:
    """Minimal and maximal minimizers from the sign pattern of the min-norm point."""
    report = min_norm_point(F)
    s = report.solution
    minimal = s < -tau
    maximal = s <= tau
    return SFMResult(minimal=minimal, maximal=maximal, value=F.evaluate(minimal))


def sfm_minimize(F: SubmodularOracle, method: str = "auto") -> SFMResult:
    if method == "brute_force" or (method == "auto" and F.n <= EXHAUSTIVE_LIMIT):
        return brute_force_sfm(F)
    if method in ("auto", "min_norm"):
        return threshold_min_norm(F)
    raise ValueError(f"unknown SFM method {method!r}")


def cardinality_sfm(F: SubmodularOracle, z: ModularVector) -> SubsetMask:
    """argmin over A of g(|A|) - z(A) for a cardinality-based F.

    For each k the best set of size k is the top-k of z; ties in k go to the
    smaller set.
    """
    profile = F.cardinality_profile()
    if profile is None:
        raise GroundSetError(f"{F!r} does not depend on |A| alone")
    z = np.asarray(z, dtype=float)
    order = np.argsort(-z, kind="stable")
    prefix = np.concatenate([[0.0], np.cumsum(z[order])])
    k = int(np.argmin(profile - prefix))
    mask = np.zeros(F.n, dtype=bool)
    mask[order[:k]] = True
    return mask


def default_sfm_oracle(F: SubmodularOracle, z: ModularVector) -> SubsetMask:
    """Minimal minimizer of F(A) - z(A), by the cheapest exact route available."""
    if F.cardinality_profile() is not None:
        return cardinality_sfm(F, z)
    if F.n <= min(BRUTE_FORCE_MAX, MAX_ENUMERATION):
        return _exhaustive(F, z).minimal
    shifted = Sum(F.n, [(F, None), (Modular(-np.asarray(z, dtype=float)), None)])
    return threshold_min_norm(shifted).minimal
