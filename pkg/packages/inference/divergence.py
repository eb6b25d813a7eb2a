"""Rényi divergence of infinite order between P ∝ exp(-F) and factorized Q ∝ exp(-q).

D_inf(P || Q) = log Z_q - log Z_p + max_A (q(A) - F(A)). Minimizing it over
modular q is the L-Field problem once F is submodular; the grid search and the
dual value below make that claim checkable on tiny ground sets, including the
supermodular function where the optimum needs a positive slack.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.special import entr, logsumexp

from packages.shared.errors import GroundSetError, ProblemTooLargeError
from packages.submodular.oracles import ModularVector, SubmodularOracle, all_masks, all_subset_values
from packages.submodular.polytope import MEMBERSHIP_MAX_N, in_base_polytope, lovasz_extension

DIVERGENCE_MAX_N = 20
GRID_MAX_N = 3
GRID_CHUNK = 1 << 15


@dataclass
class DivergenceReport:
    d_infty: float
    log_z_q: float
    log_z_p: float
    slack: float

    def to_dict(self) -> dict:
        return {"d_infty": self.d_infty, "log_z_q": self.log_z_q, "log_z_p": self.log_z_p, "slack": self.slack}


class GridSearchResult(NamedTuple):
    q: ModularVector
    slack: float
    objective: float


def _tables(F: SubmodularOracle) -> Tuple[np.ndarray, np.ndarray]:
    if F.n > DIVERGENCE_MAX_N:
        raise ProblemTooLargeError("renyi_infty", F.n, DIVERGENCE_MAX_N)
    return all_masks(F.n).astype(float), all_subset_values(F)


def _slack(qs: np.ndarray, masks: np.ndarray, values: np.ndarray) -> np.ndarray:
    """t(q) = max_A q(A) - F(A) for each row of qs; t >= 0 since A = empty is included."""
    out = np.empty(qs.shape[0])
    for start in range(0, qs.shape[0], GRID_CHUNK):
        block = qs[start:start + GRID_CHUNK]
        out[start:start + GRID_CHUNK] = np.max(block @ masks.T - values, axis=1)
    return out


def _log_z_q(qs: np.ndarray) -> np.ndarray:
    return np.sum(np.logaddexp(0.0, -qs), axis=-1)


def dinfty_values(F: SubmodularOracle, qs) -> np.ndarray:
    """D_inf(P || Q_q) for every row q of qs."""
    qs = np.atleast_2d(np.asarray(qs, dtype=float))
    if qs.shape[1] != F.n:
        raise GroundSetError(f"candidates must have {F.n} columns, got {qs.shape[1]}")
    masks, values = _tables(F)
    return _log_z_q(qs) - float(logsumexp(-values)) + _slack(qs, masks, values)


def renyi_infty(F: SubmodularOracle, q: ModularVector) -> DivergenceReport:
    q = np.asarray(q, dtype=float)
    if q.shape != (F.n,):
        raise GroundSetError(f"q must have length {F.n}")
    masks, values = _tables(F)
    log_z_p = float(logsumexp(-values))
    log_z_q = float(_log_z_q(q[None, :])[0])
    slack = float(_slack(q[None, :], masks, values)[0])
    return DivergenceReport(d_infty=log_z_q - log_z_p + slack, log_z_q=log_z_q, log_z_p=log_z_p, slack=slack)


def _grid(centre: np.ndarray, radius: float, step: float) -> np.ndarray:
    axes = [np.arange(c - radius, c + radius + step / 2, step) for c in centre]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(centre))


def dinfty_bruteforce_min(
    F: SubmodularOracle,
    steps: Sequence[float] = (0.5, 0.05, 0.005),
    radius: Optional[float] = None,
    feasible_only: bool = False,
    tol: float = 1e-9,
) -> GridSearchResult:
    """Grid search for min over q of sum_v log(1 + exp(-q_v)) + max_A (q(A) - F(A)).

    The first step sweeps a cube centred at 0 (half-width max|F| + 5 unless
    given); each later step refines around the incumbent within two previous
    steps. With feasible_only the slack is pinned at 0, i.e. only q with
    q(A) <= F(A) + tol for all A compete.
    """
    if F.n > GRID_MAX_N:
        raise ProblemTooLargeError("dinfty_bruteforce_min", F.n, GRID_MAX_N)
    masks, values = _tables(F)
    if radius is None:
        radius = float(np.max(np.abs(values))) + 5.0
    centre = np.zeros(F.n)
    span = radius
    best: Optional[GridSearchResult] = None
    for step in steps:
        candidates = _grid(centre, span, step)
        slack = _slack(candidates, masks, values)
        objective = _log_z_q(candidates) + slack
        if feasible_only:
            objective = np.where(slack <= tol, _log_z_q(candidates), np.inf)
        i = int(np.argmin(objective))
        if np.isfinite(objective[i]) and (best is None or objective[i] <= best.objective):
            best = GridSearchResult(q=candidates[i].copy(), slack=float(max(slack[i], 0.0)), objective=float(objective[i]))
        if best is None:
            break
        centre, span = best.q, 2.0 * step
    if best is None:
        raise ValueError("no grid point satisfies the constraints; widen the radius")
    return best


def binary_entropy(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return entr(p) + entr(1.0 - p)


def dinfty_dual_value(F: SubmodularOracle, lambdas) -> float:
    """Lagrange dual of the t = 0 problem: -sum_A F(A) lambda_A + sum_v h(sum_{A∋v} lambda_A).

    lambdas is indexed by subset bitmask code. Any feasible lambda lower-bounds
    the optimum of the slack-free problem.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    masks, values = _tables(F)
    if lambdas.shape != values.shape:
        raise GroundSetError(f"need one multiplier per subset ({values.size})")
    if np.any(lambdas < 0):
        raise ValueError("multipliers must be nonnegative")
    coverage = lambdas @ masks
    if np.any(coverage > 1.0 + 1e-12):
        raise ValueError("per-element multiplier mass must not exceed 1")
    return float(-values @ lambdas + binary_entropy(np.clip(coverage, 0.0, 1.0)).sum())


def duality_gap(F: SubmodularOracle, s: ModularVector, p, feasibility_tol: float = 1e-8) -> float:
    """sum_v log(1 + exp(-s_v)) - (H[p] - f(p)); nonnegative for s in B(F), p in [0,1]^V."""
    s = np.asarray(s, dtype=float)
    p = np.asarray(p, dtype=float)
    if s.shape != (F.n,) or p.shape != (F.n,):
        raise GroundSetError(f"s and p must have length {F.n}")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("p must lie in [0, 1]")
    if F.n <= MEMBERSHIP_MAX_N and not in_base_polytope(F, s, tol=feasibility_tol * max(1.0, float(np.abs(s).max()))):
        raise ValueError("s is not in the base polytope")
    primal = float(np.sum(np.logaddexp(0.0, -s)))
    dual = float(binary_entropy(p).sum()) - lovasz_extension(F, p)
    return primal - dual
