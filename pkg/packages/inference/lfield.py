"""L-Field variational inference: marginals, log-partition upper bound and MAP sets.

For a factorized Q(S) ∝ prod_{v∈S} exp(-s_v), the inclusion probability of v is
sigma(-s_v). The bound log Z <= sum_v log(1 + exp(-s_v)) holds for every s in
P(F) and is tightest at the minimum-norm point of B(F).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import expit

from packages.solvers.frank_wolfe import frank_wolfe_lfield, lfield_objective
from packages.solvers.report import SolverReport
from packages.solvers.separable import Logistic, divide_and_conquer_report
from packages.solvers.wolfe import min_norm_point
from packages.submodular.oracles import ModularVector, SubmodularOracle, SubsetMask

MAP_TAU = 1e-8
METHODS = ("min_norm", "divide_and_conquer", "frank_wolfe")


@dataclass
class InferenceResult:
    s_star: ModularVector
    marginals: np.ndarray
    log_z_upper: float
    map_minimal: SubsetMask
    map_maximal: SubsetMask
    report: SolverReport

    def to_dict(self) -> dict:
        return {
            "s_star": [float(x) for x in self.s_star],
            "marginals": [float(p) for p in self.marginals],
            "log_z_upper": float(self.log_z_upper),
            "map_minimal": [int(i) for i in np.flatnonzero(self.map_minimal)],
            "map_maximal": [int(i) for i in np.flatnonzero(self.map_maximal)],
            "report": self.report.to_dict(),
        }


def logpartition_upper_bound(s: ModularVector) -> float:
    return lfield_objective(s)


def marginals_from_potentials(s: ModularVector) -> np.ndarray:
    return expit(-np.asarray(s, dtype=float))


def map_from_marginals(p, tau: float = MAP_TAU) -> Tuple[SubsetMask, SubsetMask]:
    """Minimal and maximal MAP sets by thresholding the marginals at 1/2."""
    p = np.asarray(p, dtype=float)
    return p > 0.5 + tau, p >= 0.5 - tau


def result_from_potentials(s: ModularVector, report: SolverReport) -> InferenceResult:
    p = marginals_from_potentials(s)
    minimal, maximal = map_from_marginals(p)
    return InferenceResult(
        s_star=np.asarray(s, dtype=float),
        marginals=p,
        log_z_upper=logpartition_upper_bound(s),
        map_minimal=minimal,
        map_maximal=maximal,
        report=report,
    )


def lfield_infer(
    F: SubmodularOracle,
    method: str = "min_norm",
    iters: int = 2000,
    tol: float = 1e-10,
) -> InferenceResult:
    if method == "min_norm":
        report = min_norm_point(F, tol=tol)
    elif method == "divide_and_conquer":
        report = divide_and_conquer_report(F, Logistic())
    elif method == "frank_wolfe":
        report = frank_wolfe_lfield(F, iters=iters, variant="away", tol=tol)
    else:
        raise ValueError(f"unknown inference method {method!r}; expected one of {METHODS}")
    return result_from_potentials(report.solution, report)
