"""Linear-rate checks for message-passing traces on regular factor graphs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from packages.message_passing.graph import FactorGraph
from packages.message_passing.solver import ConvergenceTrace
from packages.submodular.oracles import ModularVector

# Errors below this are round-off and are left out of the log-linear fit.
FIT_FLOOR = 1e-13


def displayed_rate(graph: FactorGraph) -> float:
    """1 - 1/(|V|^2 Delta_V^2), the per-round factor in the error bound."""
    return 1.0 - 1.0 / (graph.n ** 2 * graph.max_degree ** 2)


def prose_rate(graph: FactorGraph) -> float:
    """(1 - 1/(|V| Delta_V))^2, the other form the rate is quoted in."""
    return (1.0 - 1.0 / (graph.n * graph.max_degree)) ** 2


def _errors(trace: ConvergenceTrace) -> np.ndarray:
    if not trace.error_to_reference or any(e is None for e in trace.error_to_reference):
        raise ValueError("trace was recorded without a reference; rerun with reference=q_star")
    return np.asarray(trace.error_to_reference, dtype=float)


def rate_bound(graph: FactorGraph, q_star: ModularVector, q_zero: ModularVector, t) -> np.ndarray:
    """2 ||q^0 - q*||_inf sqrt(Delta_V E) (1 - 1/(|V|^2 Delta_V^2))^t."""
    t = np.asarray(t, dtype=float)
    start = 2.0 * float(np.max(np.abs(np.asarray(q_zero) - np.asarray(q_star))))
    return start * np.sqrt(graph.max_degree * graph.n_edges) * displayed_rate(graph) ** t


def check_linear_rate(
    trace: ConvergenceTrace,
    graph: FactorGraph,
    q_star: ModularVector,
    q_zero: Optional[ModularVector] = None,
) -> bool:
    """True iff ||q^t - q*|| stays under the linear-rate bound at every recorded round."""
    if not graph.is_regular:
        raise ValueError(f"graph is not regular (degrees {sorted(set(graph.degrees.tolist()))})")
    q_zero = trace.q_zero if q_zero is None else q_zero
    if q_zero is None:
        raise ValueError("initial aggregate q^0 is required")
    errors = _errors(trace)
    bound = rate_bound(graph, q_star, q_zero, trace.iteration)
    return bool(np.all(errors <= bound + 1e-12))


@dataclass
class RateFit:
    fitted_rate: float
    slope: float
    displayed_rate: float
    prose_rate: float
    points: int

    def to_dict(self) -> dict:
        return {
            "fitted_rate": self.fitted_rate,
            "slope": self.slope,
            "displayed_rate": self.displayed_rate,
            "prose_rate": self.prose_rate,
            "points": self.points,
        }


def fit_linear_rate(trace: ConvergenceTrace, graph: FactorGraph) -> RateFit:
    """Least-squares slope of log ||q^t - q*|| against t, next to both theoretical rates."""
    errors = _errors(trace)
    t = np.asarray(trace.iteration, dtype=float)
    keep = errors > FIT_FLOOR
    if keep.sum() < 2:
        raise ValueError("need at least two rounds with a nonzero error to fit a rate")
    slope, _ = np.polyfit(t[keep], np.log(errors[keep]), 1)
    return RateFit(
        fitted_rate=float(np.exp(slope)),
        slope=float(slope),
        displayed_rate=displayed_rate(graph),
        prose_rate=prose_rate(graph),
        points=int(keep.sum()),
    )
