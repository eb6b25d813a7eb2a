"""Exact inference by enumeration, the ground truth for small ground sets."""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from packages.shared.errors import ProblemTooLargeError
from packages.submodular.oracles import SubmodularOracle, all_subset_values, enumerate_masks

EXACT_MAX_N = 20


def _guard(F: SubmodularOracle, operation: str) -> None:
    if F.n > EXACT_MAX_N:
        raise ProblemTooLargeError(operation, F.n, EXACT_MAX_N)


def exact_partition(F: SubmodularOracle) -> float:
    """log Z = log sum_A exp(-F(A)), in nats."""
    _guard(F, "exact_partition")
    return float(logsumexp(-all_subset_values(F)))


def exact_marginals(F: SubmodularOracle) -> np.ndarray:
    _guard(F, "exact_marginals")
    values = all_subset_values(F)
    log_z = logsumexp(-values)
    p = np.zeros(F.n)
    for codes, masks in enumerate_masks(F.n):
        p += np.exp(-values[codes] - log_z) @ masks
    return p
