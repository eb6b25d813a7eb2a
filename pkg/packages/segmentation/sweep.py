"""Grid search over segmentation weights, ranked by mean trimap AUC."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from packages.segmentation.evaluation import evaluate
from packages.segmentation.model import ImageGrid, SegmentationParams, segment

logger = logging.getLogger(__name__)

THETAS = (0.1, 0.001, 0.0001)
ALPHAS = (1.0, 0.1, 0.01, 0.001)
BETAS = (10.0, 1.0, 0.1, 0.01, 0.001)
GAMMAS = (10.0, 1.0, 0.1, 0.01, 0.001)


@dataclass
class SweepRow:
    theta: float
    alpha: float
    beta: float
    gamma: float
    auc: Optional[float]
    mean_trimap_auc: Optional[float]
    converged: bool
    iterations: int

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


def _rank_key(row: SweepRow):
    mean = row.mean_trimap_auc if row.mean_trimap_auc is not None else -np.inf
    overall = row.auc if row.auc is not None else -np.inf
    return (-mean, -overall)


def sweep(
    image: ImageGrid,
    truth: np.ndarray,
    base: SegmentationParams,
    thetas: Sequence[float] = THETAS,
    alphas: Sequence[float] = ALPHAS,
    betas: Sequence[float] = BETAS,
    gammas: Sequence[float] = GAMMAS,
    unaries: Optional[np.ndarray] = None,
    seeds=None,
    regions=None,
    progress: bool = True,
) -> List[SweepRow]:
    """Segment once per (theta, alpha, beta, gamma) and return the rows best first."""
    grid = list(itertools.product(thetas, alphas, betas, gammas))
    rows: List[SweepRow] = []
    for theta, alpha, beta, gamma in tqdm(grid, desc="sweep", disable=not progress):
        params = base.model_copy(update={"theta": theta, "alpha": alpha, "beta": beta, "gamma": gamma})
        result = segment(image, params, unaries=unaries, seeds=seeds, regions=regions)
        report = evaluate(result.marginals, truth)
        rows.append(
            SweepRow(
                theta=theta,
                alpha=alpha,
                beta=beta,
                gamma=gamma,
                auc=report.auc,
                mean_trimap_auc=report.mean_band_auc,
                converged=result.inference.report.converged,
                iterations=result.inference.report.iterations,
            )
        )
        logger.debug("sweep %s -> auc=%s trimap=%s", rows[-1], report.auc, report.mean_band_auc)
    rows.sort(key=_rank_key)
    return rows
