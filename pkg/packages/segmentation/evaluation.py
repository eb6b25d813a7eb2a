"""ROC/AUC of per-pixel marginals against a binary ground truth, overall and in trimap bands."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage
from scipy.integrate import trapezoid

from packages.shared.errors import GroundSetError

TRIMAP_RADII = tuple(range(1, 11))


def roc_points(scores, truth) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """(false alarm rate, detection rate) for every distinct threshold, predicting score >= threshold.

    Runs from (0, 0) (threshold above every score) to (1, 1).
    """
    scores = np.asarray(scores, dtype=float).ravel()
    truth = np.asarray(truth, dtype=bool).ravel()
    if scores.shape != truth.shape:
        raise GroundSetError(f"{scores.size} scores for {truth.size} labels")
    n_pos, n_neg = int(truth.sum()), int((~truth).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes in the ground truth")
    order = np.argsort(-scores, kind="stable")
    s, t = scores[order], truth[order]
    # Last index of each run of equal scores closes one threshold.
    ends = np.flatnonzero(np.append(np.diff(s) != 0, True))
    tp = np.cumsum(t)[ends]
    fp = np.cumsum(~t)[ends]
    far = np.concatenate([[0.0], fp / n_neg])
    dr = np.concatenate([[0.0], tp / n_pos])
    return far, dr


def auc(scores, truth) -> Optional[float]:
    """Area under the ROC curve by the trapezoid rule; None for single-class ground truth."""
    truth = np.asarray(truth, dtype=bool)
    if truth.all() or not truth.any():
        return None
    far, dr = roc_points(scores, truth)
    return float(trapezoid(dr, far))


def boundary(truth) -> NDArray[np.bool_]:
    """Pixels on either side of the ground-truth contour."""
    truth = np.asarray(truth, dtype=bool)
    inner = truth & ~ndimage.binary_erosion(truth, border_value=1)
    outer = ndimage.binary_dilation(truth) & ~truth
    return inner | outer


def trimap_bands(truth, radii: Sequence[int] = TRIMAP_RADII) -> List[NDArray[np.bool_]]:
    """The contour grown by each radius; bands are nested and grow with the radius."""
    edge = boundary(truth)
    if not edge.any():
        return [np.zeros_like(edge) for _ in radii]
    return [ndimage.binary_dilation(edge, iterations=int(r)) for r in radii]


@dataclass
class EvaluationReport:
    far: List[float]
    dr: List[float]
    auc: Optional[float]
    band_aucs: List[Optional[float]] = field(default_factory=list)
    radii: List[int] = field(default_factory=list)

    @property
    def mean_band_auc(self) -> Optional[float]:
        values = [a for a in self.band_aucs if a is not None]
        return float(np.mean(values)) if values else None

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "mean_trimap_auc": self.mean_band_auc,
            "trimap": [{"radius": r, "auc": a} for r, a in zip(self.radii, self.band_aucs)],
            "roc": {"false_alarm_rate": self.far, "detection_rate": self.dr},
        }


def evaluate(marginals, truth, radii: Sequence[int] = TRIMAP_RADII) -> EvaluationReport:
    marginals = np.asarray(marginals, dtype=float)
    truth = np.asarray(truth, dtype=bool)
    if marginals.shape != truth.shape:
        raise GroundSetError(f"marginals {marginals.shape} and ground truth {truth.shape} differ in shape")
    overall = auc(marginals, truth)
    far, dr = roc_points(marginals, truth) if overall is not None else (np.zeros(0), np.zeros(0))
    bands = trimap_bands(truth, radii) if truth.ndim == 2 else []
    return EvaluationReport(
        far=[float(x) for x in far],
        dr=[float(x) for x in dr],
        auc=overall,
        band_aucs=[auc(marginals[b], truth[b]) if b.any() else None for b in bands],
        radii=[int(r) for r in radii][: len(bands)],
    )
