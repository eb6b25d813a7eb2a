"""Foreground/background segmentation as a decomposable submodular model.

F(A) = alpha m(A) + beta F_cut(A) + gamma sum_i phi(|A ∩ P_i| / |P_i|), A = foreground
pixels. Pixels are flattened row-major; every grid edge is its own cut factor,
every superpixel its own concave-of-cardinality factor, and the unaries one
modular factor over all pixels.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Literal, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, Field, field_validator
from scipy.stats import norm

from packages.inference.lfield import InferenceResult
from packages.message_passing.graph import Factor, FactorGraph, build_factor_graph
from packages.message_passing.solver import ConvergenceTrace, run_parallel_mp
from packages.segmentation.superpixels import Region, layered_superpixels
from packages.shared.errors import GroundSetError, ModelFormatError
from packages.submodular.oracles import PHI_REGISTRY, ConcaveCardinality, Cut, Modular, Sum

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-4
MODES = ("pairwise", "hop", "both", "unary")


class SegmentationParams(BaseModel):
    alpha: float = Field(1.0, ge=0.0, description="Weight of the unary potentials")
    beta: float = Field(1.0, ge=0.0, description="Weight of the pairwise cut")
    gamma: float = Field(0.1, ge=0.0, description="Weight of the superpixel terms")
    theta: float = Field(0.1, ge=0.0, description="Colour sensitivity of the edge weights")
    blocks: List[int] = Field(default_factory=lambda: [4, 8], description="Block size per superpixel layer")
    mode: Literal["pairwise", "hop", "both", "unary"] = "both"
    phi: str = "z(1-z)"
    tol: float = Field(1e-5, gt=0.0)
    max_iter: int = Field(500, ge=1)

    @field_validator("blocks")
    @classmethod
    def _blocks_at_least_two(cls, v: List[int]) -> List[int]:
        if any(b < 2 for b in v):
            raise ValueError(f"superpixel blocks must be >= 2, got {v}")
        return v

    @field_validator("phi")
    @classmethod
    def _known_phi(cls, v: str) -> str:
        if v not in PHI_REGISTRY:
            raise ValueError(f"unknown phi {v!r}")
        return v

    def effective_weights(self) -> Tuple[float, float, float]:
        """(alpha, beta, gamma) after the mode switches terms off."""
        beta = 0.0 if self.mode in ("hop", "unary") else self.beta
        gamma = 0.0 if self.mode in ("pairwise", "unary") else self.gamma
        return self.alpha, beta, gamma


@dataclass
class ImageGrid:
    """RGB image in [0, 1] on a 4-connected pixel grid."""

    rgb: NDArray[np.float64]

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=float)
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3 or self.rgb.shape[0] < 1 or self.rgb.shape[1] < 1:
            raise ModelFormatError(f"expected an (height, width, 3) image, got {self.rgb.shape}")
        if self.rgb.min() < 0.0 or self.rgb.max() > 1.0:
            raise ModelFormatError("pixel values must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    @property
    def n(self) -> int:
        return self.height * self.width

    def pixels(self) -> NDArray[np.float64]:
        return self.rgb.reshape(-1, 3)

    def neighbor_pairs(self) -> Tuple[NDArray[np.intp], NDArray[np.intp]]:
        """Right neighbours first, then down neighbours, each in row-major order."""
        index = np.arange(self.n, dtype=np.intp).reshape(self.shape)
        u = np.concatenate([index[:, :-1].ravel(), index[:-1, :].ravel()])
        v = np.concatenate([index[:, 1:].ravel(), index[1:, :].ravel()])
        return u, v


class PairwiseEdges(NamedTuple):
    u: NDArray[np.intp]
    v: NDArray[np.intp]
    w: NDArray[np.float64]


def build_pairwise_weights(image: ImageGrid, theta: float) -> PairwiseEdges:
    """w = exp(-theta ||x_u - x_v||^2) for every 4-neighbour pair."""
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    u, v = image.neighbor_pairs()
    x = image.pixels()
    dist2 = np.sum((x[u] - x[v]) ** 2, axis=1)
    return PairwiseEdges(u=u, v=v, w=np.exp(-theta * dist2))


def _gaussian_loglik(x: NDArray[np.float64], samples: NDArray[np.float64]) -> NDArray[np.float64]:
    mean = samples.mean(axis=0)
    std = np.sqrt(np.maximum(samples.var(axis=0), VARIANCE_FLOOR))
    return norm.logpdf(x, loc=mean, scale=std).sum(axis=1)


def compute_unaries(image: ImageGrid, fg_seeds, bg_seeds) -> NDArray[np.float64]:
    """m_p = log l_bg(x_p) - log l_fg(x_p) from one diagonal Gaussian per seed set.

    Negative m favours foreground.
    """
    fg = np.asarray(fg_seeds, dtype=bool).ravel()
    bg = np.asarray(bg_seeds, dtype=bool).ravel()
    if fg.size != image.n or bg.size != image.n:
        raise GroundSetError("seed masks must match the image size")
    if not fg.any() or not bg.any():
        raise ValueError("both foreground and background seeds are required")
    x = image.pixels()
    return _gaussian_loglik(x, x[bg]) - _gaussian_loglik(x, x[fg])


def default_seeds(shape: Tuple[int, int]) -> Tuple[NDArray[np.bool_], NDArray[np.bool_]]:
    """Border pixels as background; the central box of half the height and width (a quarter of the pixels) as foreground."""
    height, width = shape
    bg = np.zeros(shape, dtype=bool)
    bg[0, :] = bg[-1, :] = bg[:, 0] = bg[:, -1] = True
    fg = np.zeros(shape, dtype=bool)
    r0, c0 = height // 4, width // 4
    fg[r0:max(r0 + 1, height - r0), c0:max(c0 + 1, width - c0)] = True
    fg &= ~bg
    if not fg.any():
        raise ValueError(f"image of shape {shape} is too small for default seeds")
    return fg, bg


def seeds_from_gray(gray: np.ndarray, maxval: int = 255) -> Tuple[NDArray[np.bool_], NDArray[np.bool_]]:
    """Seed image: maxval marks foreground, 0 background, anything else unlabeled."""
    gray = np.asarray(gray)
    return gray == maxval, gray == 0


@dataclass
class SegmentationModel:
    params: SegmentationParams
    grid: ImageGrid
    unaries: NDArray[np.float64]
    edges: PairwiseEdges
    regions: List[Region] = field(default_factory=list)

    @classmethod
    def build(
        cls,
        image: ImageGrid,
        params: SegmentationParams,
        unaries: Optional[np.ndarray] = None,
        seeds: Optional[Tuple[np.ndarray, np.ndarray]] = None,
        regions: Optional[Sequence[Region]] = None,
    ) -> "SegmentationModel":
        if unaries is None:
            fg, bg = seeds if seeds is not None else default_seeds(image.shape)
            unaries = compute_unaries(image, fg, bg)
        unaries = np.asarray(unaries, dtype=float).ravel()
        if unaries.size != image.n:
            raise GroundSetError(f"{unaries.size} unaries for {image.n} pixels")
        if regions is None:
            regions = layered_superpixels(image, params.blocks)
        return cls(
            params=params,
            grid=image,
            unaries=unaries,
            edges=build_pairwise_weights(image, params.theta),
            regions=list(regions),
        )

    def _hop(self, size: int, gamma: float) -> ConcaveCardinality:
        return ConcaveCardinality(size, range(size), gamma, phi=PHI_REGISTRY[self.params.phi], phi_name=self.params.phi)

    def to_factors(self) -> List[Factor]:
        alpha, beta, gamma = self.params.effective_weights()
        n = self.grid.n
        factors = [Factor(Modular(alpha * self.unaries), np.arange(n, dtype=np.intp))]
        if beta > 0:
            factors.extend(
                Factor(Cut(2, [(0, 1, beta * w)]), np.array([u, v], dtype=np.intp))
                for u, v, w in zip(self.edges.u, self.edges.v, self.edges.w)
            )
        if gamma > 0:
            factors.extend(Factor(self._hop(r.size, gamma), r) for r in self.regions if r.size > 1)
        return factors

    def to_graph(self) -> FactorGraph:
        return build_factor_graph(self.to_factors(), n=self.grid.n)

    def to_oracle(self) -> Sum:
        """The same F as one monolithic oracle."""
        alpha, beta, gamma = self.params.effective_weights()
        n = self.grid.n
        terms = [(Modular(alpha * self.unaries), None)]
        if beta > 0:
            terms.append((Cut(n, list(zip(self.edges.u, self.edges.v, beta * self.edges.w))), None))
        if gamma > 0:
            terms.extend((self._hop(r.size, gamma), r) for r in self.regions if r.size > 1)
        return Sum(n, terms)


@dataclass
class SegmentationResult:
    marginals: NDArray[np.float64]  # (height, width)
    map_mask: NDArray[np.bool_]  # minimal MAP set, (height, width)
    inference: InferenceResult
    trace: ConvergenceTrace

    def metadata(self) -> dict:
        report = self.inference.report
        return {
            "pixels": int(self.marginals.size),
            "foreground_pixels": int(self.map_mask.sum()),
            "log_z_upper": float(self.inference.log_z_upper),
            "converged": bool(report.converged),
            "iterations": int(report.iterations),
            "gap": float(report.gap),
            "milliseconds": round(float(report.milliseconds), 3),
        }


def segment(
    image: ImageGrid,
    params: SegmentationParams,
    unaries: Optional[np.ndarray] = None,
    seeds: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    regions: Optional[Sequence[Region]] = None,
    workers: Optional[int] = None,
    progress: bool = False,
) -> SegmentationResult:
    model = SegmentationModel.build(image, params, unaries=unaries, seeds=seeds, regions=regions)
    graph = model.to_graph()
    logger.info(
        "segment %dx%d mode=%s factors=%d max_degree=%d",
        image.height, image.width, params.mode, len(graph.factors), graph.max_degree,
    )
    result, trace = run_parallel_mp(graph, tol=params.tol, max_iter=params.max_iter, workers=workers, progress=progress)
    if not result.report.converged:
        logger.warning("segmentation did not converge within %d rounds", params.max_iter)
    return SegmentationResult(
        marginals=result.marginals.reshape(image.shape),
        map_mask=result.map_minimal.reshape(image.shape),
        inference=result,
        trace=trace,
    )
