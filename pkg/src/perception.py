"""
STP/MSTP data model, sector discretization, score combination and the
geometry-driven stand-in for the trained detector.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
import math
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

import vision


DEFAULT_SECTORS = 8
DEFAULT_HISTORY = 30
TEMPORAL_IOU_WEIGHT = 0.7
TEMPORAL_SECTOR_WEIGHT = 0.3


@dataclass(frozen=True)
class BBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box {self}")

    @property
    def cx(self) -> float:
        return (self.x1 + self.x2) / 2

    @property
    def cy(self) -> float:
        return (self.y1 + self.y2) / 2

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def inside(self, width, height) -> bool:
        return self.x1 >= 0 and self.y1 >= 0 and self.x2 <= width and self.y2 <= height

    def to_list(self):
        return [self.x1, self.y1, self.x2, self.y2]


def clip_box(x1, y1, x2, y2, width, height) -> Optional[BBox]:
    x1, x2 = max(0.0, x1), min(float(width), x2)
    y1, y2 = max(0.0, y1), min(float(height), y2)
    if x2 - x1 < 1 or y2 - y1 < 1:
        return None
    return BBox(x1, y1, x2, y2)


@dataclass(frozen=True)
class STPCandidate:
    box: BBox
    det_score: float
    embedding: np.ndarray = field(repr=False, compare=False)
    sector: int
    free_space: float = 0.0
    source: str = ""

    def __post_init__(self):
        if not 0.0 <= self.det_score <= 1.0:
            raise ValueError(f"det_score out of range: {self.det_score}")


@dataclass(frozen=True)
class MstpSelection:
    candidate: STPCandidate
    final_score: float
    t: int

    @property
    def box(self) -> BBox:
        return self.candidate.box

    @property
    def sector(self) -> int:
        return self.candidate.sector


@dataclass(frozen=True)
class ScoreWeights:
    alpha: float = 1.0
    beta: float = 0.0
    gamma: float = 0.5
    sector_prior: Tuple[float, ...] = (0.2,) * DEFAULT_SECTORS
    w_free: float = 0.2

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("score weights must be nonnegative")
        if max(self.alpha, self.beta, self.gamma) <= 0:
            raise ValueError("at least one of alpha, beta, gamma must be positive")
        object.__setattr__(self, "sector_prior", tuple(float(v) for v in self.sector_prior))

    @property
    def sectors(self) -> int:
        return len(self.sector_prior)

    def scaled(self, factor: float) -> "ScoreWeights":
        return ScoreWeights(
            alpha=self.alpha * factor,
            beta=self.beta * factor,
            gamma=self.gamma * factor,
            sector_prior=tuple(v * factor for v in self.sector_prior),
            w_free=self.w_free * factor,
        )


class SectorHistogram:
    """Sector counts of the MSTP over the last `window` frames."""

    def __init__(self, sectors=DEFAULT_SECTORS, window=DEFAULT_HISTORY):
        self.sectors = sectors
        self.window = window
        self._recent = deque(maxlen=window)
        self.counts = [0] * sectors

    def push(self, sector: Optional[int]):
        if len(self._recent) == self.window:
            dropped = self._recent[0]
            if dropped is not None:
                self.counts[dropped - 1] -= 1
        self._recent.append(sector)
        if sector is not None:
            self.counts[sector - 1] += 1

    def fraction(self, sector: int) -> float:
        return self.counts[sector - 1] / self.window

    def explored(self, sector: int) -> bool:
        return self.counts[sector - 1] > 0


@dataclass(frozen=True)
class NoiseModel:
    miss_prob: float = 0.0
    jitter_px: float = 0.0
    sector_bias: Tuple[float, ...] = (1.0,) * DEFAULT_SECTORS
    decoy_rate: float = 0.0
    dark_miss_boost: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ["miss_prob", "dark_miss_boost"]:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.jitter_px < 0 or self.decoy_rate < 0:
            raise ValueError("jitter_px and decoy_rate must be nonnegative")
        if any(v < 0 for v in self.sector_bias):
            raise ValueError("sector_bias entries must be nonnegative")
        object.__setattr__(self, "sector_bias", tuple(float(v) for v in self.sector_bias))

    def rng(self, run_seed=0) -> np.random.Generator:
        return np.random.default_rng([self.seed, run_seed])


def sector_of(box: BBox, sectors: int, screen_width: float) -> int:
    index = 1 + math.floor(sectors * box.cx / screen_width)
    return max(1, min(sectors, index))


def iou(a: BBox, b: BBox) -> float:
    ix = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    intersection = ix * iy
    union = a.area + b.area - intersection
    return intersection / union if union > 0 else 0.0


def temporal_score(candidate: STPCandidate, prev: Optional[MstpSelection]) -> float:
    if prev is None:
        return 0.0
    delta = candidate.sector - prev.sector
    return (TEMPORAL_IOU_WEIGHT * iou(candidate.box, prev.box)
            + TEMPORAL_SECTOR_WEIGHT * math.exp(-delta * delta / 2))


def psi_score(candidate: STPCandidate, hist: SectorHistogram, free_space: float,
              weights: ScoreWeights) -> float:
    prior = weights.sector_prior[candidate.sector - 1]
    return prior * hist.fraction(candidate.sector) + weights.w_free * free_space


def retrieval_score(embedding: np.ndarray, library=None) -> float:
    """Score against an offline STP database; no database ships, so always 0."""
    return 0.0


def no_penalty(sector: int) -> float:
    return 0.0


def base_score(candidate, prev, hist, weights, retrieval=retrieval_score) -> float:
    return (weights.alpha * candidate.det_score
            + weights.beta * retrieval(candidate.embedding)
            + weights.gamma * temporal_score(candidate, prev)
            + psi_score(candidate, hist, candidate.free_space, weights))


def select_mstp(candidates: Sequence[STPCandidate], prev: Optional[MstpSelection],
                hist: SectorHistogram, weights: ScoreWeights,
                penalty_fn: Callable[[int], float] = no_penalty, t=0,
                retrieval=retrieval_score) -> Optional[MstpSelection]:
    """Pick the candidate maximizing score minus sector penalty.

    Ties go to the higher det_score, then the lower sector, then the smaller x1.
    """
    best_key = None
    best = None
    for candidate in candidates:
        final = (base_score(candidate, prev, hist, weights, retrieval)
                 - penalty_fn(candidate.sector))
        key = (final, candidate.det_score, -candidate.sector, -candidate.box.x1)
        if best_key is None or key > best_key:
            best_key = key
            best = MstpSelection(candidate, final, t)
    return best


@dataclass(frozen=True)
class Projection:
    """A portal (or decoy patch) as seen from the current pose."""
    portal_id: str
    box: BBox
    occlusion: float
    tags: frozenset
    free_space: float
    salience: float = 1.0


def _crop_embedding(frame: Optional[vision.Frame], box: BBox) -> np.ndarray:
    if frame is None:
        return vision.embed(vision.Frame.from_array(np.zeros((1, 1))))
    x1, y1 = int(math.floor(box.x1)), int(math.floor(box.y1))
    x2, y2 = max(x1 + 1, int(math.ceil(box.x2))), max(y1 + 1, int(math.ceil(box.y2)))
    crop = frame.pixels[y1:y2, x1:x2]
    return vision.embed(vision.Frame(crop.shape[1], crop.shape[0], crop, frame.t))


def simulated_detect(visible: Sequence[Projection], noise: NoiseModel, rng: np.random.Generator,
                     screen=(320, 180), sectors=DEFAULT_SECTORS,
                     frame: Optional[vision.Frame] = None) -> list:
    """Turn ground-truth projections into noisy STP candidates.

    Random draws happen in a fixed order (per projection: keep, 4 corner
    offsets; then decoy count, then per decoy: 4 coordinates and a score), so
    identical inputs and generator state give identical output.
    """
    width, height = screen
    candidates = []
    for projection in visible:
        dark = "dark" in projection.tags
        keep_prob = (1.0 - noise.miss_prob - noise.dark_miss_boost * dark) * (1.0 - projection.occlusion)
        keep_prob = min(1.0, max(0.0, keep_prob))
        keep = rng.random() < keep_prob
        offsets = rng.normal(0.0, 1.0, size=4) * noise.jitter_px
        if not keep:
            continue
        box = projection.box
        box = clip_box(box.x1 + offsets[0], box.y1 + offsets[1],
                       box.x2 + offsets[2], box.y2 + offsets[3], width, height)
        if box is None:
            continue
        sector = sector_of(box, sectors, width)
        det_score = noise.sector_bias[sector - 1] * projection.salience * (1.0 - projection.occlusion)
        det_score = min(1.0, max(0.0, det_score))
        candidates.append(STPCandidate(
            box, det_score, _crop_embedding(frame, box), sector,
            free_space=projection.free_space, source=projection.portal_id))

    for i in range(rng.poisson(noise.decoy_rate)):
        xs = np.sort(rng.uniform(0, width, size=2))
        ys = np.sort(rng.uniform(0, height, size=2))
        det_score = float(rng.uniform(0.3, 0.7))
        box = clip_box(xs[0], ys[0], xs[1], ys[1], width, height)
        if box is None:
            continue
        candidates.append(STPCandidate(
            box, det_score, _crop_embedding(frame, box), sector_of(box, sectors, width),
            source=f"spurious-{i}"))
    return candidates
