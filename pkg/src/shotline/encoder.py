"""Shot and video encoding: sparse frame sampling plus average pooling.

A shot feature is the mean of a few sampled frame features; a video
feature is the mean of a few sampled shot features. Both pooling levels
are differentiable, so a learnable projection inside the frame extractor
trains end to end with whatever head sits on top.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .features import FeatureStore
from .frames import FrameSequence
from .segment import SegmenterParams, Shot, frame_histogram


def sample_frames(shot: Shot, m: int, rng: np.random.Generator | None = None) -> list[int]:
    """Pick m frame indices from a shot, one per equal segment.

    Without an rng each segment contributes its center frame; with one,
    a uniform draw inside the segment. Shots shorter than m repeat
    indices by the same segment arithmetic.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    length = shot.length
    picks = []
    for i in range(m):
        lo = (i * length) // m
        hi = ((i + 1) * length) // m
        if rng is None or hi <= lo:
            offset = int((2 * i + 1) * length // (2 * m))
        else:
            offset = int(rng.integers(lo, hi))
        picks.append(shot.start + offset)
    return picks


def sample_shots(shot_count: int, n: int, rng: np.random.Generator | None = None) -> list[int]:
    """Pick n shot indices from a video, returned in temporal order.

    Without an rng the indices are evenly spaced; with one they are
    distinct uniform draws (with replacement only when the video has
    fewer than n shots).
    """
    if shot_count < 1:
        raise ValueError("sample_shots: video has no shots")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if rng is None:
        return [(i * shot_count) // n for i in range(n)]
    if shot_count >= n:
        picks = rng.choice(shot_count, size=n, replace=False)
    else:
        picks = rng.integers(0, shot_count, size=n)
    return sorted(int(i) for i in picks)


class HistogramEdgeExtractor:
    """Hand-crafted frame descriptor with an optional learnable projection.

    The raw descriptor concatenates a 128-bin HSV histogram, an 8-bin
    gradient orientation histogram, and the intensity mean and standard
    deviation (138 values). When projection_dim is set, a trainable
    linear map takes the descriptor to that dimension.
    """

    RAW_DIM = 138

    def __init__(self, projection_dim: int | None = 64,
                 rng: np.random.Generator | None = None,
                 params: SegmenterParams | None = None):
        self.params = params or SegmenterParams()
        if self.params.total_bins != 128:
            raise ValueError("descriptor layout assumes 128 HSV bins")
        self.projection_dim = projection_dim
        if projection_dim is not None:
            if rng is None:
                raise ValueError("a projection needs an rng for initialization")
            bound = 1.0 / np.sqrt(self.RAW_DIM)
            weights = rng.uniform(-bound, bound, size=(self.RAW_DIM, projection_dim))
            self.projection = Tensor(weights.astype(np.float32), requires_grad=True)
        else:
            self.projection = None

    @property
    def dim(self) -> int:
        return self.projection_dim if self.projection_dim is not None else self.RAW_DIM

    def describe(self, frame: np.ndarray) -> np.ndarray:
        """Raw 138-value descriptor of one RGB frame."""
        hsv = frame_histogram(frame, self.params)
        gray = np.asarray(frame, dtype=np.float64).mean(axis=2)
        gy, gx = np.gradient(gray)
        magnitude = np.hypot(gx, gy)
        total = magnitude.sum()
        if total > 0:
            angle = np.arctan2(gy, gx)  # [-pi, pi)
            bins = np.minimum(((angle + np.pi) / (2 * np.pi) * 8).astype(np.int64), 7)
            orient = np.bincount(bins.reshape(-1), weights=magnitude.reshape(-1), minlength=8)
            orient = orient / total
        else:
            orient = np.full(8, 1.0 / 8)
        moments = np.array([gray.mean() / 255.0, gray.std() / 255.0])
        return np.concatenate([hsv, orient, moments]).astype(np.float32)

    def project(self, rows: Tensor) -> Tensor:
        if self.projection is None:
            return rows
        return ad.matmul(rows, self.projection)

    def parameters(self) -> dict:
        return {} if self.projection is None else {"projection": self.projection}


def encode_shot(shot: Shot, seq: FrameSequence, extractor, m: int = 3,
                rng: np.random.Generator | None = None) -> Tensor:
    """Mean of m sampled frame features; differentiable through the extractor."""
    if shot.start < 0 or shot.end > seq.frame_count:
        raise ValueError(f"shot [{shot.start}, {shot.end}) outside sequence of {seq.frame_count} frames")
    picks = sample_frames(shot, m, rng)
    raw = np.stack([extractor.describe(seq.frame(i)) for i in picks])
    return ad.mean_rows(extractor.project(Tensor(raw)))


def encode_video(shots: list[Shot], seq: FrameSequence, extractor, n: int = 8, m: int = 3,
                 rng: np.random.Generator | None = None) -> Tensor:
    """Mean of n sampled shot features (second pooling level)."""
    if not shots:
        raise ValueError("encode_video: video has no shots")
    picks = sample_shots(len(shots), n, rng)
    pooled = [encode_shot(shots[i], seq, extractor, m, rng) for i in picks]
    return ad.mean_rows(ad.stack_rows(pooled))


def extract_features(seq: FrameSequence, shots: list[Shot], extractor, m: int = 3,
                     store: FeatureStore | None = None) -> FeatureStore:
    """Deterministic (center-frame) shot descriptors for the cache.

    Raw descriptors are cached, not projected ones, so a projection can
    keep training against cached features.
    """
    dim = extractor.RAW_DIM if hasattr(extractor, "RAW_DIM") else extractor.dim
    if store is None:
        store = FeatureStore(dim)
    for shot in shots:
        picks = sample_frames(shot, m, rng=None)
        raw = np.stack([extractor.describe(seq.frame(i)) for i in picks])
        store.add(shot.video_id, shot.ordinal, raw.mean(axis=0))
    return store
