"""Ranking metrics for multi-label tag prediction.

Both metrics are rank-based: any strictly increasing transform of the
scores leaves them unchanged. Ties break deterministically by ascending
index.
"""
from __future__ import annotations

import numpy as np


def _ranked_labels(scores: np.ndarray) -> np.ndarray:
    # lexsort is stable: sort by -score, then by label index for ties
    return np.lexsort((np.arange(scores.shape[0]), -scores.astype(np.float64)))


def recall_at_k(scores: np.ndarray, truths: list[set], k: int = 3) -> float:
    """Mean over videos of |top-k predictions ∩ truth| / min(k, |truth|).

    Videos with empty truth sets are skipped.
    """
    scores = np.asarray(scores)
    if scores.ndim != 2 or scores.shape[0] != len(truths):
        raise ValueError(f"scores {scores.shape} do not cover {len(truths)} videos")
    per_video = []
    for row, truth in zip(scores, truths):
        if not truth:
            continue
        top = set(_ranked_labels(row)[:k].tolist())
        per_video.append(len(top & truth) / min(k, len(truth)))
    if not per_video:
        raise ValueError("recall_at_k: every video has an empty truth set")
    return float(np.mean(per_video))


def average_precision(ranked_relevance: np.ndarray) -> float:
    """AP of one ranked 0/1 relevance list: sum of precision@hit / #positives."""
    rel = np.asarray(ranked_relevance, dtype=np.float64)
    positives = rel.sum()
    if positives == 0:
        raise ValueError("average_precision: no positives")
    precision_at = np.cumsum(rel) / np.arange(1, rel.size + 1)
    return float((precision_at * rel).sum() / positives)


def mean_average_precision(scores: np.ndarray, truths: list[set], axis: str = "label") -> float:
    """Label-centric MAP (default): rank videos per label, average the APs.

    The video-centric variant ranks labels per video instead. Labels (or
    videos) without a positive are excluded.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] != len(truths):
        raise ValueError(f"scores {scores.shape} do not cover {len(truths)} videos")
    n_videos, n_labels = scores.shape
    aps = []
    if axis == "label":
        hot = np.zeros((n_videos, n_labels), dtype=np.float64)
        for i, truth in enumerate(truths):
            hot[i, sorted(truth)] = 1.0
        for j in range(n_labels):
            if hot[:, j].sum() == 0:
                continue
            order = np.lexsort((np.arange(n_videos), -scores[:, j]))
            aps.append(average_precision(hot[order, j]))
    elif axis == "video":
        for i, truth in enumerate(truths):
            if not truth:
                continue
            order = _ranked_labels(scores[i])
            rel = np.array([1.0 if j in truth else 0.0 for j in order])
            aps.append(average_precision(rel))
    else:
        raise ValueError(f"unknown axis {axis!r} (expected 'label' or 'video')")
    if not aps:
        raise ValueError("mean_average_precision: nothing to rank")
    return float(np.mean(aps))
