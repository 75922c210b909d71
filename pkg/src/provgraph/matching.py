"""Nearest-neighbour descriptor matching with the distance-ratio test."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .errors import DimensionMismatch

# Candidates re-scored with exact distances after the fast Gram-matrix pass.
_SHORTLIST = 3

ThresholdHook = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Match:
    idx_a: int
    idx_b: int
    distance: float
    ratio: float


@dataclass
class MatchSet:
    image_a_id: str
    image_b_id: str
    matches: List[Match] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.matches)

    def __iter__(self):
        return iter(self.matches)

    def subset(self, indices) -> "MatchSet":
        return MatchSet(self.image_a_id, self.image_b_id, [self.matches[i] for i in indices])

    def index_pairs(self) -> np.ndarray:
        if not self.matches:
            return np.zeros((0, 2), dtype=int)
        return np.array([(m.idx_a, m.idx_b) for m in self.matches], dtype=int)

    def distances(self) -> np.ndarray:
        return np.array([m.distance for m in self.matches], dtype=np.float64)


def _as_matrix(descriptors) -> np.ndarray:
    arr = np.asarray(descriptors, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, arr.shape[-1] if arr.ndim == 2 else 0)
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr


def _two_nearest(query: np.ndarray, gallery: np.ndarray):
    """Exact first/second nearest neighbours, lowest index winning ties."""
    k = min(_SHORTLIST, len(gallery))
    sq = (
        np.einsum("ij,ij->i", query, query)[:, None]
        + np.einsum("ij,ij->i", gallery, gallery)[None, :]
        - 2.0 * query @ gallery.T
    )
    if k < len(gallery):
        cand = np.argpartition(sq, k - 1, axis=1)[:, :k]
    else:
        cand = np.broadcast_to(np.arange(len(gallery)), (len(query), len(gallery)))
    diff = query[:, None, :] - gallery[cand]
    exact = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    order = np.lexsort((cand, exact), axis=1)
    rows = np.arange(len(query))[:, None]
    cand = cand[rows, order]
    exact = exact[rows, order]
    return cand[:, 0], exact[:, 0], exact[:, 1]


def match_descriptors(
    query,
    gallery,
    nndr_threshold: float = 0.8,
    image_a_id: str = "a",
    image_b_id: str = "b",
    threshold_hook: Optional[ThresholdHook] = None,
) -> MatchSet:
    """Match each query descriptor to its nearest gallery descriptor.

    A match is kept when d_first / d_second < nndr_threshold. ``threshold_hook``
    may replace the fixed threshold with per-query values computed from the
    arrays (d_first, d_second).
    """
    if not 0.0 < nndr_threshold <= 1.0:
        raise ValueError("nndr_threshold must be in (0, 1]")
    q = _as_matrix(query)
    g = _as_matrix(gallery)
    result = MatchSet(image_a_id, image_b_id)
    if len(q) and len(g) and q.shape[1] != g.shape[1]:
        raise DimensionMismatch(f"descriptor lengths differ: {q.shape[1]} vs {g.shape[1]}")
    if len(q) == 0 or len(g) < 2:
        return result

    nearest, d1, d2 = _two_nearest(q, g)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(d2 > 0, d1 / d2, 1.0)
    thresholds = nndr_threshold if threshold_hook is None else threshold_hook(d1, d2)
    keep = np.nonzero(ratio < thresholds)[0]
    order = keep[np.lexsort((keep, d1[keep]))]
    result.matches = [
        Match(int(i), int(nearest[i]), float(d1[i]), float(ratio[i])) for i in order
    ]
    return result
