"""Geometrically consistent match (GCM) filtering.

Two anchor matches fix a similarity transform from image A onto image B: the
segment between the anchors has length l_a and angle a_a in A and l_b, a_b in
B, giving scale l_b / l_a, rotation a_b - a_a, and the translation that maps
the first anchor exactly onto its partner. Matches whose A-side keypoint lands
farther than the tolerance from its B-side partner are dropped.

By default several anchor pairs drawn from the best matches are tried and the
hypothesis with the largest consensus wins; ``literal_top2`` uses only the two
lowest-distance matches.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .config import GcmConfig
from .errors import DegenerateAnchors
from .matching import MatchSet

ANCHOR_EPS = 1e-6


def wrap_angle(theta):
    """Map angles to (-pi, pi]."""
    wrapped = np.mod(np.asarray(theta, dtype=np.float64) + np.pi, 2 * np.pi) - np.pi
    wrapped = np.where(wrapped <= -np.pi, wrapped + 2 * np.pi, wrapped)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


@dataclass(frozen=True)
class SimilarityTransform:
    scale: float
    rotation: float
    tx: float
    ty: float

    @property
    def matrix(self) -> np.ndarray:
        c = self.scale * math.cos(self.rotation)
        s = self.scale * math.sin(self.rotation)
        return np.array([[c, -s, self.tx], [s, c, self.ty], [0.0, 0.0, 1.0]])

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        m = self.matrix
        return pts @ m[:2, :2].T + m[:2, 2]


def _xy(p) -> Tuple[float, float]:
    if hasattr(p, "x") and hasattr(p, "y"):
        return float(p.x), float(p.y)
    return float(p[0]), float(p[1])


def estimate_transform(p1, q1, p2, q2) -> SimilarityTransform:
    """Similarity taking segment p1->q1 (image A) onto p2->q2 (image B)."""
    p1, q1, p2, q2 = (np.array(_xy(p)) for p in (p1, q1, p2, q2))
    va = q1 - p1
    vb = q2 - p2
    la = math.hypot(*va)
    if la <= ANCHOR_EPS:
        raise DegenerateAnchors(f"anchor segment length {la:.3g} px in the first image")
    lb = math.hypot(*vb)
    scale = lb / la
    if scale <= 0:
        raise DegenerateAnchors("anchor segment collapses in the second image")
    rotation = wrap_angle(math.atan2(vb[1], vb[0]) - math.atan2(va[1], va[0]))
    c = scale * math.cos(rotation)
    s = scale * math.sin(rotation)
    tx = p2[0] - (c * p1[0] - s * p1[1])
    ty = p2[1] - (s * p1[0] + c * p1[1])
    return SimilarityTransform(scale, rotation, tx, ty)


@dataclass
class GcmResult:
    kept: MatchSet
    transform: Optional[SimilarityTransform]
    inlier_tolerance: float
    valid: bool = True
    anchors: Optional[tuple] = None
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    points_a: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    points_b: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __len__(self) -> int:
        return len(self.kept)


def _keypoint_arrays(kps):
    """(xy, scale, orientation) arrays from a FeatureSet or a keypoint list."""
    if hasattr(kps, "xy"):
        return kps.xy, kps.scale, kps.orientation
    if len(kps) == 0:
        return np.zeros((0, 2)), np.zeros(0), np.zeros(0)
    xy = np.array([(k.x, k.y) for k in kps], dtype=np.float64)
    scale = np.array([getattr(k, "scale", 1.0) for k in kps], dtype=np.float64)
    ori = np.array([getattr(k, "orientation", 0.0) for k in kps], dtype=np.float64)
    return xy, scale, ori


def _empty(matches: MatchSet, tolerance: float) -> GcmResult:
    return GcmResult(MatchSet(matches.image_a_id, matches.image_b_id), None, tolerance, valid=False)


def filter_matches(
    matches: MatchSet,
    kps_a,
    kps_b,
    tolerance_px: float = 5.0,
    config: GcmConfig = GcmConfig(),
) -> GcmResult:
    """Keep the matches consistent with the best anchor-pair similarity transform."""
    if tolerance_px <= 0:
        raise ValueError("tolerance_px must be positive")
    if len(matches) < 2:
        return _empty(matches, tolerance_px)

    # anchors come from the lowest-distance matches; input order is not trusted
    order = sorted(range(len(matches)), key=lambda i: (matches.matches[i].distance, i))
    pairs = matches.index_pairs()
    xy_a, sc_a, or_a = _keypoint_arrays(kps_a)
    xy_b, sc_b, or_b = _keypoint_arrays(kps_b)
    pa = xy_a[pairs[:, 0]]
    pb = xy_b[pairs[:, 1]]
    log_scale_ratio = np.log(sc_b[pairs[:, 1]] / sc_a[pairs[:, 0]])
    rot = or_b[pairs[:, 1]] - or_a[pairs[:, 0]]
    attr_log_tol = math.log(config.max_scale_ratio)

    n_cand = 2 if config.literal_top2 else min(config.max_anchor_candidates, len(matches))
    candidates = order[:n_cand]

    best = None
    for i, j in itertools.combinations(candidates, 2):
        try:
            t = estimate_transform(pa[i], pa[j], pb[i], pb[j])
        except DegenerateAnchors:
            continue
        tol = tolerance_px * t.scale if config.scale_tolerance else tolerance_px
        resid = np.linalg.norm(t.apply(pa) - pb, axis=1)
        inl = resid <= tol
        if config.check_keypoint_attributes:
            attr_ok = (np.abs(log_scale_ratio - math.log(t.scale)) <= attr_log_tol) & (
                np.abs(wrap_angle(rot - t.rotation)) <= config.max_orientation_diff
            )
            if not (attr_ok[i] and attr_ok[j]):
                continue
            inl &= attr_ok
        count = int(inl.sum())
        mean_res = float(resid[inl].mean())
        key = (-count, mean_res)
        if best is None or key < best[0]:
            best = (key, t, tol, inl, resid, (i, j))

    if best is None:
        return _empty(matches, tolerance_px)
    _, t, tol, inl, resid, anchors = best
    idx = [k for k in order if inl[k]]
    return GcmResult(
        kept=matches.subset(idx),
        transform=t,
        inlier_tolerance=tol,
        valid=True,
        anchors=(matches.matches[anchors[0]], matches.matches[anchors[1]]),
        residuals=resid[idx],
        points_a=pa[idx],
        points_b=pb[idx],
    )
