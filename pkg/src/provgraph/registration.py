"""Registration of a matched image pair and pixel-level comparison of the shared region."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from .errors import DegenerateGeometry, InsufficientCorrespondences, RoiTooSmall
from .records import ImageRecord

BINS = 256
MI_MAX_BITS = np.log2(BINS)


@dataclass
class RoiPair:
    roi_a: np.ndarray
    roi_b: np.ndarray
    bbox_a: Tuple[int, int, int, int]  # x0, y0, x1, y1 inclusive
    bbox_b: Tuple[int, int, int, int]
    valid_mask: np.ndarray

    @property
    def n_valid(self) -> int:
        return int(self.valid_mask.sum())


def _kept_points(gcm, kps_a=None, kps_b=None):
    if kps_a is None or kps_b is None:
        return np.asarray(gcm.points_a, float), np.asarray(gcm.points_b, float)
    from .gcmfilter import _keypoint_arrays

    pairs = gcm.kept.index_pairs()
    xy_a = _keypoint_arrays(kps_a)[0]
    xy_b = _keypoint_arrays(kps_b)[0]
    return xy_a[pairs[:, 0]], xy_b[pairs[:, 1]]


def _is_collinear(pts: np.ndarray) -> bool:
    centred = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    return sv[0] == 0 or sv[1] <= 1e-9 * max(sv[0], 1.0)


def _normalizer(pts: np.ndarray) -> np.ndarray:
    c = pts.mean(axis=0)
    d = np.sqrt(np.sum((pts - c) ** 2, axis=1)).mean()
    s = np.sqrt(2.0) / d
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def fit_affine(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Least-squares 6-DoF affine map src -> dst as a 3x3 matrix."""
    design = np.column_stack([src, np.ones(len(src))])
    params, *_ = np.linalg.lstsq(design, dst, rcond=None)
    h = np.eye(3)
    h[:2, :] = params.T
    return h


def fit_homography_dlt(src: np.ndarray, dst: np.ndarray) -> Optional[np.ndarray]:
    """Normalised DLT. Returns None when the system has no unique solution."""
    ts, td = _normalizer(src), _normalizer(dst)
    s = np.column_stack([src, np.ones(len(src))]) @ ts.T
    d = np.column_stack([dst, np.ones(len(dst))]) @ td.T
    rows = []
    for (x, y, _), (u, v, _) in zip(s, d):
        rows.append([-x, -y, -1, 0, 0, 0, u * x, u * y, u])
        rows.append([0, 0, 0, -x, -y, -1, v * x, v * y, v])
    a = np.asarray(rows)
    _, sv, vt = np.linalg.svd(a)
    if len(sv) < 9 or sv[-2] <= 1e-10 * sv[0]:
        return None
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(td) @ hn @ ts
    if abs(h[2, 2]) < 1e-12:
        return None
    return h / h[2, 2]


def _orientation_preserving(h: np.ndarray, src: np.ndarray) -> bool:
    """The projective denominator keeps one sign over the source support."""
    lo, hi = src.min(axis=0), src.max(axis=0)
    corners = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [lo[0], hi[1]], [hi[0], hi[1]]])
    pts = np.vstack([src, corners])
    w = pts @ h[2, :2] + h[2, 2]
    return bool(np.all(w > 0))


def estimate_homography(gcm, kps_a=None, kps_b=None, force_affine: bool = False) -> np.ndarray:
    """Planar map from image A onto image B fitted to the kept correspondences.

    Uses the normalised DLT with at least 6 correspondences, and a
    least-squares affine fit otherwise or when the projective fit is
    rank-deficient or folds the source region.
    """
    src, dst = _kept_points(gcm, kps_a, kps_b)
    if len(src) < 3:
        raise InsufficientCorrespondences(f"{len(src)} correspondences; need at least 3")
    if _is_collinear(src) or _is_collinear(dst):
        raise DegenerateGeometry("correspondences are collinear")
    if len(src) >= 6 and not force_affine:
        h = fit_homography_dlt(src, dst)
        if h is not None and _orientation_preserving(h, src):
            return h
    return fit_affine(src, dst)


def warp_and_crop(
    image_a: ImageRecord,
    image_b: ImageRecord,
    h: np.ndarray,
    gcm,
    kps_a=None,
    kps_b=None,
    pad: int = 4,
    min_valid_pixels: int = 64,
) -> RoiPair:
    """Warp A into B's frame and cut both at the kept-keypoint hull's bounding box."""
    if abs(np.linalg.det(h)) <= 1e-12:
        raise DegenerateGeometry("homography is singular")
    pts_a, pts_b = _kept_points(gcm, kps_a, kps_b)
    if len(pts_b) < 3:
        raise RoiTooSmall("fewer than 3 kept keypoints")
    try:
        hull = ConvexHull(pts_b)
    except QhullError:
        raise RoiTooSmall("keypoint hull is degenerate") from None
    if hull.volume <= 1e-9:
        raise RoiTooSmall("keypoint hull has no area")

    x0, y0, x1, y1 = _padded_bbox(pts_b, pad, image_b.width, image_b.height)
    bbox_a = _padded_bbox(pts_a, pad, image_a.width, image_a.height)
    yy, xx = np.mgrid[y0:y1 + 1, x0:x1 + 1].astype(np.float64)
    hinv = np.linalg.inv(h)
    w = hinv[2, 0] * xx + hinv[2, 1] * yy + hinv[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = (hinv[0, 0] * xx + hinv[0, 1] * yy + hinv[0, 2]) / w
        sy = (hinv[1, 0] * xx + hinv[1, 1] * yy + hinv[1, 2]) / w
    # drop round-off so grid-aligned maps sample pixels exactly
    sx, sy = np.round(sx, 9), np.round(sy, 9)
    valid = (w > 0) & (sx >= 0) & (sx <= image_a.width - 1) & (sy >= 0) & (sy <= image_a.height - 1)
    sx = np.where(valid, sx, 0.0)
    sy = np.where(valid, sy, 0.0)
    roi_a = ndimage.map_coordinates(image_a.luma, np.stack([sy, sx]), order=1, mode="nearest")
    roi_a = np.where(valid, np.clip(roi_a, 0.0, 1.0), 0.0)
    roi_b = image_b.luma[y0:y1 + 1, x0:x1 + 1].copy()
    if valid.sum() < min_valid_pixels:
        raise RoiTooSmall(f"only {int(valid.sum())} valid pixels in the shared region")
    return RoiPair(roi_a, roi_b, bbox_a, (x0, y0, x1, y1), valid)


def _padded_bbox(pts: np.ndarray, pad: int, width: int, height: int):
    x0 = max(int(np.floor(pts[:, 0].min())) - pad, 0)
    y0 = max(int(np.floor(pts[:, 1].min())) - pad, 0)
    x1 = min(int(np.ceil(pts[:, 0].max())) + pad, width - 1)
    y1 = min(int(np.ceil(pts[:, 1].max())) + pad, height - 1)
    return x0, y0, x1, y1


def quantize(values: np.ndarray, bins: int = BINS) -> np.ndarray:
    return np.clip(np.rint(np.asarray(values) * (bins - 1)), 0, bins - 1).astype(np.int64)


def histogram_mapping(source_counts: np.ndarray, target_counts: np.ndarray) -> np.ndarray:
    """Bin map sending each source bin to the first target bin whose CDF reaches it.

    Comparisons use integer cross-multiplication, so the CDF bound is exact.
    """
    cs = np.cumsum(np.asarray(source_counts, dtype=np.int64))
    ct = np.cumsum(np.asarray(target_counts, dtype=np.int64))
    ns, nt = cs[-1], ct[-1]
    # smallest t with ct[t] / nt >= cs[b] / ns
    return np.searchsorted(ct * ns, cs * nt, side="left").clip(0, len(ct) - 1)


def histogram_match(source: np.ndarray, target: np.ndarray, mask: Optional[np.ndarray] = None,
                    bins: int = BINS) -> np.ndarray:
    """Give ``source`` the intensity distribution of ``target`` over the masked pixels.

    Each source bin maps to a target bin; the output value is the mean target
    intensity inside that bin.
    """
    source = np.asarray(source, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    mask = np.ones(source.shape, bool) if mask is None else np.asarray(mask, bool)
    qs = quantize(source, bins)
    qt = quantize(target[mask], bins)
    sc = np.bincount(qs[mask], minlength=bins)
    tc = np.bincount(qt, minlength=bins)
    if tc.sum() == 0 or sc.sum() == 0:
        raise RoiTooSmall("histogram matching needs valid pixels on both sides")
    mapping = histogram_mapping(sc, tc)
    # bin mean as centre plus mean offset, exact when a bin holds a single level
    centres = np.arange(bins) / (bins - 1)
    offsets = np.bincount(qt, weights=target[mask] - centres[qt], minlength=bins)
    reps = centres + np.where(tc > 0, offsets / np.maximum(tc, 1), 0.0)
    return reps[mapping][qs]


def entropy_bits(values: np.ndarray, mask: Optional[np.ndarray] = None, bins: int = BINS) -> float:
    v = np.asarray(values) if mask is None else np.asarray(values)[mask]
    p = np.bincount(quantize(v, bins).ravel(), minlength=bins).astype(np.float64)
    p = p[p > 0] / p.sum()
    return float(-(p * np.log2(p)).sum())


def mutual_information(a: np.ndarray, b: np.ndarray, mask: Optional[np.ndarray] = None,
                       bins: int = BINS) -> float:
    """I(A; B) in bits from the bins x bins joint histogram."""
    if mask is not None:
        a, b = np.asarray(a)[mask], np.asarray(b)[mask]
    qa = quantize(a, bins).ravel()
    qb = quantize(b, bins).ravel()
    joint = np.bincount(qa * bins + qb, minlength=bins * bins).astype(np.float64)
    joint = joint.reshape(bins, bins) / joint.sum()
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log2(joint[nz] / np.outer(pa, pb)[nz])))


def mean_squared_error(a: np.ndarray, b: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    diff = np.asarray(a, float) - np.asarray(b, float)
    if mask is not None:
        diff = diff[mask]
    return float(np.mean(diff * diff))
