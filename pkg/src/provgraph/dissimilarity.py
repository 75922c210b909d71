"""Pairwise dissimilarities and the k x k dissimilarity matrix.

Every pair is processed in a canonical direction: the image with the
lexicographically smaller id is the matching query and the warp source, so a
pair yields the same number whichever order it is presented in.

Metric conventions (lower means more similar):

* ``GcmAvgDistance``: mean descriptor distance over the consistent matches.
* ``GcmCount``: 1 / (1 + number of consistent matches).
* ``Mse``: mean squared luma difference over the registered overlap, after
  histogram matching the source onto the target.
* ``MutualInformation``: 8 bits minus I(A; B) from the 256 x 256 joint
  histogram of the same overlap.

Pairs without enough consistent matches (or, for pixel metrics, without a
usable shared region) are flagged ``no_evidence`` and carry no graph edge.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .config import MetricKind, PipelineConfig
from .errors import DegenerateGeometry, DuplicateId, InsufficientCorrespondences, RoiTooSmall
from .gcmfilter import GcmResult, filter_matches
from .keypoints import FeatureSet, extract_features
from .matching import match_descriptors
from .records import ImageRecord
from .registration import (
    MI_MAX_BITS,
    RoiPair,
    estimate_homography,
    histogram_match,
    mean_squared_error,
    mutual_information,
    quantize,
    warp_and_crop,
)

log = logging.getLogger(__name__)


@dataclass
class PairAnalysis:
    id_a: str
    id_b: str
    n_matches: int
    gcm: GcmResult
    min_inliers: int
    roi: Optional[RoiPair] = None
    matched_a: Optional[np.ndarray] = None
    homography: Optional[np.ndarray] = None
    registration_error: Optional[str] = None
    mse: float = math.nan
    mi_bits: float = math.nan
    keypoint_seconds: float = 0.0
    extended_seconds: float = 0.0

    @property
    def n_gcm(self) -> int:
        return len(self.gcm.kept)

    @property
    def keypoint_evidence(self) -> bool:
        return self.n_gcm >= self.min_inliers

    @property
    def avg_distance(self) -> float:
        d = self.gcm.kept.distances()
        return float(d.mean()) if len(d) else math.nan

    def value(self, kind: MetricKind) -> Tuple[float, bool]:
        """(dissimilarity, no_evidence) under ``kind``."""
        kind = MetricKind.parse(kind)
        no_ev = not self.keypoint_evidence
        if kind is MetricKind.GCM_COUNT:
            return 1.0 / (1.0 + self.n_gcm), no_ev
        if kind is MetricKind.GCM_AVG_DISTANCE:
            return self.avg_distance, no_ev
        pixel_ok = self.roi is not None
        if kind is MetricKind.MSE:
            return self.mse, no_ev or not pixel_ok
        return MI_MAX_BITS - self.mi_bits if pixel_ok else math.nan, no_ev or not pixel_ok

    def record(self, kind: Optional[MetricKind] = None) -> dict:
        rec = {
            "a": self.id_a,
            "b": self.id_b,
            "matches": self.n_matches,
            "gcm": self.n_gcm,
            "keypoint_ms": round(self.keypoint_seconds * 1e3, 3),
            "extended_ms": round(self.extended_seconds * 1e3, 3),
        }
        if self.registration_error:
            rec["registration_error"] = self.registration_error
        if kind is not None:
            value, no_ev = self.value(kind)
            rec.update({"metric": MetricKind.parse(kind).value, "value": _json_float(value), "no_evidence": no_ev})
        return rec


def canonical_order(a, b):
    return (a, b) if a.id <= b.id else (b, a)


def analyze_pair(
    image_a: ImageRecord,
    image_b: ImageRecord,
    config: PipelineConfig = PipelineConfig(),
    features: Optional[Dict[str, FeatureSet]] = None,
    extended: bool = True,
) -> PairAnalysis:
    """Match, filter and (if ``extended``) register one pair in canonical order."""
    a, b = canonical_order(image_a, image_b)
    features = features if features is not None else {}
    fa = features[a.id] if a.id in features else extract_features(a, config.detector)
    fb = features[b.id] if b.id in features else extract_features(b, config.detector)

    t0 = time.perf_counter()
    matches = match_descriptors(fa.descriptors, fb.descriptors, config.matching.nndr_threshold, a.id, b.id)
    gcm = filter_matches(matches, fa, fb, config.gcm.tolerance_px, config.gcm)
    result = PairAnalysis(a.id, b.id, len(matches), gcm, config.gcm.min_inliers)
    t1 = time.perf_counter()
    result.keypoint_seconds = t1 - t0
    if extended and result.keypoint_evidence:
        _register(result, a, b, config)
    result.extended_seconds = result.keypoint_seconds + (time.perf_counter() - t1)
    return result


def _register(result: PairAnalysis, a: ImageRecord, b: ImageRecord, config: PipelineConfig) -> None:
    reg = config.registration
    try:
        h = estimate_homography(result.gcm, force_affine=reg.force_affine)
        roi = warp_and_crop(a, b, h, result.gcm, pad=reg.roi_pad_px, min_valid_pixels=reg.min_valid_pixels)
    except (RoiTooSmall, InsufficientCorrespondences, DegenerateGeometry) as exc:
        result.registration_error = f"{exc.code}: {exc}"
        return
    mask = roi.valid_mask
    # compare at 8-bit intensity levels, the same grid the histograms use
    level_a = quantize(roi.roi_a) / 255.0
    level_b = quantize(roi.roi_b) / 255.0
    matched = histogram_match(level_a, level_b, mask)
    result.homography = h
    result.roi = roi
    result.matched_a = matched
    result.mse = mean_squared_error(matched, level_b, mask)
    result.mi_bits = mutual_information(matched, level_b, mask)


def pair_dissimilarity(a: ImageRecord, b: ImageRecord, kind, config: PipelineConfig = PipelineConfig(),
                       features: Optional[Dict[str, FeatureSet]] = None) -> Tuple[float, bool]:
    kind = MetricKind.parse(kind)
    return analyze_pair(a, b, config, features, extended=kind.is_pixel_metric).value(kind)


@dataclass
class DissimilarityMatrix:
    ids: List[str]
    values: np.ndarray
    no_evidence: np.ndarray
    kind: MetricKind
    config_fingerprint: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.no_evidence = np.asarray(self.no_evidence, dtype=bool)

    @property
    def k(self) -> int:
        return len(self.ids)

    def check(self) -> None:
        v, ne = self.values, self.no_evidence
        assert v.shape == ne.shape == (self.k, self.k)
        assert np.array_equal(ne, ne.T)
        assert np.array_equal(np.isnan(v), np.isnan(v.T))
        assert np.allclose(np.nan_to_num(v), np.nan_to_num(v.T), rtol=0, atol=0)
        assert np.all(np.diag(v) == 0)
        ev = ~ne
        assert np.all(np.isfinite(v[ev])) and np.all(v[ev] >= 0)

    def to_dict(self) -> dict:
        return {
            "ids": list(self.ids),
            "kind": self.kind.value,
            "values": [_json_float(x) for x in self.values.ravel()],
            "no_evidence": [bool(x) for x in self.no_evidence.ravel()],
            "config_fingerprint": self.config_fingerprint,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "DissimilarityMatrix":
        k = len(data["ids"])
        values = np.array([math.nan if x is None else x for x in data["values"]], dtype=np.float64)
        return cls(
            ids=list(data["ids"]),
            values=values.reshape(k, k),
            no_evidence=np.array(data["no_evidence"], dtype=bool).reshape(k, k),
            kind=MetricKind.parse(data["kind"]),
            config_fingerprint=data.get("config_fingerprint", ""),
        )

    @classmethod
    def from_json(cls, text: str) -> "DissimilarityMatrix":
        return cls.from_dict(json.loads(text))


def _json_float(x: float):
    x = float(x)
    return x if math.isfinite(x) else None


def _check_ids(images: Sequence[ImageRecord]) -> None:
    seen = set()
    for im in images:
        if im.id in seen:
            raise DuplicateId(f"image id {im.id!r} appears more than once")
        seen.add(im.id)


def compute_features(images: Sequence[ImageRecord], config: PipelineConfig = PipelineConfig(),
                     threads: int = 1) -> Dict[str, FeatureSet]:
    _check_ids(images)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            sets = list(pool.map(lambda im: extract_features(im, config.detector), images))
    else:
        sets = [extract_features(im, config.detector) for im in images]
    return {im.id: fs for im, fs in zip(images, sets)}


def analyze_all(
    images: Sequence[ImageRecord],
    config: PipelineConfig = PipelineConfig(),
    extended: bool = True,
    threads: int = 1,
    features: Optional[Dict[str, FeatureSet]] = None,
) -> Dict[Tuple[str, str], PairAnalysis]:
    """Analyse all k(k-1)/2 pairs; keys are sorted id pairs."""
    _check_ids(images)
    if len(images) < 2:
        raise ValueError("need at least two images")
    features = features if features is not None else compute_features(images, config, threads)
    pairs = [(images[i], images[j]) for i in range(len(images)) for j in range(i + 1, len(images))]

    def work(pair):
        return analyze_pair(pair[0], pair[1], config, features, extended)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(work, pairs))
    else:
        results = [work(p) for p in pairs]
    out = {}
    for res in results:
        out[(res.id_a, res.id_b)] = res
        log.debug("pair %s", json.dumps(res.record()))
    return out


def assemble_matrix(ids: Sequence[str], analyses: Dict[Tuple[str, str], PairAnalysis], kind,
                    fingerprint: str = "") -> DissimilarityMatrix:
    kind = MetricKind.parse(kind)
    k = len(ids)
    values = np.zeros((k, k))
    no_ev = np.zeros((k, k), dtype=bool)
    for i in range(k):
        for j in range(i + 1, k):
            key = (ids[i], ids[j]) if ids[i] <= ids[j] else (ids[j], ids[i])
            v, ne = analyses[key].value(kind)
            values[i, j] = values[j, i] = v
            no_ev[i, j] = no_ev[j, i] = ne
    return DissimilarityMatrix(list(ids), values, no_ev, kind, fingerprint)


def build_matrix(images: Sequence[ImageRecord], kind, config: PipelineConfig = PipelineConfig(),
                 threads: int = 1, features: Optional[Dict[str, FeatureSet]] = None) -> DissimilarityMatrix:
    kind = MetricKind.parse(kind)
    analyses = analyze_all(images, config, kind.is_pixel_metric, threads, features)
    return assemble_matrix([im.id for im in images], analyses, kind, config.fingerprint())


def build_matrices(images: Sequence[ImageRecord], kinds: Iterable, config: PipelineConfig = PipelineConfig(),
                   threads: int = 1, features: Optional[Dict[str, FeatureSet]] = None,
                   ) -> Dict[MetricKind, DissimilarityMatrix]:
    """Several metrics from a single pass over the pairs."""
    kinds = [MetricKind.parse(k) for k in kinds]
    extended = any(k.is_pixel_metric for k in kinds)
    analyses = analyze_all(images, config, extended, threads, features)
    ids = [im.id for im in images]
    return {k: assemble_matrix(ids, analyses, k, config.fingerprint()) for k in kinds}
