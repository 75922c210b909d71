import math

import numpy as np
import pytest

from provgraph.config import MetricKind, PipelineConfig
from provgraph.dissimilarity import (
    DissimilarityMatrix,
    analyze_pair,
    build_matrices,
    build_matrix,
    pair_dissimilarity,
)
from provgraph.errors import DuplicateId
from provgraph.keypoints import extract_features
from provgraph.matching import match_descriptors
from provgraph.records import ImageRecord
from provgraph.registration import entropy_bits
from provgraph.synthgen import TransformSpec, apply_transform


def noise(seed, size=192):
    return ImageRecord.from_gray(f"z{seed}", np.random.default_rng(seed).uniform(0, 1, (size, size)))


def test_identical_pair(texture):
    twin = texture.with_pixels(texture.pixels(), id="t9")
    res = analyze_pair(texture, twin)
    assert res.value(MetricKind.MSE) == (0.0, False)
    mi, ne = res.value(MetricKind.MUTUAL_INFORMATION)
    assert not ne
    assert mi == pytest.approx(8 - entropy_bits(res.roi.roi_b, res.roi.valid_mask), abs=1e-9)
    f = extract_features(texture)
    n_all = len(match_descriptors(f.descriptors, f.descriptors))
    assert res.n_gcm == n_all
    assert res.value(MetricKind.GCM_COUNT)[0] == pytest.approx(1 / (1 + n_all))


def test_noise_pairs_have_no_evidence():
    for seed in range(20):
        res = analyze_pair(noise(2 * seed), noise(2 * seed + 1), extended=False)
        assert not res.keypoint_evidence, seed


def test_resampled_copy_beats_unrelated(texture, other_texture):
    small = apply_transform(texture, TransformSpec("Resample", {"scale": 0.9}), "t2")
    v_rel, ne_rel = pair_dissimilarity(texture, small, MetricKind.MSE)
    assert not ne_rel
    unrel = analyze_pair(texture, other_texture)
    assert unrel.value(MetricKind.MSE)[1] or v_rel < unrel.value(MetricKind.MSE)[0]


def test_order_equivariance(texture):
    child = apply_transform(texture, TransformSpec("Affine", {"rotation_deg": 12.0}), "t5")
    for kind in MetricKind:
        assert pair_dissimilarity(texture, child, kind) == pair_dissimilarity(child, texture, kind)


def test_two_identical_images_mse_matrix(texture):
    twin = texture.with_pixels(texture.pixels(), id="t9")
    m = build_matrix([texture, twin], MetricKind.MSE)
    np.testing.assert_array_equal(m.values, np.zeros((2, 2)))
    assert not m.no_evidence.any()


def test_noise_image_isolated(texture):
    child = apply_transform(texture, TransformSpec("Gamma", {"gamma": 1.3}), "t3")
    m = build_matrix([texture, child, noise(99)], MetricKind.MUTUAL_INFORMATION)
    m.check()
    expected = np.array([[0, 0, 1], [0, 0, 1], [1, 1, 0]], bool)
    np.testing.assert_array_equal(m.no_evidence, expected)
    assert math.isnan(m.values[0, 2])


def test_matrices_symmetric_and_serialisable(texture, other_texture):
    child = apply_transform(texture, TransformSpec("Crop", {"width_frac": 0.8, "height_frac": 0.8}), "t4")
    mats = build_matrices([texture, other_texture, child], list(MetricKind))
    for kind, m in mats.items():
        m.check()
        back = DissimilarityMatrix.from_json(m.to_json())
        assert back.to_json() == m.to_json()
        assert back.kind is kind
        assert "NaN" not in m.to_json()


def test_input_order_does_not_change_entries(texture, other_texture):
    child = apply_transform(texture, TransformSpec("Brightness", {"delta": 0.1}), "t6")
    m1 = build_matrix([texture, other_texture, child], MetricKind.GCM_AVG_DISTANCE)
    m2 = build_matrix([child, texture, other_texture], MetricKind.GCM_AVG_DISTANCE)
    pos = {i: k for k, i in enumerate(m2.ids)}
    perm = [pos[i] for i in m1.ids]
    np.testing.assert_array_equal(np.nan_to_num(m1.values, nan=-1),
                                  np.nan_to_num(m2.values[np.ix_(perm, perm)], nan=-1))


def test_threads_do_not_change_result(texture, other_texture):
    child = apply_transform(texture, TransformSpec("Contrast", {"factor": 0.8}), "t7")
    imgs = [texture, other_texture, child]
    a = build_matrix(imgs, MetricKind.MSE, threads=1).to_json()
    b = build_matrix(imgs, MetricKind.MSE, threads=3).to_json()
    assert a == b


def test_duplicate_ids_rejected(texture):
    with pytest.raises(DuplicateId):
        build_matrix([texture, texture], MetricKind.MSE)


def test_fingerprint_embedded(texture):
    twin = texture.with_pixels(texture.pixels(), id="t9")
    m = build_matrix([texture, twin], MetricKind.GCM_COUNT)
    assert m.config_fingerprint == PipelineConfig().fingerprint()
