import numpy as np
import pytest

from provgraph.errors import DegenerateGeometry, InsufficientCorrespondences, RoiTooSmall
from provgraph.gcmfilter import GcmResult
from provgraph.matching import MatchSet
from provgraph.records import ImageRecord
from provgraph.registration import (
    entropy_bits,
    estimate_homography,
    fit_homography_dlt,
    histogram_mapping,
    histogram_match,
    mean_squared_error,
    mutual_information,
    quantize,
    warp_and_crop,
)


def gcm_from_points(pa, pb):
    return GcmResult(MatchSet("a", "b"), None, 5.0, points_a=np.asarray(pa, float), points_b=np.asarray(pb, float))


def apply_h(h, pts):
    p = np.column_stack([pts, np.ones(len(pts))]) @ h.T
    return p[:, :2] / p[:, 2:]


def rel_frobenius(h, ref):
    h = h / h[2, 2]
    ref = ref / ref[2, 2]
    return np.linalg.norm(h - ref) / np.linalg.norm(ref)


GRID = np.array([[x, y] for x in (20, 90, 170, 260) for y in (30, 120, 210)], float)


def test_identity_recovered():
    h = estimate_homography(gcm_from_points(GRID, GRID))
    np.testing.assert_allclose(h, np.eye(3), atol=1e-9)


def test_affine_recovered():
    a = np.array([[1.1, 0.2, 5.0], [-0.15, 0.9, -12.0], [0, 0, 1]])
    h = estimate_homography(gcm_from_points(GRID, apply_h(a, GRID)))
    np.testing.assert_allclose(h, a, atol=1e-6)


def test_projective_recovered():
    p = np.array([[0.95, 0.1, 12.0], [-0.05, 1.05, 4.0], [2e-4, -1e-4, 1.0]])
    src = GRID[:8]
    h = estimate_homography(gcm_from_points(src, apply_h(p, src)))
    assert rel_frobenius(h, p) < 1e-6


def test_affine_fallback_below_six_points():
    a = np.array([[1.0, 0.1, 3.0], [0.0, 1.2, -2.0], [0, 0, 1]])
    src = GRID[[0, 4, 8, 11]]
    h = estimate_homography(gcm_from_points(src, apply_h(a, src)))
    np.testing.assert_allclose(h, a, atol=1e-9)


def test_force_affine():
    p = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1e-3, 0.0, 1.0]])
    h = estimate_homography(gcm_from_points(GRID, apply_h(p, GRID)), force_affine=True)
    assert np.allclose(h[2], [0, 0, 1])


def test_too_few_points():
    with pytest.raises(InsufficientCorrespondences):
        estimate_homography(gcm_from_points(GRID[:2], GRID[:2]))


def test_collinear_points():
    line = np.array([[i, 2 * i] for i in range(8)], float)
    with pytest.raises(DegenerateGeometry):
        estimate_homography(gcm_from_points(line, line))


def test_dlt_returns_none_when_underdetermined():
    pts = np.array([[0, 0], [1, 0], [0, 1], [1, 1], [2, 2]], float)
    assert fit_homography_dlt(pts[:3], pts[:3]) is None


@pytest.fixture
def gray_texture(texture):
    return ImageRecord.from_gray("g", texture.luma)


def test_identity_roi(gray_texture):
    sq = np.array([[100, 100], [200, 100], [100, 200], [200, 200]], float)
    roi = warp_and_crop(gray_texture, gray_texture, np.eye(3), gcm_from_points(sq, sq))
    assert roi.bbox_b == (96, 96, 204, 204)
    assert roi.valid_mask.all()
    np.testing.assert_array_equal(roi.roi_a, roi.roi_b)
    np.testing.assert_array_equal(roi.roi_b, gray_texture.luma[96:205, 96:205])


def test_translation_roi(gray_texture):
    dx, dy = 6, -4
    shifted = np.roll(np.roll(gray_texture.luma, dy, axis=0), dx, axis=1)
    b = ImageRecord.from_gray("b", shifted)
    h = np.array([[1, 0, dx], [0, 1, dy], [0, 0, 1]], float)
    pa = np.array([[80, 80], [250, 90], [120, 260], [260, 250]], float)
    roi = warp_and_crop(gray_texture, b, h, gcm_from_points(pa, pa + [dx, dy]))
    assert mean_squared_error(roi.roi_a, roi.roi_b, roi.valid_mask) < 1e-4


def test_degenerate_hull(gray_texture):
    line = np.array([[10, 50], [100, 50], [200, 50]], float)
    with pytest.raises(RoiTooSmall):
        warp_and_crop(gray_texture, gray_texture, np.eye(3), gcm_from_points(line, line))


def test_singular_h(gray_texture):
    with pytest.raises(DegenerateGeometry):
        warp_and_crop(gray_texture, gray_texture, np.zeros((3, 3)), gcm_from_points(GRID, GRID))


def test_histogram_match_fixed_point():
    rng = np.random.default_rng(0)
    src = quantize(rng.uniform(0, 1, (40, 40))) / 255.0
    np.testing.assert_allclose(histogram_match(src, src), src, atol=1e-12)


def test_histogram_match_constant_target():
    src = np.linspace(0, 1, 1024).reshape(32, 32)
    out = histogram_match(src, np.full((32, 32), 0.5))
    np.testing.assert_allclose(out, 0.5)


def test_histogram_mapping_monotone():
    rng = np.random.default_rng(1)
    m = histogram_mapping(rng.integers(0, 50, 256), rng.integers(0, 50, 256))
    assert np.all(np.diff(m) >= 0) and m.min() >= 0 and m.max() <= 255


def test_histogram_match_respects_mask():
    src = np.linspace(0, 1, 400).reshape(20, 20)
    tgt = np.full((20, 20), 0.25)
    mask = np.zeros((20, 20), bool)
    mask[:10] = True
    tgt[~mask] = 0.9  # outside the mask; must not leak into the mapping
    out = histogram_match(src, tgt, mask)
    np.testing.assert_allclose(out[mask], 0.25)


def test_mutual_information_identity_is_entropy():
    rng = np.random.default_rng(2)
    a = rng.uniform(0, 1, (64, 64))
    assert mutual_information(a, a) == pytest.approx(entropy_bits(a), abs=1e-9)


def test_mutual_information_bounds():
    rng = np.random.default_rng(3)
    a, b = rng.uniform(0, 1, (64, 64)), rng.uniform(0, 1, (64, 64))
    mi = mutual_information(a, b)
    assert 0 <= mi <= min(entropy_bits(a), entropy_bits(b)) + 1e-9
    assert mi == pytest.approx(mutual_information(b, a), abs=1e-9)


def test_mse_masked():
    a = np.zeros((4, 4))
    b = np.ones((4, 4))
    mask = np.zeros((4, 4), bool)
    mask[0, 0] = True
    b[0, 0] = 0.5
    assert mean_squared_error(a, b, mask) == pytest.approx(0.25)


def test_histogram_match_idempotent_at_bin_level():
    rng = np.random.default_rng(5)
    src, tgt = rng.beta(2, 5, (50, 50)), rng.beta(5, 2, (50, 50))
    once = histogram_match(src, tgt)
    twice = histogram_match(once, tgt)
    np.testing.assert_array_equal(quantize(once), quantize(twice))


def test_warp_round_trip():
    yy, xx = np.mgrid[0:200, 0:200]
    smooth = ImageRecord.from_gray("s", 0.5 + 0.4 * np.sin(xx / 13.0) * np.cos(yy / 17.0))
    h = np.array([[0.98, -0.12, 15.0], [0.1, 1.02, -6.0], [0, 0, 1]])
    pts = np.array([[40, 40], [160, 40], [40, 160], [160, 160], [100, 90]], float)
    # a large pad makes the ROI the full frame
    fwd = warp_and_crop(smooth, smooth, h, gcm_from_points(pts, apply_h(h, pts)), pad=200)
    warped = ImageRecord.from_gray("w", fwd.roi_a)
    back = warp_and_crop(warped, smooth, np.linalg.inv(h), gcm_from_points(apply_h(h, pts), pts), pad=200)
    # the centre maps well inside the footprint both ways
    centre = (slice(60, 140), slice(60, 140))
    assert back.valid_mask[centre].all()
    assert np.mean(np.abs(back.roi_a[centre] - back.roi_b[centre])) < 0.02
