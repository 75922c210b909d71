"""Multiscale Hessian blob detector with a SURF-style gradient descriptor.

Detection runs on the luma plane. For each scale sigma the scale-normalised
determinant of the Hessian of Gaussian,

    response = RESPONSE_SCALE * sigma**4 * (Lxx * Lyy - Lxy**2),

is evaluated; keypoints are 3x3x3 local maxima in (x, y, scale) above the
threshold, refined to sub-pixel/sub-scale accuracy by a quadratic fit.

Each keypoint gets a dominant orientation from Gaussian-weighted gradient
responses in a disc of radius 6*sigma (sliding pi/3 window), and a descriptor
built from a 20*sigma square window rotated to that orientation, split into a
g x g grid of cells each summarising (sum dx, sum dy, sum |dx|, sum |dy|).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy import ndimage

from .config import DetectorConfig
from .errors import DegenerateInput
from .records import MIN_SIDE, ImageRecord

TWO_PI = 2.0 * np.pi
# Half-width of the descriptor window in units of sigma.
DESCRIPTOR_HALF_WIDTH = 10.0
# A rotated square window reaches this far from its centre.
SUPPORT_RADIUS = DESCRIPTOR_HALF_WIDTH * np.sqrt(2.0)
ORIENTATION_RADIUS = 6
ORIENTATION_BINS = 72
ORIENTATION_WINDOW_BINS = 12  # pi / 3


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    scale: float
    orientation: float
    response: float

    @property
    def pos(self) -> Tuple[float, float]:
        return (self.x, self.y)


Descriptor = np.ndarray


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Keypoints and descriptors of one image, stored column-wise."""

    image_id: str
    xy: np.ndarray           # (n, 2) float, columns x, y
    scale: np.ndarray        # (n,)
    orientation: np.ndarray  # (n,)
    response: np.ndarray     # (n,)
    descriptors: np.ndarray  # (n, d)

    def __len__(self) -> int:
        return len(self.scale)

    @property
    def keypoints(self) -> List[Keypoint]:
        return [
            Keypoint(float(x), float(y), float(s), float(o), float(r))
            for (x, y), s, o, r in zip(self.xy, self.scale, self.orientation, self.response)
        ]

    def pairs(self) -> List[Tuple[Keypoint, Descriptor]]:
        return list(zip(self.keypoints, list(self.descriptors)))

    @classmethod
    def empty(cls, image_id: str, dim: int) -> "FeatureSet":
        z = np.zeros(0)
        return cls(image_id, np.zeros((0, 2)), z, z.copy(), z.copy(), np.zeros((0, dim)))


def scale_levels(config: DetectorConfig) -> np.ndarray:
    n = config.n_octaves * config.n_scales_per_octave + 2
    return config.base_sigma * 2.0 ** (np.arange(n) / config.n_scales_per_octave)


def hessian_response(luma: np.ndarray, sigma: float, response_scale: float) -> np.ndarray:
    lxx = ndimage.gaussian_filter(luma, sigma, order=(0, 2), mode="nearest")
    lyy = ndimage.gaussian_filter(luma, sigma, order=(2, 0), mode="nearest")
    lxy = ndimage.gaussian_filter(luma, sigma, order=(1, 1), mode="nearest")
    return response_scale * sigma**4 * (lxx * lyy - lxy * lxy)


def _usable_levels(sigmas: np.ndarray, width: int, height: int) -> int:
    # a level is useless once its support window cannot fit anywhere
    fits = 2.0 * SUPPORT_RADIUS * sigmas < min(width, height) - 1
    return int(fits.sum())


def _refine(stack: np.ndarray, li: np.ndarray, yi: np.ndarray, xi: np.ndarray):
    """Quadratic fit around integer extrema; returns offsets (dl, dy, dx) and values."""
    c = stack[li, yi, xi]
    dl = 0.5 * (stack[li + 1, yi, xi] - stack[li - 1, yi, xi])
    dy = 0.5 * (stack[li, yi + 1, xi] - stack[li, yi - 1, xi])
    dx = 0.5 * (stack[li, yi, xi + 1] - stack[li, yi, xi - 1])
    dll = stack[li + 1, yi, xi] - 2 * c + stack[li - 1, yi, xi]
    dyy = stack[li, yi + 1, xi] - 2 * c + stack[li, yi - 1, xi]
    dxx = stack[li, yi, xi + 1] - 2 * c + stack[li, yi, xi - 1]
    dly = 0.25 * (stack[li + 1, yi + 1, xi] - stack[li + 1, yi - 1, xi]
                  - stack[li - 1, yi + 1, xi] + stack[li - 1, yi - 1, xi])
    dlx = 0.25 * (stack[li + 1, yi, xi + 1] - stack[li + 1, yi, xi - 1]
                  - stack[li - 1, yi, xi + 1] + stack[li - 1, yi, xi - 1])
    dyx = 0.25 * (stack[li, yi + 1, xi + 1] - stack[li, yi + 1, xi - 1]
                  - stack[li, yi - 1, xi + 1] + stack[li, yi - 1, xi - 1])
    hess = np.stack([
        np.stack([dll, dly, dlx], -1),
        np.stack([dly, dyy, dyx], -1),
        np.stack([dlx, dyx, dxx], -1),
    ], -2)
    grad = np.stack([dl, dy, dx], -1)
    offsets = np.zeros_like(grad)
    det = np.linalg.det(hess) if len(c) else np.zeros(0)
    ok = np.abs(det) > 1e-12
    if ok.any():
        offsets[ok] = -np.linalg.solve(hess[ok], grad[ok][..., None])[..., 0]
    bad = ~ok | np.any(np.abs(offsets) > 0.5, axis=1)
    offsets[bad] = 0.0
    values = c + 0.5 * np.sum(grad * offsets, axis=1)
    return offsets, values


def detect(luma: np.ndarray, config: DetectorConfig):
    """Locate Hessian extrema. Returns (x, y, sigma, level, response) arrays."""
    height, width = luma.shape
    sigmas = scale_levels(config)
    n_levels = _usable_levels(sigmas, width, height)
    empty = (np.zeros(0),) * 3 + (np.zeros(0, dtype=int), np.zeros(0))
    if n_levels < 3 or np.ptp(luma) == 0:
        return empty
    sigmas = sigmas[:n_levels]
    stack = np.stack([hessian_response(luma, s, config.response_scale) for s in sigmas])
    peak = ndimage.maximum_filter(stack, size=3, mode="nearest")
    mask = (stack == peak) & (stack > 0) & (stack >= config.hessian_threshold)
    mask[0] = mask[-1] = False
    mask[:, 0, :] = mask[:, -1, :] = False
    mask[:, :, 0] = mask[:, :, -1] = False
    li, yi, xi = np.nonzero(mask)
    if len(li) == 0:
        return empty
    offsets, values = _refine(stack, li, yi, xi)
    level = li + offsets[:, 0]
    sigma = config.base_sigma * 2.0 ** (level / config.n_scales_per_octave)
    x = xi + offsets[:, 2]
    y = yi + offsets[:, 1]
    radius = SUPPORT_RADIUS * sigma
    inside = (
        (x - radius >= 0) & (x + radius <= width - 1)
        & (y - radius >= 0) & (y + radius <= height - 1)
        & (values >= config.hessian_threshold)
    )
    return x[inside], y[inside], sigma[inside], li[inside], values[inside]


def _gradients(luma: np.ndarray, sigma: float):
    gx = ndimage.gaussian_filter(luma, sigma, order=(0, 1), mode="nearest")
    gy = ndimage.gaussian_filter(luma, sigma, order=(1, 0), mode="nearest")
    return gx, gy


def _sample(field: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    coords = np.stack([ys.ravel(), xs.ravel()])
    return ndimage.map_coordinates(field, coords, order=1, mode="nearest").reshape(xs.shape)


_ORI_OFFSETS = np.array(
    [(i, j) for j in range(-ORIENTATION_RADIUS, ORIENTATION_RADIUS + 1)
     for i in range(-ORIENTATION_RADIUS, ORIENTATION_RADIUS + 1)
     if i * i + j * j < ORIENTATION_RADIUS**2],
    dtype=np.float64,
)
_ORI_WEIGHTS = np.exp(-np.sum(_ORI_OFFSETS**2, axis=1) / (2 * 2.5**2))


def _orientations(gx, gy, x, y, sigma) -> np.ndarray:
    xs = x[:, None] + _ORI_OFFSETS[None, :, 0] * sigma[:, None]
    ys = y[:, None] + _ORI_OFFSETS[None, :, 1] * sigma[:, None]
    rx = _sample(gx, xs, ys) * _ORI_WEIGHTS
    ry = _sample(gy, xs, ys) * _ORI_WEIGHTS
    ang = np.mod(np.arctan2(ry, rx), TWO_PI)
    bins = np.minimum((ang / TWO_PI * ORIENTATION_BINS).astype(int), ORIENTATION_BINS - 1)
    n = len(x)
    flat = (np.arange(n)[:, None] * ORIENTATION_BINS + bins).ravel()
    hx = np.bincount(flat, rx.ravel(), n * ORIENTATION_BINS).reshape(n, ORIENTATION_BINS)
    hy = np.bincount(flat, ry.ravel(), n * ORIENTATION_BINS).reshape(n, ORIENTATION_BINS)
    # circular window sums of ORIENTATION_WINDOW_BINS consecutive bins
    idx = (np.arange(ORIENTATION_BINS)[:, None] + np.arange(ORIENTATION_WINDOW_BINS)) % ORIENTATION_BINS
    wx = hx[:, idx].sum(axis=2)
    wy = hy[:, idx].sum(axis=2)
    best = np.argmax(wx * wx + wy * wy, axis=1)
    rows = np.arange(n)
    return np.mod(np.arctan2(wy[rows, best], wx[rows, best]), TWO_PI)


def _descriptor_layout(length: int):
    extended = length == 128
    grid = 4 if extended else int(round((length // 4) ** 0.5))
    return grid, extended


def _descriptors(gx, gy, x, y, sigma, theta, length: int) -> np.ndarray:
    grid, extended = _descriptor_layout(length)
    samples = 5 * grid
    half = samples / 2.0
    # window of 20 sigma regardless of grid resolution
    step = 2.0 * DESCRIPTOR_HALF_WIDTH / samples
    t = (np.arange(samples) + 0.5 - half) * step
    u, v = np.meshgrid(t, t)  # u along the keypoint x-axis, v along y
    u = u.ravel()
    v = v.ravel()
    weight = np.exp(-(u * u + v * v) / (2 * 3.3**2))
    c = np.cos(theta)[:, None]
    s = np.sin(theta)[:, None]
    su = sigma[:, None] * u[None, :]
    sv = sigma[:, None] * v[None, :]
    xs = x[:, None] + c * su - s * sv
    ys = y[:, None] + s * su + c * sv
    dx_img = _sample(gx, xs, ys)
    dy_img = _sample(gy, xs, ys)
    dx = (c * dx_img + s * dy_img) * weight
    dy = (-s * dx_img + c * dy_img) * weight
    n = len(x)
    cell_row = (np.arange(samples) // 5)
    cell = (cell_row[:, None] * grid + cell_row[None, :]).ravel()
    flat = (np.arange(n)[:, None] * grid * grid + cell[None, :]).ravel()
    size = n * grid * grid

    def cell_sum(values):
        return np.bincount(flat, values.ravel(), size).reshape(n, grid * grid)

    if extended:
        pos_dy = dy >= 0
        pos_dx = dx >= 0
        parts = [
            cell_sum(np.where(pos_dy, dx, 0)), cell_sum(np.where(pos_dy, np.abs(dx), 0)),
            cell_sum(np.where(~pos_dy, dx, 0)), cell_sum(np.where(~pos_dy, np.abs(dx), 0)),
            cell_sum(np.where(pos_dx, dy, 0)), cell_sum(np.where(pos_dx, np.abs(dy), 0)),
            cell_sum(np.where(~pos_dx, dy, 0)), cell_sum(np.where(~pos_dx, np.abs(dy), 0)),
        ]
    else:
        parts = [cell_sum(dx), cell_sum(dy), cell_sum(np.abs(dx)), cell_sum(np.abs(dy))]
    desc = np.stack(parts, axis=2).reshape(n, -1)
    return desc


def extract_features(image: ImageRecord, config: DetectorConfig = DetectorConfig()) -> FeatureSet:
    """Detect and describe keypoints, strongest first."""
    config.validate()
    luma = image.luma
    if luma.shape[0] < MIN_SIDE or luma.shape[1] < MIN_SIDE:
        raise DegenerateInput(f"{image.id}: image below minimum size")
    x, y, sigma, level, response = detect(luma, config)
    if len(x) == 0:
        return FeatureSet.empty(image.id, config.descriptor_length)

    # strongest first; ties resolved by position for determinism
    order = np.lexsort((x, y, -response))
    x, y, sigma, level, response = (a[order] for a in (x, y, sigma, level, response))

    sigmas = scale_levels(config)
    theta = np.zeros(len(x))
    desc = np.zeros((len(x), config.descriptor_length))
    for lv in np.unique(level):
        sel = level == lv
        gx, gy = _gradients(luma, sigmas[lv])
        theta[sel] = _orientations(gx, gy, x[sel], y[sel], sigma[sel])
        desc[sel] = _descriptors(gx, gy, x[sel], y[sel], sigma[sel], theta[sel],
                                 config.descriptor_length)

    norms = np.linalg.norm(desc, axis=1)
    keep = np.isfinite(norms) & (norms > 1e-12)
    keep_idx = np.nonzero(keep)[0][: config.max_keypoints]
    desc = desc[keep_idx] / norms[keep_idx, None]
    theta = np.where(theta[keep_idx] >= TWO_PI, 0.0, theta[keep_idx])
    return FeatureSet(
        image_id=image.id,
        xy=np.stack([x[keep_idx], y[keep_idx]], axis=1),
        scale=sigma[keep_idx],
        orientation=theta,
        response=response[keep_idx],
        descriptors=desc,
    )


def detect_and_describe(image: ImageRecord, config: DetectorConfig = DetectorConfig()):
    """List of (Keypoint, descriptor) pairs ordered by descending response."""
    return extract_features(image, config).pairs()


def canonical_blob_grid(size: int = 512, cell: int = 16, seed: int = 0) -> np.ndarray:
    """Calibration image: a grid of bright and dark discs of varied radius and contrast.

    The response scale constant is chosen so this image gives 500-4000
    detections at the default threshold.
    """
    rng = np.random.default_rng(seed)
    img = np.full((size, size), 0.5)
    yy, xx = np.mgrid[0:size, 0:size]
    n = size // cell
    for r in range(n):
        for c in range(n):
            cy = r * cell + cell / 2 - 0.5
            cx = c * cell + cell / 2 - 0.5
            radius = rng.uniform(1.5, cell / 3)
            contrast = rng.uniform(0.05, 0.45) * rng.choice([-1, 1])
            y0, y1 = r * cell, (r + 1) * cell
            x0, x1 = c * cell, (c + 1) * cell
            d2 = (yy[y0:y1, x0:x1] - cy) ** 2 + (xx[y0:y1, x0:x1] - cx) ** 2
            img[y0:y1, x0:x1] += contrast * (d2 <= radius * radius)
    return np.clip(ndimage.gaussian_filter(img, 0.7), 0.0, 1.0)
