"""Image records: decoded rasters with identity metadata."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DegenerateInput, IoError

MIN_SIDE = 16
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def rgb_to_luma(rgb: np.ndarray) -> np.ndarray:
    """ITU-R BT.601 luma of an H x W x 3 array in [0, 1]."""
    return np.clip(rgb @ LUMA_WEIGHTS, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class ImageRecord:
    id: str
    luma: np.ndarray
    channels: Optional[np.ndarray] = None
    source_path: str = ""

    def __post_init__(self):
        luma = np.asarray(self.luma, dtype=np.float64)
        if luma.ndim != 2:
            raise DegenerateInput(f"{self.id}: luma must be 2-D, got shape {luma.shape}")
        h, w = luma.shape
        if h < MIN_SIDE or w < MIN_SIDE:
            raise DegenerateInput(f"{self.id}: image {w}x{h} is below the {MIN_SIDE}px minimum")
        if not np.all(np.isfinite(luma)) or luma.min() < 0.0 or luma.max() > 1.0:
            raise DegenerateInput(f"{self.id}: intensities must be finite and in [0, 1]")
        object.__setattr__(self, "luma", luma)
        if self.channels is not None:
            ch = np.asarray(self.channels, dtype=np.float64)
            if ch.shape != (h, w, 3):
                raise DegenerateInput(f"{self.id}: channels shape {ch.shape} does not match luma")
            object.__setattr__(self, "channels", ch)

    @property
    def width(self) -> int:
        return self.luma.shape[1]

    @property
    def height(self) -> int:
        return self.luma.shape[0]

    @classmethod
    def from_rgb(cls, id: str, rgb: np.ndarray, source_path: str = "") -> "ImageRecord":
        rgb = np.clip(np.asarray(rgb, dtype=np.float64), 0.0, 1.0)
        return cls(id=id, luma=rgb_to_luma(rgb), channels=rgb, source_path=source_path)

    @classmethod
    def from_gray(cls, id: str, gray: np.ndarray, source_path: str = "") -> "ImageRecord":
        return cls(id=id, luma=np.clip(gray, 0.0, 1.0), source_path=source_path)

    def pixels(self) -> np.ndarray:
        """Color array if present, otherwise the luma plane."""
        return self.channels if self.channels is not None else self.luma

    def with_pixels(self, pixels: np.ndarray, id: Optional[str] = None) -> "ImageRecord":
        new_id = self.id if id is None else id
        if pixels.ndim == 3:
            return ImageRecord.from_rgb(new_id, pixels)
        return ImageRecord.from_gray(new_id, pixels)


def quantize8(pixels: np.ndarray) -> np.ndarray:
    """Round to the 8-bit grid so in-memory rasters equal their PNG round trip."""
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0) / 255.0


def load_image(path, id: Optional[str] = None) -> ImageRecord:
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise IoError(f"cannot decode image {path}: {exc}", path=path) from exc
    return ImageRecord.from_rgb(id or path.stem, rgb, source_path=str(path))


def save_image(record: ImageRecord, path) -> None:
    data = np.round(np.clip(record.pixels(), 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data).save(Path(path), format="PNG")
