"""Raster and feature-tensor types plus elementary spatial resampling.

Arrays are channel-last (h, w, c) in memory. Binary dump formats store
channel-planar data instead; the conversion happens in `formats`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class Axis(enum.Enum):
    """Retargeting direction. Row retargeting runs the column path on the
    spatially transposed tensor and transposes back."""

    COLUMNS = "cols"
    ROWS = "rows"


@dataclass(frozen=True)
class Image:
    """H x W x 3 raster with float values in [0, 255]."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 3 or d.shape[2] != 3:
            raise ValueError(f"image data must be (h, w, 3), got {d.shape}")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if not np.all(np.isfinite(d)):
            raise ValueError("image contains non-finite values")
        if d.min() < 0.0 or d.max() > 255.0:
            raise ValueError("image values must lie in [0, 255]")
        object.__setattr__(self, "data", np.ascontiguousarray(d, dtype=np.float32))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 3


@dataclass(frozen=True)
class FeatureMap:
    """One pyramid level: an (h, w, c) activation tensor tagged with its level."""

    data: np.ndarray
    layer: int = 1

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 3:
            raise ValueError(f"feature data must be (h, w, c), got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("feature map contains non-finite values")
        object.__setattr__(self, "data", np.ascontiguousarray(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class FeaturePyramid:
    """Levels 1..4 of the feature stack; `level(L)` is 1-indexed."""

    levels: tuple[FeatureMap, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.levels) != 4:
            raise ValueError("pyramid must hold exactly 4 levels")

    def level(self, L: int) -> FeatureMap:
        if not 1 <= L <= 4:
            raise ValueError(f"level must be in 1..4, got {L}")
        return self.levels[L - 1]


def transpose_spatial(f: FeatureMap) -> FeatureMap:
    """Swap the two spatial axes; channels stay in place. Involution."""
    return FeatureMap(np.ascontiguousarray(np.swapaxes(f.data, 0, 1)), layer=f.layer)


def transpose_image(img: Image) -> Image:
    return Image(np.ascontiguousarray(np.swapaxes(img.data, 0, 1)))


def _axis_coords(n_in: int, n_out: int, dtype) -> np.ndarray:
    # Corner-aligned sampling; a single output sample sits at the midpoint
    # so degenerate reductions average the endpoints.
    if n_out == 1:
        return np.array([(n_in - 1) / 2.0], dtype=dtype)
    return np.arange(n_out, dtype=dtype) * ((n_in - 1) / (n_out - 1))


def resize_array(data: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resize of an (h, w, c) array with corner-aligned sampling."""
    if new_h < 1 or new_w < 1:
        raise ValueError(f"target dims must be positive, got {new_h}x{new_w}")
    h, w = data.shape[:2]
    if (new_h, new_w) == (h, w):
        return data.copy()
    dtype = data.dtype if data.dtype in (np.float32, np.float64) else np.float64

    ys = _axis_coords(h, new_h, dtype)
    xs = _axis_coords(w, new_w, dtype)
    y0 = np.minimum(np.floor(ys).astype(np.intp), h - 1)
    x0 = np.minimum(np.floor(xs).astype(np.intp), w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0).astype(dtype)[:, None, None]
    fx = (xs - x0).astype(dtype)[None, :, None]

    d = data.astype(dtype, copy=False)
    top = d[y0][:, x0] * (1 - fx) + d[y0][:, x1] * fx
    bot = d[y1][:, x0] * (1 - fx) + d[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    return out.astype(data.dtype, copy=False)


def bilinear_resize(f, new_h: int, new_w: int):
    """Resize an Image or FeatureMap to (new_h, new_w); returns the same kind."""
    if isinstance(f, Image):
        return Image(np.clip(resize_array(f.data, new_h, new_w), 0.0, 255.0))
    if isinstance(f, FeatureMap):
        return FeatureMap(resize_array(f.data, new_h, new_w), layer=f.layer)
    raise TypeError(f"expected Image or FeatureMap, got {type(f).__name__}")
