"""Classic retargeting operators, usable on images (gradient-magnitude
energy) and on feature maps (channel-sum importance energy).

All operators return exactly the target width; row retargeting transposes,
runs the column path and transposes back. Indices are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensors import Axis, FeatureMap, Image, bilinear_resize, transpose_image, transpose_spatial
from .urs import importance_map, round_half_up

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class SeamPath:
    """One 8-connected vertical seam (a column per row) and its total energy,
    in the coordinates of the map it was carved from."""

    columns: np.ndarray
    energy: float

    def __post_init__(self):
        cols = np.asarray(self.columns, dtype=np.int64)
        if cols.ndim != 1:
            raise ValueError("seam must be one column index per row")
        if len(cols) > 1 and np.abs(np.diff(cols)).max() > 1:
            raise ValueError("seam is not 8-connected")
        object.__setattr__(self, "columns", cols)


def _transposed(x):
    return transpose_image(x) if isinstance(x, Image) else transpose_spatial(x)


def _energy(x) -> np.ndarray:
    if isinstance(x, FeatureMap):
        return importance_map(x)
    return gradient_energy(x.data)


def gradient_energy(data: np.ndarray) -> np.ndarray:
    """Gradient magnitude of Rec. 601 luminance, central differences with
    clamped borders."""
    luma = data.astype(np.float64) @ _LUMA
    up = luma[np.maximum(np.arange(luma.shape[0]) - 1, 0)]
    down = luma[np.minimum(np.arange(luma.shape[0]) + 1, luma.shape[0] - 1)]
    left = luma[:, np.maximum(np.arange(luma.shape[1]) - 1, 0)]
    right = luma[:, np.minimum(np.arange(luma.shape[1]) + 1, luma.shape[1] - 1)]
    gy = (down - up) / 2.0
    gx = (right - left) / 2.0
    return np.sqrt(gx * gx + gy * gy)


def _rebuild(x, data):
    if isinstance(x, Image):
        return Image(np.ascontiguousarray(data))
    return FeatureMap(np.ascontiguousarray(data), layer=x.layer)


def _target_width(width: int, epsilon: float) -> int:
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must be in (0, 1], got {epsilon}")
    target = round_half_up(epsilon * width)
    if target < 1:
        raise ValueError(f"epsilon {epsilon} leaves no columns of {width}")
    return target


def scl(x, epsilon: float, axis: Axis = Axis.COLUMNS):
    """Uniform scaling to the target aspect ratio."""
    if axis is Axis.ROWS:
        return _transposed(scl(_transposed(x), epsilon))
    h = x.height
    return bilinear_resize(x, h, _target_width(x.width, epsilon))


def scl_column_map(width: int, target_width: int) -> np.ndarray:
    """Source column per output column under corner-aligned scaling."""
    if target_width == 1:
        return np.array([round_half_up((width - 1) / 2.0)], dtype=np.int64)
    coords = np.arange(target_width, dtype=np.float64) * ((width - 1) / (target_width - 1))
    return np.floor(coords + 0.5).astype(np.int64)


def crop_offset(energy: np.ndarray, target_width: int) -> int:
    """Offset of the contiguous window with maximal energy; ties go to the
    window closest to the center, then to the left."""
    col = energy.sum(axis=0)
    sums = np.convolve(col, np.ones(target_width), mode="valid")
    candidates = np.flatnonzero(sums == sums.max())
    center = (len(col) - target_width) / 2.0
    return int(min(candidates, key=lambda o: (abs(o - center), o)))


def crop(x, epsilon: float, axis: Axis = Axis.COLUMNS, offset: int | None = None):
    """Keep the most energetic contiguous window; returns (cropped, offset)."""
    if axis is Axis.ROWS:
        out, off = crop(_transposed(x), epsilon, offset=offset)
        return _transposed(out), off
    target = _target_width(x.width, epsilon)
    if offset is None:
        offset = crop_offset(_energy(x), target)
    if not 0 <= offset <= x.width - target:
        raise ValueError(f"crop offset {offset} out of range for width {x.width}")
    data = x.data[:, offset:offset + target]
    return _rebuild(x, data), offset


def find_seam(energy: np.ndarray) -> SeamPath:
    """Minimum-energy 8-connected vertical seam by dynamic programming.

    Ties prefer the smaller column index, both for predecessors and for the
    seam end, so uniform energy yields the leftmost straight seam.
    """
    h, w = energy.shape
    cost = energy[0].astype(np.float64)
    choice = np.zeros((h, w), dtype=np.int8)
    for i in range(1, h):
        left = np.concatenate(([np.inf], cost[:-1]))
        right = np.concatenate((cost[1:], [np.inf]))
        stacked = np.stack([left, cost, right])  # candidate order favors smaller column
        pick = stacked.argmin(axis=0)
        choice[i] = pick - 1
        cost = energy[i] + stacked[pick, np.arange(w)]
    cols = np.empty(h, dtype=np.int64)
    cols[-1] = int(cost.argmin())
    for i in range(h - 1, 0, -1):
        cols[i - 1] = cols[i] + choice[i, cols[i]]
    return SeamPath(columns=cols, energy=float(cost[cols[-1]]))


def _remove_seam(data: np.ndarray, cols: np.ndarray) -> np.ndarray:
    h, w = data.shape[:2]
    keep = np.ones((h, w), dtype=bool)
    keep[np.arange(h), cols] = False
    return data[keep].reshape(h, w - 1, *data.shape[2:])


def _carve(x, k: int):
    """Remove k seams; returns (result, seams, per-row surviving original
    column indices)."""
    data = x.data
    h, w = data.shape[:2]
    orig = np.tile(np.arange(w, dtype=np.int64), (h, 1))
    seams = []
    current = x
    for _ in range(k):
        seam = find_seam(_energy(current))
        seams.append(seam)
        data = _remove_seam(current.data, seam.columns)
        orig = _remove_seam(orig, seam.columns)
        current = _rebuild(x, data)
    return current, seams, orig


def seam_carve(x, epsilon: float, axis: Axis = Axis.COLUMNS):
    """Iterative minimum-seam removal; returns (result, seam list)."""
    if axis is Axis.ROWS:
        out, seams = seam_carve(_transposed(x), epsilon)
        return _transposed(out), seams
    k = x.width - _target_width(x.width, epsilon)
    out, seams, _ = _carve(x, k)
    return out, seams


def seam_carve_with_index(x, target_width: int):
    """Column-count variant that also reports, per row, which original
    columns survived (needed for analytic correspondence maps)."""
    out, seams, orig = _carve(x, x.width - target_width)
    return out, seams, orig


def column_removal(x, epsilon: float, axis: Axis = Axis.COLUMNS):
    """Drop the k columns with the smallest summed energy; returns
    (result, removed column indices)."""
    if axis is Axis.ROWS:
        out, removed = column_removal(_transposed(x), epsilon)
        return _transposed(out), removed
    k = x.width - _target_width(x.width, epsilon)
    removed = lowest_energy_columns(_energy(x), k)
    keep = np.setdiff1d(np.arange(x.width), removed)
    return _rebuild(x, x.data[:, keep]), removed


def lowest_energy_columns(energy: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest column sums, ties to the smaller index."""
    sums = energy.sum(axis=0)
    order = np.argsort(sums, kind="stable")
    return np.sort(order[:k])
