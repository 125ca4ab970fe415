"""Uniform re-sampling of feature maps to a target width.

Columns to drop are picked by uniform sampling of the cumulative obscurity
profile, so removals spread out instead of clustering in one low-importance
region. Column indices are 0-based throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensors import Axis, FeatureMap, transpose_spatial


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ObscurityProfile:
    """Per-column obscurity: raw, min-max normalized, and cumulative."""

    raw: np.ndarray
    normalized: np.ndarray
    cumulative: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.raw, dtype=np.float64)
        norm = np.asarray(self.normalized, dtype=np.float64)
        cum = np.asarray(self.cumulative, dtype=np.float64)
        if not (raw.ndim == norm.ndim == cum.ndim == 1):
            raise ValueError("profile components must be 1-D")
        if not (len(raw) == len(norm) == len(cum)):
            raise ValueError("profile components must have equal length")
        if np.any(norm < 0) or np.any(norm > 1):
            raise ValueError("normalized obscurity must lie in [0, 1]")
        if np.any(np.diff(cum) < 0):
            raise ValueError("cumulative obscurity must be nondecreasing")
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "normalized", norm)
        object.__setattr__(self, "cumulative", cum)

    @property
    def width(self) -> int:
        return len(self.raw)

    @classmethod
    def from_normalized(cls, normalized) -> "ObscurityProfile":
        norm = np.asarray(normalized, dtype=np.float64)
        return cls(raw=-norm, normalized=norm, cumulative=np.cumsum(norm))


@dataclass(frozen=True)
class ColumnSelection:
    removed: tuple
    preserved: tuple
    target_width: int

    def __post_init__(self):
        if len(self.preserved) != self.target_width:
            raise ValueError("preserved count must equal target width")
        w = len(self.removed) + len(self.preserved)
        if sorted(set(self.removed) | set(self.preserved)) != list(range(w)):
            raise ValueError("removed and preserved must partition 0..w-1")


def importance_map(f: FeatureMap) -> np.ndarray:
    """Per-position activation mass: sum over channels."""
    return f.data.sum(axis=2, dtype=np.float64)


def obscurity_profile(m: np.ndarray) -> ObscurityProfile:
    """Column obscurity of an importance matrix.

    Raw obscurity negates the column sums, min-max normalization maps it to
    [0, 1]. A constant profile degenerates to uniform obscurity 1 so that
    selection falls back to evenly spaced removal.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("importance matrix must be 2-D")
    if m.shape[1] < 2:
        raise ValueError("need at least 2 columns")
    raw = -m.sum(axis=0)
    lo, hi = raw.min(), raw.max()
    if hi > lo:
        normalized = (raw - lo) / (hi - lo)
    else:
        normalized = np.ones_like(raw)
    return ObscurityProfile(raw=raw, normalized=normalized, cumulative=np.cumsum(normalized))


def removal_count(width: int, epsilon: float) -> int:
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must be in (0, 1], got {epsilon}")
    return width - round_half_up(epsilon * width)


def select_columns_count(profile: ObscurityProfile, k: int) -> ColumnSelection:
    """Remove exactly k columns by uniform sampling of the cumulative profile.

    A sample point r*tau selects the column j whose cumulative span
    (s[j-1], s[j]] contains it. Duplicate hits (or an empty interval pass)
    are topped up greedily by highest normalized obscurity, smaller index
    first on ties.
    """
    w = profile.width
    if k >= w:
        raise ValueError(f"cannot remove {k} of {w} columns")
    if k < 0:
        raise ValueError("removal count must be nonnegative")
    removed: set[int] = set()
    if k > 0:
        s = profile.cumulative
        total = s[-1]
        if total > 0:
            tau = total / k
            points = np.arange(1, k + 1, dtype=np.float64) * tau
            hits = np.searchsorted(s, points, side="left")
            removed.update(int(j) for j in hits if j < w)
        # top-up: most obscure first, then smaller index
        if len(removed) < k:
            order = np.lexsort((np.arange(w), -profile.normalized))
            for j in order:
                if len(removed) == k:
                    break
                removed.add(int(j))
    preserved = tuple(j for j in range(w) if j not in removed)
    return ColumnSelection(
        removed=tuple(sorted(removed)), preserved=preserved, target_width=w - k
    )


def select_columns(profile: ObscurityProfile, epsilon: float) -> ColumnSelection:
    return select_columns_count(profile, removal_count(profile.width, epsilon))


def resample(f: FeatureMap, sel: ColumnSelection) -> FeatureMap:
    if len(sel.removed) + len(sel.preserved) != f.width:
        raise ValueError(
            f"selection built for width {len(sel.removed) + len(sel.preserved)}, "
            f"feature map has width {f.width}"
        )
    return FeatureMap(
        np.ascontiguousarray(f.data[:, list(sel.preserved), :]), layer=f.layer
    )


def select_for_map(f: FeatureMap, k: int) -> ColumnSelection:
    return select_columns_count(obscurity_profile(importance_map(f)), k)


def urs_retarget(f: FeatureMap, epsilon: float, axis: Axis = Axis.COLUMNS) -> FeatureMap:
    """Resize a feature map to round(epsilon * width) columns (or rows)."""
    if axis is Axis.ROWS:
        return transpose_spatial(urs_retarget(transpose_spatial(f), epsilon))
    k = removal_count(f.width, epsilon)
    if k == 0:
        return f
    return resample(f, select_for_map(f, k))
