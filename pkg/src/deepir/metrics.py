"""Objective retargeting scores: feature remain ratio and feature
dissimilarity.

Both operate on pyramids obtained by feeding the original and the
retargeted image through the same backbone. The dissimilarity fields are
recomputed here (seed 0) rather than reused from the pipeline, so external
or baseline results score through the identical procedure.
"""

from __future__ import annotations

import numpy as np

from .backbone import WeightsBundle, extract_pyramid
from .nnf import NNField, patchmatch, warp
from .tensors import FeaturePyramid, Image


def frr(orig: FeaturePyramid, ret: FeaturePyramid) -> float:
    """Mean, over the four levels, of retained activation mass."""
    ratios = []
    for L in range(1, 5):
        denom = float(orig.level(L).data.sum(dtype=np.float64))
        if denom <= 0.0:
            raise ValueError(f"level {L} of the original pyramid has no activation mass")
        ratios.append(float(ret.level(L).data.sum(dtype=np.float64)) / denom)
    return float(np.mean(ratios))


def fd(orig: FeaturePyramid, fields, ret: FeaturePyramid) -> float:
    """Mean, over the four levels, of the summed squared difference between
    warped-original and retargeted features."""
    if len(fields) != 4:
        raise ValueError("need one field per pyramid level")
    total = 0.0
    for L, field in zip(range(1, 5), fields):
        o, r = orig.level(L), ret.level(L)
        if (field.height, field.width) != (r.height, r.width):
            raise ValueError(f"level {L} field does not match retargeted dims")
        if field.source_shape != (o.height, o.width):
            raise ValueError(f"level {L} field does not match original dims")
        diff = warp(o, field).data.astype(np.float64) - r.data.astype(np.float64)
        total += float((diff * diff).sum())
    return total / 4.0


def correspondence_fields(ret: FeaturePyramid, orig: FeaturePyramid, seed: int = 0):
    """Per-level patchmatch from retargeted into original features. The
    patch radius drops to 0 when a level is too small for 3x3 patches."""
    fields: list[NNField] = []
    for L in range(1, 5):
        r, o = ret.level(L), orig.level(L)
        radius = 1 if min(r.height, r.width, o.height, o.width) >= 3 else 0
        fields.append(patchmatch(r, o, patch_radius=radius, iterations=5, seed=seed))
    return fields


def evaluate(original: Image, retargeted: Image, bundle: WeightsBundle) -> dict:
    """FRR and FD of a retargeted image against its original."""
    orig = extract_pyramid(original, bundle)
    ret = extract_pyramid(retargeted, bundle)
    fields = correspondence_fields(ret, orig)
    return {"frr": frr(orig, ret), "fd": fd(orig, fields, ret)}
