"""End-to-end retargeting: pyramid extraction, top-level re-sampling, then
per-layer inversion, dual correspondence search, fusion and warping down to
pixels, finished by patch voting.

Per-level target widths are derived bottom-up from round(epsilon * width)
through the pooling ladder, so inter-level shapes always stay consistent
with the forward maps.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np

from . import baselines, imgio, metrics, nnf, urs
from .backbone import LEVEL_STRIDES, WeightsBundle, extract_pyramid
from .errors import DeepirError
from .inversion import InversionConfig, invert
from .nnf import NNField
from .tensors import Axis, FeatureMap, Image, bilinear_resize, transpose_image

OPERATORS = ("urs", "scl", "cr", "sc", "colrm")

# inversion effort used by retargeting runs; tighter than the type default,
# which is calibrated for standalone deep inversions
_PIPELINE_INVERSION = dict(max_iterations=30, tolerance=1e-4)


@dataclass(frozen=True)
class RetargetConfig:
    epsilon: float
    axis: Axis = Axis.COLUMNS
    alphas: tuple = (0.7, 0.8, 0.9)  # fusion weight at levels 1, 2, 3
    seed: int = 0
    operator: str = "urs"
    inversion: InversionConfig = dataclass_field(
        default_factory=lambda: InversionConfig(**_PIPELINE_INVERSION)
    )
    patch_iterations: int = 5
    normalize_features: bool = True
    dump_dir: str | None = None
    stage_timeout_s: float | None = None  # abort once a stage exceeds this

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if len(self.alphas) != 3 or any(not 0.0 <= a <= 1.0 for a in self.alphas):
            raise ValueError("alphas must be three values in [0, 1]")
        if self.operator not in OPERATORS:
            raise ValueError(f"operator must be one of {OPERATORS}")
        if self.stage_timeout_s is not None and self.stage_timeout_s <= 0:
            raise ValueError("stage_timeout_s must be positive")


@dataclass(frozen=True)
class RetargetResult:
    image: Image
    pixel_map: NNField
    per_layer_fields: tuple  # fused fields at levels 1, 2, 3
    metrics: dict
    timings: dict


def _target_widths(image_width: int, epsilon: float) -> dict:
    widths = {1: urs.round_half_up(epsilon * image_width)}
    if widths[1] < 1:
        raise ValueError(f"epsilon {epsilon} leaves no output columns")
    for L in (2, 3, 4):
        widths[L] = (widths[L - 1] + 1) // 2
    return widths


def _resize_level(f: FeatureMap, target_width: int, operator: str):
    """Apply the configured feature-space operator and return the resized
    map together with its per-row source-column gather/index map."""
    w = f.width
    if operator == "urs":
        sel = urs.select_for_map(f, w - target_width)
        return urs.resample(f, sel), np.asarray(sel.preserved, dtype=np.int64)
    if operator == "colrm":
        return _gather_exact(f, target_width)
    if operator == "scl":
        resized = bilinear_resize(f, f.height, target_width)
        return resized, baselines.scl_column_map(w, target_width)
    if operator == "cr":
        offset = baselines.crop_offset(urs.importance_map(f), target_width)
        data = f.data[:, offset:offset + target_width]
        return FeatureMap(np.ascontiguousarray(data), layer=f.layer), np.arange(
            offset, offset + target_width, dtype=np.int64
        )
    if operator == "sc":
        out, _, orig_cols = baselines.seam_carve_with_index(f, target_width)
        return out, orig_cols
    raise ValueError(f"unknown operator {operator!r}")


def _gather_exact(f: FeatureMap, target_width: int):
    removed = baselines.lowest_energy_columns(urs.importance_map(f), f.width - target_width)
    cols = np.setdiff1d(np.arange(f.width), removed)
    return FeatureMap(np.ascontiguousarray(f.data[:, cols]), layer=f.layer), cols


def _derived_seed(seed: int, level: int) -> int:
    return (seed * 1000003 + level * 7919) & 0xFFFFFFFFFFFFFFFF


class _StageClock:
    """Times pipeline stages; stages cannot be preempted mid-call, so the
    budget check fires when a stage finishes."""

    def __init__(self, timings: dict, timeout_s):
        self.timings = timings
        self.timeout_s = timeout_s
        self._t0 = None

    def start(self):
        self._t0 = time.perf_counter()

    def stop(self, key: str):
        elapsed = time.perf_counter() - self._t0
        self.timings[key] = elapsed * 1000
        if self.timeout_s is not None and elapsed > self.timeout_s:
            raise DeepirError(
                f"stage {key} took {elapsed:.1f} s, over the "
                f"{self.timeout_s:.1f} s budget"
            )


def retarget(o: Image, bundle: WeightsBundle, cfg: RetargetConfig) -> RetargetResult:
    """Run the full coarse-to-fine retargeting of one image."""
    if cfg.axis is Axis.ROWS:
        flipped = RetargetConfig(
            epsilon=cfg.epsilon, axis=Axis.COLUMNS, alphas=cfg.alphas, seed=cfg.seed,
            operator=cfg.operator, inversion=cfg.inversion,
            patch_iterations=cfg.patch_iterations,
            normalize_features=cfg.normalize_features, dump_dir=cfg.dump_dir,
            stage_timeout_s=cfg.stage_timeout_s,
        )
        res = retarget(transpose_image(o), bundle, flipped)
        image = transpose_image(res.image)
        # rescore in the true orientation; features are not transpose-equivariant
        t0 = time.perf_counter()
        scores = metrics.evaluate(o, image, bundle)
        timings = dict(res.timings)
        timings["metrics_ms"] = (time.perf_counter() - t0) * 1000
        return RetargetResult(
            image=image,
            pixel_map=nnf.transpose_field(res.pixel_map),
            per_layer_fields=tuple(nnf.transpose_field(f) for f in res.per_layer_fields),
            metrics=scores,
            timings=timings,
        )

    from .backbone import MIN_EXTRACT_SIDE, MIN_IMAGE_SIDE

    if o.height < MIN_IMAGE_SIDE or o.width < MIN_IMAGE_SIDE:
        raise ValueError(
            f"image must be at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}, "
            f"got {o.height}x{o.width}"
        )
    widths = _target_widths(o.width, cfg.epsilon)
    if widths[1] < MIN_EXTRACT_SIDE:
        raise ValueError(
            f"epsilon {cfg.epsilon} leaves a {widths[1]}-column output, "
            f"too narrow to score (need {MIN_EXTRACT_SIDE})"
        )

    timings: dict = {}
    clock = _StageClock(timings, cfg.stage_timeout_s)
    dump = _Dumper(cfg.dump_dir)
    clock.start()
    pyramid = extract_pyramid(o, bundle)
    clock.stop("extract_ms")

    clock.start()
    f_r, _ = _resize_level(pyramid.level(4), widths[4], cfg.operator)
    clock.stop("resample_top_ms")
    dump.feature(4, "resampled", f_r)

    fused_fields: dict[int, NNField] = {}
    for L in (4, 3, 2):
        lm = L - 1
        orig = pyramid.level(lm)

        clock.start()
        f_rpp, cols = _resize_level(orig, widths[lm], cfg.operator)
        init = _initial_guess(f_rpp, cfg, lm)
        f_rp, trace = invert(f_r, bundle, init, cfg.inversion)
        clock.stop(f"invert_l{lm}_ms")

        clock.start()
        phi_inv = nnf.patchmatch(
            f_rp, orig, patch_radius=1, iterations=cfg.patch_iterations,
            seed=_derived_seed(cfg.seed, lm), normalize=cfg.normalize_features,
        )
        phi_res = nnf.gather_field(
            f_rpp, orig, cols, patch_radius=1, normalize=cfg.normalize_features
        )
        fused = nnf.fuse(
            phi_inv, phi_res, cfg.alphas[lm - 1], query=f_rp, source=orig,
            normalize=cfg.normalize_features,
        )
        clock.stop(f"match_l{lm}_ms")

        f_r = nnf.warp(orig, fused)
        fused_fields[lm] = fused

        dump.level(lm, o, f_rp, f_rpp, f_r, phi_inv, phi_res, fused, trace)

    pixel_map = fused_fields[1]  # level-1 stride is 1: already on the pixel grid
    clock.start()
    result_image = nnf.vote_reconstruct(o, pixel_map, patch_radius=2)
    clock.stop("vote_ms")

    clock.start()
    scores = metrics.evaluate(o, result_image, bundle)
    clock.stop("metrics_ms")

    return RetargetResult(
        image=result_image,
        pixel_map=pixel_map,
        per_layer_fields=(fused_fields[1], fused_fields[2], fused_fields[3]),
        metrics=scores,
        timings=timings,
    )


def _initial_guess(resized: FeatureMap, cfg: RetargetConfig, level: int) -> FeatureMap:
    if cfg.inversion.init == "resized":
        return resized
    lo, hi = cfg.inversion.random_init_range
    rng = np.random.default_rng(_derived_seed(cfg.seed, 100 + level))
    data = rng.uniform(lo, hi, size=resized.data.shape).astype(np.float32)
    return FeatureMap(data, layer=resized.layer)


class _Dumper:
    """Writes per-level feature/field dumps and preview reconstructions."""

    def __init__(self, dump_dir):
        self.dir = Path(dump_dir) if dump_dir else None
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)

    def feature(self, level: int, stage: str, f: FeatureMap) -> None:
        if self.dir:
            from .formats import write_feature_dump

            write_feature_dump(self.dir / f"{level}_{stage}.dirf", f)

    def level(self, lm, image, f_rp, f_rpp, f_r, phi_inv, phi_res, fused, trace) -> None:
        if not self.dir:
            return
        from .formats import write_feature_dump

        write_feature_dump(self.dir / f"{lm}_inverted.dirf", f_rp)
        write_feature_dump(self.dir / f"{lm}_resampled.dirf", f_rpp)
        write_feature_dump(self.dir / f"{lm}_warped.dirf", f_r)
        nnf.write_field_dump(self.dir / f"{lm}_phi_inverted.dirn", phi_inv)
        nnf.write_field_dump(self.dir / f"{lm}_phi_resampled.dirn", phi_res)
        nnf.write_field_dump(self.dir / f"{lm}_fused.dirn", fused)
        with open(self.dir / f"{lm}_inversion.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "loss"])
            writer.writerows(enumerate(trace))
        stride = LEVEL_STRIDES[lm]
        for stage, f in (("inverted", phi_inv), ("resampled", phi_res), ("fused", fused)):
            pixel = nnf.upsample_field(
                f, stride, f.height * stride, f.width * stride,
                image.height, image.width,
            )
            preview = nnf.vote_reconstruct(image, pixel, patch_radius=2)
            imgio.save_image(self.dir / f"{lm}_{stage}.png", preview)
