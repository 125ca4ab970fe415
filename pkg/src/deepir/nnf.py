"""Nearest-neighbor fields: randomized PatchMatch search, field fusion,
warping and patch-vote image reconstruction.

Patch reads clamp coordinates to the map bounds, so every grid position is
a usable patch center. Feature vectors are L2-normalized per position
before matching (raw values are used for warping). The search is
deterministic: every random draw comes from a counter RNG keyed on
(seed, i, j, round), independent of evaluation order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .errors import FormatError
from .formats import FIELD_MAGIC, VERSION
from .tensors import FeatureMap, Image

_U64 = np.uint64
_MIX1 = _U64(0x9E3779B97F4A7C15)
_MIX2 = _U64(0xBF58476D1CE4E5B9)
_MIX3 = _U64(0x94D049BB133111EB)


@dataclass(frozen=True)
class NNField:
    """Dense query -> source patch correspondence with per-position distances."""

    mapping: np.ndarray  # (h, w, 2) int32, (i_src, j_src)
    distance: np.ndarray  # (h, w) float64
    source_shape: tuple  # (h_src, w_src)
    patch_radius: int
    rng_seed: int

    def __post_init__(self):
        m = np.ascontiguousarray(self.mapping, dtype=np.int32)
        d = np.ascontiguousarray(self.distance, dtype=np.float64)
        if m.ndim != 3 or m.shape[2] != 2:
            raise ValueError(f"mapping must be (h, w, 2), got {m.shape}")
        if d.shape != m.shape[:2]:
            raise ValueError("distance grid must match mapping grid")
        hs, ws = self.source_shape
        if m[..., 0].min() < 0 or m[..., 0].max() >= hs:
            raise ValueError("source row index out of bounds")
        if m[..., 1].min() < 0 or m[..., 1].max() >= ws:
            raise ValueError("source column index out of bounds")
        object.__setattr__(self, "mapping", m)
        object.__setattr__(self, "distance", d)
        object.__setattr__(self, "source_shape", (int(hs), int(ws)))

    @property
    def height(self) -> int:
        return self.mapping.shape[0]

    @property
    def width(self) -> int:
        return self.mapping.shape[1]


def normalize_positions(data: np.ndarray) -> np.ndarray:
    """Unit L2 norm per spatial position; zero vectors stay zero."""
    d = data.astype(np.float32, copy=False)
    norms = np.sqrt((d.astype(np.float64) ** 2).sum(axis=2))
    norms[norms == 0.0] = 1.0
    return (d / norms[:, :, None].astype(np.float32)).astype(np.float32)


@numba.njit(inline="always", cache=True)
def _mix64(x):
    x = (x ^ (x >> _U64(30))) * _MIX2
    x = (x ^ (x >> _U64(27))) * _MIX3
    return x ^ (x >> _U64(31))


@numba.njit(inline="always", cache=True)
def _stream_init(seed, i, j, phase):
    h = _U64(seed) ^ (_U64(i + 1) * _MIX2)
    h = _mix64(h ^ (_U64(j + 1) * _MIX3))
    return _mix64(h ^ (_U64(phase + 1) * _MIX1))


@numba.njit(inline="always", cache=True)
def _stream_next(state):
    state = state + _MIX1
    return state, _mix64(state)


@numba.njit(cache=True)
def _patch_dist(q, s, qi, qj, si, sj, radius, bound):
    """Summed squared difference over the clamped patch around (qi, qj) and
    (si, sj). May return early (partial sum) once the bound is exceeded;
    the result is then only valid for rejection."""
    hq, wq, c = q.shape
    hs, ws, _ = s.shape
    acc = 0.0
    for dy in range(-radius, radius + 1):
        yq = min(max(qi + dy, 0), hq - 1)
        ys = min(max(si + dy, 0), hs - 1)
        for dx in range(-radius, radius + 1):
            xq = min(max(qj + dx, 0), wq - 1)
            xs = min(max(sj + dx, 0), ws - 1)
            for ch in range(c):
                diff = np.float64(q[yq, xq, ch]) - np.float64(s[ys, xs, ch])
                acc += diff * diff
        if acc >= bound:
            return acc
    return acc


@numba.njit(inline="always", cache=True)
def _try_candidate(q, s, i, j, si, sj, radius, map_i, map_j, dist):
    hs, ws = s.shape[0], s.shape[1]
    si = min(max(si, 0), hs - 1)
    sj = min(max(sj, 0), ws - 1)
    if si == map_i[i, j] and sj == map_j[i, j]:
        return
    d = _patch_dist(q, s, i, j, si, sj, radius, dist[i, j])
    if d < dist[i, j]:
        dist[i, j] = d
        map_i[i, j] = si
        map_j[i, j] = sj


# search effort per position and round: uniform restarts plus draws at each
# halved extent; enough to stay near the exhaustive optimum even on small maps
_RESTARTS = 4
_DRAWS_PER_SCALE = 8


@numba.njit(cache=True)
def _pm_improve(q, s, radius, i, j, rnd, map_i, map_j, dist, step, max_extent, seed):
    # propagation from the already-visited scan neighbors, both with the
    # coordinate shift and verbatim (gather-like true fields are piecewise
    # constant, so the unshifted candidate matters)
    hq, wq = q.shape[0], q.shape[1]
    pi, pj = i - step, j - step
    if 0 <= pi < hq:
        _try_candidate(q, s, i, j, map_i[pi, j] + step, map_j[pi, j], radius, map_i, map_j, dist)
        _try_candidate(q, s, i, j, map_i[pi, j], map_j[pi, j], radius, map_i, map_j, dist)
    if 0 <= pj < wq:
        _try_candidate(q, s, i, j, map_i[i, pj], map_j[i, pj] + step, radius, map_i, map_j, dist)
        _try_candidate(q, s, i, j, map_i[i, pj], map_j[i, pj], radius, map_i, map_j, dist)
    if 0 <= pi < hq and 0 <= pj < wq:
        _try_candidate(q, s, i, j, map_i[pi, pj] + step, map_j[pi, pj] + step, radius, map_i, map_j, dist)
    state = _stream_init(seed, i, j, rnd)
    hs, ws = s.shape[0], s.shape[1]
    for _ in range(_RESTARTS):
        state, a = _stream_next(state)
        state, b = _stream_next(state)
        _try_candidate(q, s, i, j, np.int64(a % _U64(hs)), np.int64(b % _U64(ws)), radius, map_i, map_j, dist)
    # exponentially decaying random search around the current best
    extent = max_extent
    while extent >= 1:
        span = 2 * extent + 1
        for _ in range(_DRAWS_PER_SCALE):
            state, a = _stream_next(state)
            state, b = _stream_next(state)
            di = np.int64(a % _U64(span)) - extent
            dj = np.int64(b % _U64(span)) - extent
            _try_candidate(q, s, i, j, map_i[i, j] + di, map_j[i, j] + dj, radius, map_i, map_j, dist)
        extent //= 2


@numba.njit(cache=True)
def _pm_run(q, s, radius, iterations, seed, map_i, map_j, dist):
    hq, wq = q.shape[0], q.shape[1]
    hs, ws = s.shape[0], s.shape[1]
    for i in range(hq):
        for j in range(wq):
            state = _stream_init(seed, i, j, 0)
            state, a = _stream_next(state)
            state, b = _stream_next(state)
            map_i[i, j] = np.int32(a % _U64(hs))
            map_j[i, j] = np.int32(b % _U64(ws))
            dist[i, j] = _patch_dist(q, s, i, j, map_i[i, j], map_j[i, j], radius, np.inf)
    max_extent = max(hs, ws)
    for it in range(iterations):
        if it % 2 == 1:
            for i in range(hq - 1, -1, -1):
                for j in range(wq - 1, -1, -1):
                    _pm_improve(q, s, radius, i, j, it + 1, map_i, map_j, dist, -1, max_extent, seed)
        else:
            for i in range(hq):
                for j in range(wq):
                    _pm_improve(q, s, radius, i, j, it + 1, map_i, map_j, dist, 1, max_extent, seed)


@numba.njit(cache=True)
def _recompute_dist(q, s, map_i, map_j, radius, out):
    for i in range(q.shape[0]):
        for j in range(q.shape[1]):
            out[i, j] = _patch_dist(q, s, i, j, map_i[i, j], map_j[i, j], radius, np.inf)


def _matching_views(query: FeatureMap, source: FeatureMap, normalize: bool):
    if normalize:
        return normalize_positions(query.data), normalize_positions(source.data)
    return (
        query.data.astype(np.float32, copy=False),
        source.data.astype(np.float32, copy=False),
    )


def field_distances(
    query: FeatureMap,
    source: FeatureMap,
    mapping: np.ndarray,
    patch_radius: int,
    normalize: bool = True,
) -> np.ndarray:
    """Patch distances of an arbitrary mapping, same metric as patchmatch."""
    q, s = _matching_views(query, source, normalize)
    out = np.empty(mapping.shape[:2], dtype=np.float64)
    _recompute_dist(
        q, s,
        np.ascontiguousarray(mapping[..., 0], dtype=np.int32),
        np.ascontiguousarray(mapping[..., 1], dtype=np.int32),
        patch_radius, out,
    )
    return out


def patchmatch(
    query: FeatureMap,
    source: FeatureMap,
    patch_radius: int = 1,
    iterations: int = 5,
    seed: int = 0,
    normalize: bool = True,
) -> NNField:
    """Approximate nearest-neighbor field from query to source patches."""
    if query.channels != source.channels:
        raise ValueError(
            f"channel mismatch: query has {query.channels}, source has {source.channels}"
        )
    side = 2 * patch_radius + 1
    for fm, label in ((query, "query"), (source, "source")):
        if fm.height < side or fm.width < side:
            raise ValueError(f"{label} map {fm.height}x{fm.width} smaller than {side}x{side} patch")
    q, s = _matching_views(query, source, normalize)
    map_i = np.empty((query.height, query.width), dtype=np.int32)
    map_j = np.empty_like(map_i)
    dist = np.empty(map_i.shape, dtype=np.float64)
    _pm_run(q, s, patch_radius, iterations, np.uint64(seed), map_i, map_j, dist)
    mapping = np.stack([map_i, map_j], axis=2)
    return NNField(mapping, dist, (source.height, source.width), patch_radius, seed)


def make_field(
    query: FeatureMap,
    source: FeatureMap,
    mapping: np.ndarray,
    patch_radius: int = 1,
    seed: int = 0,
    normalize: bool = True,
) -> NNField:
    """Wrap an explicit mapping (e.g. a column gather) as a valid NNField."""
    mapping = np.ascontiguousarray(mapping, dtype=np.int32)
    dist = field_distances(query, source, mapping, patch_radius, normalize)
    return NNField(mapping, dist, (source.height, source.width), patch_radius, seed)


def gather_field(
    query: FeatureMap,
    source: FeatureMap,
    source_cols: np.ndarray,
    patch_radius: int = 1,
    normalize: bool = True,
) -> NNField:
    """Field for a per-row column gather: position (i, k) maps to
    (i, source_cols[i, k]); pass a 1-D array for a row-uniform gather."""
    cols = np.asarray(source_cols, dtype=np.int32)
    if cols.ndim == 1:
        cols = np.tile(cols, (query.height, 1))
    if cols.shape != (query.height, query.width):
        raise ValueError("gather column grid must match query dims")
    rows = np.tile(np.arange(query.height, dtype=np.int32)[:, None], (1, query.width))
    mapping = np.stack([rows, cols], axis=2)
    return make_field(query, source, mapping, patch_radius, 0, normalize)


def fuse(
    a: NNField,
    b: NNField,
    alpha: float,
    query: FeatureMap,
    source: FeatureMap,
    normalize: bool = True,
) -> NNField:
    """Per-position coordinate blend round(alpha*a + (1-alpha)*b), distances
    recomputed so the field invariant holds."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if (a.height, a.width) != (b.height, b.width):
        raise ValueError("query dims differ between fields")
    if a.source_shape != b.source_shape:
        raise ValueError("source dims differ between fields")
    if a.patch_radius != b.patch_radius:
        raise ValueError("patch radii differ between fields")
    blended = alpha * a.mapping.astype(np.float64) + (1.0 - alpha) * b.mapping.astype(np.float64)
    mapping = np.floor(blended + 0.5).astype(np.int32)
    hs, ws = a.source_shape
    mapping[..., 0] = np.clip(mapping[..., 0], 0, hs - 1)
    mapping[..., 1] = np.clip(mapping[..., 1], 0, ws - 1)
    dist = field_distances(query, source, mapping, a.patch_radius, normalize)
    return NNField(mapping, dist, a.source_shape, a.patch_radius, a.rng_seed)


def warp(source: FeatureMap, field: NNField) -> FeatureMap:
    """Gather source vectors through the field: out(i, j) = source(field(i, j))."""
    if field.source_shape != (source.height, source.width):
        raise ValueError(
            f"field built for source {field.source_shape}, "
            f"got {(source.height, source.width)}"
        )
    out = source.data[field.mapping[..., 0], field.mapping[..., 1]]
    return FeatureMap(np.ascontiguousarray(out), layer=source.layer)


def identity_mapping(h: int, w: int) -> np.ndarray:
    rows = np.repeat(np.arange(h, dtype=np.int32)[:, None], w, axis=1)
    cols = np.repeat(np.arange(w, dtype=np.int32)[None, :], h, axis=0)
    return np.stack([rows, cols], axis=2)


def vote_reconstruct(source_image: Image, field: NNField, patch_radius: int = 2) -> Image:
    """Average, per output pixel, every source pixel proposed by the patches
    overlapping it: pixel p gets O(field(x) + (p - x)) for nearby centers x.

    Votes falling outside the source are dropped; the center vote is always
    in bounds, so every pixel receives at least one.
    """
    if field.source_shape != (source_image.height, source_image.width):
        raise ValueError("field source dims do not match the source image")
    h, w = field.height, field.width
    hs, ws = field.source_shape
    src = source_image.data.astype(np.float64)
    mi = field.mapping[..., 0].astype(np.int64)
    mj = field.mapping[..., 1].astype(np.int64)
    acc = np.zeros((h, w, 3), dtype=np.float64)
    cnt = np.zeros((h, w, 1), dtype=np.float64)
    for dy in range(-patch_radius, patch_radius + 1):
        # rows where the voting center p - d stays inside the query grid
        o0, o1 = max(0, dy), h + min(0, dy)
        c0, c1 = o0 - dy, o1 - dy
        for dx in range(-patch_radius, patch_radius + 1):
            p0, p1 = max(0, dx), w + min(0, dx)
            q0, q1 = p0 - dx, p1 - dx
            ti = mi[c0:c1, q0:q1] + dy
            tj = mj[c0:c1, q0:q1] + dx
            ok = (ti >= 0) & (ti < hs) & (tj >= 0) & (tj < ws)
            ti = np.where(ok, ti, 0)
            tj = np.where(ok, tj, 0)
            votes = src[ti, tj] * ok[..., None]
            acc[o0:o1, p0:p1] += votes
            cnt[o0:o1, p0:p1, 0] += ok
    out = acc / cnt
    return Image(np.clip(out, 0.0, 255.0).astype(np.float32))


def transpose_field(field: NNField) -> NNField:
    """Swap spatial axes of the query grid and of the source coordinates."""
    mapping = np.ascontiguousarray(field.mapping.transpose(1, 0, 2)[..., ::-1])
    distance = np.ascontiguousarray(field.distance.T)
    hs, ws = field.source_shape
    return NNField(mapping, distance, (ws, hs), field.patch_radius, field.rng_seed)


def upsample_field(field: NNField, stride: int, out_h: int, out_w: int,
                   src_h: int, src_w: int) -> NNField:
    """Offset-preserving nearest upsampling of a feature-level field to the
    pixel grid (used for previews and stride > 1 taps)."""
    ys = np.arange(out_h)
    xs = np.arange(out_w)
    li = np.minimum(ys // stride, field.height - 1)
    lj = np.minimum(xs // stride, field.width - 1)
    ri = (ys - li * stride)[:, None]
    rj = (xs - lj * stride)[None, :]
    mi = field.mapping[li][:, lj, 0].astype(np.int64) * stride + ri
    mj = field.mapping[li][:, lj, 1].astype(np.int64) * stride + rj
    mapping = np.stack(
        [np.clip(mi, 0, src_h - 1), np.clip(mj, 0, src_w - 1)], axis=2
    ).astype(np.int32)
    dist = np.zeros((out_h, out_w), dtype=np.float64)
    return NNField(mapping, dist, (src_h, src_w), field.patch_radius, field.rng_seed)


# ---------------------------------------------------------------------------
# DIRN dump
# ---------------------------------------------------------------------------

_RECORD = np.dtype([("i", "<i4"), ("j", "<i4"), ("d", "<f4")])


def write_field_dump(path, field: NNField) -> None:
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(struct.pack(
            "<IIIIIIQ", VERSION, field.height, field.width,
            field.source_shape[0], field.source_shape[1],
            field.patch_radius, field.rng_seed & 0xFFFFFFFFFFFFFFFF,
        ))
        records = np.empty(field.height * field.width, dtype=_RECORD)
        records["i"] = field.mapping[..., 0].ravel()
        records["j"] = field.mapping[..., 1].ravel()
        records["d"] = field.distance.ravel().astype(np.float32)
        fh.write(records.tobytes())


def read_field_dump(path) -> NNField:
    raw = Path(path).read_bytes()
    if raw[:4] != FIELD_MAGIC:
        raise FormatError(f"{path}: bad magic, expected DIRN")
    version, h, w, sh, sw, radius, seed = struct.unpack_from("<IIIIIIQ", raw, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported DIRN version {version}")
    header = 4 + struct.calcsize("<IIIIIIQ")
    n = h * w
    if len(raw) != header + n * _RECORD.itemsize:
        raise FormatError(f"{path}: truncated DIRN file")
    records = np.frombuffer(raw, dtype=_RECORD, count=n, offset=header)
    mapping = np.stack(
        [records["i"].reshape(h, w), records["j"].reshape(h, w)], axis=2
    )
    distance = records["d"].reshape(h, w).astype(np.float64)
    return NNField(mapping, distance, (sh, sw), radius, seed)
