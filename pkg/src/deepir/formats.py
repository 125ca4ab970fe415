"""Binary file formats.

All formats are little-endian. Spatial data is stored channel-planar
([c][h][w]) even though in-memory arrays are channel-last.

DIRF feature dump:
    magic "DIRF", u32 version=1, u32 layer, u32 h, u32 w, u32 c,
    f32 data[c][h][w]

DIRW weights file:
    magic "DIRW", u32 version=1, f32 mean_rgb[3], f32 scale, u32 layer_count,
    per layer: u16 name_len, name (UTF-8), u32 out_c, u32 in_c, u32 kh,
    u32 kw, f32 weights[out_c][in_c][kh][kw], f32 bias[out_c],
    trailing u32 CRC32 of all preceding bytes
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import FormatError
from .tensors import FeatureMap

FEATURE_MAGIC = b"DIRF"
WEIGHTS_MAGIC = b"DIRW"
FIELD_MAGIC = b"DIRN"
VERSION = 1


def write_feature_dump(path, f: FeatureMap) -> None:
    planar = np.ascontiguousarray(
        np.transpose(f.data, (2, 0, 1)), dtype="<f4"
    )
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<IIIII", VERSION, f.layer, f.height, f.width, f.channels))
        fh.write(planar.tobytes())


def read_feature_dump(path) -> FeatureMap:
    raw = Path(path).read_bytes()
    if raw[:4] != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic, expected DIRF")
    version, layer, h, w, c = struct.unpack_from("<IIIII", raw, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported DIRF version {version}")
    n = h * w * c
    expected = 24 + 4 * n
    if len(raw) != expected:
        raise FormatError(f"{path}: truncated DIRF file ({len(raw)} of {expected} bytes)")
    planar = np.frombuffer(raw, dtype="<f4", count=n, offset=24).reshape(c, h, w)
    return FeatureMap(np.ascontiguousarray(np.transpose(planar, (1, 2, 0))), layer=layer)


def write_weights_records(path, mean_rgb, scale: float, layers) -> None:
    """Serialize conv layer records to a DIRW file.

    `layers` is an iterable of (name, weights, bias) where weights has
    shape (out_c, in_c, kh, kw).
    """
    mean = np.asarray(mean_rgb, dtype="<f4")
    if mean.shape != (3,):
        raise ValueError("mean_rgb must have 3 components")
    parts = [WEIGHTS_MAGIC, struct.pack("<I", VERSION), mean.tobytes(),
             struct.pack("<f", scale)]
    layers = list(layers)
    parts.append(struct.pack("<I", len(layers)))
    for name, weights, bias in layers:
        w = np.ascontiguousarray(weights, dtype="<f4")
        b = np.ascontiguousarray(bias, dtype="<f4")
        if w.ndim != 4:
            raise ValueError(f"{name}: weights must be 4-D (out, in, kh, kw)")
        if b.shape != (w.shape[0],):
            raise ValueError(f"{name}: bias length must equal out_c")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<IIII", *w.shape))
        parts.append(w.tobytes())
        parts.append(b.tobytes())
    body = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))


def read_weights_records(path):
    """Parse a DIRW file; returns (mean_rgb, scale, [(name, weights, bias)]).

    Verifies magic, version, structural integrity and the trailing CRC32.
    Topology validation is the loader's job.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 29:
        raise FormatError(f"{path}: file too short for DIRW header")
    if raw[:4] != WEIGHTS_MAGIC:
        raise FormatError(f"{path}: bad magic, expected DIRW")
    body, (crc_stored,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise FormatError(f"{path}: CRC32 mismatch, file corrupted")
    (version,) = struct.unpack_from("<I", body, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported DIRW version {version}")
    mean_rgb = np.frombuffer(body, dtype="<f4", count=3, offset=8).copy()
    (scale,) = struct.unpack_from("<f", body, 20)
    (layer_count,) = struct.unpack_from("<I", body, 24)
    off = 28
    layers = []
    for _ in range(layer_count):
        try:
            (name_len,) = struct.unpack_from("<H", body, off)
            off += 2
            name = body[off:off + name_len].decode("utf-8")
            off += name_len
            out_c, in_c, kh, kw = struct.unpack_from("<IIII", body, off)
            off += 16
            n = out_c * in_c * kh * kw
            weights = np.frombuffer(body, dtype="<f4", count=n, offset=off)
            weights = weights.reshape(out_c, in_c, kh, kw).copy()
            off += 4 * n
            bias = np.frombuffer(body, dtype="<f4", count=out_c, offset=off).copy()
            off += 4 * out_c
        except (struct.error, ValueError) as exc:
            raise FormatError(f"{path}: truncated DIRW layer table: {exc}") from exc
        layers.append((name, weights, bias))
    if off != len(body):
        raise FormatError(f"{path}: {len(body) - off} trailing bytes after layer table")
    return mean_rgb, float(scale), layers
