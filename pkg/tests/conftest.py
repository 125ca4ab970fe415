"""Shared fixtures: synthetic weights (He-scaled, seeded), structured test
images and smooth feature maps.

The whole suite runs against a synthetic random-weights DIRW file; no
pretrained download is needed.
"""

import numpy as np
import pytest

from deepir.backbone import TOPOLOGY, ConvLayer, WeightsBundle, save_weights
from deepir.tensors import FeatureMap, Image


def make_bundle(seed: int = 0) -> WeightsBundle:
    """Random conv stack with He-style scaling so activations through all
    nine layers stay O(1) on [-1, 1] inputs."""
    rng = np.random.default_rng(seed)
    layers = []
    for name, in_c, out_c in TOPOLOGY:
        std = np.sqrt(2.0 / (9.0 * in_c))
        weights = rng.normal(0.0, std, size=(out_c, in_c, 3, 3)).astype(np.float32)
        bias = rng.uniform(0.0, 0.05, size=out_c).astype(np.float32)
        layers.append(ConvLayer(name, weights, bias))
    mean = np.array([127.5, 127.5, 127.5], dtype=np.float32)
    return WeightsBundle(tuple(layers), mean, 1.0 / 127.5)


def make_image(seed: int = 0, height: int = 64, width: int = 64) -> Image:
    """Structured test image: gradients, a bright disc, a dark block and
    mild noise, so operators have real content to disagree about."""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    base = np.stack(
        [
            120 + 100 * np.sin(2 * np.pi * xs / width),
            128 * ys / height + 60,
            255 * xs / max(width - 1, 1),
        ],
        axis=2,
    )
    cy, cx, r = height * 0.45, width * 0.3, min(height, width) * 0.18
    disc = ((ys - cy) ** 2 + (xs - cx) ** 2) < r * r
    base[disc] = [240, 220, 40]
    y0, y1 = int(height * 0.6), int(height * 0.85)
    x0, x1 = int(width * 0.65), int(width * 0.9)
    base[y0:y1, x0:x1] = [20, 40, 150]
    base += rng.uniform(-6, 6, size=base.shape)
    return Image(np.clip(base, 0, 255).astype(np.float32))


def smooth_feature_map(rng, height: int, width: int, channels: int,
                       base: int = 4, noise: float = 0.0, layer: int = 1) -> FeatureMap:
    """Random spatially-correlated map: bilinear-upsampled low-res noise."""
    lo = rng.standard_normal((base, base, channels))
    ys = np.linspace(0, base - 1, height)
    xs = np.linspace(0, base - 1, width)
    y0 = np.clip(ys.astype(int), 0, base - 2)
    x0 = np.clip(xs.astype(int), 0, base - 2)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    out = (
        lo[y0][:, x0] * (1 - fy) * (1 - fx)
        + lo[y0][:, x0 + 1] * (1 - fy) * fx
        + lo[y0 + 1][:, x0] * fy * (1 - fx)
        + lo[y0 + 1][:, x0 + 1] * fy * fx
    )
    if noise:
        out = out + noise * rng.standard_normal(out.shape)
    return FeatureMap(out.astype(np.float32), layer=layer)


@pytest.fixture(scope="session")
def bundle():
    return make_bundle(seed=0)


@pytest.fixture(scope="session")
def weights_path(bundle, tmp_path_factory):
    path = tmp_path_factory.mktemp("weights") / "synthetic.dirw"
    save_weights(path, bundle)
    return path
