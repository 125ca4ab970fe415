"""Truncated VGG-19 engine: weights loading, feature pyramid extraction,
inter-level forward maps and the reconstruction-loss gradient.

The fixed topology taps relu1_1 / relu2_1 / relu3_1 / relu4_1, giving
strides 1/2/4/8 and channel counts 64/128/256/512. Convolutions are 3x3,
zero-padded by 1; pooling is 2x2 max with ceil semantics on odd dims.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import formats
from .errors import FormatError
from .tensors import FeatureMap, FeaturePyramid, Image

# (name, in_channels, out_channels), in serialization order.
TOPOLOGY = (
    ("conv1_1", 3, 64),
    ("conv1_2", 64, 64),
    ("conv2_1", 64, 128),
    ("conv2_2", 128, 128),
    ("conv3_1", 128, 256),
    ("conv3_2", 256, 256),
    ("conv3_3", 256, 256),
    ("conv3_4", 256, 256),
    ("conv4_1", 256, 512),
)

LEVEL_CHANNELS = {1: 64, 2: 128, 3: 256, 4: 512}
LEVEL_STRIDES = {1: 1, 2: 2, 3: 4, 4: 8}

# Conv names applied between tap L-1 and tap L; "pool" marks the 2x2 max-pool.
_LEVEL_CHAINS = {
    2: ("conv1_2", "pool", "conv2_1"),
    3: ("conv2_2", "pool", "conv3_1"),
    4: ("conv3_2", "conv3_3", "conv3_4", "pool", "conv4_1"),
}

# contract minimum for retargeting inputs (level 4 ends up at least 4 wide)
MIN_IMAGE_SIDE = 32
# hard floor for extraction itself: level 4 must be nonempty; retargeted
# outputs narrower than MIN_IMAGE_SIDE still need scoring
MIN_EXTRACT_SIDE = 8


@dataclass(frozen=True)
class ConvLayer:
    name: str
    weights: np.ndarray  # (out_c, in_c, kh, kw) float32
    bias: np.ndarray  # (out_c,) float32

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class WeightsBundle:
    """Immutable conv parameters plus the preprocessing constants that were
    baked in at export time."""

    layers: tuple[ConvLayer, ...]
    mean_rgb: np.ndarray  # (3,) float32
    scale: float

    def layer(self, name: str) -> ConvLayer:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)


def load_weights(path) -> WeightsBundle:
    """Read and validate a DIRW file against the fixed topology."""
    mean_rgb, scale, records = formats.read_weights_records(path)
    if len(records) != len(TOPOLOGY):
        raise FormatError(
            f"{path}: expected {len(TOPOLOGY)} conv layers, found {len(records)}"
        )
    layers = []
    for (name, in_c, out_c), (rec_name, weights, bias) in zip(TOPOLOGY, records):
        if rec_name != name:
            raise FormatError(f"{path}: layer order mismatch, expected {name}, got {rec_name}")
        if weights.shape != (out_c, in_c, 3, 3):
            raise FormatError(
                f"{path}: {name} has shape {weights.shape}, expected {(out_c, in_c, 3, 3)}"
            )
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
            raise FormatError(f"{path}: non-finite parameter at layer {name}")
        layers.append(ConvLayer(name, weights, bias))
    if not (np.all(np.isfinite(mean_rgb)) and np.isfinite(scale)):
        raise FormatError(f"{path}: non-finite preprocessing constants")
    return WeightsBundle(tuple(layers), mean_rgb, scale)


def save_weights(path, bundle: WeightsBundle) -> None:
    formats.write_weights_records(
        path,
        bundle.mean_rgb,
        bundle.scale,
        [(l.name, l.weights, l.bias) for l in bundle.layers],
    )


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------


def conv3x3(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """3x3 cross-correlation with zero padding 1, stride 1.

    Accumulates tap by tap in a fixed order so outputs are reproducible.
    """
    h, w, _ = x.shape
    wt = layer.weights.astype(x.dtype, copy=False)
    out = np.tile(layer.bias.astype(x.dtype), (h, w, 1))
    for ky in range(3):
        dy = ky - 1
        i0, i1 = max(0, -dy), h - max(0, dy)
        for kx in range(3):
            dx = kx - 1
            j0, j1 = max(0, -dx), w - max(0, dx)
            patch = x[i0 + dy:i1 + dy, j0 + dx:j1 + dx]
            k = np.ascontiguousarray(wt[:, :, ky, kx].T)  # (in_c, out_c)
            out[i0:i1, j0:j1] += (
                patch.reshape(-1, patch.shape[2]) @ k
            ).reshape(i1 - i0, j1 - j0, -1)
    return out


def conv3x3_input_grad(dout: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """Gradient of conv3x3 with respect to its input."""
    h, w, _ = dout.shape
    wt = layer.weights.astype(dout.dtype, copy=False)
    dx_acc = np.zeros((h, w, layer.in_channels), dtype=dout.dtype)
    for ky in range(3):
        dy = ky - 1
        i0, i1 = max(0, -dy), h - max(0, dy)
        for kx in range(3):
            dx = kx - 1
            j0, j1 = max(0, -dx), w - max(0, dx)
            k = np.ascontiguousarray(wt[:, :, ky, kx])  # (out_c, in_c)
            contrib = dout[i0:i1, j0:j1].reshape(-1, layer.out_channels) @ k
            dx_acc[i0 + dy:i1 + dy, j0 + dx:j1 + dx] += contrib.reshape(
                i1 - i0, j1 - j0, -1
            )
    return dx_acc


def maxpool2(x: np.ndarray):
    """2x2 max-pool, stride 2, ceil semantics; returns (out, argmax, in_shape)."""
    h, w, c = x.shape
    h2, w2 = (h + 1) // 2, (w + 1) // 2
    if h % 2 or w % 2:
        padded = np.full((h2 * 2, w2 * 2, c), -np.inf, dtype=x.dtype)
        padded[:h, :w] = x
    else:
        padded = x
    windows = padded.reshape(h2, 2, w2, 2, c).transpose(0, 2, 1, 3, 4).reshape(h2, w2, 4, c)
    arg = windows.argmax(axis=2)  # first max wins on ties
    out = np.take_along_axis(windows, arg[:, :, None, :], axis=2)[:, :, 0, :]
    return out, arg, (h, w)


def maxpool2_input_grad(dout: np.ndarray, arg: np.ndarray, in_shape) -> np.ndarray:
    h, w = in_shape
    h2, w2, c = dout.shape
    scattered = np.zeros((h2, w2, 4, c), dtype=dout.dtype)
    np.put_along_axis(scattered, arg[:, :, None, :], dout[:, :, None, :], axis=2)
    full = scattered.reshape(h2, w2, 2, 2, c).transpose(0, 2, 1, 3, 4).reshape(h2 * 2, w2 * 2, c)
    return np.ascontiguousarray(full[:h, :w])


# ---------------------------------------------------------------------------
# chains
# ---------------------------------------------------------------------------


def _run_chain(x: np.ndarray, chain, bundle: WeightsBundle):
    """Run conv+ReLU / pool steps, caching what the backward pass needs."""
    cache = []
    for step in chain:
        if step == "pool":
            x, arg, in_shape = maxpool2(x)
            cache.append(("pool", arg, in_shape))
        else:
            layer = bundle.layer(step)
            if x.shape[2] != layer.in_channels:
                raise ValueError(
                    f"{step}: expected {layer.in_channels} input channels, got {x.shape[2]}"
                )
            z = conv3x3(x, layer)
            mask = z > 0  # ReLU subgradient at 0 is 0
            x = z * mask
            cache.append(("conv", layer, mask))
    return x, cache


def _chain_input_grad(dout: np.ndarray, cache) -> np.ndarray:
    for entry in reversed(cache):
        if entry[0] == "pool":
            _, arg, in_shape = entry
            dout = maxpool2_input_grad(dout, arg, in_shape)
        else:
            _, layer, mask = entry
            dout = conv3x3_input_grad(dout * mask, layer)
    return dout


def forward_between(x: FeatureMap, bundle: WeightsBundle) -> FeatureMap:
    """Map level-(L-1) features to level L through the truncated network."""
    target_level = x.layer + 1
    if target_level not in _LEVEL_CHAINS:
        raise ValueError(f"no forward map from level {x.layer}")
    if x.channels != LEVEL_CHANNELS[x.layer]:
        raise ValueError(
            f"level-{x.layer} features must have {LEVEL_CHANNELS[x.layer]} channels, "
            f"got {x.channels}"
        )
    out, _ = _run_chain(x.data, _LEVEL_CHAINS[target_level], bundle)
    return FeatureMap(out, layer=target_level)


def extract_pyramid(image: Image, bundle: WeightsBundle) -> FeaturePyramid:
    """Compute the four tap activations of an image.

    Levels 2..4 reuse the exact forward_between chains, so composition
    reproduces the pyramid bit for bit.
    """
    if image.height < MIN_EXTRACT_SIDE or image.width < MIN_EXTRACT_SIDE:
        raise ValueError(
            f"image too small to extract features from: need at least "
            f"{MIN_EXTRACT_SIDE}x{MIN_EXTRACT_SIDE}, got {image.height}x{image.width}"
        )
    x = (image.data - bundle.mean_rgb.astype(np.float32)) * np.float32(bundle.scale)
    z = conv3x3(x, bundle.layer("conv1_1"))
    level = FeatureMap(np.maximum(z, 0), layer=1)
    levels = [level]
    for _ in range(3):
        level = forward_between(level, bundle)
        levels.append(level)
    return FeaturePyramid(tuple(levels))


def loss_and_gradient(x: FeatureMap, target: FeatureMap, bundle: WeightsBundle):
    """Squared-Frobenius reconstruction loss and its gradient w.r.t. x.

    loss = || forward_between(x) - target ||_F^2
    """
    chain = _LEVEL_CHAINS.get(x.layer + 1)
    if chain is None:
        raise ValueError(f"no forward map from level {x.layer}")
    out, cache = _run_chain(x.data, chain, bundle)
    if out.shape != target.data.shape:
        raise ValueError(
            f"forward output shape {out.shape} does not match target {target.data.shape}"
        )
    residual = out - target.data.astype(out.dtype, copy=False)
    r64 = residual.ravel().astype(np.float64, copy=False)
    loss = float(r64 @ r64)
    grad = _chain_input_grad(2.0 * residual, cache)
    return loss, FeatureMap(grad, layer=x.layer)
