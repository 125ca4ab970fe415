"""Export a truncated VGG-19 to the DIRW weights format and write DIRF
activation fixtures computed by the exporting framework.

The nine serialized conv layers are conv1_1 .. conv4_1 in order. The
ImageNet per-channel normalization is folded into conv1_1 (the DIRW header
carries a single scalar scale), so an engine computing
(pixel - mean_rgb) * scale reproduces this module's forward pass exactly.
Pools use ceil semantics to match the engine's shape ladder.
"""

from __future__ import annotations

import argparse
import struct
import sys
import zlib
from pathlib import Path

import numpy as np
import torch
import torchvision
from PIL import Image

# (name, index of the conv in torchvision's vgg19().features)
CONV_LAYERS = (
    ("conv1_1", 0),
    ("conv1_2", 2),
    ("conv2_1", 5),
    ("conv2_2", 7),
    ("conv3_1", 10),
    ("conv3_2", 12),
    ("conv3_3", 14),
    ("conv3_4", 16),
    ("conv4_1", 19),
)

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float64)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float64)

WEIGHTS_MAGIC = b"DIRW"
FEATURE_MAGIC = b"DIRF"
FORMAT_VERSION = 1


def load_conv_stack(source: str, seed: int = 0) -> list:
    """Returns [(name, weight tensor (out,in,3,3), bias tensor)] float32.

    source: "pretrained" downloads the ImageNet checkpoint, "random" uses
    torchvision's default initialization (seeded), anything else is read as
    a local state-dict path.
    """
    if source == "pretrained":
        model = torchvision.models.vgg19(
            weights=torchvision.models.VGG19_Weights.IMAGENET1K_V1
        )
    elif source == "random":
        torch.manual_seed(seed)
        model = torchvision.models.vgg19(weights=None)
    else:
        model = torchvision.models.vgg19(weights=None)
        state = torch.load(source, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    model.eval()
    stack = []
    for name, idx in CONV_LAYERS:
        conv = model.features[idx]
        stack.append((
            name,
            conv.weight.detach().to(torch.float32).clone(),
            conv.bias.detach().to(torch.float32).clone(),
        ))
    return stack


def fold_preprocessing(stack: list):
    """Scale conv1_1 input channels by 1/(255*std) so a single scalar scale
    suffices; returns (folded stack, mean_rgb in pixel units, scale)."""
    folded = []
    for name, weight, bias in stack:
        if name == "conv1_1":
            factors = torch.tensor(
                1.0 / (255.0 * IMAGENET_STD), dtype=torch.float64
            ).view(1, 3, 1, 1)
            weight = (weight.to(torch.float64) * factors).to(torch.float32)
        folded.append((name, weight, bias))
    mean_rgb = (255.0 * IMAGENET_MEAN).astype(np.float32)
    return folded, mean_rgb, 1.0


def write_dirw(path, mean_rgb, scale: float, stack: list) -> None:
    parts = [
        WEIGHTS_MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        np.asarray(mean_rgb, dtype="<f4").tobytes(),
        struct.pack("<f", scale),
        struct.pack("<I", len(stack)),
    ]
    for name, weight, bias in stack:
        w = np.ascontiguousarray(weight.numpy(), dtype="<f4")
        b = np.ascontiguousarray(bias.numpy(), dtype="<f4")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<IIII", *w.shape))
        parts.append(w.tobytes())
        parts.append(b.tobytes())
    body = b"".join(parts)
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))


def write_dirf(path, level: int, activations: np.ndarray) -> None:
    """activations: (h, w, c) float32, stored channel-planar."""
    h, w, c = activations.shape
    planar = np.ascontiguousarray(activations.transpose(2, 0, 1), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<IIIII", FORMAT_VERSION, level, h, w, c))
        fh.write(planar.tobytes())


def reference_pyramid(image_rgb_255: np.ndarray, stack: list) -> list:
    """Forward pass of the truncated network in the exporting framework,
    tapping relu1_1 / relu2_1 / relu3_1 / relu4_1. Input is (h, w, 3) in
    [0, 255] BEFORE normalization; the raw (unfolded) stack is expected."""
    x = torch.from_numpy(image_rgb_255.astype(np.float32) / 255.0)
    mean = torch.tensor(IMAGENET_MEAN, dtype=torch.float32).view(3, 1, 1)
    std = torch.tensor(IMAGENET_STD, dtype=torch.float32).view(3, 1, 1)
    x = (x.permute(2, 0, 1) - mean) / std
    x = x.unsqueeze(0)

    convs = {name: (w, b) for name, w, b in stack}
    pool = torch.nn.MaxPool2d(2, stride=2, ceil_mode=True)

    def conv(name, t):
        w, b = convs[name]
        return torch.nn.functional.conv2d(t, w, b, padding=1)

    taps = []
    with torch.no_grad():
        x = torch.relu(conv("conv1_1", x))
        taps.append(x)
        x = torch.relu(conv("conv1_2", x))
        x = torch.relu(conv("conv2_1", pool(x)))
        taps.append(x)
        x = torch.relu(conv("conv2_2", x))
        x = torch.relu(conv("conv3_1", pool(x)))
        taps.append(x)
        x = torch.relu(conv("conv3_2", x))
        x = torch.relu(conv("conv3_3", x))
        x = torch.relu(conv("conv3_4", x))
        x = torch.relu(conv("conv4_1", pool(x)))
        taps.append(x)
    return [t.squeeze(0).permute(1, 2, 0).numpy().astype(np.float32) for t in taps]


def load_fixture_image(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float32)


def export(output_path, fixture_image_path, fixture_out_dir,
           source: str = "pretrained", seed: int = 0) -> dict:
    """Write the DIRW file and per-level DIRF fixtures; returns file paths."""
    stack = load_conv_stack(source, seed=seed)
    folded, mean_rgb, scale = fold_preprocessing(stack)
    write_dirw(output_path, mean_rgb, scale, folded)

    fixture_dir = Path(fixture_out_dir)
    fixture_dir.mkdir(parents=True, exist_ok=True)
    image = load_fixture_image(fixture_image_path)
    if image.shape[0] < 8 or image.shape[1] < 8:
        raise ValueError("fixture image must be at least 8x8")
    fixture_paths = []
    for level, activations in enumerate(reference_pyramid(image, stack), start=1):
        path = fixture_dir / f"level_{level}.dirf"
        write_dirf(path, level, activations)
        fixture_paths.append(str(path))
    return {"weights": str(output_path), "fixtures": fixture_paths}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="export_weights", description=__doc__
    )
    parser.add_argument("--out", required=True, help="DIRW output path")
    parser.add_argument("--fixture", required=True, help="fixture image (PNG/JPEG)")
    parser.add_argument("--fixture-out", required=True, help="DIRF fixture directory")
    parser.add_argument(
        "--source", default="pretrained",
        help="'pretrained' (download), 'random', or a local state-dict path",
    )
    parser.add_argument("--seed", default=0, type=int, help="seed for --source random")
    args = parser.parse_args(argv)
    try:
        result = export(args.out, args.fixture, args.fixture_out,
                        source=args.source, seed=args.seed)
    except Exception as exc:  # pragma: no cover - passthrough diagnostics
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(result)
    return 0


def entrypoint() -> None:
    sys.exit(main())
