"""PNG/JPEG image loading and canonical PNG saving."""

from __future__ import annotations

import numpy as np
from PIL import Image as PILImage

from .tensors import Image


def load_image(path) -> Image:
    with PILImage.open(path) as img:
        rgb = img.convert("RGB")
        data = np.asarray(rgb, dtype=np.float32)
    return Image(data)


def save_image(path, image: Image) -> None:
    # round half up before quantizing so output bytes are reproducible
    quantized = np.clip(np.floor(image.data.astype(np.float64) + 0.5), 0, 255)
    PILImage.fromarray(quantized.astype(np.uint8), mode="RGB").save(path, format="PNG")
