"""Image arrays and file I/O.

Images are float64 arrays of shape (H, W, 3) with values in [0, 1]; masks and
saliency maps are (H, W). Files are 8-bit PNG/PPM/PGM via Pillow.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .numerics.ops import interp_matrix

MIN_SIDE = 8
LUMA = np.array([0.299, 0.587, 0.114])


def check_image(img: np.ndarray) -> np.ndarray:
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"image must be (H, W, 3), got {img.shape}")
    if img.shape[0] < MIN_SIDE or img.shape[1] < MIN_SIDE:
        raise ValueError(f"image must be at least {MIN_SIDE}x{MIN_SIDE}, got {img.shape[1]}x{img.shape[0]}")
    return img


def to_gray(img: np.ndarray) -> np.ndarray:
    return img @ LUMA if img.ndim == 3 else img


def resize(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize (half-pixel centers, edge clamp) of an (H, W) or (H, W, C) array."""
    ry = interp_matrix(arr.shape[0], out_h)
    rx = interp_matrix(arr.shape[1], out_w)
    if arr.ndim == 2:
        return ry @ arr @ rx.T
    return np.einsum("ih,hwc,jw->ijc", ry, arr, rx, optimize=True)


def quantize(arr: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(arr) * 255.0), 0, 255).astype(np.uint8)


def read_image(path) -> np.ndarray:
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return check_image(arr)


def write_image(path, img: np.ndarray) -> None:
    PILImage.fromarray(quantize(img), mode="RGB").save(Path(path))


def read_gray8(path) -> np.ndarray:
    """Raw 8-bit values of a single-channel file; raises if the file has colour channels."""
    with PILImage.open(path) as im:
        if im.mode not in ("L", "P", "1", "I;16"):
            raise ValueError(f"{path}: expected a single-channel 8-bit image, got mode {im.mode}")
        return np.asarray(im.convert("L"), dtype=np.uint8)


def write_gray8(path, values: np.ndarray) -> None:
    """Write a [0, 1] map (or a uint8 array as-is) as 8-bit grayscale."""
    arr = values if values.dtype == np.uint8 else quantize(values)
    PILImage.fromarray(arr, mode="L").save(Path(path))


def is_grayscale_file(path) -> bool:
    with PILImage.open(path) as im:
        return im.mode in ("L", "1", "I;16")
