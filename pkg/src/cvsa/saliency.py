"""Saliency sources: spectral residual detector, map files, box annotations."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .image import check_image, read_gray8, resize, to_gray, write_gray8
from .types import BBox, SaliencyMap

WORK_SIZE = 64
BLUR_SIGMA = 2.5
# relative floor on the amplitude before the log: exact spectral zeros (common
# in synthetic images) would otherwise dominate the residual
LOG_FLOOR = 0.01


@dataclass(frozen=True)
class BoxAnnotation:
    image: str
    box: BBox


def spectral_residual(img: np.ndarray) -> SaliencyMap:
    """Spectral residual saliency, returned at the input resolution.

    The image mean is removed before the FFT, so a uniform brightness shift
    leaves the map unchanged.
    """
    check_image(img)
    H, W = img.shape[:2]
    gray = resize(to_gray(img), WORK_SIZE, WORK_SIZE)
    gray = gray - gray.mean()
    if np.ptp(gray) < 1e-12:
        return SaliencyMap(np.zeros((H, W)), constant=True)

    spec = np.fft.fft2(gray)
    amp = np.abs(spec)
    phase = np.angle(spec)
    log_amp = np.log(amp + LOG_FLOOR * amp.mean() + 1e-300)
    # the DC bin is zero after mean removal; give it its neighbours' average
    # so the box filter below is not dragged down around it
    nbrs = [log_amp[di, dj] for di in (-1, 0, 1) for dj in (-1, 0, 1) if di or dj]
    log_amp[0, 0] = np.mean(nbrs)
    residual = log_amp - ndimage.uniform_filter(log_amp, size=3, mode="wrap")
    recon = np.exp(residual + 1j * phase)
    recon[0, 0] = 0.0
    sal = np.abs(np.fft.ifft2(recon)) ** 2
    sal = ndimage.gaussian_filter(sal, BLUR_SIGMA, mode="nearest")
    sal = resize(sal, H, W)
    lo, hi = sal.min(), sal.max()
    if hi - lo <= 1e-300:
        return SaliencyMap(np.zeros((H, W)), constant=True)
    return SaliencyMap((sal - lo) / (hi - lo))


def load_saliency_map(path, size: tuple[int, int] | None = None) -> SaliencyMap:
    """Read an 8-bit grayscale map. ``size`` is the paired image's (W, H), checked if given."""
    raw = read_gray8(path)
    if size is not None and (raw.shape[1], raw.shape[0]) != tuple(size):
        raise ValueError(
            f"{path}: saliency map is {raw.shape[1]}x{raw.shape[0]}, image is {size[0]}x{size[1]}"
        )
    return SaliencyMap(raw.astype(np.float64) / 255.0, constant=bool(raw.max() == raw.min()))


def save_saliency_map(path, s: SaliencyMap) -> None:
    write_gray8(path, s.values)


def boxes_as_saliency(ann: BoxAnnotation | BBox, width: int, height: int) -> SaliencyMap:
    """1.0 inside the box, 0.0 elsewhere."""
    box = ann.box if isinstance(ann, BoxAnnotation) else ann
    box.check(width, height)
    v = np.zeros((height, width))
    v[box.slices()] = 1.0
    return SaliencyMap(v)


def read_annotations(path) -> dict[str, BBox]:
    """Parse a JSON-lines annotation file into ``{image: box}``."""
    out: dict[str, BBox] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out[str(rec["image"])] = BBox.from_list(rec["box"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: bad annotation record: {exc}") from None
    return out


def write_annotations(path, anns: list[BoxAnnotation]) -> None:
    with open(path, "w") as fh:
        for a in anns:
            fh.write(json.dumps({"image": a.image, "box": a.box.as_list()}) + "\n")
