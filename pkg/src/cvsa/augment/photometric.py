"""Colour jitter, grayscale, Gaussian blur and horizontal flip."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..image import LUMA
from ..rng import Rng
from .config import AugConfig


def adjust_brightness(img, f):
    return np.clip(img * f, 0.0, 1.0)


def adjust_contrast(img, f):
    mean = float((img @ LUMA).mean())
    return np.clip(f * img + (1.0 - f) * mean, 0.0, 1.0)


def adjust_saturation(img, f):
    gray = (img @ LUMA)[..., None]
    return np.clip(f * img + (1.0 - f) * gray, 0.0, 1.0)


def rgb_to_hsv(img):
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    maxc = img.max(axis=-1)
    minc = img.min(axis=-1)
    v = maxc
    delta = maxc - minc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(delta > 0, delta, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(r == maxc, bc - gc, np.where(g == maxc, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv):
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    choices_r = [v, q, p, p, t, v]
    choices_g = [t, v, v, q, p, p]
    choices_b = [p, p, t, v, v, q]
    r = np.choose(i, choices_r)
    g = np.choose(i, choices_g)
    b = np.choose(i, choices_b)
    return np.stack([r, g, b], axis=-1)


def adjust_hue(img, shift):
    """Rotate hue by ``shift`` (fraction of the colour circle)."""
    if shift == 0.0:
        return img
    hsv = rgb_to_hsv(img)
    hsv[..., 0] = (hsv[..., 0] + shift) % 1.0
    return np.clip(hsv_to_rgb(hsv), 0.0, 1.0)


def grayscale(img):
    gray = img @ LUMA
    return np.repeat(gray[..., None], 3, axis=-1)


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img, size: int, sigma: float):
    """Separable square Gaussian blur with reflect padding."""
    k = gaussian_kernel(size, sigma)
    out = ndimage.correlate1d(img, k, axis=0, mode="mirror")
    out = ndimage.correlate1d(out, k, axis=1, mode="mirror")
    return np.clip(out, 0.0, 1.0)


def hflip(arr):
    return arr[:, ::-1].copy()


@dataclass
class PhotometricPlan:
    """One sampled set of photometric decisions, so a mask can follow the flip."""

    jitter: bool
    order: list[int]
    factors: tuple[float, float, float, float]
    gray: bool
    blur_sigma: float | None
    flip: bool


def sample_plan(cfg: AugConfig, rng: Rng) -> PhotometricPlan:
    # fixed draw order keeps results reproducible whatever gets applied
    jitter = rng.bernoulli(cfg.jitter_prob)
    order = rng.permutation(4)
    factors = (
        rng.uniform(1 - cfg.brightness, 1 + cfg.brightness),
        rng.uniform(1 - cfg.contrast, 1 + cfg.contrast),
        rng.uniform(1 - cfg.saturation, 1 + cfg.saturation),
        rng.uniform(-cfg.hue, cfg.hue),
    )
    gray = rng.bernoulli(cfg.gray_prob)
    blur = rng.bernoulli(cfg.blur_prob)
    sigma = rng.uniform(*cfg.blur_sigma)
    flip = rng.bernoulli(cfg.flip_prob)
    return PhotometricPlan(jitter, order, factors, gray, sigma if blur else None, flip)


_JITTER_OPS = (adjust_brightness, adjust_contrast, adjust_saturation, adjust_hue)


def apply_plan(img: np.ndarray, plan: PhotometricPlan, cfg: AugConfig) -> np.ndarray:
    out = img
    if plan.jitter:
        for k in plan.order:
            out = _JITTER_OPS[k](out, plan.factors[k])
    if plan.gray:
        out = grayscale(out)
    if plan.blur_sigma is not None:
        out = gaussian_blur(out, cfg.blur_kernel, plan.blur_sigma)
    if plan.flip:
        out = hflip(out)
    return np.clip(out, 0.0, 1.0)


def apply_photometric(img: np.ndarray, cfg: AugConfig, rng: Rng) -> np.ndarray:
    return apply_plan(img, sample_plan(cfg, rng), cfg)
