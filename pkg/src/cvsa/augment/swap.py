"""SaliencySwap view generation and the RandomResizedCrop baseline."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from ..image import check_image, resize
from ..rng import Rng
from ..types import BBox
from .config import AugConfig
from .photometric import apply_plan, hflip, sample_plan

PATCH_RETRIES = 10


class ImagePool(Protocol):
    """Indexable collection of (image, saliency box) pairs."""

    def __len__(self) -> int: ...

    def __getitem__(self, i: int) -> tuple[np.ndarray, BBox | None]: ...


@dataclass
class SwapResult:
    image: np.ndarray
    mask: np.ndarray
    fg_box: BBox
    patch: BBox
    target: BBox
    bg_index: int


@dataclass
class ViewPair:
    img_q: np.ndarray
    img_k: np.ndarray
    mask_q: np.ndarray
    mask_k: np.ndarray


def sample_patch_in_box(box: BBox, lam: float, rng: Rng, aspect=(3 / 4, 4 / 3)) -> BBox:
    """Random sub-box of ``box`` with area ratio ~ U(lam, 1).

    Falls back to ``box`` itself if ten draws fail to fit at the required area.
    """
    if not 0 < lam <= 1:
        raise ValueError(f"lam must lie in (0, 1], got {lam}")
    area = box.area
    for _ in range(PATCH_RETRIES):
        target = rng.uniform(lam, 1.0) * area
        ar = rng.log_uniform(*aspect)
        w = min(box.w, max(1, int(round(math.sqrt(target * ar)))))
        h = min(box.h, max(1, int(round(math.sqrt(target / ar)))))
        if w * h >= lam * area:
            l = box.l + rng.integers(0, box.w - w)
            t = box.t + rng.integers(0, box.h - h)
            return BBox(l, t, w, h)
    return box


def _mask_for(shape: tuple[int, int], box: BBox) -> np.ndarray:
    m = np.zeros(shape, dtype=np.uint8)
    m[box.slices()] = 1
    return m


def _crop(img: np.ndarray, box: BBox) -> np.ndarray:
    return img[box.slices()]


def fuse_same_dataset(fg: np.ndarray, fg_box: BBox, bg: np.ndarray, bg_box: BBox, patch: BBox, rng: Rng | None = None):
    """Mode I: stretch the foreground patch onto the background's saliency box.

    Returns ``(image, mask)``; the mask is 1 exactly on ``bg_box``.
    """
    H, W = bg.shape[:2]
    for name, b, (bw, bh) in (("fg_box", fg_box, fg.shape[1::-1]), ("bg_box", bg_box, (W, H)), ("patch", patch, fg.shape[1::-1])):
        if b.area <= 0:
            raise ValueError(f"{name} has zero area")
        b.check(bw, bh)
    if not fg_box.contains(patch):
        raise ValueError(f"patch {patch.as_list()} is not inside the foreground box {fg_box.as_list()}")
    out = bg.copy()
    out[bg_box.slices()] = resize(_crop(fg, patch), bg_box.h, bg_box.w)
    return out, _mask_for((H, W), bg_box)


def fit_paste_size(area: float, aspect: float, width: int, height: int) -> tuple[int, int]:
    """(w, h) with w/h ~ ``aspect`` and area ~ ``area``, shrunk uniformly to fit the frame."""
    w = math.sqrt(area * aspect)
    h = math.sqrt(area / aspect)
    s = min(1.0, width / w, height / h)
    w = min(width, max(1, int(round(w * s))))
    h = min(height, max(1, int(round(h * s))))
    return w, h


def fuse_cross_dataset_detailed(fg, fg_box: BBox, bg, beta: float, rng: Rng, lam: float = 0.5, aspect=(3 / 4, 4 / 3)):
    if not 0 < beta <= 1:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    H, W = bg.shape[:2]
    patch = sample_patch_in_box(fg_box, lam, rng, aspect)
    area = rng.uniform(beta, 1.0) * W * H
    w, h = fit_paste_size(area, patch.w / patch.h, W, H)
    l = rng.integers(0, W - w)
    t = rng.integers(0, H - h)
    target = BBox(l, t, w, h)
    out = bg.copy()
    out[target.slices()] = resize(_crop(fg, patch), h, w)
    return out, _mask_for((H, W), target), patch, target


def fuse_cross_dataset(fg, fg_box: BBox, bg, beta: float, rng: Rng, lam: float = 0.5):
    """Mode II: paste a resized foreground patch at a random spot of a background image."""
    out, mask, _, _ = fuse_cross_dataset_detailed(fg, fg_box, bg, beta, rng, lam)
    return out, mask


def saliency_swap_detailed(src: np.ndarray, src_box: BBox, pool: ImagePool, cfg: AugConfig, rng: Rng) -> SwapResult:
    if len(pool) == 0:
        raise ValueError("background pool is empty")
    check_image(src)
    bg_index = rng.integers(0, len(pool) - 1)
    bg, bg_box = pool[bg_index]
    if cfg.fusion == "same":
        if bg_box is None:
            raise ValueError("same-dataset fusion needs a saliency box for every background")
        patch = sample_patch_in_box(src_box, cfg.lam, rng, cfg.aspect)
        img, mask = fuse_same_dataset(src, src_box, bg, bg_box, patch)
        target = bg_box
    else:
        img, mask, patch, target = fuse_cross_dataset_detailed(src, src_box, bg, cfg.beta, rng, cfg.lam, cfg.aspect)
    return SwapResult(img, mask, src_box, patch, target, bg_index)


def saliency_swap(src: np.ndarray, src_box: BBox, pool: ImagePool, cfg: AugConfig, rng: Rng):
    """One SaliencySwap view: ``(image, mask)``, the mask marking the pasted foreground."""
    r = saliency_swap_detailed(src, src_box, pool, cfg, rng)
    return r.image, r.mask


def make_view(src, src_box, pool, cfg: AugConfig, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    img, mask = saliency_swap(src, src_box, pool, cfg, rng)
    plan = sample_plan(cfg, rng)
    img = apply_plan(img, plan, cfg)
    if plan.flip:
        mask = hflip(mask)
    return img, mask


def make_view_pair(src, src_box: BBox, pool: ImagePool, cfg: AugConfig, rng: Rng) -> ViewPair:
    """Two independent SaliencySwap + photometric views of ``src``."""
    img_q, mask_q = make_view(src, src_box, pool, cfg, rng)
    img_k, mask_k = make_view(src, src_box, pool, cfg, rng)
    return ViewPair(img_q, img_k, mask_q, mask_k)


def sample_rrc_box(width: int, height: int, scale_lo: float, scale_hi: float, rng: Rng, aspect=(3 / 4, 4 / 3)) -> BBox:
    if not 0 < scale_lo <= scale_hi <= 1:
        raise ValueError(f"bad scale range [{scale_lo}, {scale_hi}]")
    total = width * height
    for _ in range(PATCH_RETRIES):
        area = rng.uniform(scale_lo, scale_hi) * total
        ar = rng.log_uniform(*aspect)
        w = int(round(math.sqrt(area * ar)))
        h = int(round(math.sqrt(area / ar)))
        if 0 < w <= width and 0 < h <= height:
            return BBox(rng.integers(0, width - w), rng.integers(0, height - h), w, h)
    return BBox(0, 0, width, height)


def random_resized_crop(img: np.ndarray, scale_lo: float, scale_hi: float, rng: Rng, aspect=(3 / 4, 4 / 3)) -> np.ndarray:
    """Crop a random region (area ratio ~ U(scale_lo, scale_hi)) and resize it back to full size."""
    H, W = img.shape[:2]
    box = sample_rrc_box(W, H, scale_lo, scale_hi, rng, aspect)
    return resize(_crop(img, box), H, W)


def make_rrc_pair(img: np.ndarray, cfg: AugConfig, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Conventional two-view recipe: RandomResizedCrop then photometric ops."""
    views = []
    for _ in range(2):
        v = random_resized_crop(img, *cfg.rrc_scale, rng, cfg.aspect)
        views.append(apply_plan(v, sample_plan(cfg, rng), cfg))
    return views[0], views[1]

