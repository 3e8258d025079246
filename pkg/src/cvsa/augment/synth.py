"""Synthetic fine-grained corpus: one textured shape on a smooth noise background.

A class is a (shape, texture) pair, so neither cue alone identifies it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..image import resize, write_image
from ..rng import Rng
from ..saliency import BoxAnnotation, write_annotations
from ..types import BBox

SHAPES = ("square", "disk", "triangle", "cross")
TEXTURES = ("stripes_h", "stripes_v", "checker", "dots")
# first len(SHAPES) classes differ in both shape and texture
CLASS_TABLE = [(s, (s + k) % len(TEXTURES)) for k in range(len(TEXTURES)) for s in range(len(SHAPES))]
AREA_RANGE = (0.05, 0.25)


@dataclass
class SyntheticCorpus:
    names: list[str]
    images: list[np.ndarray]
    boxes: list[BBox]
    labels: list[int]

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, i: int) -> tuple[np.ndarray, BBox]:
        return self.images[i], self.boxes[i]


def shape_mask(shape: str, w: int, h: int) -> np.ndarray:
    y = (np.arange(h)[:, None] + 0.5) / h  # [0, 1] across the box
    x = (np.arange(w)[None, :] + 0.5) / w
    if shape == "square":
        m = np.ones((h, w), dtype=bool)
    elif shape == "disk":
        m = (x - 0.5) ** 2 + (y - 0.5) ** 2 <= 0.25
    elif shape == "triangle":
        m = np.abs(x - 0.5) <= 0.5 * y
    elif shape == "cross":
        m = (np.abs(x - 0.5) <= 1 / 6) | (np.abs(y - 0.5) <= 1 / 6)
    else:
        raise ValueError(f"unknown shape {shape!r}")
    return np.broadcast_to(m, (h, w)).copy()


def texture(kind: str, h: int, w: int, period: int = 4) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    half = period // 2
    if kind == "stripes_h":
        return ((yy // half) % 2).astype(float)
    if kind == "stripes_v":
        return ((xx // half) % 2).astype(float)
    if kind == "checker":
        return (((yy // half) + (xx // half)) % 2).astype(float)
    if kind == "dots":
        return (((yy % period) < half) & ((xx % period) < half)).astype(float)
    raise ValueError(f"unknown texture {kind!r}")


def _background(size: int, gen: np.random.Generator) -> np.ndarray:
    coarse = gen.uniform(0.25, 0.6, size=(6, 6, 3))
    smooth = resize(coarse, size, size)
    return np.clip(smooth + gen.normal(0.0, 0.03, size=(size, size, 3)), 0.0, 1.0)


def _hue_color(hue: float, sat: float, val: float) -> np.ndarray:
    from .photometric import hsv_to_rgb
    return hsv_to_rgb(np.array([hue, sat, val]))


def render_sample(label: int, size: int, rng: Rng) -> tuple[np.ndarray, BBox]:
    shape_i, tex_i = CLASS_TABLE[label]
    gen = rng.numpy()
    img = _background(size, gen)
    total = size * size
    while True:
        frac = rng.uniform(*AREA_RANGE)
        ar = rng.log_uniform(3 / 4, 4 / 3)
        w = min(size, max(2, int(round(math.sqrt(frac * total * ar)))))
        h = min(size, max(2, int(round(math.sqrt(frac * total / ar)))))
        m = shape_mask(SHAPES[shape_i], w, h)
        rows, cols = np.nonzero(m)
        tw, th = cols.max() - cols.min() + 1, rows.max() - rows.min() + 1
        if AREA_RANGE[0] <= tw * th / total <= AREA_RANGE[1]:
            break
    l = rng.integers(0, size - w)
    t = rng.integers(0, size - h)
    hue = rng.random()
    bright = _hue_color(hue, 0.9, 1.0)
    dark = _hue_color((hue + 0.5) % 1.0, 0.9, 0.35)
    tex = texture(TEXTURES[tex_i], h, w)[..., None]
    fg = tex * bright + (1.0 - tex) * dark
    region = img[t : t + h, l : l + w]
    region[m] = fg[m]
    box = BBox(int(l + cols.min()), int(t + rows.min()), int(tw), int(th))
    # store exactly what an 8-bit file round-trip would give
    img = np.rint(img * 255.0) / 255.0
    return img, box


def generate_synthetic_corpus(n: int, n_classes: int, img_size: int, rng: Rng) -> SyntheticCorpus:
    if not n >= n_classes >= 2:
        raise ValueError(f"need n >= n_classes >= 2, got n={n}, n_classes={n_classes}")
    if n_classes > len(CLASS_TABLE):
        raise ValueError(f"at most {len(CLASS_TABLE)} classes are available")
    if img_size < 16:
        raise ValueError("img_size must be at least 16")
    names, images, boxes, labels = [], [], [], []
    width = len(str(n - 1))
    for i in range(n):
        label = i % n_classes
        img, box = render_sample(label, img_size, Rng(rng.next_u64()))
        names.append(f"img_{i:0{width}d}.png")
        images.append(img)
        boxes.append(box)
        labels.append(label)
    return SyntheticCorpus(names, images, boxes, labels)


def write_corpus(corpus: SyntheticCorpus, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, img in zip(corpus.names, corpus.images):
        write_image(out / name, img)
    write_annotations(out / "annotations.jsonl", [BoxAnnotation(n, b) for n, b in zip(corpus.names, corpus.boxes)])
    with open(out / "labels.jsonl", "w") as fh:
        for name, label in zip(corpus.names, corpus.labels):
            fh.write(json.dumps({"image": name, "label": label}) + "\n")
