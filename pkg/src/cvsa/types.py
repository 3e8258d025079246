"""Small value types shared across modules."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, order=True)
class BBox:
    """Axis-aligned pixel box: left column, top row, width, height."""

    l: int
    t: int
    w: int
    h: int

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def right(self) -> int:
        return self.l + self.w

    @property
    def bottom(self) -> int:
        return self.t + self.h

    def is_valid(self, width: int, height: int) -> bool:
        return (
            self.l >= 0
            and self.t >= 0
            and self.w >= 1
            and self.h >= 1
            and self.right <= width
            and self.bottom <= height
        )

    def check(self, width: int, height: int) -> "BBox":
        if not self.is_valid(width, height):
            raise ValueError(f"box {self.as_list()} outside a {width}x{height} image")
        return self

    def contains(self, other: "BBox") -> bool:
        return (
            other.l >= self.l
            and other.t >= self.t
            and other.right <= self.right
            and other.bottom <= self.bottom
        )

    def intersection(self, other: "BBox") -> int:
        iw = min(self.right, other.right) - max(self.l, other.l)
        ih = min(self.bottom, other.bottom) - max(self.t, other.t)
        return max(iw, 0) * max(ih, 0)

    def iou(self, other: "BBox") -> float:
        inter = self.intersection(other)
        return inter / (self.area + other.area - inter)

    def as_list(self) -> list[int]:
        return [self.l, self.t, self.w, self.h]

    @classmethod
    def from_list(cls, v) -> "BBox":
        if len(v) != 4:
            raise ValueError(f"box needs [left, top, width, height], got {v!r}")
        vals = []
        for x in v:
            if isinstance(x, bool) or int(x) != x:
                raise ValueError(f"box coordinates must be integers, got {v!r}")
            vals.append(int(x))
        return cls(*vals)

    def slices(self) -> tuple[slice, slice]:
        return slice(self.t, self.bottom), slice(self.l, self.right)


@dataclass
class SaliencyMap:
    """Per-pixel saliency in [0, 1], shape (H, W).

    ``constant`` marks maps carrying no spatial information (any flat map,
    including an all-zero file); box search falls back to a fixed centered box
    for them.
    """

    values: np.ndarray
    constant: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"saliency map must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("saliency values must lie in [0, 1]")
        if not self.constant and v.max() <= v.min():
            self.constant = True
        self.values = v

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]
