"""Saliency bounding-box search.

The literal objective, the box of highest *mean* saliency, is maximized by a
single brightest pixel, so two well-posed variants are offered:

* ``max_avg_box_bruteforce``: highest mean under a minimum-area constraint,
  by exhaustive enumeration.
* ``max_excess_box``: highest total excess ``sum(S - theta)``, exact in
  O(H^2 W) via column prefix sums and Kadane's scan. With ``theta`` at the
  map mean this is the largest region of above-average saliency; it is the
  pipeline default.

Every solver breaks ties (values within a tiny relative tolerance) toward
smaller area, then lexicographic ``(t, l, h, w)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import kernels
from .types import BBox, SaliencyMap

TIE_RTOL = 1e-10


def _values(s) -> np.ndarray:
    return s.values if isinstance(s, SaliencyMap) else np.asarray(s, dtype=np.float64)


class IntegralImage:
    """(H+1) x (W+1) table of prefix sums; ``P[i, j]`` sums rows < i, cols < j."""

    def __init__(self, table: np.ndarray):
        self.table = table

    @property
    def shape(self) -> tuple[int, int]:
        return self.table.shape[0] - 1, self.table.shape[1] - 1

    def rect_sum(self, box: BBox) -> float:
        P = self.table
        t, l, b, r = box.t, box.l, box.bottom, box.right
        return float(P[b, r] - P[t, r] - P[b, l] + P[t, l])


def integral_image(s) -> IntegralImage:
    v = _values(s)
    P = np.zeros((v.shape[0] + 1, v.shape[1] + 1))
    P[1:, 1:] = v.cumsum(axis=0).cumsum(axis=1)
    return IntegralImage(P)


def _excess_tol(e: np.ndarray) -> float:
    return TIE_RTOL * float(np.abs(e).sum())


def max_excess_box(s, theta: float) -> BBox:
    """Box maximizing ``sum(S - theta)`` over its pixels.

    When every pixel is at or below ``theta`` the optimum degenerates to the
    1x1 box on the brightest pixel (topmost, then leftmost, on ties).
    """
    if not np.isfinite(theta):
        raise ValueError("theta must be finite")
    e = _values(s) - float(theta)
    t, l, h, w, _ = kernels.max_excess_scan(np.ascontiguousarray(e), _excess_tol(e))
    return BBox(int(l), int(t), int(w), int(h))


def max_excess_box_bruteforce(s, theta: float) -> BBox:
    """Reference solver: every box summed directly, no prefix sums. O(W^2 H^2 hw)."""
    e = _values(s) - float(theta)
    H, W = e.shape
    tol = _excess_tol(e)
    sums = {}
    for h in range(1, H + 1):
        for w in range(1, W + 1):
            sums[h, w] = sliding_window_view(e, (h, w)).sum(axis=(-2, -1))
    best = max(v.max() for v in sums.values())
    return _pick(sums, best - tol)


def _pick(values: dict, thresh: float) -> BBox:
    best_key = None
    for (h, w), v in values.items():
        ts, ls = np.nonzero(v >= thresh)
        for t, l in zip(ts.tolist(), ls.tolist()):
            key = (h * w, t, l, h, w)
            if best_key is None or key < best_key:
                best_key = key
    _, t, l, h, w = best_key
    return BBox(l, t, w, h)


def max_avg_box_bruteforce(s, min_area_frac: float = 0.05) -> BBox:
    """Box of highest mean saliency among boxes covering at least ``min_area_frac`` of the map."""
    if not 0.0 < min_area_frac <= 1.0:
        raise ValueError(f"min_area_frac must lie in (0, 1], got {min_area_frac}")
    v = np.ascontiguousarray(_values(s))
    H, W = v.shape
    min_area = min_area_frac * H * W
    # guard against 0.05 * 64 * 64 landing a hair above an integer
    min_area = float(np.ceil(min_area - 1e-9))
    tol = TIE_RTOL * max(float(np.abs(v).max()), 1e-300)
    t, l, h, w, _ = kernels.max_mean_scan(v, min_area, tol)
    return BBox(int(l), int(t), int(w), int(h))


def centered_box(width: int, height: int, area_frac: float = 0.5) -> BBox:
    """Centered box whose sides are scaled by sqrt(area_frac); offsets round toward the center."""
    k = np.sqrt(area_frac)
    w = max(1, min(width, int(round(width * k))))
    h = max(1, min(height, int(round(height * k))))
    return BBox((width - w + 1) // 2, (height - h + 1) // 2, w, h)


@dataclass
class BoxConfig:
    mode: Literal["excess", "avg-brute", "gt"] = "excess"
    kappa: float = 0.0
    min_area_frac: float = 0.05


def saliency_bbox(s: SaliencyMap, cfg: BoxConfig | None = None, annotation: BBox | None = None) -> BBox:
    """Foreground box for a saliency map.

    ``gt`` mode returns ``annotation``. Constant maps fall back to the centered
    half-area box. Otherwise the configured solver runs, with
    ``theta = mean + kappa * std`` for the excess solver.
    """
    cfg = cfg or BoxConfig()
    if cfg.mode == "gt":
        if annotation is None:
            raise ValueError("gt box mode needs an annotation")
        return annotation.check(s.width, s.height)
    if s.constant:
        return centered_box(s.width, s.height)
    if cfg.mode == "avg-brute":
        return max_avg_box_bruteforce(s, cfg.min_area_frac)
    if cfg.mode == "excess":
        v = s.values
        return max_excess_box(v, float(v.mean() + cfg.kappa * v.std()))
    raise ValueError(f"unknown box mode {cfg.mode!r}")
