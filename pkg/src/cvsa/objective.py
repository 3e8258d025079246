"""Cross-view attention, correspondence intensity and the CVSA losses.

All functions accept a leading batch axis; losses are averaged over it.
The projection side of every comparison (``h``) is gradient-stopped.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import ModelConfig, encoder_forward, project_and_predict
from .numerics import ops
from .numerics.ops import ShapeError
from .numerics.tensor import Tensor, stop_gradient


def _flatten_pixels(t: Tensor) -> Tensor:
    # (..., H, W, d) -> (..., H*W, d)
    return ops.reshape(t, (*t.shape[:-3], t.shape[-3] * t.shape[-2], t.shape[-1]))


def cross_view_attention(pred_q: Tensor, h_k: Tensor) -> Tensor:
    """``A[i, j] = pred_q[i] . h_k[j]`` over flattened pixels; ``h_k`` is gradient-stopped."""
    if pred_q.shape != h_k.shape:
        raise ShapeError(f"attention inputs differ in shape: {pred_q.shape} vs {h_k.shape}")
    q = _flatten_pixels(pred_q)
    k = _flatten_pixels(stop_gradient(h_k))
    return ops.matmul(q, ops.transpose_last(k))


def correspondence_intensity(a: Tensor, height: int, width: int) -> Tensor:
    """Row-wise max of sigmoid(A), reshaped to (..., H, W)."""
    n = height * width
    if a.shape[-2:] != (n, n):
        raise ShapeError(f"attention map {a.shape} does not match a {height}x{width} grid")
    vals, _ = ops.reduce_max_rows(ops.sigmoid(a))
    return ops.reshape(vals, (*a.shape[:-2], height, width))


def downsample_mask(mask: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear downsampling of (..., H, W) masks to the feature grid."""
    m = Tensor(np.asarray(mask, dtype=np.float64))
    return ops.bilinear_resize(m, height, width).data


def alignment_loss(mask_q, mask_k, c_qk: Tensor, c_kq: Tensor) -> Tensor:
    """``mean((down(M_q) - C_qk)^2) + mean((down(M_k) - C_kq)^2)``, averaged over the batch."""
    h, w = c_qk.shape[-2:]
    terms = []
    for mask, c in ((mask_q, c_qk), (mask_k, c_kq)):
        target = downsample_mask(mask, h, w)
        if target.shape != c.shape:
            raise ShapeError(f"downsampled mask {target.shape} does not match intensity map {c.shape}")
        terms.append(ops.mean_all(ops.square(ops.sub(Tensor._wrap(target), c))))
    return ops.add(terms[0], terms[1])


def negative_cosine(p: Tensor, h: Tensor) -> Tensor:
    """``-(p/|p|) . (h/|h|)`` per row, averaged; ``h`` is gradient-stopped."""
    pn = ops.l2_normalize(p)
    hn = ops.l2_normalize(stop_gradient(h))
    return ops.scale(ops.mean_all(ops.sum_axis(ops.mul(pn, hn), -1)), -1.0)


def contrastive_loss(p_q: Tensor, p_k: Tensor, h_q: Tensor, h_k: Tensor) -> Tensor:
    """Symmetrized negative cosine similarity; lies in [-1, 1]."""
    return ops.add(ops.scale(negative_cosine(p_q, h_k), 0.5), ops.scale(negative_cosine(p_k, h_q), 0.5))


@dataclass
class LossParts:
    total: Tensor
    l_cont: Tensor
    l_align: Tensor | None

    def values(self) -> dict[str, float]:
        return {
            "l_cont": self.l_cont.item(),
            "l_align": 0.0 if self.l_align is None else self.l_align.item(),
            "total": self.total.item(),
        }


def cvsa_loss(l_cont: Tensor, l_align: Tensor | None) -> LossParts:
    """Unweighted sum of the two components (the contrastive term alone when alignment is off)."""
    total = l_cont if l_align is None else ops.add(l_cont, l_align)
    return LossParts(total, l_cont, l_align)


def pair_forward(params: dict[str, Tensor], config: ModelConfig, img_q, img_k, mask_q=None, mask_k=None, align: bool = True) -> LossParts:
    """Losses for a batch of view pairs.

    Both views go through the network as one batch of 2B images, so batch
    statistics span the two views (a single pair is a valid batch).
    """
    img_q = np.asarray(img_q, dtype=np.float64)
    img_k = np.asarray(img_k, dtype=np.float64)
    if img_q.ndim == 3:
        img_q, img_k = img_q[None], img_k[None]
        if mask_q is not None:
            mask_q, mask_k = np.asarray(mask_q)[None], np.asarray(mask_k)[None]
    b = img_q.shape[0]
    x = Tensor._wrap(np.concatenate([img_q, img_k], axis=0))
    z, pooled = encoder_forward(x, params, config.align_stage)
    h_mlp, p_mlp, h_conv, p_conv = project_and_predict(z, pooled, params, need_conv=align)

    def halves(t):
        return ops.slice_axis0(t, 0, b), ops.slice_axis0(t, b, 2 * b)

    hq, hk = halves(h_mlp)
    pq, pk = halves(p_mlp)
    l_cont = contrastive_loss(pq, pk, hq, hk)
    if not align:
        return cvsa_loss(l_cont, None)
    hcq, hck = halves(h_conv)
    pcq, pck = halves(p_conv)
    gh, gw = z.shape[1:3]
    c_qk = correspondence_intensity(cross_view_attention(pcq, hck), gh, gw)
    c_kq = correspondence_intensity(cross_view_attention(pck, hcq), gh, gw)
    l_align = alignment_loss(mask_q, mask_k, c_qk, c_kq)
    return cvsa_loss(l_cont, l_align)


def intensity_map(params: dict[str, Tensor], config: ModelConfig, img_q, img_k) -> np.ndarray:
    """C_qk for a batch of (query, key) image pairs, shape (B, H_l, W_l)."""
    img_q = np.asarray(img_q, dtype=np.float64)
    img_k = np.asarray(img_k, dtype=np.float64)
    b = img_q.shape[0]
    x = Tensor._wrap(np.concatenate([img_q, img_k], axis=0))
    z, pooled = encoder_forward(x, params, config.align_stage)
    _, _, h_conv, p_conv = project_and_predict(z, pooled, params)
    pcq = ops.slice_axis0(p_conv, 0, b)
    hck = ops.slice_axis0(h_conv, b, 2 * b)
    gh, gw = z.shape[1:3]
    return correspondence_intensity(cross_view_attention(pcq, hck), gh, gw).data
