"""Linear-probe accuracy and the threshold-swept localization score."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ..augment.config import AugConfig
from ..augment.photometric import apply_photometric
from ..image import resize
from ..network import Model, encoder_forward
from ..numerics.tensor import Tensor
from ..objective import intensity_map
from ..rng import Rng, mix_seed
from ..types import BBox
from .corpus import Corpus

# Batch statistics make features depend on batch composition; evaluation
# always batches in corpus order with this many images per forward pass.
EVAL_CHUNK = 16
DEFAULT_TAUS = tuple(np.round(np.arange(0.05, 1.0, 0.05), 2))


def pooled_features(model: Model, images) -> np.ndarray:
    """Pooled stage-4 features, computed in fixed chunks of EVAL_CHUNK."""
    out = []
    for s in range(0, len(images), EVAL_CHUNK):
        chunk = np.stack(images[s : s + EVAL_CHUNK])
        if len(chunk) == 1:  # a lone trailing image joins the previous chunk
            chunk = np.stack(images[s - 1 : s + 1])
            _, pooled = encoder_forward(Tensor._wrap(chunk), model.params, model.config.align_stage)
            out.append(pooled.data[1:])
            continue
        _, pooled = encoder_forward(Tensor._wrap(chunk), model.params, model.config.align_stage)
        out.append(pooled.data)
    return np.concatenate(out, axis=0)


@dataclass
class ProbeConfig:
    epochs: int = 50
    batch_size: int = 16
    lrs: tuple[float, ...] = (0.1, 0.01, 0.001)
    momentum: float = 0.9
    trials: int = 3
    test_frac: float = 0.5
    seed: int = 0


@dataclass
class ProbeResult:
    accuracy: float
    trials: list[float] = field(default_factory=list)
    best_lr: list[float] = field(default_factory=list)


def stratified_split(labels: np.ndarray, test_frac: float, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    train, test = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        perm = idx[rng.permutation(len(idx))]
        n_test = int(round(len(idx) * test_frac))
        test.extend(perm[:n_test])
        train.extend(perm[n_test:])
    return np.array(sorted(train)), np.array(sorted(test))


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_linear(x: np.ndarray, y: np.ndarray, n_classes: int, lr: float, cfg: ProbeConfig, rng: Rng):
    """Softmax regression by minibatch SGD with momentum; returns (W, b)."""
    w = np.zeros((x.shape[1], n_classes))
    b = np.zeros(n_classes)
    vw, vb = np.zeros_like(w), np.zeros_like(b)
    onehot = np.eye(n_classes)[y]
    for _ in range(cfg.epochs):
        order = np.array(rng.permutation(len(x)))
        for s in range(0, len(x), cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            p = _softmax(x[idx] @ w + b)
            g = (p - onehot[idx]) / len(idx)
            vw = cfg.momentum * vw + x[idx].T @ g
            vb = cfg.momentum * vb + g.sum(axis=0)
            w -= lr * vw
            b -= lr * vb
    return w, b


def probe_accuracy(features: np.ndarray, labels, cfg: ProbeConfig | None = None) -> ProbeResult:
    """Mean over trials of the best held-out top-1 accuracy across the lr grid."""
    cfg = cfg or ProbeConfig()
    labels = np.asarray(labels, dtype=np.int64)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ValueError("linear probe needs at least two classes")
    y = np.searchsorted(classes, labels)
    accs, lrs = [], []
    for trial in range(cfg.trials):
        tr, te = stratified_split(y, cfg.test_frac, Rng(mix_seed(cfg.seed, trial)))
        mu = features[tr].mean(axis=0)
        sd = features[tr].std(axis=0)
        sd[sd < 1e-8] = 1.0
        x = (features - mu) / sd
        best, best_lr = -1.0, None
        for lr in cfg.lrs:
            w, b = train_linear(x[tr], y[tr], len(classes), lr, cfg, Rng(mix_seed(cfg.seed, trial, 1)))
            acc = float(np.mean(np.argmax(x[te] @ w + b, axis=1) == y[te]))
            if acc > best:
                best, best_lr = acc, lr
        accs.append(best)
        lrs.append(best_lr)
    return ProbeResult(float(np.mean(accs)), accs, lrs)


def linear_probe(model: Model, corpus: Corpus, cfg: ProbeConfig | None = None,
                 feature_fn: Callable[[Corpus], np.ndarray] | None = None) -> ProbeResult:
    """Frozen-feature linear classifier accuracy.

    ``feature_fn`` replaces the network features (used to inject oracle
    features in tests).
    """
    if not corpus.has_labels():
        raise ValueError("linear probe needs a label for every image")
    feats = feature_fn(corpus) if feature_fn else pooled_features(model, corpus.images)
    return probe_accuracy(np.asarray(feats, dtype=np.float64), corpus.labels, cfg)


@dataclass
class LocalizationResult:
    score: float
    best_tau: float
    per_tau: dict[float, float]


def box_above(score: np.ndarray, tau: float) -> BBox:
    """Bounding box of the pixels strictly above ``tau * max(score)``."""
    peak = score.max()
    on = score > tau * peak if peak > 0 else np.ones_like(score, dtype=bool)
    if not on.any():
        on = score >= peak
    rows = np.flatnonzero(on.any(axis=1))
    cols = np.flatnonzero(on.any(axis=0))
    return BBox(int(cols[0]), int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))


def localization_score(maps, boxes, iou_thresh: float = 0.5, taus=DEFAULT_TAUS) -> LocalizationResult:
    """Max over tau of the fraction of maps whose thresholded box hits IoU >= iou_thresh."""
    taus = tuple(float(t) for t in taus)
    if not taus or not all(0 < t < 1 for t in taus):
        raise ValueError("tau grid must be non-empty and inside (0, 1)")
    hits = np.zeros(len(taus))
    for m, gt in zip(maps, boxes):
        for j, tau in enumerate(taus):
            hits[j] += box_above(m, tau).iou(gt) >= iou_thresh
    frac = hits / max(len(boxes), 1)
    j = int(np.argmax(frac))
    return LocalizationResult(float(frac[j]), taus[j], dict(zip(taus, frac.tolist())))


def correspondence_maps(model: Model, corpus: Corpus, aug: AugConfig | None = None, seed: int = 0) -> list[np.ndarray]:
    """C_qk for (image, photometric view of the image) pairs, upsampled to image size.

    The second view uses the photometric recipe with flipping disabled, so
    both views share geometry.
    """
    aug = replace(aug or AugConfig(), flip_prob=0.0)
    maps = []
    n = len(corpus)
    for s in range(0, n, EVAL_CHUNK):
        lo = s if n - s > 1 else s - 1
        idx = list(range(lo, min(s + EVAL_CHUNK, n)))
        q = np.stack([corpus.images[i] for i in idx])
        k = np.stack([apply_photometric(corpus.images[i], aug, Rng(mix_seed(seed, i))) for i in idx])
        c = intensity_map(model.params, model.config, q, k)
        for i, cm in zip(idx, c):
            if i >= s:
                h, w = corpus.images[i].shape[:2]
                maps.append(resize(cm, h, w))
    return maps


def localization_eval(model: Model, corpus: Corpus, iou_thresh: float = 0.5, taus=DEFAULT_TAUS,
                      aug: AugConfig | None = None, seed: int = 0,
                      score_map_fn: Callable[[Corpus], list[np.ndarray]] | None = None) -> LocalizationResult:
    """Threshold-swept box accuracy of the correspondence intensity map.

    ``score_map_fn`` replaces the model's maps (used to inject oracle maps).
    """
    if not corpus.has_boxes():
        raise ValueError("localization needs a ground-truth box for every image")
    maps = score_map_fn(corpus) if score_map_fn else correspondence_maps(model, corpus, aug, seed)
    return localization_score(maps, corpus.boxes, iou_thresh, taus)
