"""Dual-stage pretraining loops.

Every step draws its randomness from ``Rng(mix_seed(seed, stage, step, item))``,
so a run is a pure function of (corpus, config, seed) and resuming from a
checkpoint at step k needs nothing beyond the parameters, the momentum
buffers and k itself.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from ..augment.config import AugConfig
from ..augment.swap import make_rrc_pair, make_view_pair
from ..network import Model, ModelConfig, freeze_stages, init_params
from ..numerics.optim import OptimizerState, cosine_lr, sgd_step
from ..numerics.tensor import GradientTape
from ..objective import pair_forward
from ..rng import Rng, mix_seed
from .checkpoint import Checkpoint, check_compatible
from .config import TrainConfig
from .corpus import Corpus

INIT_KEY = 0x1A17  # seed stream for weight initialization


def worker_count() -> int:
    """``CVSA_THREADS`` if set, else the number of logical cores."""
    raw = os.environ.get("CVSA_THREADS", "").strip()
    if raw:
        n = int(raw)
        if n < 1:
            raise ValueError(f"CVSA_THREADS must be >= 1, got {raw}")
        return n
    return os.cpu_count() or 1


@dataclass
class RunResult:
    checkpoint: Checkpoint
    metrics: list[dict] = field(default_factory=list)


def initial_model(cfg: TrainConfig, model_cfg: ModelConfig | None = None) -> Model:
    """Randomly initialized model for ``cfg.seed``; the same for both stages."""
    model_cfg = model_cfg or ModelConfig()
    model_cfg = replace(model_cfg, align_stage=cfg.align_stage)
    return init_params(mix_seed(cfg.seed, INIT_KEY), model_cfg)


def _batch_indices(n: int, batch: int, rng: Rng) -> list[int]:
    if batch <= n:
        return rng.permutation(n)[:batch]
    return [rng.integers(0, n - 1) for _ in range(batch)]


def _make_views(corpus: Corpus, cfg: TrainConfig, aug: AugConfig, step: int, pool: ThreadPoolExecutor | None):
    order = _batch_indices(len(corpus), cfg.batch_size, Rng(mix_seed(cfg.seed, cfg.stage, step)))

    def one(j: int):
        i = order[j]
        rng = Rng(mix_seed(cfg.seed, cfg.stage, step, j + 1))
        img = corpus.images[i]
        if cfg.stage == 1:
            q, k = make_rrc_pair(img, aug, rng)
            return q, k, None, None
        vp = make_view_pair(img, corpus.sal_boxes[i], corpus, aug, rng)
        return vp.img_q, vp.img_k, vp.mask_q, vp.mask_k

    items = list(pool.map(one, range(len(order)))) if pool else [one(j) for j in range(len(order))]
    q = np.stack([it[0] for it in items])
    k = np.stack([it[1] for it in items])
    if cfg.stage == 1:
        return q, k, None, None
    return q, k, np.stack([it[2] for it in items]), np.stack([it[3] for it in items])


def _check_corpus(corpus: Corpus, cfg: TrainConfig) -> None:
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    if cfg.stage == 2 and any(b is None for b in corpus.sal_boxes):
        raise ValueError("stage 2 needs a saliency box for every image")


def run_steps(
    corpus: Corpus,
    start: Checkpoint,
    cfg: TrainConfig,
    aug: AugConfig,
    stop_after: int | None = None,
    on_metrics: Callable[[dict], None] | None = None,
) -> RunResult:
    """Advance ``start`` from its step count to ``cfg.total_steps`` (or ``stop_after``)."""
    _check_corpus(corpus, cfg)
    end = cfg.total_steps if stop_after is None else min(stop_after, cfg.total_steps)
    if start.step > end:
        raise ValueError(f"checkpoint is at step {start.step}, past the requested end {end}")
    model, opt = start.model, start.opt
    config = model.config
    align = cfg.stage == 2
    metrics = []
    threads = worker_count()
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for step in range(start.step, end):
            q, k, mq, mk = _make_views(corpus, cfg, aug, step, pool)
            trainable = model.trainable()
            names = sorted(trainable)
            with GradientTape([trainable[n] for n in names]) as tape:
                parts = pair_forward(model.params, config, q, k, mq, mk, align=align)
            grads = dict(zip(names, tape.gradient(parts.total, [trainable[n] for n in names])))
            lr = cosine_lr(step, cfg.total_steps, cfg.lr)
            params, opt = sgd_step(model.params, grads, opt, lr, cfg.momentum, cfg.weight_decay, model.frozen)
            model = Model(config, params, model.frozen)
            rec = {"step": step, "lr": lr, **parts.values()}
            metrics.append(rec)
            if on_metrics:
                on_metrics(rec)
    finally:
        if pool:
            pool.shutdown()
    ckpt = Checkpoint(model, opt, end, cfg.to_dict(), aug.to_dict(),
                      {"seed": cfg.seed, "stage": cfg.stage, "next_step": end})
    return RunResult(ckpt, metrics)


def pretrain_stage1(corpus: Corpus, cfg: TrainConfig, aug: AugConfig | None = None, model_cfg: ModelConfig | None = None,
                    resume: Checkpoint | None = None, stop_after: int | None = None, on_metrics=None) -> RunResult:
    """Contrastive-only training on RandomResizedCrop + photometric views, nothing frozen."""
    if cfg.stage != 1:
        raise ValueError(f"pretrain_stage1 needs stage=1, got {cfg.stage}")
    aug = aug or AugConfig()
    if resume is None:
        start = Checkpoint(initial_model(cfg, model_cfg), OptimizerState(), 0)
    else:
        start = resume
    return run_steps(corpus, start, cfg, aug, stop_after, on_metrics)


def pretrain_stage2(corpus: Corpus, init: Checkpoint | None, cfg: TrainConfig, aug: AugConfig | None = None,
                    model_cfg: ModelConfig | None = None, resume: Checkpoint | None = None,
                    stop_after: int | None = None, on_metrics=None, allow_scratch: bool = False) -> RunResult:
    """SaliencySwap views, L_CVSA, encoder stages 1..freeze_k frozen.

    ``init`` supplies the weights (its optimizer state is discarded). Without
    it the run starts from random weights, which is refused when stages are
    frozen unless ``allow_scratch`` is set.
    """
    if cfg.stage != 2:
        raise ValueError(f"pretrain_stage2 needs stage=2, got {cfg.stage}")
    aug = aug or AugConfig()
    if resume is not None:
        return run_steps(corpus, resume, cfg, aug, stop_after, on_metrics)
    if init is None:
        if cfg.freeze_k > 0 and not allow_scratch:
            raise ValueError("stage 2 with frozen stages needs an init checkpoint (pass allow_scratch to override)")
        base = initial_model(cfg, model_cfg)
    else:
        expected_cfg = replace(init.model.config, align_stage=cfg.align_stage)
        if model_cfg is not None:
            check_compatible(init.model, init_params(0, replace(model_cfg, align_stage=cfg.align_stage)))
        base = Model(expected_cfg, dict(init.model.params))
    model = freeze_stages(base, cfg.freeze_k)
    return run_steps(corpus, Checkpoint(model, OptimizerState(), 0), cfg, aug, stop_after, on_metrics)


def write_metrics(path, records: Iterable[dict], append: bool = False) -> None:
    with open(path, "a" if append else "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")

