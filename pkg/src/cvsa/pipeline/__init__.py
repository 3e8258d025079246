"""Pretraining orchestration, checkpoints, corpus loading and evaluation."""
from .checkpoint import FORMAT_VERSION, Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import TrainConfig
from .corpus import Corpus, attach_saliency_boxes, load_corpus
from .evaluate import (
    LocalizationResult,
    ProbeConfig,
    ProbeResult,
    linear_probe,
    localization_eval,
    localization_score,
    pooled_features,
    probe_accuracy,
)
from .train import RunResult, initial_model, pretrain_stage1, pretrain_stage2, run_steps, worker_count, write_metrics
