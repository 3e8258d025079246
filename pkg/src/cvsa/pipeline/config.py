"""Training hyperparameters."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields


@dataclass
class TrainConfig:
    """Desk-scale defaults; the full-scale recipe uses batch 1024 and d=256.

    ``base_lr`` is scaled linearly by ``batch_size / 256``.
    """

    stage: int = 2
    batch_size: int = 16
    base_lr: float = 0.05
    total_steps: int = 400
    momentum: float = 0.9
    weight_decay: float = 1e-4
    freeze_k: int = 2
    align_stage: int = 4
    seed: int = 0

    def problems(self) -> list[str]:
        out = []
        if self.stage not in (1, 2):
            out.append(f"stage must be 1 or 2, got {self.stage}")
        if self.batch_size < 1:
            out.append(f"batch_size must be positive, got {self.batch_size}")
        if not self.base_lr > 0:
            out.append(f"base_lr must be positive, got {self.base_lr}")
        if self.total_steps < 0:
            out.append(f"total_steps must be >= 0, got {self.total_steps}")
        if not 0 <= self.momentum < 1:
            out.append(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            out.append(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not 0 <= self.freeze_k <= 4:
            out.append(f"freeze_k must lie in 0..4, got {self.freeze_k}")
        if not 1 <= self.align_stage <= 4:
            out.append(f"align_stage must lie in 1..4, got {self.align_stage}")
        if self.seed < 0:
            out.append(f"seed must be >= 0, got {self.seed}")
        return out

    def __post_init__(self):
        bad = self.problems()
        if bad:
            raise ValueError("; ".join(bad))

    @property
    def lr(self) -> float:
        return self.base_lr * self.batch_size / 256

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {', '.join(unknown)}")
        return cls(**d)
