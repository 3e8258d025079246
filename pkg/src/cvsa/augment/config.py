from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Literal


@dataclass
class AugConfig:
    """View-generation settings. Defaults follow the MoCo.v2 photometric recipe."""

    lam: float = 0.5
    beta: float = 0.2
    aspect: tuple[float, float] = (3 / 4, 4 / 3)
    brightness: float = 0.4
    contrast: float = 0.4
    saturation: float = 0.4
    hue: float = 0.1
    jitter_prob: float = 0.8
    gray_prob: float = 0.2
    blur_kernel: int = 23
    blur_sigma: tuple[float, float] = (0.1, 2.0)
    blur_prob: float = 0.5
    flip_prob: float = 0.5
    fusion: Literal["same", "cross"] = "same"
    rrc_scale: tuple[float, float] = (0.2, 1.0)

    def __post_init__(self):
        self.aspect = tuple(self.aspect)
        self.blur_sigma = tuple(self.blur_sigma)
        self.rrc_scale = tuple(self.rrc_scale)
        errors = self.problems()
        if errors:
            raise ValueError("; ".join(errors))

    def problems(self) -> list[str]:
        errs = []
        if not 0 < self.lam <= 1:
            errs.append(f"lam must lie in (0, 1], got {self.lam}")
        if not 0 < self.beta <= 1:
            errs.append(f"beta must lie in (0, 1], got {self.beta}")
        for name in ("jitter_prob", "gray_prob", "blur_prob", "flip_prob"):
            p = getattr(self, name)
            if not 0 <= p <= 1:
                errs.append(f"{name} must lie in [0, 1], got {p}")
        for name in ("brightness", "contrast", "saturation"):
            if not 0 <= getattr(self, name) < 1:
                errs.append(f"{name} strength must lie in [0, 1)")
        if not 0 <= self.hue <= 0.5:
            errs.append("hue strength must lie in [0, 0.5]")
        if self.blur_kernel < 1 or self.blur_kernel % 2 == 0:
            errs.append(f"blur_kernel must be a positive odd integer, got {self.blur_kernel}")
        if not 0 < self.aspect[0] <= self.aspect[1]:
            errs.append(f"bad aspect range {self.aspect}")
        if not 0 < self.blur_sigma[0] <= self.blur_sigma[1]:
            errs.append(f"bad blur sigma range {self.blur_sigma}")
        if not 0 < self.rrc_scale[0] <= self.rrc_scale[1] <= 1:
            errs.append(f"bad RandomResizedCrop scale range {self.rrc_scale}")
        if self.fusion not in ("same", "cross"):
            errs.append(f"fusion must be 'same' or 'cross', got {self.fusion!r}")
        return errs

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("aspect", "blur_sigma", "rrc_scale"):
            d[k] = list(d[k])
        return d

    @classmethod
    def identity(cls, **overrides) -> "AugConfig":
        """Photometric no-op settings (all strengths and probabilities zero)."""
        base = dict(brightness=0.0, contrast=0.0, saturation=0.0, hue=0.0, jitter_prob=0.0,
                    gray_prob=0.0, blur_prob=0.0, flip_prob=0.0)
        base.update(overrides)
        return cls(**base)
