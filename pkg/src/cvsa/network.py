"""Toy four-stage conv encoder plus the projector and predictor heads.

Parameters live in a flat ``{name: Tensor}`` dict so the optimizer,
checkpointing and gradient checks can treat them uniformly. Names are
``enc.s{1..4}.{w,b,gamma,beta}`` and ``{g_mlp,g_conv,p_mlp,p_conv}.{l1.w,l1.b,bn.gamma,bn.beta,l2.w,l2.b}``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .numerics import ops
from .numerics.tensor import Tensor
from .rng import Rng

N_STAGES = 4
HEADS = ("g_mlp", "g_conv", "p_mlp", "p_conv")


@dataclass
class ModelConfig:
    channels: tuple[int, ...] = (16, 32, 64, 128)
    hidden: int = 64
    dim: int = 32
    align_stage: int = 4

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        if len(self.channels) != N_STAGES or min(self.channels) < 1:
            raise ValueError(f"need {N_STAGES} positive stage widths, got {self.channels}")
        if not 1 <= self.align_stage <= N_STAGES:
            raise ValueError(f"align_stage must be in 1..{N_STAGES}, got {self.align_stage}")
        if self.hidden < 1 or self.dim < 1:
            raise ValueError("hidden and dim must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d


@dataclass
class Model:
    config: ModelConfig
    params: dict[str, Tensor]
    frozen: frozenset[str] = field(default_factory=frozenset)

    def trainable(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if k not in self.frozen}

    def frozen_stages(self) -> int:
        return sum(1 for s in range(1, N_STAGES + 1) if f"enc.s{s}.w" in self.frozen)


def stage_param_names(stage: int) -> list[str]:
    return [f"enc.s{stage}.{p}" for p in ("w", "b", "gamma", "beta")]


def head_param_names(head: str) -> list[str]:
    return [f"{head}.{p}" for p in ("l1.w", "l1.b", "bn.gamma", "bn.beta", "l2.w", "l2.b")]


def _he_uniform(gen: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return gen.uniform(-bound, bound, size=shape)


def init_params(seed: int, config: ModelConfig | None = None) -> Model:
    """He-uniform weights, zero biases, unit batchnorm scale; deterministic in ``seed``."""
    config = config or ModelConfig()
    gen = Rng(seed).numpy()
    p: dict[str, np.ndarray] = {}
    cin = 3
    for s, cout in enumerate(config.channels, 1):
        p[f"enc.s{s}.w"] = _he_uniform(gen, (3, 3, cin, cout), 9 * cin)
        p[f"enc.s{s}.b"] = np.zeros(cout)
        p[f"enc.s{s}.gamma"] = np.ones(cout)
        p[f"enc.s{s}.beta"] = np.zeros(cout)
        cin = cout
    dims = {
        "g_mlp": config.channels[-1],
        "g_conv": config.channels[config.align_stage - 1],
        "p_mlp": config.dim,
        "p_conv": config.dim,
    }
    for head in HEADS:
        d_in, hid, d_out = dims[head], config.hidden, config.dim
        p[f"{head}.l1.w"] = _he_uniform(gen, (d_in, hid), d_in)
        p[f"{head}.l1.b"] = np.zeros(hid)
        p[f"{head}.bn.gamma"] = np.ones(hid)
        p[f"{head}.bn.beta"] = np.zeros(hid)
        p[f"{head}.l2.w"] = _he_uniform(gen, (hid, d_out), hid)
        p[f"{head}.l2.b"] = np.zeros(d_out)
    return Model(config, {k: Tensor(v, k) for k, v in p.items()})


def freeze_stages(model: Model, k: int) -> Model:
    """Flag encoder stages 1..k as frozen (k = 0 unfreezes everything)."""
    if not 0 <= k <= N_STAGES:
        raise ValueError(f"freeze count must be in 0..{N_STAGES}, got {k}")
    names = frozenset(n for s in range(1, k + 1) for n in stage_param_names(s))
    return Model(model.config, dict(model.params), names)


def encoder_forward(images: Tensor, params: dict[str, Tensor], stage: int = N_STAGES):
    """Run the encoder on a (B, H, W, 3) batch.

    Returns ``(z_stage, pooled)``: the stage-``stage`` activation (B, H/2^l, W/2^l, C_l)
    and the global-average-pooled stage-4 output (B, C_4).
    """
    if images.ndim != 4 or images.shape[3] != 3:
        raise ValueError(f"encoder expects (B, H, W, 3) input, got {images.shape}")
    h, w = images.shape[1:3]
    if h % 2**N_STAGES or w % 2**N_STAGES:
        raise ValueError(f"input {h}x{w} is not divisible by {2**N_STAGES}")
    x = images
    z_stage = None
    for s in range(1, N_STAGES + 1):
        x = ops.conv3x3_s2(x, params[f"enc.s{s}.w"], params[f"enc.s{s}.b"])
        shp = x.shape
        x = ops.reshape(x, (-1, shp[3]))
        x = ops.batchnorm(x, params[f"enc.s{s}.gamma"], params[f"enc.s{s}.beta"])
        x = ops.relu(ops.reshape(x, shp))
        if s == stage:
            z_stage = x
    pooled = ops.mean_axis(x, (1, 2))
    return z_stage, pooled


def head_forward(x: Tensor, params: dict[str, Tensor], head: str) -> Tensor:
    """Linear -> batchnorm -> ReLU -> linear over the trailing axis (dense or 1x1 conv)."""
    shp = x.shape
    y = ops.conv1x1(x, params[f"{head}.l1.w"], params[f"{head}.l1.b"])
    hid = y.shape[-1]
    y = ops.reshape(y, (-1, hid))
    y = ops.batchnorm(y, params[f"{head}.bn.gamma"], params[f"{head}.bn.beta"])
    y = ops.reshape(ops.relu(y), (*shp[:-1], hid))
    return ops.conv1x1(y, params[f"{head}.l2.w"], params[f"{head}.l2.b"])


def project_and_predict(z_stage: Tensor, pooled: Tensor, params: dict[str, Tensor], need_conv: bool = True):
    """All four head outputs: h_mlp, p(h_mlp), h_conv, p(h_conv).

    Conv heads keep the spatial dims of ``z_stage``; they are skipped
    (returned as ``None``) when ``need_conv`` is false.
    """
    h_mlp = head_forward(pooled, params, "g_mlp")
    p_mlp = head_forward(h_mlp, params, "p_mlp")
    if not need_conv:
        return h_mlp, p_mlp, None, None
    h_conv = head_forward(z_stage, params, "g_conv")
    p_conv = head_forward(h_conv, params, "p_conv")
    return h_mlp, p_mlp, h_conv, p_conv
