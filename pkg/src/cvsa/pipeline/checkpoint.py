"""Checkpoint format: a JSON manifest plus one little-endian float64 blob.

``ckpt.json`` lists every tensor (model parameters under ``param/``,
momentum buffers under ``momentum/``) with its shape, in the order the raw
data is concatenated in ``ckpt.bin``. The manifest also carries the model,
training and augmentation settings, the step count and the RNG state.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..network import Model, ModelConfig
from ..numerics.optim import OptimizerState
from ..numerics.tensor import Tensor

FORMAT_VERSION = 1
MANIFEST = "ckpt.json"
BLOB = "ckpt.bin"
_DTYPE = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: Model
    opt: OptimizerState
    step: int = 0
    train: dict = field(default_factory=dict)
    aug: dict = field(default_factory=dict)
    rng_state: dict = field(default_factory=dict)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    """Write ``ckpt.json`` and ``ckpt.bin`` into directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    names, shapes, chunks = [], [], []
    for name in sorted(ckpt.model.params):
        names.append(f"param/{name}")
        arr = ckpt.model.params[name].data
        shapes.append(list(arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype=_DTYPE).tobytes())
    for name in sorted(ckpt.opt.momentum):
        names.append(f"momentum/{name}")
        arr = ckpt.opt.momentum[name]
        shapes.append(list(arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype=_DTYPE).tobytes())
    blob = b"".join(chunks)
    manifest = {
        "format_version": FORMAT_VERSION,
        "names": names,
        "shapes": shapes,
        "blob": BLOB,
        "blob_bytes": len(blob),
        "frozen": sorted(ckpt.model.frozen),
        "step": int(ckpt.step),
        "optimizer_step": int(ckpt.opt.step),
        "hyperparameters": {
            "model": ckpt.model.config.to_dict(),
            "train": ckpt.train,
            "aug": ckpt.aug,
        },
        "rng_state": ckpt.rng_state,
    }
    # blob first so a crash never leaves a manifest pointing at a stale blob
    tmp = out / (BLOB + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, out / BLOB)
    (out / MANIFEST).write_text(_dump_json(manifest))
    return out


def load_checkpoint(path) -> Checkpoint:
    """Inverse of :func:`save_checkpoint`; validates version and blob length."""
    root = Path(path)
    if root.is_file():
        root = root.parent
    try:
        manifest = json.loads((root / MANIFEST).read_text())
    except FileNotFoundError:
        raise CheckpointError(f"no {MANIFEST} in {root}") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{root / MANIFEST} is not valid JSON: {exc}") from None
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format_version {version!r} is not supported (expected {FORMAT_VERSION})")
    names, shapes = manifest["names"], manifest["shapes"]
    if len(names) != len(shapes):
        raise CheckpointError("manifest names and shapes differ in length")
    blob = (root / manifest.get("blob", BLOB)).read_bytes()
    expected = sum(int(np.prod(s, dtype=np.int64)) for s in shapes) * _DTYPE.itemsize
    if len(blob) != expected or manifest.get("blob_bytes") != expected:
        raise CheckpointError(f"blob holds {len(blob)} bytes, manifest describes {expected}")

    params: dict[str, Tensor] = {}
    momentum: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in zip(names, shapes):
        n = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(blob, dtype=_DTYPE, count=n, offset=offset).astype(np.float64).reshape(shape)
        offset += n * _DTYPE.itemsize
        kind, _, key = name.partition("/")
        if kind == "param":
            params[key] = Tensor(arr, key)
        elif kind == "momentum":
            momentum[key] = arr
        else:
            raise CheckpointError(f"unknown tensor kind in {name!r}")
    hp = manifest.get("hyperparameters", {})
    config = ModelConfig(**hp.get("model", {}))
    frozen = frozenset(manifest.get("frozen", []))
    unknown = frozen - set(params)
    if unknown:
        raise CheckpointError(f"frozen list names unknown parameters: {sorted(unknown)}")
    model = Model(config, params, frozen)
    opt = OptimizerState(momentum, int(manifest.get("optimizer_step", 0)))
    return Checkpoint(model, opt, int(manifest["step"]), hp.get("train", {}), hp.get("aug", {}), manifest.get("rng_state", {}))


def check_compatible(model: Model, reference: Model) -> None:
    """Raise if ``model`` cannot initialize a run configured like ``reference``."""
    a, b = model.params, reference.params
    if set(a) != set(b):
        diff = sorted(set(a) ^ set(b))
        raise CheckpointError(f"parameter sets differ: {diff[:4]}")
    for k in sorted(a):
        if a[k].shape != b[k].shape:
            raise CheckpointError(f"parameter {k!r} has shape {a[k].shape}, expected {b[k].shape}")
