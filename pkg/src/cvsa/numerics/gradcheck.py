"""Central-difference verification of tape gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .ops import record_branches
from .tensor import GradientTape, Tensor, capture_stopped, replay_stopped

# Denominator floor for relative error. Tensors whose gradient is below this
# everywhere (e.g. biases feeding a batchnorm, true gradient 0) are compared
# in absolute terms.
REL_FLOOR = 1e-6


@dataclass
class ParamCheck:
    name: str
    max_rel_err: float
    n_checked: int
    flagged: list[tuple[int, ...]] = field(default_factory=list)
    worst_index: tuple[int, ...] | None = None


@dataclass
class GradCheckReport:
    params: dict[str, ParamCheck]
    tol: float
    h: float

    @property
    def max_rel_err(self) -> float:
        return max((p.max_rel_err for p in self.params.values()), default=0.0)

    @property
    def n_flagged(self) -> int:
        return sum(len(p.flagged) for p in self.params.values())

    @property
    def n_checked(self) -> int:
        return sum(p.n_checked for p in self.params.values())

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tol

    def failing(self) -> list[str]:
        return [n for n, p in self.params.items() if p.max_rel_err > self.tol]


def relative_error(analytic, numeric, floor: float = REL_FLOOR) -> float:
    """``max|a - n| / max(max|a|, max|n|, floor)`` over the entries given.

    Scaling by the tensor's largest derivative rather than entry by entry
    keeps near-zero entries from turning O(h^2) truncation into O(1) ratios.
    """
    a = np.atleast_1d(np.asarray(analytic, dtype=np.float64))
    n = np.atleast_1d(np.asarray(numeric, dtype=np.float64))
    if a.size == 0:
        return 0.0
    scale = max(float(np.abs(a).max()), float(np.abs(n).max()), floor)
    return float(np.abs(a - n).max()) / scale


def _evaluate(f, params, stopped) -> tuple[float, list[bytes]]:
    with record_branches() as log, replay_stopped(stopped):
        val = f(params)
    v = float(val.item() if isinstance(val, Tensor) else val)
    if not np.isfinite(v):
        raise FloatingPointError("grad_check objective is not finite")
    return v, log


def grad_check(
    f: Callable[[dict[str, Tensor]], Tensor],
    params: Mapping[str, Tensor],
    h: float = 1e-3,
    tol: float = 1e-4,
    check: Mapping[str, Tensor] | None = None,
) -> GradCheckReport:
    """Compare tape gradients of scalar ``f(params)`` to central differences.

    The error for each parameter tensor is ``relative_error`` over its
    entries. ``check`` selects which parameters to verify (default: all). Entries where
    either perturbed evaluation takes a different piecewise branch (relu sign
    or max argmax) than the base point sit next to a kink; they are flagged
    and left out of the error statistic. Values passed through
    ``stop_gradient`` are held at their base-point values during the
    perturbed evaluations.
    """
    if not (1e-6 <= h <= 1e-2):
        raise ValueError(f"step h={h} outside [1e-6, 1e-2]")
    params = dict(params)
    names = list(check) if check is not None else list(params)
    with GradientTape([params[n] for n in names]) as tape:
        with record_branches() as base_log, capture_stopped() as stopped:
            out = f(params)
    if not np.isfinite(out.item()):
        raise FloatingPointError("grad_check objective is not finite")
    grads = tape.gradient(out, [params[n] for n in names])

    results: dict[str, ParamCheck] = {}
    for name, g in zip(names, grads):
        p = params[name]
        g = np.zeros(p.shape) if g is None else g
        base = p.data
        numeric = np.zeros(p.shape)
        keep = np.ones(p.shape, dtype=bool)
        flagged = []
        for idx in np.ndindex(*p.shape):
            vals = []
            kink = False
            for sign in (1.0, -1.0):
                arr = base.copy()
                arr[idx] += sign * h
                trial = dict(params)
                trial[name] = Tensor(arr, p.name)
                v, log = _evaluate(f, trial, stopped)
                kink |= log != base_log
                vals.append(v)
            if kink:
                flagged.append(idx)
                keep[idx] = False
                continue
            numeric[idx] = (vals[0] - vals[1]) / (2 * h)
        worst = relative_error(g[keep], numeric[keep])
        worst_idx = None
        if keep.any():
            diff = np.where(keep, np.abs(g - numeric), -1.0)
            worst_idx = tuple(int(i) for i in np.unravel_index(np.argmax(diff), p.shape))
        results[name] = ParamCheck(name, worst, int(keep.sum()), flagged, worst_idx)
    return GradCheckReport(results, tol, h)
