"""Immutable tensors and the reverse-mode gradient tape."""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np


class Tensor:
    """Dense float64 array with shape metadata.

    The underlying buffer is made read-only; every op returns a new tensor.
    Non-finite values are rejected at construction.
    """

    __slots__ = ("data", "name", "__weakref__")

    def __init__(self, data, name: str | None = None, *, check: bool = True):
        arr = np.array(data, dtype=np.float64, copy=True, order="C")
        if arr.ndim == 0:
            arr = arr.reshape(())
        if any(d < 1 for d in arr.shape):
            raise ValueError(f"tensor dimensions must be positive, got shape {arr.shape}")
        if check and not np.all(np.isfinite(arr)):
            raise ValueError("tensor contains NaN or Inf")
        arr.flags.writeable = False
        self.data = arr
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray, name: str | None = None) -> "Tensor":
        # trusted constructor for op outputs: no copy; finiteness still enforced
        t = cls.__new__(cls)
        arr = np.require(arr, dtype=np.float64, requirements="C")  # keeps 0-d shape
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError("operation produced NaN or Inf")
        arr.flags.writeable = False
        t.data = arr
        t.name = name
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_not_scalar(self)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    # arithmetic sugar; the ops module does the recording
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)


def _raise_not_scalar(t: Tensor):
    raise ValueError(f"item() needs a single-element tensor, got shape {t.shape}")


BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class _Node:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out: Tensor, inputs: tuple[Tensor, ...], backward: BackwardFn):
        self.out = out
        self.inputs = inputs
        self.backward = backward


_local = threading.local()


def _tape_stack() -> list["GradientTape"]:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


class GradientTape:
    """Records ops on watched tensors while active.

    Only ops with at least one watched (or derived-from-watched) input are
    recorded, so computations that depend only on frozen parameters cost
    nothing at backward time.

    >>> x = Tensor(3.0)
    >>> with GradientTape([x]) as tape:
    ...     y = x * x
    >>> float(tape.gradient(y, [x])[0])
    6.0
    """

    def __init__(self, watch: Iterable[Tensor] = ()):
        self._nodes: list[_Node] = []
        self._tracked: dict[int, Tensor] = {}
        for t in watch:
            self.watch(t)

    def watch(self, t: Tensor) -> None:
        self._tracked[id(t)] = t

    def is_tracked(self, t: Tensor) -> bool:
        return id(t) in self._tracked

    def __enter__(self) -> "GradientTape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        stack.remove(self)

    @property
    def operations(self) -> list[_Node]:
        return list(self._nodes)

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...], backward: BackwardFn) -> None:
        if any(id(t) in self._tracked for t in inputs):
            self._nodes.append(_Node(out, inputs, backward))
            self._tracked[id(out)] = out

    def gradient(self, target: Tensor, sources: Sequence[Tensor]) -> list[np.ndarray | None]:
        """d(target)/d(source) for each source; ``None`` where no path exists.

        ``target`` must hold a single element.
        """
        if target.size != 1:
            raise ValueError(f"gradient target must be scalar, got shape {target.shape}")
        grads: dict[int, np.ndarray] = {id(target): np.ones_like(target.data)}
        for node in reversed(self._nodes):
            g = grads.get(id(node.out))
            if g is None:
                continue
            in_grads = node.backward(g)
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or id(t) not in self._tracked:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        out = []
        for s in sources:
            g = grads.get(id(s))
            out.append(None if g is None else np.asarray(g, dtype=np.float64).reshape(s.shape))
        return out


def record(out: Tensor, inputs: tuple[Tensor, ...], backward: BackwardFn) -> Tensor:
    for tape in _tape_stack():
        tape._record(out, inputs, backward)
    return out


_stopped = threading.local()


@contextmanager
def capture_stopped():
    """Record the value of every ``stop_gradient`` call, in call order."""
    log: list[np.ndarray] = []
    prev = getattr(_stopped, "state", None)
    _stopped.state = ("capture", log)
    try:
        yield log
    finally:
        _stopped.state = prev


@contextmanager
def replay_stopped(values: list[np.ndarray]):
    """Make ``stop_gradient`` return previously captured values, in call order.

    Finite differences taken under replay see stopped tensors as constants,
    which is exactly the function whose gradient the tape computes.
    """
    prev = getattr(_stopped, "state", None)
    _stopped.state = ("replay", iter(values))
    try:
        yield
    finally:
        _stopped.state = prev


def stop_gradient(t: Tensor) -> Tensor:
    """Same values, fresh identity: no tape will route gradients through it."""
    state = getattr(_stopped, "state", None)
    if state is not None:
        mode, store = state
        if mode == "capture":
            store.append(t.data)
        else:
            return Tensor._wrap(next(store), t.name)
    return Tensor._wrap(t.data, t.name)
