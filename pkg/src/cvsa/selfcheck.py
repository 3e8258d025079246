"""Built-in verification suite: op gradients, box-search oracle, augmentation invariants.

Inputs vary with the seed; a correct build passes for every seed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .augment.config import AugConfig
from .augment.swap import make_view_pair, sample_patch_in_box, saliency_swap_detailed
from .augment.synth import generate_synthetic_corpus
from .boxsearch import max_excess_box, max_excess_box_bruteforce
from .numerics import ops
from .numerics.gradcheck import grad_check
from .numerics.tensor import Tensor
from .objective import alignment_loss, contrastive_loss, correspondence_intensity, cross_view_attention
from .rng import Rng, mix_seed

GRAD_H = 1e-3
GRAD_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _readout(gen, shape):
    # random linear readout turns any tensor-valued op into a scalar
    return Tensor(gen.normal(size=shape))


def _op_cases(gen: np.random.Generator) -> dict[str, tuple[Callable, dict[str, Tensor]]]:
    T = lambda *shape, s=1.0: Tensor(gen.normal(scale=s, size=shape))  # noqa: E731
    cases = {}

    def scalar(out_fn):
        def f(p):
            out = out_fn(p)
            r = readout.setdefault(out.shape, _readout(gen, out.shape))
            return ops.sum_all(ops.mul(out, r))
        return f

    readout: dict = {}
    cases["sigmoid"] = (scalar(lambda p: ops.sigmoid(p["x"])), {"x": T(4, 5, s=2.0)})
    cases["relu"] = (scalar(lambda p: ops.relu(p["x"])), {"x": T(4, 5)})
    cases["matmul"] = (scalar(lambda p: ops.matmul(p["a"], p["b"])), {"a": T(3, 4), "b": T(4, 2)})
    cases["conv1x1"] = (scalar(lambda p: ops.conv1x1(p["x"], p["w"], p["b"])), {"x": T(3, 3, 2), "w": T(2, 3), "b": T(3)})
    cases["conv3x3_s2"] = (scalar(lambda p: ops.conv3x3_s2(p["x"], p["w"], p["b"])),
                           {"x": T(2, 4, 4, 2), "w": T(3, 3, 2, 3), "b": T(3)})
    cases["batchnorm"] = (scalar(lambda p: ops.batchnorm(p["x"], p["g"], p["b"])), {"x": T(6, 3), "g": T(3), "b": T(3)})
    cases["bilinear_resize"] = (scalar(lambda p: ops.bilinear_resize(p["x"], 3, 2)), {"x": T(5, 7)})
    cases["reduce_max_rows"] = (scalar(lambda p: ops.reduce_max_rows(p["x"])[0]), {"x": T(4, 6)})
    cases["l2_normalize"] = (scalar(lambda p: ops.l2_normalize(p["x"])), {"x": T(3, 4)})

    masks = [(gen.random((8, 8)) > 0.5).astype(float) for _ in range(2)]
    cases["alignment_loss"] = (
        lambda p: alignment_loss(
            masks[0], masks[1],
            correspondence_intensity(cross_view_attention(p["pq"], p["hk"]), 4, 4),
            correspondence_intensity(cross_view_attention(p["pk"], p["hq"]), 4, 4),
        ),
        {"pq": T(4, 4, 3), "hk": T(4, 4, 3), "pk": T(4, 4, 3), "hq": T(4, 4, 3)},
    )
    cases["contrastive_loss"] = (lambda p: contrastive_loss(p["pq"], p["pk"], p["hq"], p["hk"]),
                                 {"pq": T(2, 5), "pk": T(2, 5), "hq": T(2, 5), "hk": T(2, 5)})
    return cases


def check_gradients(seed: int) -> list[CheckResult]:
    gen = Rng(mix_seed(seed, 1)).numpy()
    out = []
    for name, (f, params) in _op_cases(gen).items():
        rep = grad_check(f, params, h=GRAD_H, tol=GRAD_TOL)
        out.append(CheckResult(f"grad:{name}", rep.passed,
                               f"max rel err {rep.max_rel_err:.2e}, {rep.n_flagged} flagged"))
    return out


def check_boxsearch(seed: int, n: int = 60) -> CheckResult:
    rng = Rng(mix_seed(seed, 2))
    gen = rng.numpy()
    bad = 0
    for _ in range(n):
        h, w = rng.integers(1, 12), rng.integers(1, 16)
        s = gen.random((h, w))
        if rng.bernoulli(0.3):
            s = np.round(s * 3) / 3  # plateaus exercise the tie-break
        theta = float(s.mean())
        bad += max_excess_box(s, theta) != max_excess_box_bruteforce(s, theta)
    return CheckResult("boxsearch:oracle", bad == 0, f"{n - bad}/{n} maps match brute force")


def check_augmentation(seed: int, n: int = 100) -> list[CheckResult]:
    rng = Rng(mix_seed(seed, 3))
    corpus = generate_synthetic_corpus(8, 4, 32, Rng(rng.next_u64()))
    cfg = AugConfig()
    empty = small = out_of_range = 0
    for i in range(n):
        j = i % len(corpus)
        img, box = corpus[j]
        r = saliency_swap_detailed(img, box, corpus, cfg, rng)
        empty += r.mask.sum() == 0
        small += r.patch.area < cfg.lam * r.fg_box.area or not r.fg_box.contains(r.patch)
        vp = make_view_pair(img, box, corpus, cfg, rng)
        out_of_range += not all(0.0 <= v.min() and v.max() <= 1.0 for v in (vp.img_q, vp.img_k))
    patch_ok = all(
        sample_patch_in_box(b, cfg.lam, rng).area >= cfg.lam * b.area for b in corpus.boxes
    )
    return [
        CheckResult("augment:nonempty-mask", empty == 0, f"{empty}/{n} empty masks"),
        CheckResult("augment:patch-area", small == 0 and patch_ok, f"{small}/{n} patches below lambda"),
        CheckResult("augment:range", out_of_range == 0, f"{out_of_range}/{n} views outside [0, 1]"),
    ]


def run_selfcheck(seed: int = 0) -> list[CheckResult]:
    results = check_gradients(seed)
    results.append(check_boxsearch(seed))
    results.extend(check_augmentation(seed))
    return results
