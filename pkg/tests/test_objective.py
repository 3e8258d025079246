import numpy as np
import pytest

from cvsa.network import ModelConfig, init_params
from cvsa.numerics import ops
from cvsa.numerics.gradcheck import grad_check
from cvsa.numerics.ops import ShapeError
from cvsa.numerics.tensor import GradientTape, Tensor
from cvsa.objective import (
    alignment_loss,
    contrastive_loss,
    correspondence_intensity,
    cross_view_attention,
    cvsa_loss,
    downsample_mask,
    pair_forward,
)

TOY = ModelConfig(channels=(4, 8, 8, 8), hidden=16, dim=8)


def sig(x):
    return 1.0 / (1.0 + np.exp(-x))


# -- attention ---------------------------------------------------------------------


def test_attention_dot_product_oracle():
    gen = np.random.default_rng(0)
    q, k = gen.normal(size=(3, 3, 2)), gen.normal(size=(3, 3, 2))
    a = cross_view_attention(Tensor(q), Tensor(k)).data
    assert a.shape == (9, 9)
    for i in range(9):
        for j in range(9):
            qi, kj = q[i // 3, i % 3], k[j // 3, j % 3]
            assert abs(a[i, j] - (qi[0] * kj[0] + qi[1] * kj[1])) <= 1e-14


def test_attention_one_hot_channels():
    # 2x2 grid, pixel p carries channel p
    x = np.eye(4).reshape(2, 2, 4)
    assert np.array_equal(cross_view_attention(Tensor(x), Tensor(x)).data, np.eye(4))
    y = np.eye(4)[[1, 0, 3, 2]].reshape(2, 2, 4)
    assert np.array_equal(cross_view_attention(Tensor(x), Tensor(y)).data, np.eye(4)[[1, 0, 3, 2]])


def test_attention_orthogonal_is_zero():
    q = np.zeros((2, 2, 4))
    q[..., :2] = 1.0
    k = np.zeros((2, 2, 4))
    k[..., 2:] = 1.0
    assert not cross_view_attention(Tensor(q), Tensor(k)).data.any()


def test_attention_shape_mismatch():
    with pytest.raises(ShapeError):
        cross_view_attention(Tensor(np.zeros((2, 2, 3))), Tensor(np.zeros((2, 3, 3))))


# -- correspondence intensity ---------------------------------------------------------


def test_intensity_zero_attention_is_half():
    c = correspondence_intensity(Tensor(np.zeros((6, 6))), 2, 3).data
    assert c.shape == (2, 3) and (c == 0.5).all()


def test_intensity_saturates():
    a = np.zeros((4, 4))
    a[2, 1] = 20.0
    c = correspondence_intensity(Tensor(a), 2, 2).data
    assert c[1, 0] == pytest.approx(1.0, abs=1e-8)
    assert c[0, 0] == 0.5


def test_intensity_matches_scan():
    a = np.random.default_rng(1).normal(scale=3, size=(2, 12, 12))
    c = correspondence_intensity(Tensor(a), 3, 4).data
    for b in range(2):
        for i in range(12):
            best = max(sig(a[b, i, j]) for j in range(12))
            assert abs(c[b, i // 4, i % 4] - best) <= 1e-15
    assert (c > 0).all() and (c < 1).all()


def test_intensity_grid_mismatch():
    with pytest.raises(ShapeError):
        correspondence_intensity(Tensor(np.zeros((6, 6))), 2, 2)


# -- alignment ---------------------------------------------------------------------


def test_alignment_zero_at_target():
    gen = np.random.default_rng(2)
    mq = (gen.random((16, 16)) > 0.5).astype(float)
    mk = (gen.random((16, 16)) > 0.5).astype(float)
    cq, ck = Tensor(downsample_mask(mq, 4, 4)), Tensor(downsample_mask(mk, 4, 4))
    assert alignment_loss(mq, mk, cq, ck).item() == 0.0


def test_alignment_half_map_against_ones():
    ones = np.ones((16, 16))
    half = Tensor(np.full((4, 4), 0.5))
    assert alignment_loss(ones, ones, half, half).item() == 0.5


def test_alignment_range():
    gen = np.random.default_rng(3)
    for _ in range(20):
        m = (gen.random((8, 8)) > 0.5).astype(float)
        c = Tensor(gen.random((2, 2)))
        v = alignment_loss(m, 1 - m, c, c).item()
        assert 0.0 <= v <= 2.0


def test_alignment_resolution_mismatch():
    with pytest.raises(ShapeError):
        alignment_loss(np.ones((2, 8, 8)), np.ones((2, 8, 8)), Tensor(np.zeros((3, 2, 2))), Tensor(np.zeros((3, 2, 2))))


# -- contrastive -------------------------------------------------------------------


def test_contrastive_anchors():
    gen = np.random.default_rng(4)
    u, v = gen.normal(size=8), gen.normal(size=8)
    T = Tensor
    assert abs(contrastive_loss(T(u), T(v), T(2 * v), T(3 * u)).item() + 1.0) <= 1e-12
    assert abs(contrastive_loss(T(u), T(v), T(-v), T(-0.5 * u)).item() - 1.0) <= 1e-12
    e = np.eye(4)
    assert abs(contrastive_loss(T(e[0]), T(e[1]), T(e[2]), T(e[3])).item()) <= 1e-15


def test_contrastive_range_and_zero_norm():
    gen = np.random.default_rng(5)
    for _ in range(50):
        vals = [Tensor(gen.normal(size=(3, 6))) for _ in range(4)]
        assert -1.0 <= contrastive_loss(*vals).item() <= 1.0
    with pytest.raises(ValueError):
        contrastive_loss(Tensor(np.zeros(4)), Tensor(np.ones(4)), Tensor(np.ones(4)), Tensor(np.ones(4)))


def test_total_is_sum():
    gen = np.random.default_rng(6)
    a, b = Tensor(gen.normal()), Tensor(gen.random())
    parts = cvsa_loss(a, b)
    assert abs(parts.total.item() - (a.item() + b.item())) <= 1e-12
    assert cvsa_loss(Tensor(-1.0), Tensor(0.0)).total.item() == -1.0
    assert cvsa_loss(a, None).total is a


# -- symmetry and stop-gradient ------------------------------------------------------


def test_swap_symmetry():
    gen = np.random.default_rng(7)
    pq, pk, hq, hk = (Tensor(gen.normal(size=(2, 5))) for _ in range(4))
    assert abs(contrastive_loss(pq, pk, hq, hk).item() - contrastive_loss(pk, pq, hk, hq).item()) <= 1e-12

    params = init_params(0, TOY).params
    iq, ik = gen.random((2, 32, 32, 3)), gen.random((2, 32, 32, 3))
    mq, mk = (gen.random((2, 32, 32)) > 0.5).astype(float), (gen.random((2, 32, 32)) > 0.5).astype(float)
    a = pair_forward(params, TOY, iq, ik, mq, mk).values()
    b = pair_forward(params, TOY, ik, iq, mk, mq).values()
    for key in a:
        assert abs(a[key] - b[key]) <= 1e-12


def test_stop_gradient_paths():
    # p and h come from disjoint parameters, so any h gradient would have to flow through the stopped path
    gen = np.random.default_rng(8)
    P, H = Tensor(gen.normal(size=(2, 2, 3))), Tensor(gen.normal(size=(2, 2, 3)))
    with GradientTape([P, H]) as tape:
        a = cross_view_attention(ops.scale(P, 1.5), ops.scale(H, 2.0))
        out = ops.sum_all(correspondence_intensity(a, 2, 2))
    gp, gh = tape.gradient(out, [P, H])
    assert gp is not None and np.abs(gp).max() > 0
    assert gh is None

    pv, hv = Tensor(gen.normal(size=6)), Tensor(gen.normal(size=6))
    with GradientTape([pv, hv]) as tape:
        out = contrastive_loss(ops.scale(pv, 1.0), ops.scale(pv, 1.0), ops.scale(hv, 1.0), ops.scale(hv, 1.0))
    gp, gh = tape.gradient(out, [pv, hv])
    assert gh is None and np.abs(gp).max() > 0

    # finite differences with the stopped values held fixed see no sensitivity to h
    def f(p):
        return contrastive_loss(p["p"], p["p"], p["h"], p["h"])

    report = grad_check(f, {"p": pv, "h": hv})
    assert report.passed
    assert report.params["h"].max_rel_err == 0.0


def test_pair_forward_no_align():
    params = init_params(1, TOY).params
    gen = np.random.default_rng(9)
    parts = pair_forward(params, TOY, gen.random((2, 32, 32, 3)), gen.random((2, 32, 32, 3)), align=False)
    assert parts.l_align is None and parts.total is parts.l_cont
