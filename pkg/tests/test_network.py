import numpy as np
import pytest

from cvsa.network import (
    HEADS,
    ModelConfig,
    encoder_forward,
    freeze_stages,
    head_forward,
    head_param_names,
    init_params,
    project_and_predict,
    stage_param_names,
)
from cvsa.numerics import ops
from cvsa.numerics.gradcheck import grad_check
from cvsa.numerics.optim import OptimizerState, sgd_step
from cvsa.numerics.tensor import GradientTape, Tensor

TOY = ModelConfig(channels=(4, 8, 8, 8), hidden=16, dim=8)


def readout(outs, weights):
    total = None
    for o, r in zip(outs, weights):
        t = ops.sum_all(ops.mul(o, r))
        total = t if total is None else ops.add(total, t)
    return total


def test_default_shapes():
    m = init_params(0)
    x = Tensor(np.random.default_rng(0).random((2, 64, 64, 3)))
    z4, pooled = encoder_forward(x, m.params)
    assert z4.shape == (2, 4, 4, 128) and pooled.shape == (2, 128)
    for stage in (1, 2, 3):
        z, _ = encoder_forward(x, m.params, stage)
        assert z.shape == (2, 64 >> stage, 64 >> stage, m.config.channels[stage - 1])


def test_head_shapes():
    m = init_params(1)
    x = Tensor(np.random.default_rng(1).random((2, 32, 32, 3)))
    z, pooled = encoder_forward(x, m.params)
    h_mlp, p_mlp, h_conv, p_conv = project_and_predict(z, pooled, m.params)
    assert h_mlp.shape == p_mlp.shape == (2, 32)
    assert h_conv.shape == p_conv.shape == (2, 2, 2, 32)


def test_zero_input_pools_to_zero():
    m = init_params(2)
    _, pooled = encoder_forward(Tensor(np.zeros((2, 32, 32, 3))), m.params)
    assert np.array_equal(pooled.data, np.zeros((2, 128)))


def test_indivisible_input_rejected():
    m = init_params(0, TOY)
    with pytest.raises(ValueError, match="divisible"):
        encoder_forward(Tensor(np.zeros((1, 24, 32, 3))), m.params)
    with pytest.raises(ValueError):
        encoder_forward(Tensor(np.zeros((24, 32, 3))), m.params)


def test_identity_conv_head_reproduces_input():
    # with BN folded away (gamma=1, beta=0 on a positive input) an identity chain is exact
    d = 4
    gen = np.random.default_rng(3)
    x = gen.random((2, 3, 3, d)) + 1.0
    eye = Tensor(np.eye(d))
    params = {
        "h.l1.w": eye, "h.l1.b": Tensor(np.zeros(d)),
        "h.bn.gamma": Tensor(np.ones(d)), "h.bn.beta": Tensor(np.zeros(d)),
        "h.l2.w": eye, "h.l2.b": Tensor(np.zeros(d)),
    }
    y = ops.conv1x1(Tensor(x), params["h.l1.w"], params["h.l1.b"])
    assert np.array_equal(y.data, x)
    out = head_forward(Tensor(x), params, "h")
    flat = x.reshape(-1, d)
    bn = (flat - flat.mean(0)) / np.sqrt(flat.var(0) + ops.BN_EPS)
    assert np.allclose(out.data.reshape(-1, d), np.maximum(bn, 0.0), atol=1e-12)


def test_init_deterministic_and_bounded():
    a, b, c = init_params(5), init_params(5), init_params(6)
    assert all(np.array_equal(a.params[k].data, b.params[k].data) for k in a.params)
    assert any(not np.array_equal(a.params[k].data, c.params[k].data) for k in a.params if k.endswith(".w"))
    for name, t in a.params.items():
        if name.endswith(".w"):
            fan_in = int(np.prod(t.shape[:-1]))
            assert np.abs(t.data).max() <= np.sqrt(6.0 / fan_in)
        elif name.endswith("gamma"):
            assert (t.data == 1.0).all()
        else:
            assert (t.data == 0.0).all()


def test_param_names_cover_model():
    m = init_params(0, TOY)
    expected = [n for s in range(1, 5) for n in stage_param_names(s)] + [n for h in HEADS for n in head_param_names(h)]
    assert sorted(m.params) == sorted(expected)


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(channels=(4, 8, 8))
    with pytest.raises(ValueError):
        ModelConfig(align_stage=5)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_encoder_grad_with_frozen_early_stages(seed):
    m = freeze_stages(init_params(seed, TOY), 2)
    gen = np.random.default_rng(seed)
    x = Tensor(gen.random((4, 16, 16, 3)))
    r = Tensor(gen.normal(size=(4, 1, 1, 8)))

    def f(p):
        z, _ = encoder_forward(x, p, 4)
        return ops.sum_all(ops.mul(z, r))

    report = grad_check(f, m.params, check=m.trainable())
    enc = [n for n in report.params if n.startswith("enc")]
    assert sorted(enc) == sorted(stage_param_names(3) + stage_param_names(4))
    assert report.passed, report.failing()

    with GradientTape(list(m.trainable().values())) as tape:
        out = f(m.params)
    frozen = [m.params[n] for n in sorted(m.frozen)]
    assert all(g is None for g in tape.gradient(out, frozen))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_head_gradients(seed):
    m = init_params(seed, TOY)
    gen = np.random.default_rng(seed)
    z = Tensor(gen.normal(size=(8, 2, 2, 8)))
    pooled = Tensor(gen.normal(size=(8, 8)))
    weights = [Tensor(gen.normal(size=s)) for s in ((8, 8), (8, 8), (8, 2, 2, 8), (8, 2, 2, 8))]
    heads = {k: v for k, v in m.params.items() if not k.startswith("enc")}
    report = grad_check(lambda p: readout(project_and_predict(z, pooled, p), weights), heads)
    assert report.passed, report.failing()
    assert report.n_checked > report.n_flagged


@pytest.mark.parametrize("k", [0, 2, 4])
def test_freeze_flags(k):
    m = freeze_stages(init_params(0, TOY), k)
    assert m.frozen_stages() == k
    assert m.frozen == {n for s in range(1, k + 1) for n in stage_param_names(s)}


def test_freeze_out_of_range():
    with pytest.raises(ValueError):
        freeze_stages(init_params(0, TOY), 5)
    with pytest.raises(ValueError):
        freeze_stages(init_params(0, TOY), -1)


def test_freeze_four_keeps_encoder_fixed():
    m = freeze_stages(init_params(0, TOY), 4)
    x = Tensor(np.random.default_rng(4).random((2, 16, 16, 3)))
    before, _ = encoder_forward(x, m.params)
    params, state = m.params, OptimizerState()
    for _ in range(3):
        grads = {k: np.ones(v.shape) for k, v in params.items()}
        params, state = sgd_step(params, grads, state, 0.1, frozen=m.frozen)
    after, _ = encoder_forward(x, params)
    assert np.array_equal(before.data, after.data)
    assert not np.array_equal(params["g_mlp.l1.w"].data, m.params["g_mlp.l1.w"].data)
