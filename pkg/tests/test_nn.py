import math

import numpy as np
import pytest

from catgan import autodiff as ad
from catgan import objectives as obj
from catgan.autodiff import Tape, Tensor, backward
from catgan.errors import ContractError
from catgan.nn import (LayerSpec, NetworkSpec, build_paper_discriminator, build_paper_generator, forward,
                       init_network, predict_proba)


def synthetic_spec(k=2):
    return build_paper_discriminator("synthetic2d", k)


def test_init_is_deterministic_per_seed():
    a = init_network(synthetic_spec(), 7)
    b = init_network(synthetic_spec(), 7)
    for p, q in zip(a.parameters(), b.parameters()):
        assert np.array_equal(p.data, q.data)
    c = init_network(synthetic_spec(), 8)
    assert not np.array_equal(a.layers[0].weight.data, c.layers[0].weight.data)


def test_init_biases_zero_and_bn_identity():
    net = init_network(synthetic_spec(), 0)
    for layer in net.layers:
        assert not layer.bias.data.any()
        if layer.gamma is not None:
            assert np.all(layer.gamma.data == 1.0) and not layer.beta.data.any()


def test_init_glorot_bounds_and_mean():
    spec = NetworkSpec((LayerSpec(1000, 1000, "linear", batch_norm=False),))
    w = init_network(spec, 3).layers[0].weight.data
    limit = math.sqrt(6 / 2000)
    assert np.abs(w).max() <= limit
    assert abs(w.mean()) < 0.005


def test_spec_validation():
    with pytest.raises(ContractError):
        NetworkSpec((LayerSpec(2, 3), LayerSpec(4, 2)))
    with pytest.raises(ContractError):
        NetworkSpec((LayerSpec(2, 3, "softmax"), LayerSpec(3, 2)))
    with pytest.raises(ContractError):
        LayerSpec(2, 3, noise_std=-0.1)
    with pytest.raises(ContractError):
        LayerSpec(2, 3, activation="tanh")


def test_spec_dict_round_trip():
    spec = build_paper_discriminator("pi_mnist", 20)
    assert NetworkSpec.from_dict(spec.to_dict()) == spec


def _softmax_head(logits):
    """One linear softmax layer whose output logits equal ``logits`` for input 1."""
    logits = np.asarray(logits, dtype=float)
    net = init_network(NetworkSpec((LayerSpec(1, len(logits), "softmax", batch_norm=False),)), 0)
    net.layers[0].weight.data[...] = logits[None, :]
    return net


def test_softmax_equal_logits_uniform():
    net = _softmax_head([0.3, 0.3, 0.3, 0.3])
    np.testing.assert_allclose(forward(net, np.ones((2, 1))).data, 0.25, atol=1e-15)


def test_softmax_ln3_example():
    net = _softmax_head([math.log(3), 0.0])
    np.testing.assert_allclose(forward(net, np.ones((1, 1))).data, [[0.75, 0.25]], atol=1e-15)


def test_eval_forward_is_deterministic():
    net = init_network(synthetic_spec(), 1).eval()
    x = np.random.default_rng(0).normal(size=(5, 2))
    assert np.array_equal(forward(net, x).data, forward(net, x).data)


def test_train_forward_rows_sum_to_one_and_noise_changes_output():
    net = init_network(synthetic_spec(3), 1)
    x = np.random.default_rng(0).normal(size=(8, 2))
    a = forward(net, x, np.random.default_rng(1), update_stats=False).data
    b = forward(net, x, np.random.default_rng(2), update_stats=False).data
    np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-9)
    assert not np.array_equal(a, b)
    clean1 = forward(net, x, None, noise=False, update_stats=False).data
    clean2 = forward(net, x, None, noise=False, update_stats=False).data
    assert np.array_equal(clean1, clean2)


def test_single_row_train_batch_norm_is_contract_error():
    net = init_network(synthetic_spec(), 0)
    with pytest.raises(ContractError):
        forward(net, np.zeros((1, 2)), np.random.default_rng(0))
    net.eval()
    assert forward(net, np.zeros((1, 2))).shape == (1, 2)


def test_batch_norm_statistics_before_scale_shift():
    rng = np.random.default_rng(5)
    x = Tensor(rng.normal(3.0, 2.5, size=(32, 6)))
    out, _ = ad.batch_norm(x, np.ones(6), np.zeros(6))
    assert np.abs(out.data.mean(axis=0)).max() < 1e-6
    assert np.abs(out.data.var(axis=0) - 1).max() < 1e-4


def test_running_stats_update_with_momentum():
    spec = NetworkSpec((LayerSpec(2, 3, "linear", batch_norm=True), LayerSpec(3, 2, "softmax", batch_norm=False)))
    net = init_network(spec, 0)
    x = np.random.default_rng(0).normal(size=(10, 2))
    h = x @ net.layers[0].weight.data
    forward(net, x, np.random.default_rng(0))
    np.testing.assert_allclose(net.layers[0].running_mean, 0.1 * h.mean(axis=0))
    np.testing.assert_allclose(net.layers[0].running_var, 0.9 + 0.1 * h.var(axis=0, ddof=1))
    before = net.layers[0].running_mean.copy()
    forward(net, x, np.random.default_rng(0), update_stats=False)
    assert np.array_equal(before, net.layers[0].running_mean)


def test_noise_requires_rng():
    net = init_network(synthetic_spec(), 0)
    with pytest.raises(ContractError):
        forward(net, np.zeros((4, 2)))


def test_paper_presets():
    d = build_paper_discriminator("synthetic2d", 2)
    assert d.widths == [2, 100, 100, 100, 2]
    assert all(l.batch_norm and l.noise_std == 0.05 and l.activation == "leaky_relu" for l in d.layers[:-1])
    assert d.layers[-1].activation == "softmax"
    m = build_paper_discriminator("pi_mnist", 10)
    assert m.widths[1:-1] == [1000, 500, 250, 250, 250]
    assert m.input_noise_std == 0.3
    assert all(l.batch_norm for l in m.layers[:-1])
    g = build_paper_generator("synthetic2d", 2)
    assert g.in_dim == 10 and g.widths == [10, 100, 100, 100, 2]
    assert g.layers[-1].activation == "linear" and not g.layers[-1].batch_norm
    assert all(l.batch_norm for l in g.layers[:-1])
    gm = build_paper_generator("pi_mnist", 784)
    assert gm.in_dim == 128 and gm.widths[1:-1] == [500, 500, 1000]
    assert gm.layers[-1].activation == "sigmoid"


def test_k1_discriminator_has_linear_logit():
    assert build_paper_discriminator("synthetic2d", 1).layers[-1].activation == "linear"


def test_unknown_preset():
    with pytest.raises(ContractError):
        build_paper_discriminator("cifar", 10)


@pytest.mark.parametrize("preset,in_dim", [("synthetic2d", 2), ("pi_mnist", 784)])
def test_gradients_finite_for_presets(preset, in_dim):
    rng = np.random.default_rng(0)
    disc = init_network(build_paper_discriminator(preset, 10, in_dim), 0)
    x = rng.uniform(size=(16, in_dim))
    with Tape():
        loss = obj.conditional_entropy(obj.clamp_probs(forward(disc, x, rng)))
        backward(loss)
    for p in disc.parameters():
        assert p.grad is not None and np.isfinite(p.grad).all()


def test_predict_proba_restores_mode_and_chunks():
    net = init_network(synthetic_spec(), 0)
    x = np.random.default_rng(0).normal(size=(10, 2))
    full = predict_proba(net, x)
    assert net.mode == "train"
    np.testing.assert_allclose(predict_proba(net, x, chunk=3), full, atol=1e-15)
    assert predict_proba(net, np.zeros((0, 2))).shape == (0, 2)
