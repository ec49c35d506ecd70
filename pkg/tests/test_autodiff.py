import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from catgan import autodiff as ad
from catgan.autodiff import Tape, Tensor, backward
from catgan.errors import ContractError, DimensionError, DomainError

from gradcheck import check, numeric_grad


def test_matmul_identity():
    out = ad.matmul(np.eye(2), [[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(out.data, [[1, 2], [3, 4]])


def test_matmul_projector():
    out = ad.matmul([[1.0, 0.0], [0.0, 0.0]], [[5.0], [7.0]])
    np.testing.assert_array_equal(out.data, [[5], [0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_grad_of_sum_against_finite_differences():
    rng = np.random.default_rng(0)
    a = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    b = Tensor([[1.0], [1.0]])
    with Tape():
        loss = ad.reduce_sum(a @ b)
        backward(loss)
    np.testing.assert_array_equal(a.grad, np.ones((3, 2)))
    (fd,) = numeric_grad(lambda: float(ad.reduce_sum(a @ b)), [a.data])
    np.testing.assert_allclose(a.grad, fd, rtol=1e-8)


def test_elementwise_definitions():
    assert float(ad.leaky_relu(-1.0, 0.1)) == pytest.approx(-0.1)
    assert float(ad.elementwise("leaky_relu", 2.0, slope=0.1)) == 2.0
    assert float(ad.sigmoid(0.0)) == 0.5
    x = Tensor([3e-5], requires_grad=True)
    with Tape():
        y = ad.min_clamp(x, 1e-4)
        backward(ad.reduce_sum(y))
    assert y.data[0] == 1e-4
    assert x.grad[0] == 0.0


def test_min_clamp_gradient_is_exactly_zero_or_one():
    x = Tensor([-1.0, 1e-5, 1e-4, 0.5, 2.0], requires_grad=True)
    with Tape():
        backward(ad.reduce_sum(ad.min_clamp(x, 1e-4)))
    np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0, 1.0, 1.0])


def test_log_of_non_positive_is_domain_error():
    with pytest.raises(DomainError):
        ad.log([1.0, 0.0])
    with pytest.raises(DomainError):
        ad.log(-2.0)


def test_broadcast_restricted_to_scalar_or_equal_shape():
    assert ad.add(np.ones((2, 2)), 1.0).shape == (2, 2)
    with pytest.raises(DimensionError):
        ad.add(np.ones((2, 2)), np.ones(2))


def test_unknown_elementwise_op():
    with pytest.raises(ContractError):
        ad.elementwise("tanh", 1.0)


def test_reductions():
    assert float(ad.reduce("mean", [1.0, 2.0, 3.0])) == 2.0
    np.testing.assert_array_equal(ad.reduce("sum", [[1.0, 2.0], [3.0, 4.0]], axis=0).data, [4, 6])
    x = Tensor(np.arange(4.0), requires_grad=True)
    with Tape():
        backward(ad.reduce_mean(x))
    np.testing.assert_array_equal(x.grad, [0.25] * 4)


def test_invalid_axis():
    with pytest.raises(DimensionError):
        ad.reduce_sum(np.ones((2, 2)), axis=2)


def test_square_gradient():
    x = Tensor(3.0, requires_grad=True)
    with Tape():
        backward(x * x)
    assert x.grad == 6.0


def test_backward_accumulates_without_reset():
    x = Tensor(3.0, requires_grad=True)
    for _ in range(2):
        with Tape():
            backward(x * x)
    assert x.grad == 12.0
    x.zero_grad()
    assert x.grad is None


def test_constant_loss_gives_zero_grad():
    with Tape():
        x = Tensor(np.ones(3), requires_grad=True)
        loss = Tensor(5.0)
        backward(loss)
    np.testing.assert_array_equal(x.grad, np.zeros(3))


def test_non_scalar_loss_is_contract_error():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape(), pytest.raises(ContractError):
        backward(x * 2.0)


def test_backward_without_tape_is_contract_error():
    with pytest.raises(ContractError):
        backward(Tensor(1.0))


def test_sigmoid_network_against_finite_differences():
    rng = np.random.default_rng(1)
    w = Tensor(rng.normal(scale=0.1, size=(4, 3)), requires_grad=True)
    x = Tensor(rng.normal(size=(5, 4)), requires_grad=True)
    assert check(lambda: ad.reduce_sum(ad.sigmoid(x @ w)), [w, x]) < 1e-4


def test_intermediate_tensors_get_grads():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape():
        y = x * 3.0
        loss = ad.reduce_sum(y * y)
        backward(loss)
    np.testing.assert_allclose(y.grad, 2 * y.data)
    assert loss.grad == 1.0


def test_tape_records_in_topological_order():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        y = ad.exp(x)
        z = ad.reduce_sum(y * x)
    ids = {id(r.output): r.output.node_id for r in tape.records}
    for rec in tape.records:
        for t in rec.inputs:
            if id(t) in ids:
                assert ids[id(t)] < rec.output.node_id
    assert len(tape) == 3 and z.node_id > y.node_id


def test_ops_outside_tape_are_not_recorded():
    x = Tensor([1.0], requires_grad=True)
    y = x * 2.0
    assert not y.requires_grad and y.node_id is None


def test_fused_ops_against_finite_differences():
    rng = np.random.default_rng(2)
    x = Tensor(rng.normal(size=(6, 3)), requires_grad=True)
    w = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=4), requires_grad=True)
    g = Tensor(rng.uniform(0.5, 1.5, size=4), requires_grad=True)
    be = Tensor(rng.normal(size=4), requires_grad=True)
    c = Tensor(rng.normal(size=(6, 4)))

    def build():
        h = ad.affine(x, w, b)
        h, _ = ad.batch_norm(h, g, be)
        p = ad.normalize_rows(ad.min_clamp(ad.softmax(h), 1e-4))
        return ad.reduce_sum(ad.mul(p, c)) + ad.reduce_mean(ad.log(ad.take_rows(p, [0, 1, 2, 3, 0, 1])))

    assert check(build, [x, w, b, g, be]) < 1e-4


def test_eval_batch_norm_gradient():
    rng = np.random.default_rng(3)
    x = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    g = Tensor([1.5, 0.5], requires_grad=True)
    be = Tensor([0.1, -0.2], requires_grad=True)
    stats = (np.array([0.3, -0.1]), np.array([2.0, 0.5]))
    build = lambda: ad.reduce_sum(ad.sigmoid(ad.batch_norm(x, g, be, running=stats)[0]))
    assert check(build, [x, g, be]) < 1e-6


def test_batch_norm_needs_two_rows():
    with pytest.raises(ContractError):
        ad.batch_norm(np.ones((1, 2)), np.ones(2), np.zeros(2))


def test_replay_is_deterministic():
    def run():
        rng = np.random.default_rng(7)
        w = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        x = rng.normal(size=(4, 3))
        with Tape():
            backward(ad.reduce_sum(ad.xlogx(ad.softmax(ad.leaky_relu(x @ w)))))
        return w.grad

    assert np.array_equal(run(), run())


_UNARY = {
    "gauss": lambda t: ad.exp(ad.neg(ad.mul(t, t))),
    "sigmoid": lambda t: ad.sigmoid(t),
    "leaky": lambda t: ad.leaky_relu(t, 0.1),
    "softplus_log": lambda t: ad.log(ad.add(1.0, ad.exp(t))),
    "square": lambda t: ad.mul(ad.mul(t, t), 0.25),
    "div": lambda t: ad.div(t, ad.add(3.0, ad.sigmoid(t))),
}


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    rows=st.integers(2, 8),
    cols=st.integers(1, 8),
    ops=st.lists(st.sampled_from(sorted(_UNARY)), min_size=1, max_size=4),
)
def test_random_composites_match_finite_differences(seed, rows, cols, ops):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.uniform(-2, 2, size=(rows, cols)), requires_grad=True)
    w = Tensor(rng.uniform(-2, 2, size=(cols, cols)) / cols, requires_grad=True)

    def build():
        h = ad.matmul(x, w)
        for name in ops:
            h = _UNARY[name](h)
        return ad.reduce_mean(ad.mul(h, h))

    assert check(build, [x, w], h=1e-4, atol=1e-6) < 1e-3
