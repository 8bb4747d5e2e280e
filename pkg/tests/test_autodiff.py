import numpy as np
import pytest

from neurobeam import autodiff as ad
from neurobeam.autodiff import Tensor, backward, constant
from neurobeam.gradcheck import check_gradients

TOL = 1e-4


def test_sum_gradient_is_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3))
    backward(ad.reduce_sum(x))
    assert np.array_equal(x.grad, np.ones((2, 3)))


def test_square_gradient_closed_form():
    x = Tensor(np.array([3.0]))
    backward(ad.reduce_sum(x * x))
    assert x.grad[0] == pytest.approx(6.0)


def test_backward_requires_scalar():
    x = Tensor(np.ones(3))
    with pytest.raises(ValueError):
        backward(x)


def test_rerun_after_zero_reproduces_gradients(rng):
    x = Tensor(rng.standard_normal((3, 2)))
    y = ad.reduce_sum(ad.sigmoid(x) * x)
    backward(y)
    first = x.grad.copy()
    x.zero_grad()
    y.zero_grad()
    backward(y)
    assert np.array_equal(x.grad, first)


def test_grads_accumulate_without_zeroing(rng):
    x = Tensor(rng.standard_normal(4))
    y = ad.reduce_sum(x * x)
    backward(y)
    first = x.grad.copy()
    y.zero_grad()
    backward(y)
    assert np.allclose(x.grad, 2 * first)


def test_constants_are_skipped(rng):
    c = constant(rng.standard_normal(3))
    x = Tensor(rng.standard_normal(3))
    backward(ad.reduce_sum(x * c))
    assert c.grad is None
    assert np.allclose(x.grad, c.data)


def test_diamond_graph_counts_both_paths():
    x = Tensor(np.array([2.0]))
    y = x * x + x * x  # two parallel paths through the same node
    backward(ad.reduce_sum(y))
    assert x.grad[0] == pytest.approx(8.0)


def test_dtype_preserved_float32():
    x = Tensor(np.ones((2, 2), dtype=np.float32))
    y = ad.sigmoid(x * 2.0 + 1.0)
    assert y.dtype == np.float32
    backward(ad.reduce_sum(y))
    assert x.grad.dtype == np.float32


@pytest.mark.parametrize(
    "name,build,shapes",
    [
        ("add_broadcast", lambda a, b: ad.reduce_sum((a + b) * (a + b)), [(3, 4), (1, 4)]),
        ("sub", lambda a, b: ad.reduce_sum((a - b) * (a - b)), [(3, 4), (3, 4)]),
        ("mul_broadcast", lambda a, b: ad.reduce_sum(a * b), [(2, 3, 4), (3, 1)]),
        ("div", lambda a, b: ad.reduce_sum(a / (b * b + 1.0)), [(3, 3), (3, 3)]),
        ("neg", lambda a: ad.reduce_sum(ad.neg(a) * a), [(5,)]),
        ("matmul", lambda a, b: ad.reduce_sum(ad.matmul(a, b)), [(3, 4), (4, 2)]),
        (
            "matmul_batched",
            lambda a, b: ad.reduce_sum(ad.matmul(a, b) * ad.matmul(a, b)),
            [(2, 3, 4), (4, 5)],
        ),
        ("reshape", lambda a: ad.reduce_sum(ad.reshape(a, (6,)) * ad.reshape(a, (6,))), [(2, 3)]),
        (
            "transpose",
            lambda a: ad.reduce_sum(ad.transpose(a, (1, 0, 2)) * 3.0),
            [(2, 3, 4)],
        ),
        ("sum_axis", lambda a: ad.reduce_sum(ad.reduce_sum(a, axis=1) * ad.reduce_sum(a, axis=1)), [(3, 4)]),
        (
            "sum_keepdims",
            lambda a: ad.reduce_sum(a * ad.reduce_sum(a, axis=(0, 2), keepdims=True)),
            [(2, 3, 2)],
        ),
        ("mean", lambda a: ad.reduce_mean(a * a), [(4, 5)]),
        (
            "concat",
            lambda a, b: ad.reduce_sum(ad.concat([a, b], axis=1) * ad.concat([b, a], axis=1)),
            [(2, 3), (2, 3)],
        ),
        ("narrow", lambda a: ad.reduce_sum(ad.narrow(a, 1, 1, 2) * 2.0), [(3, 4)]),
        ("sqrt", lambda a: ad.reduce_sum(ad.sqrt(a * a + 1.0)), [(3, 3)]),
        ("log", lambda a: ad.reduce_sum(ad.log(a * a + 0.5)), [(4,)]),
        ("sigmoid", lambda a: ad.reduce_sum(ad.sigmoid(a)), [(3, 4)]),
    ],
)
def test_primitive_gradients_match_finite_differences(name, build, shapes, rng):
    arrays = [rng.standard_normal(s) for s in shapes]
    assert check_gradients(build, arrays) < TOL, name


def test_sum_axis_gradient_simple(rng):
    def build(a):
        return ad.reduce_sum(ad.reduce_sum(a, axis=0) * ad.reduce_sum(a, axis=0))

    assert check_gradients(build, [rng.standard_normal((3, 4))]) < TOL


def test_clip_gradient_zero_outside():
    x = Tensor(np.array([-2.0, 0.5, 2.0]))
    backward(ad.reduce_sum(ad.clip(x, -1.0, 1.0)))
    assert np.array_equal(x.grad, [0.0, 1.0, 0.0])


def test_prelu_gradient(rng):
    def build(x, s):
        return ad.reduce_sum(ad.prelu(x, s, 1) * ad.prelu(x, s, 1))

    x = rng.standard_normal((2, 3, 4)) + 0.1  # keep away from the kink
    s = 0.25 + 0.1 * rng.standard_normal(3)
    assert check_gradients(build, [x, s]) < TOL


def test_unbroadcast_scalar_like(rng):
    a = Tensor(rng.standard_normal((2, 2)))
    b = Tensor(np.array(2.0))
    backward(ad.reduce_sum(a * b))
    assert b.grad.shape == ()
    assert b.grad == pytest.approx(a.data.sum())
