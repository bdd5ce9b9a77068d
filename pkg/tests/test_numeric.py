import json

import numpy as np
import pytest

from tabrep import numeric
from tabrep.errors import (NonFiniteGradientError, NonScalarLossError,
                           ShapeMismatchError)
from tabrep.numeric import Parameter, Tensor

from gradcheck import assert_gradients_match, scalarize


def rnd(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


# ---- forward values ------------------------------------------------------

def test_softmax_uniform_on_equal_logits():
    out = numeric.softmax(Tensor(np.zeros(3)))
    assert np.allclose(out.data, [1 / 3, 1 / 3, 1 / 3])


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(0)
    out = numeric.softmax(Tensor(rng.standard_normal((5, 7)) * 10), axis=-1)
    assert np.all(np.abs(out.data.sum(axis=-1) - 1.0) < 1e-6)
    assert np.all(out.data >= 0)


def test_layer_norm_constant_vector_is_zero():
    out = numeric.layer_norm(Tensor(np.full((4,), 3.7)))
    assert np.allclose(out.data, 0.0)


def test_layer_norm_standardizes():
    rng = np.random.default_rng(1)
    out = numeric.layer_norm(Tensor(rng.standard_normal((3, 8)) * 5 + 2), axis=-1)
    assert np.allclose(out.data.mean(axis=-1), 0.0, atol=1e-12)
    assert np.allclose(out.data.var(axis=-1), 1.0, atol=1e-4)


def test_matmul_hand_example():
    out = numeric.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
    assert out.data.tolist() == [[3.0], [7.0]]


def test_matmul_shape_mismatch_reports_both_shapes():
    with pytest.raises(ShapeMismatchError) as exc:
        numeric.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    assert "(2, 3)" in str(exc.value)


def test_dropout_eval_mode_is_identity():
    x = Tensor(np.arange(12.0).reshape(3, 4))
    out = numeric.dropout(x, 0.5, train=False)
    assert out.data is x.data or np.array_equal(out.data, x.data)


def test_dropout_train_mode_masks_and_rescales():
    rng = np.random.default_rng(2)
    x = Tensor(np.ones(10_000))
    out = numeric.dropout(x, 0.25, train=True, rng=rng)
    kept = out.data != 0
    assert abs(kept.mean() - 0.75) < 0.02
    assert np.allclose(out.data[kept], 1.0 / 0.75)


def test_max_first_argmax_tie_break():
    x = Tensor(np.array([[2.0, 2.0, 1.0]]), requires_grad=True)
    out = numeric.tensor_max(x, axis=1)
    numeric.backward(numeric.tensor_sum(out))
    assert x.grad.tolist() == [[1.0, 0.0, 0.0]]


def test_masked_max_degenerate_slice_is_zero_without_gradient():
    x = Tensor(np.array([[1.0, 5.0], [3.0, 2.0]]), requires_grad=True)
    mask = np.array([False, False])
    out = numeric.masked_max(x, mask, axis=0)
    assert out.data.tolist() == [0.0, 0.0]
    numeric.backward(numeric.tensor_sum(out))
    assert np.array_equal(x.grad, np.zeros((2, 2)))
    assert numeric.degenerate_rows(mask, axis=0)


# ---- backward: spec examples --------------------------------------------

def test_backward_square():
    x = Tensor(np.array(3.0), requires_grad=True)
    numeric.backward(x * x)
    assert x.grad == pytest.approx(6.0)


def test_backward_relu_subgradient():
    x = Tensor(np.array([-1.0, 2.0]), requires_grad=True)
    numeric.backward(numeric.tensor_sum(numeric.relu(x)))
    assert x.grad.tolist() == [0.0, 1.0]


def test_backward_matmul_softmax_composite():
    rng = np.random.default_rng(3)
    a = rnd(rng, 3, 3)
    b = rnd(rng, 3, 3)
    w = rng.standard_normal((3, 3))
    assert_gradients_match(
        lambda: scalarize(numeric.softmax(numeric.matmul(a, b), axis=-1), w), [a, b])


def test_backward_rejects_non_scalar_loss():
    with pytest.raises(NonScalarLossError):
        numeric.backward(Tensor(np.ones(3), requires_grad=True))


# ---- gradient check over every op, 20 random inputs each ----------------

def _op_cases(rng):
    """(name, tensor factory, graph builder) for every differentiable op."""
    return [
        ("add", lambda: (rnd(rng, 2, 3), rnd(rng, 2, 3)),
         lambda a, b: numeric.add(a, b)),
        ("add_broadcast", lambda: (rnd(rng, 2, 3), rnd(rng, 3)),
         lambda a, b: numeric.add(a, b)),
        ("sub", lambda: (rnd(rng, 2, 3), rnd(rng, 2, 3)),
         lambda a, b: numeric.sub(a, b)),
        ("mul", lambda: (rnd(rng, 2, 3), rnd(rng, 2, 3)),
         lambda a, b: numeric.mul(a, b)),
        ("mul_broadcast", lambda: (rnd(rng, 2, 3), rnd(rng, 2, 1)),
         lambda a, b: numeric.mul(a, b)),
        ("matmul", lambda: (rnd(rng, 2, 3), rnd(rng, 3, 4)),
         lambda a, b: numeric.matmul(a, b)),
        ("matmul_batched", lambda: (rnd(rng, 2, 3, 4), rnd(rng, 2, 4, 2)),
         lambda a, b: numeric.matmul(a, b)),
        ("concat", lambda: (rnd(rng, 2, 2), rnd(rng, 3, 2)),
         lambda a, b: numeric.concat([a, b], axis=0)),
        ("getitem", lambda: (rnd(rng, 4, 3),),
         lambda a: a[np.array([0, 2, 2]), np.array([1, 0, 2])]),
        ("reshape", lambda: (rnd(rng, 2, 6),),
         lambda a: numeric.reshape(a, (3, 4))),
        ("transpose", lambda: (rnd(rng, 2, 3, 4),),
         lambda a: numeric.transpose(a, (2, 0, 1))),
        ("swap_axes", lambda: (rnd(rng, 2, 3, 4),),
         lambda a: numeric.swap_axes(a, 0, 2)),
        ("relu", lambda: (rnd(rng, 3, 3),),
         lambda a: numeric.relu(a)),
        ("sigmoid", lambda: (rnd(rng, 3, 3),),
         lambda a: numeric.sigmoid(a)),
        ("exp", lambda: (rnd(rng, 3, 3),),
         lambda a: numeric.exp(a)),
        ("log", lambda: (Tensor(rng.uniform(0.5, 3.0, (3, 3)), requires_grad=True),),
         lambda a: numeric.log(a)),
        ("softmax", lambda: (rnd(rng, 3, 4),),
         lambda a: numeric.softmax(a, axis=-1)),
        ("layer_norm", lambda: (rnd(rng, 3, 5),),
         lambda a: numeric.layer_norm(a, axis=-1)),
        ("sum", lambda: (rnd(rng, 3, 4),),
         lambda a: numeric.tensor_sum(a, axis=1)),
        ("mean", lambda: (rnd(rng, 3, 4),),
         lambda a: numeric.tensor_mean(a, axis=0)),
        ("max", lambda: (rnd(rng, 3, 4),),
         lambda a: numeric.tensor_max(a, axis=0)),
        ("masked_max", lambda: (rnd(rng, 4, 3),),
         lambda a: numeric.masked_max(a, np.array([True, False, True, True]), axis=0)),
    ]


def test_every_op_matches_finite_differences():
    rng = np.random.default_rng(42)
    for name, make, build in _op_cases(rng):
        for trial in range(20):
            tensors = make()
            out_shape = build(*tensors).shape
            w = rng.standard_normal(out_shape)
            err = assert_gradients_match(lambda: scalarize(build(*tensors), w), tensors)
            assert err < 1e-3, f"{name} trial {trial}: {err}"


def test_dropout_gradient_with_pinned_mask():
    rng = np.random.default_rng(7)
    x = rnd(rng, 4, 4)
    w = rng.standard_normal((4, 4))

    def fn():
        mask_rng = np.random.default_rng(123)
        return scalarize(numeric.dropout(x, 0.5, train=True, rng=mask_rng), w)

    assert_gradients_match(fn, [x])


# ---- optimizer -----------------------------------------------------------

def test_adam_zero_gradient_leaves_parameters():
    p = Parameter(np.array([1.0, 2.0]), name="p")
    opt = numeric.Adam([p], lr=0.1)
    p.grad = np.zeros(2)
    opt.step()
    assert p.data.tolist() == [1.0, 2.0]


def test_adam_moves_against_gradient():
    p = Parameter(np.array([0.0]), name="p")
    opt = numeric.Adam([p], lr=0.01)
    for _ in range(5):
        p.grad = np.array([3.0])
        opt.step()
    assert p.data[0] < 0


def test_adam_quadratic_bowl_converges():
    w = Parameter(np.array([10.0]), name="w")
    opt = numeric.Adam([w], lr=0.1)
    for _ in range(200):
        w.zero_grad()
        loss = (w - 2.0) * (w - 2.0)
        numeric.backward(numeric.tensor_sum(loss))
        opt.step()
    assert abs(w.data[0] - 2.0) < 1e-2


def test_adam_rejects_non_finite_gradient_and_names_parameter():
    p = Parameter(np.array([1.0]), name="culprit")
    opt = numeric.Adam([p])
    p.grad = np.array([np.nan])
    with pytest.raises(NonFiniteGradientError) as exc:
        opt.step()
    assert "culprit" in str(exc.value)
    assert p.data.tolist() == [1.0]


# ---- checkpoints and substreams -----------------------------------------

def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    params = {
        "a": Parameter(rng.standard_normal((3, 4)) * 1e-7, name="a"),
        "b": Parameter(rng.standard_normal(5) * 1e9, name="b"),
    }
    path = tmp_path / "ckpt.json"
    numeric.save_params(path, params)
    loaded = numeric.load_params(path)
    for name, p in params.items():
        assert loaded[name].shape == p.data.shape
        assert np.array_equal(loaded[name], p.data)  # bitwise, no tolerance


def test_checkpoint_is_versioned(tmp_path):
    path = tmp_path / "ckpt.json"
    numeric.save_params(path, {"a": Parameter(np.zeros(1), name="a")})
    payload = json.loads(path.read_text())
    assert payload["format"] == numeric.CHECKPOINT_FORMAT
    assert payload["version"] == numeric.CHECKPOINT_VERSION


def test_substreams_are_deterministic_and_distinct():
    a1 = numeric.substream(5, "init").standard_normal(4)
    a2 = numeric.substream(5, "init").standard_normal(4)
    b = numeric.substream(5, "batches").standard_normal(4)
    c = numeric.substream(6, "init").standard_normal(4)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)
    assert not np.array_equal(a1, c)
