import numpy as np
import numpy.testing as npt
import pytest
from scipy.stats import norm

from gslu.errors import DegenerateRowError, NumericError, ShapeError, TapeError
from gslu.tensor import (GradientTape, Tensor, add, backward, concat, cross_entropy, dropout,
                         gather_rows, gelu, get_default_dtype, layer_norm, matmul, mean_all, mul,
                         pad_columns, permute, precision, relu, reshape, scale, softmax_rows, sum_all,
                         transpose)


def test_leaf_used_twice_accumulates():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    with GradientTape() as tape:
        y = sum_all(mul(x, x))
    tape.backward(y)
    npt.assert_allclose(x.grad, [2.0, 4.0, 6.0])


def test_shared_intermediate_accumulates():
    x = Tensor([1.0, -2.0], requires_grad=True)
    with GradientTape() as tape:
        z = add(x, x)
        y = sum_all(mul(z, z))
    tape.backward(y)
    npt.assert_allclose(x.grad, 8.0 * x.data)


def test_leading_broadcast_sums_gradient():
    x = Tensor(np.ones((3, 2)), requires_grad=True)
    b = Tensor([0.5, -0.5], requires_grad=True)
    with GradientTape() as tape:
        y = sum_all(add(x, b))
    tape.backward(y)
    npt.assert_allclose(b.grad, [3.0, 3.0])
    npt.assert_allclose(x.grad, np.ones((3, 2)))


def test_incompatible_shapes_rejected():
    with pytest.raises(ShapeError):
        add(Tensor(np.ones((3, 2))), Tensor(np.ones(3)))
    with pytest.raises(ShapeError):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError):
        reshape(Tensor(np.ones(6)), (4, 2))


def test_backward_requires_recorded_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(TapeError):
        backward(sum_all(x))  # no tape active
    with GradientTape() as tape:
        y = mul(x, x)
    with pytest.raises(TapeError):
        tape.backward(y)


def test_tape_is_single_use():
    x = Tensor([1.0], requires_grad=True)
    with GradientTape() as tape:
        y = sum_all(mul(x, x))
    tape.backward(y)
    with pytest.raises(TapeError):
        tape.backward(y)


def test_non_finite_result_raises():
    with pytest.raises(NumericError):
        add(Tensor([np.inf]), Tensor([1.0]))


def test_softmax_rows_are_stochastic_and_respect_mask():
    rng = np.random.default_rng(1)
    for _ in range(50):
        x = Tensor(rng.normal(0.0, 5.0, (4, 7)), dtype=np.float64)
        mask = rng.random((4, 7)) > 0.4
        mask[:, 3] = True
        probs = softmax_rows(x, mask).data
        npt.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-9)
        assert np.all(probs[~mask] == 0.0)


def test_softmax_is_shift_invariant_for_large_scores():
    x = Tensor([[1000.0, 1001.0, 1002.0]], dtype=np.float64)
    expected = np.exp([0.0, 1.0, 2.0]) / np.exp([0.0, 1.0, 2.0]).sum()
    npt.assert_allclose(softmax_rows(x).data[0], expected, rtol=1e-12)


def test_fully_masked_row_raises():
    with pytest.raises(DegenerateRowError):
        softmax_rows(Tensor(np.zeros((2, 3))), np.array([[True, False, False], [False, False, False]]))


def test_layer_norm_normalizes_rows():
    x = Tensor(np.random.default_rng(2).normal(3.0, 4.0, (5, 8)), dtype=np.float64)
    out = layer_norm(x, Tensor(np.ones(8)), Tensor(np.zeros(8))).data
    npt.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-9)
    npt.assert_allclose(out.var(axis=-1), 1.0, rtol=1e-4)


def test_constant_row_layer_norm_gives_beta():
    beta = Tensor([0.1, 0.2, 0.3])
    out = layer_norm(Tensor(np.full((2, 3), 4.0)), Tensor(np.ones(3)), beta).data
    npt.assert_allclose(out, np.tile(beta.data, (2, 1)), atol=1e-6)


def test_gelu_is_exact():
    values = np.linspace(-3.0, 3.0, 13)
    with precision(np.float64):
        out = gelu(Tensor(values)).data
    npt.assert_allclose(out, values * norm.cdf(values), rtol=1e-12, atol=1e-12)


def test_relu_gradient_is_step():
    x = Tensor([-1.0, 0.5, 2.0], requires_grad=True)
    with GradientTape() as tape:
        y = sum_all(relu(x))
    tape.backward(y)
    npt.assert_allclose(x.grad, [0.0, 1.0, 1.0])


def test_cross_entropy_matches_manual_and_masks_columns():
    logits = Tensor([[1.0, 2.0, 0.5], [0.0, -1.0, 3.0]], requires_grad=True, dtype=np.float64)
    mask = np.array([[True, True, False], [True, True, True]])
    with GradientTape() as tape:
        loss = cross_entropy(logits, [1, 2], mask)
    tape.backward(loss)
    row0 = -np.log(np.exp(2.0) / (np.exp(1.0) + np.exp(2.0)))
    row1 = -np.log(np.exp(3.0) / np.exp([0.0, -1.0, 3.0]).sum())
    npt.assert_allclose(loss.item(), (row0 + row1) / 2, rtol=1e-12)
    assert logits.grad[0, 2] == 0.0


def test_cross_entropy_rejects_masked_target():
    with pytest.raises(ShapeError):
        cross_entropy(Tensor(np.zeros((1, 3))), [2], np.array([[True, True, False]]))


def test_gather_rows_accumulates_repeated_ids():
    table = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
    with GradientTape() as tape:
        y = sum_all(gather_rows(table, [2, 0, 2]))
    tape.backward(y)
    npt.assert_allclose(table.grad, [[1.0, 1.0], [0.0, 0.0], [2.0, 2.0]])


def test_pad_columns_inserts_zeros_and_drops_their_gradient():
    x = Tensor([[1.0, 2.0, 3.0]], requires_grad=True)
    with GradientTape() as tape:
        padded = pad_columns(x, 1, 2)
        y = sum_all(mul(padded, Tensor([[1.0, 5.0, 5.0, 2.0, 3.0]])))
    tape.backward(y)
    npt.assert_allclose(padded.data, [[1.0, 0.0, 0.0, 2.0, 3.0]])
    npt.assert_allclose(x.grad, [[1.0, 2.0, 3.0]])


def test_layout_ops_round_trip_values():
    x = Tensor(np.arange(24.0).reshape(2, 3, 4))
    npt.assert_array_equal(permute(x, (2, 0, 1)).data, np.transpose(x.data, (2, 0, 1)))
    npt.assert_array_equal(transpose(x).data, np.swapaxes(x.data, -1, -2))
    npt.assert_array_equal(concat([x, x], axis=1).data, np.concatenate([x.data, x.data], axis=1))


def test_batched_matmul_broadcasts_weights():
    a = Tensor(np.random.default_rng(3).normal(size=(2, 3, 4)), requires_grad=True)
    w = Tensor(np.random.default_rng(4).normal(size=(4, 5)), requires_grad=True)
    with GradientTape() as tape:
        y = mean_all(matmul(a, w))
    tape.backward(y)
    assert w.grad.shape == (4, 5)
    npt.assert_allclose(w.grad, np.einsum("bij->j", a.data)[:, None].repeat(5, axis=1) / 30, rtol=1e-5)


def test_dropout_identity_in_evaluation():
    x = Tensor(np.ones((2, 2)))
    assert dropout(x, 0.5, None) is x
    assert dropout(x, 0.0, np.random.default_rng(0)) is x
    kept = dropout(x, 0.5, np.random.default_rng(0)).data
    assert set(np.unique(kept)) <= {0.0, 2.0}


def test_precision_context_restores_dtype():
    assert get_default_dtype() is np.float32
    with precision(np.float64):
        assert Tensor([1.0]).data.dtype == np.float64
    assert Tensor([1.0]).data.dtype == np.float32


def test_operator_sugar():
    a = Tensor([1.0, 2.0])
    b = Tensor([3.0, 4.0])
    npt.assert_allclose((a + b).data, [4.0, 6.0])
    npt.assert_allclose((a * b).data, [3.0, 8.0])
    npt.assert_allclose((2.0 * a).data, [2.0, 4.0])
    npt.assert_allclose((-a).data, [-1.0, -2.0])
    npt.assert_allclose(scale(a, 0.5).data, [0.5, 1.0])
